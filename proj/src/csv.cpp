#include <pathmc/csv.hpp>

#include <cstdio>
#include <ostream>

namespace pathmc {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_estimates_csv(std::ostream& out, std::span<const EstimateRow> rows) {
  out << "label,mean,std_error,n_paths,seed\n";
  for (const auto& r : rows) {
    out << r.label << ',' << fmt_double(r.estimate.mean) << ',' << fmt_double(r.estimate.std_error)
        << ',' << r.estimate.n_paths << ',' << r.estimate.seed << '\n';
  }
}

void write_convergence_csv(std::ostream& out, const ConvergenceLog& log) {
  out << "n,mean,std_error\n";
  for (const auto& pt : log) {
    out << pt.n << ',' << fmt_double(pt.mean) << ',' << fmt_double(pt.std_error) << '\n';
  }
}

void write_vega_surface_csv(std::ostream& out, const VegaSurface& surface) {
  out << "t,x_low,x_high,m,occupancy\n";
  for (std::size_t j = 0; j < surface.times.size(); ++j) {
    for (std::size_t c = 0; c < surface.n_bins; ++c) {
      const std::size_t cell = j * surface.n_bins + c;
      out << fmt_double(surface.times[j]) << ',' << fmt_double(surface.edges[c]) << ','
          << fmt_double(surface.edges[c + 1]) << ','
          << (surface.empty[cell] ? "nan" : fmt_double(surface.m[cell])) << ','
          << surface.occupancy[cell] << '\n';
    }
  }
}

}  // namespace pathmc
