#pragma once

#include <pathmc/greeks.hpp>

#include <iosfwd>
#include <span>
#include <string>

namespace pathmc {

/// Shortest round-trippable decimal form ("%.17g"); keeps CSV output
/// byte-stable across runs and thread counts.
std::string fmt_double(double v);

struct EstimateRow {
  std::string label;
  McEstimate estimate;
};

/// Columns: label,mean,std_error,n_paths,seed.
void write_estimates_csv(std::ostream& out, std::span<const EstimateRow> rows);

/// Columns: n,mean,std_error.
void write_convergence_csv(std::ostream& out, const ConvergenceLog& log);

/// Columns: t,x_low,x_high,m,occupancy (empty-flagged cells write m as nan).
void write_vega_surface_csv(std::ostream& out, const VegaSurface& surface);

}  // namespace pathmc
