#include <pathmc/path.hpp>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pathmc {

namespace {

void validate(double grid_step, const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("DiscretePath: values must be non-empty");
  if (!(grid_step > 0.0)) throw std::invalid_argument("DiscretePath: grid_step must be > 0");
}

void require_same_grid(const DiscretePath& a, const DiscretePath& b, const char* op) {
  if (a.grid_step != b.grid_step) {
    throw std::invalid_argument(std::string(op) + ": mismatched grid_step");
  }
}

}  // namespace

DiscretePath::DiscretePath(double grid_step_, std::vector<double> values_)
    : grid_step(grid_step_), values(std::move(values_)) {
  validate(grid_step, values);
  terminal_left_limit = values.back();
}

DiscretePath::DiscretePath(double grid_step_, std::vector<double> values_, double left)
    : grid_step(grid_step_), values(std::move(values_)), terminal_left_limit(left) {
  validate(grid_step, values);
}

DiscretePath flat_extension(const DiscretePath& path, std::size_t extra_steps) {
  if (extra_steps == 0) return path;
  DiscretePath out = path;
  out.values.resize(path.values.size() + extra_steps, path.values.back());
  // the extension is constant, so the result is continuous at its new end
  out.terminal_left_limit = path.values.back();
  return out;
}

DiscretePath bump(const DiscretePath& path, double h) {
  DiscretePath out = path;
  out.values.back() += h;
  return out;
}

DiscretePath concatenate(const DiscretePath& prefix, const DiscretePath& suffix) {
  require_same_grid(prefix, suffix, "concatenate");
  DiscretePath out = prefix;
  const double join = prefix.values.back();
  const double base = suffix.values.front();
  out.values.reserve(prefix.values.size() + suffix.steps());
  for (std::size_t i = 1; i < suffix.values.size(); ++i) {
    out.values.push_back(join + (suffix.values[i] - base));
  }
  out.terminal_left_limit = suffix.steps() == 0
                                ? prefix.terminal_left_limit
                                : join + (suffix.terminal_left_limit - base);
  return out;
}

double lambda_distance(const DiscretePath& a, const DiscretePath& b) {
  require_same_grid(a, b, "lambda_distance");
  const DiscretePath& longer = a.values.size() >= b.values.size() ? a : b;
  const DiscretePath& shorter = a.values.size() >= b.values.size() ? b : a;
  double sup = 0.0;
  for (std::size_t i = 0; i < longer.values.size(); ++i) {
    const double s = i < shorter.values.size() ? shorter.values[i] : shorter.values.back();
    sup = std::max(sup, std::abs(longer.values[i] - s));
  }
  const double time_gap = longer.final_time() - shorter.final_time();
  return sup + time_gap;
}

double pathwise_integral(const PathFunctional& h, const DiscretePath& path) {
  DiscretePath prefix;
  prefix.grid_step = path.grid_step;
  prefix.values.reserve(path.values.size());
  prefix.values.push_back(path.values.front());
  prefix.terminal_left_limit = path.values.front();
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    sum += h(prefix) * (path.values[i + 1] - path.values[i]);
    prefix.values.push_back(path.values[i + 1]);
    prefix.terminal_left_limit = path.values[i + 1];
  }
  return sum;
}

double quadratic_variation(const DiscretePath& path) {
  double qv = 0.0;
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    const double d = path.values[i + 1] - path.values[i];
    qv += d * d;
  }
  return qv;
}

double doleans_exponential(const DiscretePath& path) {
  const double dy = path.terminal_jump();
  if (dy <= -1.0) {
    throw std::domain_error("doleans_exponential: terminal jump <= -1");
  }
  // continuous part, with the terminal level replaced by its left limit
  double qv_cont = 0.0;
  const std::size_t n = path.values.size();
  for (std::size_t i = 0; i + 2 < n; ++i) {
    const double d = path.values[i + 1] - path.values[i];
    qv_cont += d * d;
  }
  if (n >= 2) {
    const double d = path.terminal_left_limit - path.values[n - 2];
    qv_cont += d * d;
  }
  const double cont = std::exp(path.terminal_left_limit - path.values.front() - 0.5 * qv_cont);
  return dy == 0.0 ? cont : cont * (1.0 + dy);
}

void write_paths_csv(std::ostream& out, std::span<const DiscretePath> paths) {
  char buf[32];
  for (const auto& p : paths) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.grid_step);
    out << buf;
    for (double v : p.values) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<DiscretePath> read_paths_csv(std::istream& in) {
  std::vector<DiscretePath> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double grid_step = 0.0;
    std::vector<double> values;
    bool first = true;
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      if (first) {
        grid_step = v;
        first = false;
      } else {
        values.push_back(v);
      }
    }
    out.emplace_back(grid_step, std::move(values));
  }
  return out;
}

}  // namespace pathmc
