#include <pathmc/funcderiv.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace pathmc {

DerivativeConfig DerivativeConfig::defaults_for(const DiscretePath& path) {
  DerivativeConfig cfg;
  cfg.h = 1e-4 * std::max(1.0, std::abs(path.values.back()));
  return cfg;
}

double time_derivative(const PathFunctional& f, const DiscretePath& path,
                       const DerivativeConfig& cfg) {
  const double dt = static_cast<double>(cfg.dt_steps) * path.grid_step;
  return (f(flat_extension(path, cfg.dt_steps)) - f(path)) / dt;
}

double space_derivative(const PathFunctional& f, const DiscretePath& path,
                        const DerivativeConfig& cfg) {
  return (f(bump(path, cfg.h)) - f(bump(path, -cfg.h))) / (2.0 * cfg.h);
}

double second_space_derivative(const PathFunctional& f, const DiscretePath& path,
                               const DerivativeConfig& cfg) {
  return (f(bump(path, cfg.h)) - 2.0 * f(path) + f(bump(path, -cfg.h))) / (cfg.h * cfg.h);
}

namespace {

// one-sided corner estimator at bump size h (h may be negative)
double corner_bracket(const PathFunctional& f, const DiscretePath& path,
                      std::size_t dt_steps, double h) {
  const double dt = static_cast<double>(dt_steps) * path.grid_step;
  const double bump_then_extend = f(flat_extension(bump(path, h), dt_steps));
  const double extend_then_bump = f(bump(flat_extension(path, dt_steps), h));
  return (bump_then_extend - extend_then_bump) / (dt * h);
}

}  // namespace

double lie_bracket(const PathFunctional& f, const DiscretePath& path,
                   const DerivativeConfig& cfg) {
  return 0.5 * (corner_bracket(f, path, cfg.dt_steps, cfg.h) +
                corner_bracket(f, path, cfg.dt_steps, -cfg.h));
}

double lie_bracket_nested(const PathFunctional& f, const DiscretePath& path,
                          const DerivativeConfig& cfg) {
  auto time_deriv = [&](const DiscretePath& p) {
    const double dt = static_cast<double>(cfg.dt_steps) * p.grid_step;
    return (f(flat_extension(p, cfg.dt_steps)) - f(p)) / dt;
  };
  auto space_deriv = [&](const DiscretePath& p) {
    return (f(bump(p, cfg.h)) - f(bump(p, -cfg.h))) / (2.0 * cfg.h);
  };
  const double dx_dt = (time_deriv(bump(path, cfg.h)) - time_deriv(bump(path, -cfg.h))) /
                       (2.0 * cfg.h);
  const double dt_dx = (space_deriv(flat_extension(path, cfg.dt_steps)) - space_deriv(path)) /
                       (static_cast<double>(cfg.dt_steps) * path.grid_step);
  return dx_dt - dt_dx;
}

const char* to_string(PathDependenceKind kind) {
  switch (kind) {
    case PathDependenceKind::weakly: return "weakly";
    case PathDependenceKind::path_independent: return "path_independent";
    case PathDependenceKind::discretely_monitored: return "discretely_monitored";
    case PathDependenceKind::delayed: return "delayed";
    case PathDependenceKind::strongly: return "strongly";
  }
  return "?";
}

PathDependenceClass classify(const PathFunctional& f,
                             std::span<const DiscretePath> probe_paths,
                             std::span<const double> probe_times,
                             const DerivativeConfig& cfg, double tol) {
  if (probe_paths.empty() || probe_times.empty()) {
    throw std::invalid_argument("classify: probe sets must be non-empty");
  }
  std::vector<double> times(probe_times.begin(), probe_times.end());
  std::sort(times.begin(), times.end());

  PathDependenceClass out;
  out.evidence.reserve(times.size());
  for (double t : times) {
    double worst = 0.0;
    for (const auto& path : probe_paths) {
      const std::size_t idx = static_cast<std::size_t>(std::llround(t / path.grid_step));
      if (idx >= path.values.size()) {
        throw std::invalid_argument("classify: probe time beyond a path horizon");
      }
      DiscretePath prefix(path.grid_step,
                          {path.values.begin(), path.values.begin() + idx + 1});
      DerivativeConfig local = cfg;
      if (local.h <= 0.0) local = DerivativeConfig::defaults_for(prefix);
      worst = std::max(worst, std::abs(lie_bracket(f, prefix, local)));
    }
    out.evidence.push_back({t, worst});
  }

  std::vector<std::size_t> exceed;
  for (std::size_t i = 0; i < out.evidence.size(); ++i) {
    if (out.evidence[i].magnitude >= tol) {
      exceed.push_back(i);
      out.exceedance_times.push_back(out.evidence[i].time);
    }
  }

  if (exceed.empty()) {
    out.kind = PathDependenceKind::weakly;
    return out;
  }
  bool isolated = exceed.size() <= std::max<std::size_t>(1, times.size() / 4);
  for (std::size_t k = 0; isolated && k + 1 < exceed.size(); ++k) {
    if (exceed[k + 1] == exceed[k] + 1) isolated = false;
  }
  if (isolated) {
    out.kind = PathDependenceKind::discretely_monitored;
  } else if (exceed.front() > 0) {
    out.kind = PathDependenceKind::delayed;
    out.delay_time = out.evidence[exceed.front()].time;
  } else {
    out.kind = PathDependenceKind::strongly;
  }
  return out;
}

void write_evidence_csv(std::ostream& out, const PathDependenceClass& cls) {
  out << "time,abs_bracket\n";
  char buf[64];
  for (const auto& e : cls.evidence) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", e.time, e.magnitude);
    out << buf << '\n';
  }
}

}  // namespace pathmc
