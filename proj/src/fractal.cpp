#include "epsolve/fractal.hpp"
#include "epsolve/auxiliary.hpp"
#include "epsolve/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace epsolve {

namespace {

bool admissible(const EffectiveOperator &op, double eps) {
  const double w = op.problem().config().pole_window;
  if (!op.problem().fixed_bloch() && eps > op.problem().total_energy()) {
    return false;
  }
  for (const auto &t : op.terms()) {
    if (std::abs(op.denominator(t, eps)) < w) return false;
  }
  return true;
}

// Moves eps away from the pole until the exclusion test holds exactly.
double edge(const EffectiveOperator &op, double eps, double direction) {
  for (int i = 0; i < 64 && !admissible(op, eps); ++i) {
    eps = std::nextafter(eps, direction * std::numeric_limits<double>::infinity());
  }
  return eps;
}

} // namespace

BranchGraph branch_graph(const EffectiveOperator &op, const RealisationSet &set,
                         int realisation, std::pair<double, double> window,
                         int resolution, const BranchObservable &observable) {
  const auto [lo, hi] = window;
  if (!(hi > lo) || resolution < 2) {
    throw Error(ErrorCode::EmptyWindow, "branch window is empty");
  }
  BranchGraph g;
  g.realisation = realisation;
  g.observable = observable.kind;
  g.window = window;
  g.resolution = resolution;

  // Probe observable: (V psi)(x0) = sum_t Phi_t(x0) <Phi_t|psi> / d_t.
  Eigen::VectorXcd projections;
  Eigen::VectorXcd phi_at_probe;
  cplx psi_at_probe = 0.0;
  if (observable.kind == ObservableKind::KernelProbe) {
    if (realisation < 0 || realisation >= set.count()) {
      throw Error(ErrorCode::IndexMismatch, "realisation index out of range");
    }
    const auto &levels = set.realisations[realisation].levels;
    if (observable.level < 0 || observable.level >= static_cast<int>(levels.size())) {
      throw Error(ErrorCode::IndexMismatch, "level index out of range");
    }
    const auto &grid = op.problem().grid();
    const int j0 = static_cast<int>(
        std::lround(observable.probe_point * grid.length / grid.spacing()));
    if (j0 < 0 || j0 >= grid.points) {
      throw Error(ErrorCode::InvalidArgument, "probe point outside the grid");
    }
    const int nb = op.basis_size();
    const Eigen::VectorXcd psi =
        op.basis().states.leftCols(nb).cast<cplx>() * levels[observable.level].coefficients;
    psi_at_probe = psi[j0];
    if (std::abs(psi_at_probe) < 1e-10 * psi.cwiseAbs().maxCoeff()) {
      throw Error(ErrorCode::InvalidArgument, "probe point at a node of the state");
    }
    projections = op.basis().spacing * (op.term_functions().adjoint() * psi);
    phi_at_probe = op.term_functions().row(j0).transpose();
  }

  auto value = [&](double eps) {
    if (observable.kind == ObservableKind::KernelProbe) {
      cplx sum = 0.0;
      const auto &terms = op.terms();
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        sum += phi_at_probe[ti] * projections[ti] / op.denominator(terms[t], eps);
      }
      return (sum / psi_at_probe).real();
    }
    const auto s = shifted_spectrum(op, eps);
    Eigen::Index k = 0;
    s.values.cwiseAbs().minCoeff(&k);
    return s.values[k];
  };

  std::vector<double> eps;
  for (int k = 0; k < resolution; ++k) {
    const double e = k == resolution - 1 ? hi : lo + (hi - lo) * k / (resolution - 1);
    if (admissible(op, e)) eps.push_back(e);
  }
  if (op.problem().fixed_bloch()) {
    const double w = op.problem().config().pole_window;
    for (const auto &t : op.terms()) {
      for (double e : {edge(op, t.pole - w, -1.0), edge(op, t.pole + w, 1.0)}) {
        if (e >= lo && e <= hi && admissible(op, e)) eps.push_back(e);
      }
    }
  }
  std::sort(eps.begin(), eps.end());
  eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
  if (eps.empty()) {
    throw Error(ErrorCode::EmptyWindow, "every sample falls inside a pole window");
  }

  int start = 0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (k > 0) {
      // A run breaks where a pole lies between neighbouring samples.
      bool crossed = false;
      for (const auto &t : op.terms()) {
        const double a = op.denominator(t, eps[k - 1]);
        const double b = op.denominator(t, eps[k]);
        if ((a < 0.0) != (b < 0.0)) crossed = true;
      }
      if (crossed) {
        g.runs.emplace_back(start, static_cast<int>(k));
        start = static_cast<int>(k);
      }
    }
    g.points.push_back({eps[k], value(eps[k])});
  }
  g.runs.emplace_back(start, static_cast<int>(eps.size()));
  return g;
}

std::vector<double> dyadic_ladder(int first, int rungs) {
  if (rungs < 6 || first < 0) {
    throw Error(ErrorCode::InvalidArgument, "ladder needs at least 6 rungs");
  }
  std::vector<double> out;
  for (int k = 0; k < rungs; ++k) out.push_back(std::ldexp(1.0, -(first + k)));
  return out;
}

LinearFit least_squares(const std::vector<double> &x, const std::vector<double> &y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "fit needs at least two points");
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorCode::DegenerateData, "fit abscissae are identical");
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

ScaleGeometry box_count(const std::vector<std::array<double, 2>> &points,
                        const std::vector<double> &ladder) {
  if (points.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "box counting needs at least two points");
  }
  if (ladder.size() < 6) {
    throw Error(ErrorCode::InvalidArgument, "ladder needs at least 6 rungs");
  }
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    if (!(ladder[k] > 0.0 && ladder[k] <= 1.0) ||
        (k > 0 && ladder[k] != 0.5 * ladder[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, "ladder must halve at every rung");
    }
  }
  std::array<double, 2> lo{points[0][0], points[0][1]}, hi = lo;
  for (const auto &p : points) {
    for (int c = 0; c < 2; ++c) {
      if (!std::isfinite(p[c])) {
        throw Error(ErrorCode::InvalidArgument, "non-finite point");
      }
      lo[c] = std::min(lo[c], p[c]);
      hi[c] = std::max(hi[c], p[c]);
    }
  }
  if (lo == hi) {
    throw Error(ErrorCode::DegenerateData, "all points are identical");
  }
  std::vector<std::array<double, 2>> unit(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int c = 0; c < 2; ++c) {
      unit[i][c] = hi[c] > lo[c] ? (points[i][c] - lo[c]) / (hi[c] - lo[c]) : 0.0;
    }
  }

  ScaleGeometry out;
  out.deltas = ladder;
  std::vector<double> x, y;
  for (double delta : ladder) {
    const auto boxes = static_cast<std::uint64_t>(std::ceil(1.0 / delta));
    std::vector<std::uint64_t> keys(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
      const auto bx = std::min(boxes - 1, static_cast<std::uint64_t>(unit[i][0] / delta));
      const auto by = std::min(boxes - 1, static_cast<std::uint64_t>(unit[i][1] / delta));
      keys[i] = bx * boxes + by;
    }
    std::sort(keys.begin(), keys.end());
    const long count = std::unique(keys.begin(), keys.end()) - keys.begin();
    out.counts.push_back(count);
    x.push_back(std::log(1.0 / delta));
    y.push_back(std::log(static_cast<double>(count)));
  }
  const auto fit = least_squares(x, y);
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.residual = fit.residual;
  return out;
}

std::vector<SupportEnergy> support_energy_curve(const Grid &grid,
                                                const UnitSystem &units,
                                                const Samples &v0,
                                                const std::vector<double> &deltas) {
  std::vector<SupportEnergy> out;
  for (double d : deltas) {
    const auto s = restricted_ground_state(grid, units, v0, d);
    out.push_back({d, s.support_points, s.free_energy});
  }
  return out;
}

std::vector<SupportEnergy> support_energy_curve(const ValidatedProblem &problem,
                                                const std::vector<double> &deltas) {
  return support_energy_curve(problem.grid(), problem.units(), problem.spec().v0,
                              deltas);
}

LinearFit support_energy_slope(const std::vector<SupportEnergy> &curve) {
  std::vector<double> x, y;
  for (const auto &c : curve) {
    x.push_back(std::log(c.delta));
    y.push_back(std::log(c.energy));
  }
  return least_squares(x, y);
}

std::vector<std::array<double, 2>> cantor_points(int depth) {
  std::vector<std::pair<double, double>> intervals{{0.0, 1.0}};
  for (int d = 0; d < depth; ++d) {
    std::vector<std::pair<double, double>> next;
    for (auto [a, b] : intervals) {
      const double third = (b - a) / 3.0;
      next.emplace_back(a, a + third);
      next.emplace_back(b - third, b);
    }
    intervals = std::move(next);
  }
  std::vector<std::array<double, 2>> out;
  for (auto [a, b] : intervals) {
    out.push_back({a, 0.0});
    out.push_back({b, 0.0});
  }
  return out;
}

} // namespace epsolve
