#pragma once

#include "epsolve/model.hpp"
#include "epsolve/realisation.hpp"

#include <array>
#include <utility>
#include <vector>

namespace epsolve {

enum class ObservableKind {
  /// Eigenvalue of H_eff(eps) - eps closest to zero.
  SmallestMagnitudeEigenvalue,
  /// Re J(x0) for the realisation's state at the chosen level.
  KernelProbe,
};

struct BranchObservable {
  ObservableKind kind = ObservableKind::SmallestMagnitudeEigenvalue;
  double probe_point = 0.5; // fraction of the grid length
  int level = 0;
};

struct BranchGraph {
  int realisation = 0;
  ObservableKind observable = ObservableKind::SmallestMagnitudeEigenvalue;
  std::pair<double, double> window;
  int resolution = 0;
  std::vector<std::array<double, 2>> points; // (eps, y), eps ascending
  /// Half-open index ranges of contiguous pole-free runs.
  std::vector<std::pair<int, int>> runs;
};

/// Samples the observable on a uniform eps grid, leaving out every pole
/// window and closing each run with a sample at the window edge.
BranchGraph branch_graph(const EffectiveOperator &op, const RealisationSet &set,
                         int realisation, std::pair<double, double> window,
                         int resolution, const BranchObservable &observable = {});

/// delta_k = 2^-(first + k), k = 0..rungs-1.
std::vector<double> dyadic_ladder(int first, int rungs);

struct ScaleGeometry {
  std::vector<double> deltas;
  std::vector<long> counts;
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0; // rms of the log-log fit
};

/// Box counting on the points mapped to the unit square. A coordinate with
/// zero spread maps to 0.
ScaleGeometry box_count(const std::vector<std::array<double, 2>> &points,
                        const std::vector<double> &ladder);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};
LinearFit least_squares(const std::vector<double> &x, const std::vector<double> &y);

struct SupportEnergy {
  double delta = 0.0;
  int support_points = 0;
  double energy = 0.0;
};

std::vector<SupportEnergy> support_energy_curve(const ValidatedProblem &problem,
                                                const std::vector<double> &deltas);
std::vector<SupportEnergy> support_energy_curve(const Grid &grid,
                                                const UnitSystem &units,
                                                const Samples &v0,
                                                const std::vector<double> &deltas);

/// Slope of log(eta) against log(delta).
LinearFit support_energy_slope(const std::vector<SupportEnergy> &curve);

/// Points of the middle-thirds Cantor construction at the given depth:
/// both endpoints of each remaining interval, on the line y = 0.
std::vector<std::array<double, 2>> cantor_points(int depth);

} // namespace epsolve
