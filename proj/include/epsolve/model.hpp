#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace epsolve {

using cplx = std::complex<double>;

/// Physical units. The default is the dimensionless convention hbar = m = 1.
struct UnitSystem {
  double hbar = 1.0;
  double mass = 1.0;

  /// hbar^2 / (2 m), the coefficient of the kinetic operator.
  double kinetic_scale() const { return hbar * hbar / (2.0 * mass); }
};

enum class Boundary { HardWall, Periodic };

/// Uniform discretisation of the transverse coordinate r_s on [0, L].
///
/// Hard-wall grids include both wall points (x_0 = 0, x_{N-1} = L) where the
/// wavefunction vanishes; periodic grids identify x_N with x_0.
struct Grid {
  double length = 0.0;
  int points = 0;
  Boundary boundary = Boundary::HardWall;

  double spacing() const {
    return boundary == Boundary::HardWall ? length / (points - 1)
                                          : length / points;
  }
  double x(int j) const { return j * spacing(); }
  std::vector<double> coordinates() const;
};

struct FixedBloch {
  double kz = 0.3;
};
struct FixedEnergy {
  double energy = 0.0;
};
using Mode = std::variant<FixedBloch, FixedEnergy>;

using Samples = std::vector<double>;
using ComplexSamples = std::vector<cplx>;

/// The periodically perturbed system
///   V(r_s, z) = V0(r_s) + lambda * sum_g V_g(r_s) exp(2 pi i g z / d_z).
struct SystemSpec {
  UnitSystem units;
  Grid grid;
  Samples v0;
  std::map<int, ComplexSamples> harmonics;
  double period = 0.0;
  double coupling = 1.0;
  Mode mode = FixedBloch{};
};

enum class AuxiliaryMode { Diagonal, ExactBlock };

enum class GroupingRule { Balanced, DominantGreedy };

struct SolverConfig {
  int basis_size = 2;
  int channel_cutoff = 1;
  AuxiliaryMode auxiliary = AuxiliaryMode::ExactBlock;
  /// Q-space states per channel in Diagonal mode; 0 selects 3 * basis_size.
  int aux_size = 0;
  /// Scan window [lo, hi]; empty selects a window that provably contains
  /// every root.
  std::optional<std::pair<double, double>> window;
  /// Initial number of scan points per inter-pole gap.
  int scan_resolution = 64;
  double root_tolerance = 1e-10;
  double pole_window = 1e-7;
  double degeneracy_tolerance = 1e-9;
  GroupingRule grouping = GroupingRule::Balanced;

  int effective_aux_size() const {
    if (auxiliary == AuxiliaryMode::ExactBlock) {
      return basis_size;
    }
    return aux_size > 0 ? aux_size : 3 * basis_size;
  }
};

/// Immutable, validated problem handle. Build with build_system.
class ValidatedProblem {
public:
  const SystemSpec &spec() const { return spec_; }
  const SolverConfig &config() const { return config_; }
  const std::vector<std::string> &warnings() const { return warnings_; }

  const UnitSystem &units() const { return spec_.units; }
  const Grid &grid() const { return spec_.grid; }
  bool fixed_bloch() const {
    return std::holds_alternative<FixedBloch>(spec_.mode);
  }
  double kz() const;           // throws WrongMode unless FixedBloch
  double total_energy() const; // throws WrongMode unless FixedEnergy

  /// Harmonic samples scaled by the coupling lambda; zero samples for
  /// indices absent from the table.
  ComplexSamples scaled_harmonic(int g) const;
  /// Nonzero harmonic indices present, ascending.
  std::vector<int> harmonic_indices() const;
  /// Channels g != 0 with |g| <= G, ordered -G..-1, 1..G.
  std::vector<int> q_channels() const;

private:
  friend std::shared_ptr<const ValidatedProblem>
  build_system(SystemSpec spec, SolverConfig config);

  ValidatedProblem(SystemSpec spec, SolverConfig config,
                   std::vector<std::string> warnings)
      : spec_(std::move(spec)), config_(std::move(config)),
        warnings_(std::move(warnings)) {}

  SystemSpec spec_;
  SolverConfig config_;
  std::vector<std::string> warnings_;
};

using Problem = std::shared_ptr<const ValidatedProblem>;

/// Validates the system and solver configuration, completing the harmonic
/// table with conjugate partners V_{-g} = conj(V_g) where only one of the
/// pair is supplied.
Problem build_system(SystemSpec spec, SolverConfig config);

/// eps_pg = hbar^2 (2 pi g / d_z)^2 / (2 m).
double pg_energy(const UnitSystem &units, double period, int g);

/// Kinetic offset of channel g in fixed-Bloch mode:
///   Delta_g = eps_pg + 2 pi hbar^2 K_z g / (m d_z).
double channel_offset(const ValidatedProblem &problem, int g);

/// Bloch momentum that makes the fixed-energy denominators coincide with the
/// fixed-Bloch ones: K_z(eps) = sqrt(2 m (E - eps)) / hbar.
double bloch_momentum_at(const UnitSystem &units, double total_energy,
                         double eps);

// Tabulated potential families.
Samples constant_samples(const Grid &grid, double value);
Samples cosine_samples(const Grid &grid, double amplitude, double wavenumber,
                       double phase = 0.0);
Samples gaussian_samples(const Grid &grid, double amplitude, double center,
                         double width);
ComplexSamples to_complex(const Samples &samples, cplx factor = 1.0);

} // namespace epsolve
