#include "epsolve/model.hpp"
#include "epsolve/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace epsolve {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::HermiticityViolation: return "HermiticityViolation";
  case ErrorCode::GridTooCoarse: return "GridTooCoarse";
  case ErrorCode::WrongMode: return "WrongMode";
  case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
  case ErrorCode::NotNormalized: return "NotNormalized";
  case ErrorCode::SupportTooSmall: return "SupportTooSmall";
  case ErrorCode::PoleProximity: return "PoleProximity";
  case ErrorCode::AboveTotalEnergy: return "AboveTotalEnergy";
  case ErrorCode::IndexMismatch: return "IndexMismatch";
  case ErrorCode::ScanTooCoarse: return "ScanTooCoarse";
  case ErrorCode::PoleWindowLoss: return "PoleWindowLoss";
  case ErrorCode::WindowTooNarrow: return "WindowTooNarrow";
  case ErrorCode::IncompleteRealisation: return "IncompleteRealisation";
  case ErrorCode::InvalidCount: return "InvalidCount";
  case ErrorCode::NotDistribution: return "NotDistribution";
  case ErrorCode::EmptyWindow: return "EmptyWindow";
  case ErrorCode::DegenerateData: return "DegenerateData";
  case ErrorCode::SchemaError: return "SchemaError";
  case ErrorCode::UnknownKey: return "UnknownKey";
  case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::vector<double> Grid::coordinates() const {
  std::vector<double> xs(static_cast<std::size_t>(points));
  for (int j = 0; j < points; ++j) {
    xs[j] = x(j);
  }
  return xs;
}

namespace {

constexpr double kHermiticityTolerance = 1e-12;

std::string g_label(int g) {
  std::ostringstream os;
  os << "V_" << g;
  return os.str();
}

void check_units(const UnitSystem &u) {
  if (!(u.hbar > 0.0) || !(u.mass > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "hbar and mass must be positive");
  }
}

void check_grid(const Grid &g) {
  if (!(g.length > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "grid length must be positive");
  }
  if (g.points < 16) {
    throw Error(ErrorCode::InvalidArgument, "grid needs at least 16 points");
  }
}

void check_config(const SolverConfig &c, const Grid &grid) {
  if (c.basis_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "basis_size must be >= 1");
  }
  if (c.channel_cutoff < 1) {
    throw Error(ErrorCode::InvalidArgument, "channel_cutoff must be >= 1");
  }
  if (c.basis_size > grid.points / 4) {
    std::ostringstream os;
    os << "basis_size " << c.basis_size << " exceeds N_x/4 = "
       << grid.points / 4;
    throw Error(ErrorCode::GridTooCoarse, os.str());
  }
  if (c.aux_size < 0 || c.effective_aux_size() < c.basis_size) {
    throw Error(ErrorCode::InvalidArgument,
                "aux_size must be 0 (default) or >= basis_size");
  }
  if (c.effective_aux_size() > grid.points / 4) {
    throw Error(ErrorCode::GridTooCoarse, "aux_size exceeds N_x/4");
  }
  if (c.window && !(c.window->first < c.window->second)) {
    throw Error(ErrorCode::InvalidArgument, "scan window needs lo < hi");
  }
  if (c.scan_resolution < 4) {
    throw Error(ErrorCode::InvalidArgument, "scan_resolution must be >= 4");
  }
  if (!(c.root_tolerance > 0.0) || !(c.pole_window > 0.0) ||
      !(c.degeneracy_tolerance > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "tolerances must be positive");
  }
}

} // namespace

double ValidatedProblem::kz() const {
  if (const auto *fb = std::get_if<FixedBloch>(&spec_.mode)) {
    return fb->kz;
  }
  throw Error(ErrorCode::WrongMode, "operation requires fixed-Bloch mode");
}

double ValidatedProblem::total_energy() const {
  if (const auto *fe = std::get_if<FixedEnergy>(&spec_.mode)) {
    return fe->energy;
  }
  throw Error(ErrorCode::WrongMode, "operation requires fixed-energy mode");
}

ComplexSamples ValidatedProblem::scaled_harmonic(int g) const {
  auto it = spec_.harmonics.find(g);
  if (it == spec_.harmonics.end()) {
    return ComplexSamples(static_cast<std::size_t>(spec_.grid.points), 0.0);
  }
  ComplexSamples out = it->second;
  for (auto &v : out) {
    v *= spec_.coupling;
  }
  return out;
}

std::vector<int> ValidatedProblem::harmonic_indices() const {
  std::vector<int> out;
  for (const auto &[g, samples] : spec_.harmonics) {
    out.push_back(g);
  }
  return out;
}

std::vector<int> ValidatedProblem::q_channels() const {
  std::vector<int> out;
  const int G = config_.channel_cutoff;
  for (int g = -G; g <= G; ++g) {
    if (g != 0) {
      out.push_back(g);
    }
  }
  return out;
}

Problem build_system(SystemSpec spec, SolverConfig config) {
  check_units(spec.units);
  check_grid(spec.grid);
  check_config(config, spec.grid);

  const auto n = static_cast<std::size_t>(spec.grid.points);
  if (spec.v0.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "V0 sample count != grid points");
  }
  if (!(spec.period > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "period d_z must be positive");
  }
  if (!(spec.coupling >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "coupling scale must be >= 0");
  }
  if (const auto *fb = std::get_if<FixedBloch>(&spec.mode);
      fb && !std::isfinite(fb->kz)) {
    throw Error(ErrorCode::InvalidArgument, "K_z must be finite");
  }
  if (const auto *fe = std::get_if<FixedEnergy>(&spec.mode)) {
    if (!std::isfinite(fe->energy)) {
      throw Error(ErrorCode::InvalidArgument, "total energy must be finite");
    }
    if (config.auxiliary == AuxiliaryMode::ExactBlock) {
      throw Error(ErrorCode::WrongMode,
                  "exact-block auxiliary mode requires fixed-Bloch mode");
    }
  }

  for (const auto &[g, samples] : spec.harmonics) {
    if (g == 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "harmonic g = 0 belongs in V0, not the harmonic table");
    }
    if (std::abs(g) > config.channel_cutoff) {
      std::ostringstream os;
      os << "harmonic index " << g << " exceeds channel cutoff "
         << config.channel_cutoff;
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
    if (samples.size() != n) {
      throw Error(ErrorCode::InvalidArgument,
                  g_label(g) + " sample count != grid points");
    }
  }

  // Hermitian completion: V_{-g}(x) = conj(V_g(x)).
  std::vector<std::pair<int, ComplexSamples>> added;
  for (const auto &[g, samples] : spec.harmonics) {
    auto partner = spec.harmonics.find(-g);
    if (partner == spec.harmonics.end()) {
      ComplexSamples conj(samples.size());
      std::transform(samples.begin(), samples.end(), conj.begin(),
                     [](cplx v) { return std::conj(v); });
      added.emplace_back(-g, std::move(conj));
      continue;
    }
    if (g < 0) {
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const cplx a = samples[j];
      const cplx b = partner->second[j];
      const double scale = std::max(1.0, std::abs(a));
      if (std::abs(b - std::conj(a)) > kHermiticityTolerance * scale) {
        std::ostringstream os;
        os << g_label(-g) << " != conj(" << g_label(g) << ") at grid point "
           << j;
        throw Error(ErrorCode::HermiticityViolation, os.str());
      }
    }
  }
  for (auto &[g, samples] : added) {
    spec.harmonics.emplace(g, std::move(samples));
  }

  std::vector<std::string> warnings;
  if (spec.harmonics.empty() && spec.coupling > 0.0) {
    warnings.emplace_back(
        "EmptyHarmonics: coupling scale > 0 but no harmonics supplied");
  }

  return Problem(new ValidatedProblem(std::move(spec), std::move(config),
                                      std::move(warnings)));
}

double pg_energy(const UnitSystem &units, double period, int g) {
  const double q = 2.0 * std::numbers::pi * g / period;
  return units.kinetic_scale() * q * q;
}

double channel_offset(const ValidatedProblem &problem, int g) {
  const double kz = problem.kz();
  const auto &u = problem.units();
  const double d = problem.spec().period;
  return pg_energy(u, d, g) +
         2.0 * std::numbers::pi * u.hbar * u.hbar * kz * g / (u.mass * d);
}

double bloch_momentum_at(const UnitSystem &units, double total_energy,
                         double eps) {
  return std::sqrt(2.0 * units.mass * (total_energy - eps)) / units.hbar;
}

Samples constant_samples(const Grid &grid, double value) {
  return Samples(static_cast<std::size_t>(grid.points), value);
}

Samples cosine_samples(const Grid &grid, double amplitude, double wavenumber,
                       double phase) {
  Samples out(static_cast<std::size_t>(grid.points));
  for (int j = 0; j < grid.points; ++j) {
    out[j] = amplitude * std::cos(wavenumber * grid.x(j) + phase);
  }
  return out;
}

Samples gaussian_samples(const Grid &grid, double amplitude, double center,
                         double width) {
  if (!(width > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian width must be positive");
  }
  Samples out(static_cast<std::size_t>(grid.points));
  for (int j = 0; j < grid.points; ++j) {
    const double t = (grid.x(j) - center) / width;
    out[j] = amplitude * std::exp(-0.5 * t * t);
  }
  return out;
}

ComplexSamples to_complex(const Samples &samples, cplx factor) {
  ComplexSamples out(samples.size());
  for (std::size_t j = 0; j < samples.size(); ++j) {
    out[j] = factor * samples[j];
  }
  return out;
}

} // namespace epsolve
