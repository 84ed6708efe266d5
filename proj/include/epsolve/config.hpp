#pragma once

#include "epsolve/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace epsolve {

/// Tabulated profile: constant, cos or gaussian.
struct ProfileSpec {
  std::string kind = "constant";
  cplx amplitude = 0.0;
  double wavenumber = 1.0;
  double phase = 0.0;
  double center = 0.0;
  double width = 1.0;
};

struct HarmonicSpec {
  int g = 1;
  ProfileSpec profile;
};

enum class Pipeline { Verify, Sweep, Fractal, Wavefunction };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view name);
AuxiliaryMode parse_auxiliary(std::string_view name);

struct PipelineSpec {
  Pipeline name = Pipeline::Verify;
  std::string output = "out";
  double f_prefactor = 1.0;
  double entropy_constant = 1.0;

  // verify: seeded random (coupling, bloch momentum) draws
  int trials = 0;
  std::pair<double, double> trial_coupling{0.01, 0.5};
  std::pair<double, double> trial_bloch{0.1, 0.9};

  // sweep
  std::vector<double> couplings{0.0, 0.05, 0.1};

  // fractal
  std::optional<std::pair<double, double>> window;
  int resolution = 2001;
  std::string observable = "eigenvalue"; // or "kernel-probe"
  double probe_point = 0.5;
  int level = 0;
  int ladder_first = 2;
  int ladder_rungs = 11;
  std::vector<double> deltas{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};

  // wavefunction
  int root = 0;
  int z_samples = 64;
};

struct RunConfig {
  UnitSystem units;
  Grid grid{3.14159265358979323846, 256, Boundary::HardWall};
  ProfileSpec potential;
  double period = 2.0 * 3.14159265358979323846;
  double coupling = 1.0;
  std::vector<HarmonicSpec> harmonics;
  Mode mode = FixedBloch{};
  SolverConfig solver;
  PipelineSpec pipeline;
  std::uint64_t seed = 0;
};

/// Parses the TOML configuration. Missing keys take their defaults; unknown
/// keys and ill-typed values are rejected with the offending line.
RunConfig parse_config(std::string_view text, std::string_view source = "config");

/// Canonical TOML with every effective value. Omitting the output directory
/// gives the form that is hashed and embedded in outputs.
std::string serialize_config(const RunConfig &config, bool include_output = true);

/// FNV-1a 64 of the canonical form without the output directory.
std::uint64_t config_hash(const RunConfig &config);
std::string hash_hex(std::uint64_t hash);

Samples profile_samples(const Grid &grid, const ProfileSpec &profile);

SystemSpec system_spec(const RunConfig &config);

} // namespace epsolve
