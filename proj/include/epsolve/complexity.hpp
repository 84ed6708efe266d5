#pragma once

#include "epsolve/model.hpp"
#include "epsolve/realisation.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace epsolve {

struct ComplexityReport {
  int realisations = 1;
  double prefactor = 1.0;        // f
  double entropy_constant = 1.0; // k
  double complexity = 0.0;       // C = f ln N
  double entropy = 0.0;          // S = k C / f
};

/// f * ln(n).
double complexity(int realisations, double prefactor = 1.0);

/// -k sum p_i ln p_i with 0 ln 0 = 0.
double shannon_entropy(const std::vector<double> &p, double k = 1.0);

ComplexityReport report(const RealisationSet &set, double prefactor = 1.0,
                        double entropy_constant = 1.0);

struct SweepRow {
  double parameter = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  int root_count = 0;
  int realisations = 0;
  int ungrouped = 0;
  double complexity = 0.0;
  double entropy = 0.0;
  /// NaN when no oracle applies (fixed-energy mode) or the row failed.
  double max_deviation = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::string parameter = "coupling scale (K proxy)";
  std::vector<SweepRow> rows;
  /// Smallest parameter with more than one realisation.
  std::optional<double> transition;
  /// Rows with equal realisation counts carry bit-equal complexity.
  bool conserved = true;
  double classical_border = 1.0;
  double quantum_border = std::numeric_limits<double>::infinity();
};

struct SweepOptions {
  double prefactor = 1.0;
  double entropy_constant = 1.0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Per-row seed derived from the sweep seed.
std::uint64_t row_seed(std::uint64_t seed, std::size_t row);

/// Rebuilds the system at each coupling value and records the realisation
/// statistics. Rows that throw are marked failed; the sweep continues.
SweepResult sweep(const SystemSpec &base, const SolverConfig &config,
                  const std::vector<double> &couplings,
                  const SweepOptions &options = {});

bool complexity_conserved(const std::vector<SweepRow> &rows);

} // namespace epsolve
