#pragma once

#include "epsolve/effective_potential.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace epsolve {

/// A self-consistent solution eps = eigenvalue of H_eff(eps).
struct Root {
  double energy = 0.0;
  Eigen::VectorXcd coefficients; // over the P basis, unit norm
  int dominant = 0;              // argmax_n |c_n|
  double dominance_margin = 0.0; // |c|^2 of the dominant minus the runner-up
  double residual = 0.0;         // |(H_eff(eps) - eps) c|
  bool degenerate = false;       // part of an unresolved multiple root
};

/// One complete set of basis_size roots. levels[m] is the root assigned to
/// level m.
struct Realisation {
  int index = 0;
  std::vector<Root> levels;
};

struct RealisationSet {
  std::vector<Realisation> realisations;
  std::vector<double> probabilities;
  std::vector<Root> ungrouped;

  int count() const { return static_cast<int>(realisations.size()); }
};

/// Probability assignment over realisations; must return non-negative
/// weights (they are normalised).
using ProbabilityRule =
    std::function<std::vector<double>(const std::vector<Realisation> &)>;

std::vector<double> uniform_probabilities(const std::vector<Realisation> &rs);

/// Every root of det(H_eff(eps) - eps) = 0 in the scan window, ascending.
std::vector<Root> enumerate_roots(const EffectiveOperator &op);

struct OracleSpectrum {
  std::vector<int> channels;      // -G..G
  std::vector<double> energies;   // ascending
  Eigen::MatrixXcd vectors;       // channel-major (g, n) x energies
  std::vector<double> p_weights;  // norm of the g = 0 block
  Eigen::MatrixXcd matrix;        // the assembled coupled-channel matrix
};

/// Bloch-expanded coupled-channel matrix over all |g| <= G in the basis of
/// the lowest basis_size unperturbed states, diagonalised densely.
OracleSpectrum oracle_spectrum(const ValidatedProblem &problem,
                               const EigenBasis &basis);
OracleSpectrum oracle_spectrum(const ValidatedProblem &problem);

RealisationSet group_realisations(
    const std::vector<Root> &roots, const SolverConfig &config,
    bool strict = false,
    const ProbabilityRule &probabilities = uniform_probabilities);

/// Total wavefunction
///   Psi(x, z) = exp(i K_z z) sum_g phi_g(x) exp(2 pi i g z / d_z)
/// rebuilt from a root; cell-normalised.
struct TotalWavefunction {
  Root root;
  std::vector<int> channels;  // -G..G
  Eigen::MatrixXcd amplitudes;  // grid x channels
  double kz = 0.0;
  double period = 0.0;
  double spacing = 0.0;

  const Eigen::VectorXcd channel(int g) const;
  cplx operator()(int j, double z) const;
  /// (1/d_z) integral of |Psi|^2 over one cell.
  double cell_norm() const;
};

TotalWavefunction reconstruct_total(const EffectiveOperator &op,
                                    const Root &root);

/// Kernel of realisation `i` at level `m`.
RealisationKernel realisation_kernel(const EffectiveOperator &op,
                                     const RealisationSet &set, int i, int m);

struct RootMatch {
  double root = 0.0;
  double oracle = 0.0;
  double deviation = 0.0;
  double eigenvector_deviation = 0.0;
};

struct VerificationReport {
  AuxiliaryMode auxiliary = AuxiliaryMode::ExactBlock;
  int root_count = 0;
  int oracle_count = 0;
  bool counts_equal = false;
  double max_deviation = 0.0;
  double max_eigenvector_deviation = 0.0;
  std::vector<RootMatch> matches;
  bool passed = false;
  std::string message;
};

/// Order-preserving one-to-one matching of two ascending lists minimising
/// the largest deviation. Returns index pairs (a, b).
std::vector<std::pair<int, int>> ascending_matching(const std::vector<double> &a,
                                                    const std::vector<double> &b);

/// Max |phi - phi_oracle| over all channels and grid points after aligning
/// the global phase.
double channel_deviation(const TotalWavefunction &wf, const EigenBasis &basis,
                         const OracleSpectrum &oracle, int oracle_index);

VerificationReport verify_against_oracle(const EffectiveOperator &op,
                                         const std::vector<Root> &roots);
VerificationReport verify_against_oracle(const Problem &problem);

inline constexpr double kOracleTolerance = 1e-8;
inline constexpr double kEigenvectorTolerance = 1e-6;
inline constexpr double kOraclePWeightFloor = 1e-10;

} // namespace epsolve
