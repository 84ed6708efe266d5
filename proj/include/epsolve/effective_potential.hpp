#pragma once

#include "epsolve/auxiliary.hpp"
#include "epsolve/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace epsolve {

/// One separable term r r^dagger / d(eps) of the effective Hamiltonian.
///
/// Diagonal mode: one term per eliminated channel g and auxiliary state q,
/// with r[n] = <n|lambda V_{-g}|q> and d = eps - eps_q - Delta_g.
/// Exact-block mode: one term per Q-block eigenstate k, with r = w_k and
/// d = eps - E^Q_k. `pole` is NaN in fixed-energy mode, where the
/// denominator depends on eps through K_z(eps).
struct PoleTerm {
  int channel = 0; // g, or 0 for a Q-block eigenstate
  int index = 0;   // q or k
  double aux_energy = 0.0;
  double pole = 0.0;
  Eigen::VectorXcd residue;
};

class EffectiveOperator {
public:
  explicit EffectiveOperator(Problem problem);
  EffectiveOperator(Problem problem, EigenBasis basis);

  const ValidatedProblem &problem() const { return *problem_; }
  const Problem &problem_ptr() const { return problem_; }
  const EigenBasis &basis() const { return basis_; }
  const std::optional<QBlockSolution> &q_block() const { return q_block_; }
  const std::vector<PoleTerm> &terms() const { return terms_; }
  int basis_size() const { return problem_->config().basis_size; }

  /// lambda <psi_q|V_g|psi_n> over every computed basis state.
  const Eigen::MatrixXcd &coupling(int g) const;

  /// Grid functions Phi_t(x) with <n|Phi_t> = residue of term t.
  const Eigen::MatrixXcd &term_functions() const { return term_functions_; }

  double denominator(const PoleTerm &term, double eps) const;

  /// diag(eps0_n) + sum_t r_t r_t^dagger / d_t(eps) with no pole or energy
  /// checks; callers guarantee eps is admissible.
  Eigen::MatrixXcd matrix_unchecked(double eps) const;

  /// Throws PoleProximity / AboveTotalEnergy for inadmissible eps.
  void check_admissible(double eps) const;
  /// Weaker check for quantities evaluated at a root: only a denominator at
  /// rounding level (or eps above E) is rejected.
  void check_evaluable(double eps) const;

  double unperturbed_energy(int n) const { return basis_.energies[n]; }

private:
  void build_terms();

  Problem problem_;
  EigenBasis basis_;
  std::optional<QBlockSolution> q_block_;
  std::map<int, Eigen::MatrixXcd> couplings_;
  std::vector<PoleTerm> terms_;
  Eigen::MatrixXcd term_functions_;
};

struct PoleOrigin {
  int channel;
  int index;
};

struct Pole {
  double value = 0.0;
  int multiplicity = 0;
  int residue_rank = 0;
  std::vector<PoleOrigin> origins;
};

/// Strictly ascending poles, values closer than the degeneracy tolerance
/// merged.
struct PoleTable {
  std::vector<Pole> poles;

  std::size_t size() const { return poles.size(); }
  /// Sum of residue ranks: the number of roots the poles contribute.
  int total_rank() const;
};

/// Numerical rank of a summed residue sum_t r_t r_t^dagger.
int residue_rank(const Eigen::MatrixXcd &residue);

PoleTable pole_table(const EffectiveOperator &op);

Eigen::MatrixXcd ep_matrix(const EffectiveOperator &op, double eps);

/// ep_matrix(eps) - diag(eps0).
Eigen::MatrixXcd nonlocal_part(const EffectiveOperator &op, double eps);

/// det(H_eff(eps) - eps) as sign and log-magnitude.
struct SignedLogDet {
  int sign = 0; // -1, 0, +1
  double log_abs = 0.0;

  double value() const;
};

SignedLogDet characteristic_signed(const EffectiveOperator &op, double eps);
double characteristic(const EffectiveOperator &op, double eps);

/// Number of positive eigenvalues of H_eff(eps) - eps. In fixed-Bloch mode
/// this is strictly decreasing through roots and jumps up by the residue
/// rank at each pole, which makes it an exact root counter.
int positive_inertia(const EffectiveOperator &op, double eps);

/// Eigen-decomposition of H_eff(eps) - eps, eigenvalues ascending.
struct ShiftedSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
};
ShiftedSpectrum shifted_spectrum(const EffectiveOperator &op, double eps);

/// Nonlocal effective-potential kernel at a fixed energy,
///   V(x, x') = sum_t Phi_t(x) conj(Phi_t(x')) / d_t(eps),
/// together with the local split V_eff = V0 + J for one state.
class RealisationKernel {
public:
  RealisationKernel(const EffectiveOperator &op, double eps,
                    const Eigen::VectorXcd &coefficients, int realisation,
                    int level);

  int realisation() const { return realisation_; }
  int level() const { return level_; }
  double energy() const { return eps_; }

  cplx operator()(int i, int j) const;
  Eigen::MatrixXcd sample(const std::vector<int> &points) const;

  /// (V psi)(x) = h sum_x' V(x, x') psi(x').
  Eigen::VectorXcd apply(const Eigen::VectorXcd &psi) const;
  /// V(x, x).
  Eigen::VectorXcd diagonal() const;

  /// The state psi(x) = sum_n c_n psi0_n(x) the kernel was built for.
  const Eigen::VectorXcd &state() const { return state_; }

  /// psi^*(x) (V psi)(x); integrates to <psi|V|psi>.
  Eigen::VectorXcd local_density() const;

  /// J(x) = (V psi)(x) / psi(x), the local equivalent of the nonlocal part.
  /// NaN where |psi(x)| is negligible (walls, nodes).
  Eigen::VectorXcd local_potential() const;

  /// V0(x) + J(x).
  Eigen::VectorXcd effective_potential() const;

private:
  double eps_;
  int realisation_;
  int level_;
  double spacing_;
  Eigen::MatrixXcd phi_;
  Eigen::VectorXd inverse_denominators_;
  Eigen::VectorXcd state_;
  Eigen::VectorXcd kernel_state_;
  Eigen::VectorXd v0_;
};

} // namespace epsolve
