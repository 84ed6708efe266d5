#pragma once

#include "epsolve/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace epsolve {

/// Lowest eigenpairs of the unperturbed operator -(hbar^2/2m) d^2/dx^2 + V0
/// under the grid's boundary condition.
///
/// States are real, orthonormal under <f, g> = h sum_j f_j g_j and stored as
/// columns on the full grid (wall samples are zero for hard-wall grids).
/// Degenerate energies stay as separate states; `levels` gives the merged
/// reporting view.
struct EigenBasis {
  std::vector<double> energies;
  Eigen::MatrixXd states;
  double spacing = 0.0;

  int count() const { return static_cast<int>(energies.size()); }

  struct Level {
    double energy;
    int multiplicity;
  };
  std::vector<Level> levels(double tolerance) const;

  /// max |<psi_i, psi_j> - delta_ij|.
  double gram_deviation() const;
};

/// Exact elimination of the channels g != 0: diagonalisation of the Q block
/// (each channel carries Delta_g on its diagonal plus the couplings
/// V_{g-g'} to the other eliminated channels).
struct QBlockSolution {
  std::vector<int> channels;      // -G..-1, 1..G
  int states_per_channel = 0;     // basis states per channel (= N_b)
  std::vector<double> q_energies; // ascending, size N_b * 2G
  Eigen::MatrixXcd q_vectors;     // Q-basis (channel-major) x q_energies
  Eigen::MatrixXcd q_couplings;   // N_b x q_energies, w_k[n] = <n|H_PQ|k>
  Eigen::MatrixXcd q_matrix;      // the assembled Q block itself
};

struct RestrictedState {
  double delta = 1.0;
  int support_points = 0; // grid points in [0, delta L], walls included
  Eigen::VectorXd state;  // full grid, zero outside the support
  double free_energy = 0.0;
};

EigenBasis solve_unperturbed(const ValidatedProblem &problem);

/// Same solve with an explicit state count (used by refinement studies).
EigenBasis solve_unperturbed(const Grid &grid, const UnitSystem &units,
                             const Samples &v0, int count);

/// lambda * <psi_q | V_g | psi_n> by grid quadrature; rows q < rows,
/// columns n < cols.
Eigen::MatrixXcd coupling_matrix(const ValidatedProblem &problem,
                                 const EigenBasis &basis, int g, int rows,
                                 int cols);

QBlockSolution solve_q_block(const ValidatedProblem &problem,
                             const EigenBasis &basis);

/// Applies the finite-difference kinetic operator. Wall samples of a
/// hard-wall grid are treated as Dirichlet zeros and map to zero.
Eigen::VectorXcd apply_kinetic(const Grid &grid, const UnitSystem &units,
                               const Eigen::VectorXcd &psi);

/// <psi|T|psi> for a state normalised on the grid.
double free_motion_energy(const Eigen::VectorXcd &state,
                          const ValidatedProblem &problem);
double free_motion_energy(const Eigen::VectorXcd &state, const Grid &grid,
                          const UnitSystem &units);

/// Ground state of the unperturbed problem with hard walls moved in to
/// [0, delta L], embedded in the full grid.
RestrictedState restricted_ground_state(const ValidatedProblem &problem,
                                        double delta);
RestrictedState restricted_ground_state(const Grid &grid,
                                        const UnitSystem &units,
                                        const Samples &v0, double delta);

} // namespace epsolve
