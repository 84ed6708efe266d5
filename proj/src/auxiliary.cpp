#include "epsolve/auxiliary.hpp"
#include "epsolve/error.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace epsolve {

namespace {

constexpr double kResidualTolerance = 1e-8;
constexpr double kNormTolerance = 1e-8;
constexpr int kMinSupportPoints = 8;

// Deterministic sign: the first component of appreciable size is positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double cutoff = 1e-8 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > cutoff) {
      if (v[i] < 0.0) {
        v = -v;
      }
      return;
    }
  }
}

struct Eigenpairs {
  std::vector<double> values;
  Eigen::MatrixXd vectors; // unit 2-norm columns
};

// Lowest `count` eigenpairs of a symmetric tridiagonal matrix.
Eigenpairs lowest_tridiagonal(std::vector<double> diag, std::vector<double> off,
                              int count) {
  const auto n = static_cast<lapack_int>(diag.size());
  off.resize(diag.size(), 0.0);
  lapack_int found = 0;
  std::vector<double> w(diag.size());
  Eigen::MatrixXd z(n, count);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(count));
  const lapack_int info = LAPACKE_dstevr(
      LAPACK_COL_MAJOR, 'V', 'I', n, diag.data(), off.data(), 0.0, 0.0, 1,
      count, 0.0, &found, w.data(), z.data(), n, support.data());
  if (info != 0 || found != count) {
    std::ostringstream os;
    os << "dstevr failed (info = " << info << ", found " << found << " of "
       << count << ")";
    throw Error(ErrorCode::ConvergenceFailure, os.str());
  }
  w.resize(static_cast<std::size_t>(count));
  return {std::move(w), std::move(z)};
}

Eigenpairs lowest_dense(const Eigen::MatrixXd &a, int count) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "dense eigensolver failed");
  }
  std::vector<double> w(es.eigenvalues().data(),
                        es.eigenvalues().data() + count);
  return {std::move(w), es.eigenvectors().leftCols(count)};
}

void check_residual(const Eigen::MatrixXd &h, const Eigenpairs &pairs) {
  const double hnorm = h.cwiseAbs().rowwise().sum().maxCoeff();
  for (std::size_t k = 0; k < pairs.values.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const double res =
        (h * pairs.vectors.col(col) - pairs.values[k] * pairs.vectors.col(col))
            .norm();
    if (res > kResidualTolerance * hnorm) {
      std::ostringstream os;
      os << "eigenpair " << k << " residual " << res << " > 1e-8 * |H|";
      throw Error(ErrorCode::ConvergenceFailure, os.str());
    }
  }
}

// Residual check for the tridiagonal case without forming the dense matrix.
void check_residual(const std::vector<double> &diag,
                    const std::vector<double> &off, const Eigenpairs &pairs) {
  const auto n = diag.size();
  double hnorm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = std::abs(diag[i]);
    if (i > 0) row += std::abs(off[i - 1]);
    if (i + 1 < n) row += std::abs(off[i]);
    hnorm = std::max(hnorm, row);
  }
  for (std::size_t k = 0; k < pairs.values.size(); ++k) {
    const auto v = pairs.vectors.col(static_cast<Eigen::Index>(k));
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double hv = diag[i] * v[ii];
      if (i > 0) hv += off[i - 1] * v[ii - 1];
      if (i + 1 < n) hv += off[i] * v[ii + 1];
      const double r = hv - pairs.values[k] * v[ii];
      sq += r * r;
    }
    if (std::sqrt(sq) > kResidualTolerance * hnorm) {
      std::ostringstream os;
      os << "eigenpair " << k << " residual " << std::sqrt(sq)
         << " > 1e-8 * |H|";
      throw Error(ErrorCode::ConvergenceFailure, os.str());
    }
  }
}

// Hard-wall eigenproblem on the interior points 1..last-1 of the grid.
Eigenpairs hard_wall_pairs(const Grid &grid, const UnitSystem &units,
                           const Samples &v0, int last, int count) {
  const double h = grid.spacing();
  const double t = units.kinetic_scale() / (h * h);
  const int interior = last - 1;
  std::vector<double> diag(static_cast<std::size_t>(interior));
  std::vector<double> off(static_cast<std::size_t>(interior), -t);
  for (int i = 0; i < interior; ++i) {
    diag[i] = 2.0 * t + v0[static_cast<std::size_t>(i + 1)];
  }
  auto pairs = lowest_tridiagonal(diag, off, count);
  check_residual(diag, off, pairs);
  return pairs;
}

} // namespace

std::vector<EigenBasis::Level> EigenBasis::levels(double tolerance) const {
  std::vector<Level> out;
  for (double e : energies) {
    if (!out.empty() &&
        std::abs(e - out.back().energy) <=
            tolerance * std::max(1.0, std::abs(e))) {
      ++out.back().multiplicity;
      continue;
    }
    out.push_back({e, 1});
  }
  return out;
}

double EigenBasis::gram_deviation() const {
  const Eigen::MatrixXd gram = spacing * states.transpose() * states;
  return (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
      .cwiseAbs()
      .maxCoeff();
}

EigenBasis solve_unperturbed(const Grid &grid, const UnitSystem &units,
                             const Samples &v0, int count) {
  const int n = grid.points;
  const double h = grid.spacing();
  EigenBasis basis;
  basis.spacing = h;
  basis.states = Eigen::MatrixXd::Zero(n, count);

  if (grid.boundary == Boundary::HardWall) {
    if (count > n - 2) {
      throw Error(ErrorCode::GridTooCoarse, "more states than interior points");
    }
    auto pairs = hard_wall_pairs(grid, units, v0, n - 1, count);
    basis.energies = std::move(pairs.values);
    basis.states.middleRows(1, n - 2) = pairs.vectors / std::sqrt(h);
  } else {
    if (count > n) {
      throw Error(ErrorCode::GridTooCoarse, "more states than grid points");
    }
    const double t = units.kinetic_scale() / (h * h);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      a(i, i) = 2.0 * t + v0[static_cast<std::size_t>(i)];
      a(i, (i + 1) % n) -= t;
      a((i + 1) % n, i) -= t;
    }
    auto pairs = lowest_dense(a, count);
    check_residual(a, pairs);
    basis.energies = std::move(pairs.values);
    basis.states = pairs.vectors / std::sqrt(h);
  }
  for (int k = 0; k < count; ++k) {
    fix_sign(basis.states.col(k));
  }
  return basis;
}

EigenBasis solve_unperturbed(const ValidatedProblem &problem) {
  const auto &cfg = problem.config();
  const int count = std::max(cfg.basis_size, cfg.effective_aux_size());
  return solve_unperturbed(problem.grid(), problem.units(), problem.spec().v0,
                           count);
}

Eigen::MatrixXcd coupling_matrix(const ValidatedProblem &problem,
                                 const EigenBasis &basis, int g, int rows,
                                 int cols) {
  const auto v = problem.scaled_harmonic(g);
  const Eigen::Map<const Eigen::VectorXcd> vg(v.data(),
                                              static_cast<Eigen::Index>(v.size()));
  const Eigen::MatrixXcd right =
      vg.asDiagonal() * basis.states.leftCols(cols).cast<cplx>();
  return basis.spacing * basis.states.leftCols(rows).transpose().cast<cplx>() *
         right;
}

QBlockSolution solve_q_block(const ValidatedProblem &problem,
                             const EigenBasis &basis) {
  if (problem.config().auxiliary != AuxiliaryMode::ExactBlock) {
    throw Error(ErrorCode::WrongMode, "solve_q_block requires exact-block mode");
  }
  if (!problem.fixed_bloch()) {
    throw Error(ErrorCode::WrongMode, "solve_q_block requires fixed-Bloch mode");
  }
  const int nb = problem.config().basis_size;
  const int G = problem.config().channel_cutoff;

  QBlockSolution out;
  out.channels = problem.q_channels();
  out.states_per_channel = nb;
  const auto nc = static_cast<int>(out.channels.size());
  const int dim = nc * nb;

  // Coupling blocks <q|V_d|q'> for every harmonic difference d.
  std::map<int, Eigen::MatrixXcd> blocks;
  for (int d = -2 * G; d <= 2 * G; ++d) {
    if (d != 0) {
      blocks.emplace(d, coupling_matrix(problem, basis, d, nb, nb));
    }
  }

  Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(dim, dim);
  for (int a = 0; a < nc; ++a) {
    const int ga = out.channels[a];
    const double offset = channel_offset(problem, ga);
    for (int n = 0; n < nb; ++n) {
      q(a * nb + n, a * nb + n) = basis.energies[n] + offset;
    }
    for (int b = 0; b < nc; ++b) {
      const int diff = ga - out.channels[b];
      if (b == a || std::abs(diff) > G) {
        continue;
      }
      q.block(a * nb, b * nb, nb, nb) = blocks.at(diff);
    }
  }
  q = 0.5 * (q + q.adjoint()).eval();

  Eigen::MatrixXcd h_pq = Eigen::MatrixXcd::Zero(nb, dim);
  for (int b = 0; b < nc; ++b) {
    h_pq.block(0, b * nb, nb, nb) = blocks.at(-out.channels[b]);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(q);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "Q-block eigensolve failed");
  }
  const auto &vals = solver.eigenvalues();
  out.q_energies.assign(vals.data(), vals.data() + vals.size());
  out.q_vectors = solver.eigenvectors();
  out.q_couplings = h_pq * out.q_vectors;
  out.q_matrix = std::move(q);
  return out;
}

Eigen::VectorXcd apply_kinetic(const Grid &grid, const UnitSystem &units,
                               const Eigen::VectorXcd &psi) {
  const int n = grid.points;
  const double h = grid.spacing();
  const double t = units.kinetic_scale() / (h * h);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  if (grid.boundary == Boundary::HardWall) {
    for (int j = 1; j < n - 1; ++j) {
      const cplx left = j > 1 ? psi[j - 1] : cplx(0.0);
      const cplx right = j < n - 2 ? psi[j + 1] : cplx(0.0);
      out[j] = t * (2.0 * psi[j] - left - right);
    }
  } else {
    for (int j = 0; j < n; ++j) {
      out[j] = t * (2.0 * psi[j] - psi[(j + n - 1) % n] - psi[(j + 1) % n]);
    }
  }
  return out;
}

double free_motion_energy(const Eigen::VectorXcd &state, const Grid &grid,
                          const UnitSystem &units) {
  if (state.size() != grid.points) {
    throw Error(ErrorCode::InvalidArgument, "state size != grid points");
  }
  Eigen::VectorXcd psi = state;
  if (grid.boundary == Boundary::HardWall) {
    psi[0] = 0.0;
    psi[grid.points - 1] = 0.0;
  }
  const double h = grid.spacing();
  const double norm = h * psi.squaredNorm();
  if (std::abs(norm - 1.0) > kNormTolerance) {
    std::ostringstream os;
    os << "state norm " << norm << " deviates from 1";
    throw Error(ErrorCode::NotNormalized, os.str());
  }
  return h * psi.dot(apply_kinetic(grid, units, psi)).real();
}

double free_motion_energy(const Eigen::VectorXcd &state,
                          const ValidatedProblem &problem) {
  return free_motion_energy(state, problem.grid(), problem.units());
}

RestrictedState restricted_ground_state(const Grid &grid,
                                        const UnitSystem &units,
                                        const Samples &v0, double delta) {
  if (grid.boundary != Boundary::HardWall) {
    throw Error(ErrorCode::WrongMode, "support restriction needs hard walls");
  }
  if (!(delta > 0.0) || delta > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1]");
  }
  // Last grid index inside [0, delta L]; it becomes the new wall.
  const int last = static_cast<int>(
      std::floor(delta * (grid.points - 1) * (1.0 + 1e-12)));
  if (last + 1 < kMinSupportPoints) {
    std::ostringstream os;
    os << "only " << last + 1 << " grid points inside delta L";
    throw Error(ErrorCode::SupportTooSmall, os.str());
  }
  auto pairs = hard_wall_pairs(grid, units, v0, last, 1);

  RestrictedState out;
  out.delta = delta;
  out.support_points = last + 1;
  out.state = Eigen::VectorXd::Zero(grid.points);
  out.state.segment(1, last - 1) = pairs.vectors.col(0);
  out.state /= std::sqrt(grid.spacing() * out.state.squaredNorm());
  fix_sign(out.state);
  out.free_energy = free_motion_energy(out.state.cast<cplx>(), grid, units);
  return out;
}

RestrictedState restricted_ground_state(const ValidatedProblem &problem,
                                        double delta) {
  return restricted_ground_state(problem.grid(), problem.units(),
                                 problem.spec().v0, delta);
}

} // namespace epsolve
