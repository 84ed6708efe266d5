#include "epsolve/effective_potential.hpp"
#include "epsolve/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace epsolve {

namespace {

// Residue eigenvalues at or below this floor (relative to the energy scale
// squared) are numerically zero couplings: the root they would produce sits
// closer to the pole than double precision resolves.
constexpr double kResidueFloor = 1e-20;

double energy_scale(const EigenBasis &basis) {
  double s = 1.0;
  for (double e : basis.energies) {
    s = std::max(s, std::abs(e));
  }
  return s;
}

} // namespace

EffectiveOperator::EffectiveOperator(Problem problem)
    : EffectiveOperator(problem, solve_unperturbed(*problem)) {}

EffectiveOperator::EffectiveOperator(Problem problem, EigenBasis basis)
    : problem_(std::move(problem)), basis_(std::move(basis)) {
  const auto &cfg = problem_->config();
  const int needed = std::max(cfg.basis_size, cfg.effective_aux_size());
  if (basis_.count() < needed) {
    throw Error(ErrorCode::InvalidArgument,
                "basis has fewer states than the configuration needs");
  }
  const int G = cfg.channel_cutoff;
  const int count = basis_.count();
  for (int g = -2 * G; g <= 2 * G; ++g) {
    if (g != 0) {
      couplings_.emplace(g, coupling_matrix(*problem_, basis_, g, count, count));
    }
  }
  if (cfg.auxiliary == AuxiliaryMode::ExactBlock) {
    q_block_ = solve_q_block(*problem_, basis_);
  }
  build_terms();
}

const Eigen::MatrixXcd &EffectiveOperator::coupling(int g) const {
  auto it = couplings_.find(g);
  if (it == couplings_.end()) {
    throw Error(ErrorCode::InvalidArgument, "no coupling block for this g");
  }
  return it->second;
}

void EffectiveOperator::build_terms() {
  const auto &p = *problem_;
  const auto &cfg = p.config();
  const int nb = cfg.basis_size;
  const int nx = p.grid().points;
  const double h = basis_.spacing;
  const auto channels = p.q_channels();

  // lambda V_{-g}(x) psi_q(x) for every eliminated (g, q).
  const int per_channel =
      cfg.auxiliary == AuxiliaryMode::ExactBlock ? nb : cfg.effective_aux_size();
  Eigen::MatrixXcd channel_functions(nx, channels.size() * per_channel);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto v = p.scaled_harmonic(-channels[c]);
    for (int q = 0; q < per_channel; ++q) {
      auto col = channel_functions.col(static_cast<Eigen::Index>(c) * per_channel + q);
      for (int j = 0; j < nx; ++j) {
        col[j] = v[static_cast<std::size_t>(j)] * basis_.states(j, q);
      }
    }
  }

  if (q_block_) {
    term_functions_ = channel_functions * q_block_->q_vectors;
    for (std::size_t k = 0; k < q_block_->q_energies.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      PoleTerm t;
      t.channel = 0;
      t.index = static_cast<int>(k);
      t.aux_energy = q_block_->q_energies[k];
      t.pole = q_block_->q_energies[k];
      t.residue = q_block_->q_couplings.col(kk);
      terms_.push_back(std::move(t));
    }
    return;
  }

  term_functions_ = std::move(channel_functions);
  const Eigen::MatrixXcd residues =
      h * basis_.states.leftCols(nb).transpose().cast<cplx>() * term_functions_;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const int g = channels[c];
    for (int q = 0; q < per_channel; ++q) {
      PoleTerm t;
      t.channel = g;
      t.index = q;
      t.aux_energy = basis_.energies[q];
      t.pole = p.fixed_bloch() ? basis_.energies[q] + channel_offset(p, g)
                               : std::numeric_limits<double>::quiet_NaN();
      t.residue = residues.col(static_cast<Eigen::Index>(c) * per_channel + q);
      terms_.push_back(std::move(t));
    }
  }
}

double EffectiveOperator::denominator(const PoleTerm &term, double eps) const {
  const auto &p = *problem_;
  if (p.fixed_bloch()) {
    return eps - term.pole;
  }
  const double e = p.total_energy();
  const double epg = pg_energy(p.units(), p.spec().period, term.channel);
  const double sign = term.channel > 0 ? 1.0 : -1.0;
  return eps - term.aux_energy - epg -
         2.0 * sign * std::sqrt(epg * std::max(0.0, e - eps));
}

void EffectiveOperator::check_admissible(double eps) const {
  const auto &p = *problem_;
  if (!p.fixed_bloch() && eps > p.total_energy()) {
    std::ostringstream os;
    os << "eps = " << eps << " above total energy " << p.total_energy();
    throw Error(ErrorCode::AboveTotalEnergy, os.str());
  }
  const double w = p.config().pole_window;
  for (const auto &t : terms_) {
    if (std::abs(denominator(t, eps)) < w) {
      std::ostringstream os;
      os << "eps = " << eps << " within " << w << " of a pole (channel "
         << t.channel << ", state " << t.index << ")";
      throw Error(ErrorCode::PoleProximity, os.str());
    }
  }
}

void EffectiveOperator::check_evaluable(double eps) const {
  const auto &p = *problem_;
  if (!p.fixed_bloch() && eps > p.total_energy()) {
    std::ostringstream os;
    os << "eps = " << eps << " above total energy " << p.total_energy();
    throw Error(ErrorCode::AboveTotalEnergy, os.str());
  }
  const double floor =
      4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(eps));
  for (const auto &t : terms_) {
    if (std::abs(denominator(t, eps)) <= floor) {
      std::ostringstream os;
      os << "eps = " << eps << " coincides with a pole (channel " << t.channel
         << ", state " << t.index << ")";
      throw Error(ErrorCode::PoleProximity, os.str());
    }
  }
}

Eigen::MatrixXcd EffectiveOperator::matrix_unchecked(double eps) const {
  const int nb = basis_size();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(nb, nb);
  for (int n = 0; n < nb; ++n) {
    h(n, n) = basis_.energies[n];
  }
  for (const auto &t : terms_) {
    h.noalias() += (t.residue / denominator(t, eps)) * t.residue.adjoint();
  }
  return h;
}

int PoleTable::total_rank() const {
  int r = 0;
  for (const auto &p : poles) {
    r += p.residue_rank;
  }
  return r;
}

int residue_rank(const Eigen::MatrixXcd &residue) {
  if (residue.size() == 0) {
    return 0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(residue,
                                                     Eigen::EigenvaluesOnly);
  // Rounding in a sum of rank-one terms leaves eigenvalues of order
  // eps_mach times the largest one.
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  const double floor = std::max(
      kResidueFloor, 64.0 * std::numeric_limits<double>::epsilon() * top);
  int rank = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > floor) {
      ++rank;
    }
  }
  return rank;
}

PoleTable pole_table(const EffectiveOperator &op) {
  const auto &p = op.problem();
  if (!p.fixed_bloch()) {
    throw Error(ErrorCode::WrongMode,
                "pole_table requires fixed-Bloch mode (fixed-energy poles "
                "depend on eps)");
  }
  std::vector<std::size_t> order(op.terms().size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return op.terms()[a].pole < op.terms()[b].pole;
  });

  const double tol = p.config().degeneracy_tolerance;
  const double scale2 = std::pow(energy_scale(op.basis()), 2);
  const int nb = op.basis_size();
  PoleTable table;
  std::vector<Eigen::MatrixXcd> residues;
  for (auto idx : order) {
    const auto &t = op.terms()[idx];
    if (table.poles.empty() ||
        std::abs(t.pole - table.poles.back().value) >
            tol * std::max(1.0, std::abs(t.pole))) {
      table.poles.push_back({t.pole, 0, 0, {}});
      residues.push_back(Eigen::MatrixXcd::Zero(nb, nb));
    }
    auto &pole = table.poles.back();
    ++pole.multiplicity;
    pole.origins.push_back({t.channel, t.index});
    residues.back() += t.residue * t.residue.adjoint();
  }
  for (std::size_t i = 0; i < table.poles.size(); ++i) {
    table.poles[i].residue_rank = residue_rank(residues[i] / scale2);
  }
  return table;
}

Eigen::MatrixXcd ep_matrix(const EffectiveOperator &op, double eps) {
  op.check_admissible(eps);
  return op.matrix_unchecked(eps);
}

Eigen::MatrixXcd nonlocal_part(const EffectiveOperator &op, double eps) {
  Eigen::MatrixXcd h = ep_matrix(op, eps);
  for (int n = 0; n < op.basis_size(); ++n) {
    h(n, n) -= op.unperturbed_energy(n);
  }
  return h;
}

double SignedLogDet::value() const {
  return sign == 0 ? 0.0 : sign * std::exp(log_abs);
}

ShiftedSpectrum shifted_spectrum(const EffectiveOperator &op, double eps) {
  Eigen::MatrixXcd a = op.matrix_unchecked(eps);
  a.diagonal().array() -= eps;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "ep eigensolve failed");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

SignedLogDet characteristic_signed(const EffectiveOperator &op, double eps) {
  op.check_admissible(eps);
  const auto spec = shifted_spectrum(op, eps);
  SignedLogDet out{1, 0.0};
  for (Eigen::Index i = 0; i < spec.values.size(); ++i) {
    const double mu = spec.values[i];
    if (mu == 0.0) {
      return {0, -std::numeric_limits<double>::infinity()};
    }
    if (mu < 0.0) {
      out.sign = -out.sign;
    }
    out.log_abs += std::log(std::abs(mu));
  }
  return out;
}

double characteristic(const EffectiveOperator &op, double eps) {
  return characteristic_signed(op, eps).value();
}

int positive_inertia(const EffectiveOperator &op, double eps) {
  const auto spec = shifted_spectrum(op, eps);
  return static_cast<int>((spec.values.array() > 0.0).count());
}

RealisationKernel::RealisationKernel(const EffectiveOperator &op, double eps,
                                     const Eigen::VectorXcd &coefficients,
                                     int realisation, int level)
    : eps_(eps), realisation_(realisation), level_(level),
      spacing_(op.basis().spacing), phi_(op.term_functions()) {
  if (coefficients.size() != op.basis_size()) {
    throw Error(ErrorCode::IndexMismatch,
                "coefficient vector length != basis size");
  }
  op.check_evaluable(eps);
  inverse_denominators_.resize(static_cast<Eigen::Index>(op.terms().size()));
  for (std::size_t t = 0; t < op.terms().size(); ++t) {
    inverse_denominators_[static_cast<Eigen::Index>(t)] =
        1.0 / op.denominator(op.terms()[t], eps);
  }
  state_ = op.basis().states.leftCols(op.basis_size()).cast<cplx>() *
           coefficients;
  kernel_state_ = apply(state_);
  const auto &v0 = op.problem().spec().v0;
  v0_ = Eigen::Map<const Eigen::VectorXd>(v0.data(),
                                          static_cast<Eigen::Index>(v0.size()));
}

cplx RealisationKernel::operator()(int i, int j) const {
  cplx sum = 0.0;
  for (Eigen::Index t = 0; t < phi_.cols(); ++t) {
    sum += phi_(i, t) * std::conj(phi_(j, t)) * inverse_denominators_[t];
  }
  return sum;
}

Eigen::MatrixXcd RealisationKernel::sample(const std::vector<int> &points) const {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXcd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      out(a, b) = (*this)(points[a], points[b]);
    }
  }
  return out;
}

Eigen::VectorXcd RealisationKernel::apply(const Eigen::VectorXcd &psi) const {
  const Eigen::VectorXcd overlaps =
      spacing_ * (phi_.adjoint() * psi).cwiseProduct(
                     inverse_denominators_.cast<cplx>());
  return phi_ * overlaps;
}

Eigen::VectorXcd RealisationKernel::diagonal() const {
  Eigen::VectorXcd out(phi_.rows());
  for (Eigen::Index i = 0; i < phi_.rows(); ++i) {
    out[i] = (*this)(static_cast<int>(i), static_cast<int>(i));
  }
  return out;
}

Eigen::VectorXcd RealisationKernel::local_density() const {
  return state_.conjugate().cwiseProduct(kernel_state_);
}

Eigen::VectorXcd RealisationKernel::local_potential() const {
  const double cutoff = 1e-10 * state_.cwiseAbs().maxCoeff();
  Eigen::VectorXcd out(state_.size());
  for (Eigen::Index i = 0; i < state_.size(); ++i) {
    out[i] = std::abs(state_[i]) > cutoff
                 ? kernel_state_[i] / state_[i]
                 : cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  }
  return out;
}

Eigen::VectorXcd RealisationKernel::effective_potential() const {
  return v0_.cast<cplx>() + local_potential();
}

} // namespace epsolve
