#include "epsolve/realisation.hpp"
#include "epsolve/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace epsolve {

namespace {

constexpr int kMaxDoublings = 8;
constexpr double kDominanceMargin = 0.1;
constexpr double kNearPoleFactor = 10.0;


// Spectral information about H_eff(eps) - eps.
struct Probe {
  bool finite = false;
  int positive = 0;
  int sign = 0;
  Eigen::VectorXd values;   // eigenvalues of H_eff(eps) - eps
  Eigen::MatrixXcd vectors; // matching eigenvectors
};

class Scanner {
public:
  explicit Scanner(const EffectiveOperator &op)
      : op_(op), cfg_(op.problem().config()),
        fixed_bloch_(op.problem().fixed_bloch()),
        near_(kNearPoleFactor * cfg_.pole_window) {}

  // Within near_ of a pole the matrix is multiplied by prod_u (eps - p_u)/s
  // over the nearby term poles, which keeps every entry bounded. The
  // eigenvectors are unchanged and eigenvalues are rescaled back.
  Probe probe(double eps) const {
    const auto &terms = op_.terms();
    const int nb = op_.basis_size();
    std::vector<std::size_t> nearby;
    if (fixed_bloch_) {
      for (std::size_t t = 0; t < terms.size(); ++t) {
        if (std::abs(eps - terms[t].pole) <= near_) {
          nearby.push_back(t);
        }
      }
    }
    Probe out;
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(nb, nb);
    double prefactor = 1.0;
    if (nearby.empty()) {
      s = op_.matrix_unchecked(eps);
      s.diagonal().array() -= eps;
    } else {
      std::vector<double> f(nearby.size());
      for (std::size_t i = 0; i < nearby.size(); ++i) {
        f[i] = (eps - terms[nearby[i]].pole) / near_;
        prefactor *= f[i];
      }
      if (prefactor == 0.0) {
        return out;
      }
      for (int n = 0; n < nb; ++n) {
        s(n, n) = prefactor * (op_.unperturbed_energy(n) - eps);
      }
      std::size_t next = 0;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        double coeff;
        if (next < nearby.size() && nearby[next] == t) {
          coeff = 1.0 / near_;
          for (std::size_t i = 0; i < nearby.size(); ++i) {
            if (i != next) {
              coeff *= f[i];
            }
          }
          ++next;
        } else {
          coeff = prefactor / op_.denominator(terms[t], eps);
        }
        s.noalias() += (coeff * terms[t].residue) * terms[t].residue.adjoint();
      }
    }
    if (!s.allFinite()) {
      return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(s);
    if (es.info() != Eigen::Success) {
      return out;
    }
    out.finite = true;
    out.values = es.eigenvalues() / prefactor;
    out.vectors = es.eigenvectors();
    out.sign = 1;
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
      const double mu = out.values[i];
      if (mu > 0.0) {
        ++out.positive;
      } else if (mu < 0.0) {
        out.sign = -out.sign;
      } else {
        out.sign = 0;
      }
    }
    return out;
  }

  // Bisection on the determinant sign. It runs past root_tolerance down to
  // adjacent doubles, which is the polishing step.
  double bisect(double lo, double hi, int sign_hi) const {
    while (true) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) {
        break;
      }
      const Probe p = probe(mid);
      if (!p.finite) {
        break;
      }
      if (p.sign == 0) {
        return mid;
      }
      if (p.sign == sign_hi) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    const Probe plo = probe(lo);
    const Probe phi = probe(hi);
    if (!plo.finite) return hi;
    if (!phi.finite) return lo;
    return plo.values.cwiseAbs().minCoeff() <= phi.values.cwiseAbs().minCoeff()
               ? lo
               : hi;
  }

  Root make_root(double eps, int pick = 0, bool degenerate = false) const {
    const Probe p = probe(eps);
    if (!p.finite) {
      std::ostringstream os;
      os << "root at " << eps << " sits on a pole";
      throw Error(ErrorCode::PoleWindowLoss, os.str());
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p.values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::abs(p.values[a]) < std::abs(p.values[b]);
    });
    const Eigen::Index k = order[static_cast<std::size_t>(pick)];
    Root r;
    r.energy = eps;
    r.coefficients = p.vectors.col(k);
    Eigen::Index big = 0;
    r.coefficients.cwiseAbs().maxCoeff(&big);
    r.coefficients *= std::abs(r.coefficients[big]) / r.coefficients[big];
    r.coefficients.normalize();
    r.residual = std::abs(p.values[k]);
    r.degenerate = degenerate;

    std::vector<double> w(static_cast<std::size_t>(r.coefficients.size()));
    for (std::size_t n = 0; n < w.size(); ++n) {
      w[n] = std::norm(r.coefficients[static_cast<Eigen::Index>(n)]);
    }
    r.dominant = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
    std::vector<double> sorted = w;
    std::sort(sorted.rbegin(), sorted.rend());
    r.dominance_margin = sorted.size() > 1 ? sorted[0] - sorted[1] : 1.0;
    return r;
  }

  // Inertia-guided isolation: in fixed-Bloch mode positive(a) - positive(b)
  // is exactly the number of roots in (a, b] when no pole lies inside.
  void isolate(double a, const Probe &pa, double b, const Probe &pb,
               std::vector<Root> &out) const {
    const int k = pa.positive - pb.positive;
    if (k <= 0) {
      return;
    }
    if (k == 1) {
      if (pb.sign == 0) {
        out.push_back(make_root(b));
      } else {
        out.push_back(make_root(bisect(a, b, pb.sign)));
      }
      return;
    }
    const double mid = 0.5 * (a + b);
    if (b - a <= cfg_.root_tolerance * std::max(1.0, std::abs(mid)) ||
        mid <= a || mid >= b) {
      for (int i = 0; i < k; ++i) {
        out.push_back(make_root(mid, i, true));
      }
      return;
    }
    const Probe pm = probe(mid);
    isolate(a, pa, mid, pm, out);
    isolate(mid, pm, b, pb, out);
  }

  struct Bracket {
    double lo, hi;
    int sign_hi;
  };

  // Uniform sign scan over [a, b] with `cells` cells; non-finite samples are
  // skipped (fixed-energy poles).
  std::vector<Bracket> sign_changes(double a, double b, int cells) const {
    std::vector<Bracket> out;
    double last_eps = a;
    int last_sign = 0;
    bool have_last = false;
    for (int i = 0; i <= cells; ++i) {
      const double eps = i == cells ? b : a + (b - a) * i / cells;
      if (!admissible(eps)) {
        have_last = false;
        continue;
      }
      const Probe p = probe(eps);
      if (!p.finite) {
        have_last = false;
        continue;
      }
      if (p.sign == 0) {
        out.push_back({eps, eps, 0});
        have_last = false;
        continue;
      }
      if (have_last && p.sign != last_sign) {
        out.push_back({last_eps, eps, p.sign});
      }
      last_eps = eps;
      last_sign = p.sign;
      have_last = true;
    }
    return out;
  }

  // Adaptive doubling until the sign-change count is unchanged over two
  // consecutive doublings.
  std::vector<Bracket> stable_scan(double a, double b, int cells,
                                   bool &stable) const {
    std::vector<Bracket> brackets;
    int prev = -1;
    int unchanged = 0;
    stable = false;
    for (int it = 0; it <= kMaxDoublings; ++it) {
      brackets = sign_changes(a, b, cells);
      const int c = static_cast<int>(brackets.size());
      unchanged = c == prev ? unchanged + 1 : 0;
      prev = c;
      if (unchanged >= 2) {
        stable = true;
        break;
      }
      cells *= 2;
    }
    return brackets;
  }

  Root resolve(const Bracket &br) const {
    if (br.sign_hi == 0) {
      return make_root(br.lo);
    }
    return make_root(bisect(br.lo, br.hi, br.sign_hi));
  }

  bool admissible(double eps) const {
    if (fixed_bloch_) {
      return true;
    }
    for (const auto &t : op_.terms()) {
      if (std::abs(op_.denominator(t, eps)) < cfg_.pole_window) {
        return false;
      }
    }
    return true;
  }

  const EffectiveOperator &op() const { return op_; }

private:
  const EffectiveOperator &op_;
  const SolverConfig &cfg_;
  bool fixed_bloch_;
  double near_;
};

struct Cluster {
  double lo, hi;
  std::vector<double> poles; // distinct term poles inside
  int rank = 0;
};

std::vector<Cluster> pole_clusters(const PoleTable &table,
                                   const EffectiveOperator &op, double w) {
  std::vector<Cluster> out;
  for (const auto &pole : table.poles) {
    if (out.empty() || pole.value - w > out.back().hi) {
      out.push_back({pole.value - w, pole.value + w, {}, 0});
    }
    auto &c = out.back();
    c.hi = pole.value + w;
    c.rank += pole.residue_rank;
    for (const auto &origin : pole.origins) {
      for (const auto &t : op.terms()) {
        if (t.channel == origin.channel && t.index == origin.index) {
          c.poles.push_back(t.pole);
        }
      }
    }
  }
  for (auto &c : out) {
    std::sort(c.poles.begin(), c.poles.end());
    c.poles.erase(std::unique(c.poles.begin(), c.poles.end()), c.poles.end());
  }
  return out;
}

std::pair<double, double> auto_window_bloch(const Scanner &sc,
                                            const EffectiveOperator &op,
                                            const PoleTable &table) {
  const int nb = op.basis_size();
  double lo = op.unperturbed_energy(0);
  double hi = op.unperturbed_energy(nb - 1);
  if (table.size() > 0) {
    lo = std::min(lo, table.poles.front().value);
    hi = std::max(hi, table.poles.back().value);
  }
  double step = 1.0;
  lo -= step;
  for (int i = 0; sc.probe(lo).positive != nb; ++i) {
    if (i > 60) throw Error(ErrorCode::ConvergenceFailure, "no lower scan bound");
    step *= 2.0;
    lo -= step;
  }
  step = 1.0;
  hi += step;
  for (int i = 0; sc.probe(hi).positive != 0; ++i) {
    if (i > 60) throw Error(ErrorCode::ConvergenceFailure, "no upper scan bound");
    step *= 2.0;
    hi += step;
  }
  return {lo, hi};
}

// Below the returned bound H_eff - eps is positive definite, so no roots.
double auto_lower_bound_energy(const EffectiveOperator &op) {
  const auto &p = op.problem();
  const double e = p.total_energy();
  double max_pg = 0.0;
  for (int g : p.q_channels()) {
    max_pg = std::max(max_pg, pg_energy(p.units(), p.spec().period, g));
  }
  const double e0 = op.unperturbed_energy(0);
  double lo = std::min(e0, e - max_pg) - 1.0;
  double step = 1.0;
  for (int i = 0; i < 200; ++i) {
    bool ok = true;
    double bound = 0.0;
    for (const auto &t : op.terms()) {
      const double d = op.denominator(t, lo);
      if (!(d < 0.0)) {
        ok = false;
        break;
      }
      bound += t.residue.squaredNorm() / std::abs(d);
    }
    if (ok && e0 - lo > bound) {
      return lo;
    }
    step *= 2.0;
    lo -= step;
  }
  throw Error(ErrorCode::ConvergenceFailure, "no lower scan bound");
}

void sort_and_dedupe(std::vector<Root> &roots, double tol) {
  std::stable_sort(roots.begin(), roots.end(),
                   [](const Root &a, const Root &b) { return a.energy < b.energy; });
  std::vector<Root> out;
  for (auto &r : roots) {
    if (!out.empty() && !r.degenerate && !out.back().degenerate &&
        std::abs(r.energy - out.back().energy) <=
            tol * std::max(1.0, std::abs(r.energy))) {
      continue;
    }
    out.push_back(std::move(r));
  }
  roots = std::move(out);
}

std::vector<Root> enumerate_bloch(const EffectiveOperator &op) {
  const auto &cfg = op.problem().config();
  const Scanner sc(op);
  const PoleTable table = pole_table(op);
  const double w = cfg.pole_window;

  const bool user_window = cfg.window.has_value();
  auto [lo, hi] = user_window ? *cfg.window : auto_window_bloch(sc, op, table);

  PoleTable inside;
  for (const auto &p : table.poles) {
    if (p.value > lo && p.value < hi) {
      inside.poles.push_back(p);
    }
  }
  const auto clusters = pole_clusters(inside, op, w);
  if (!clusters.empty()) {
    lo = std::min(lo, clusters.front().lo - w);
    hi = std::max(hi, clusters.back().hi + w);
  }

  std::vector<Root> roots;
  auto gap = [&](double a, double b) {
    if (!(b > a)) return;
    const Probe pa = sc.probe(a);
    const Probe pb = sc.probe(b);
    const int expected = pa.positive - pb.positive;
    if (expected <= 0) return;
    bool stable = false;
    const auto brackets = sc.stable_scan(a, b, cfg.scan_resolution, stable);
    if (stable && static_cast<int>(brackets.size()) == expected) {
      for (const auto &br : brackets) {
        roots.push_back(sc.resolve(br));
      }
      return;
    }
    // Roots closer together than the finest scan cell: isolate them by the
    // inertia count instead.
    sc.isolate(a, pa, b, pb, roots);
  };

  double cursor = lo;
  for (const auto &c : clusters) {
    gap(cursor, c.lo);
    const Probe pc = sc.probe(c.lo);
    const Probe pd = sc.probe(c.hi);
    const int expected = pc.positive - pd.positive + c.rank;
    std::vector<Root> local;
    double a = c.lo;
    Probe pa = pc;
    for (double pole : c.poles) {
      // The pole-subtracted probe stays exact down to the neighbouring
      // doubles of the pole itself.
      const double b = std::nextafter(pole, -std::numeric_limits<double>::infinity());
      if (b > a) {
        const Probe pb = sc.probe(b);
        if (pb.finite && pa.finite) sc.isolate(a, pa, b, pb, local);
      }
      a = std::nextafter(pole, std::numeric_limits<double>::infinity());
      pa = sc.probe(a);
    }
    if (pa.finite && pd.finite && c.hi > a) {
      sc.isolate(a, pa, c.hi, pd, local);
    }
    if (static_cast<int>(local.size()) != expected) {
      std::ostringstream os;
      os << "pole window around " << c.poles.front() << " holds " << expected
         << " roots but " << local.size() << " were resolved";
      throw Error(ErrorCode::PoleWindowLoss, os.str());
    }
    roots.insert(roots.end(), local.begin(), local.end());
    cursor = c.hi;
  }
  gap(cursor, hi);

  sort_and_dedupe(roots, cfg.degeneracy_tolerance);

  const int total = op.basis_size() + table.total_rank();
  if (static_cast<int>(roots.size()) != total) {
    std::ostringstream os;
    os << "scan window [" << lo << ", " << hi << "] holds " << roots.size()
       << " of " << total << " roots";
    throw Error(ErrorCode::WindowTooNarrow, os.str());
  }
  return roots;
}

std::vector<Root> enumerate_energy(const EffectiveOperator &op) {
  const auto &cfg = op.problem().config();
  const Scanner sc(op);
  const double e = op.problem().total_energy();
  double lo = 0.0;
  double hi = e;
  if (cfg.window) {
    lo = cfg.window->first;
    hi = std::min(cfg.window->second, e);
  } else {
    lo = auto_lower_bound_energy(op);
  }
  if (!(hi > lo)) {
    return {};
  }
  const int cells =
      cfg.scan_resolution * (static_cast<int>(op.terms().size()) + 1);
  bool stable = false;
  const auto brackets = sc.stable_scan(lo, hi, cells, stable);
  if (!stable) {
    throw Error(ErrorCode::ScanTooCoarse,
                "sign-change count did not stabilise under grid refinement");
  }
  std::vector<Root> roots;
  for (const auto &br : brackets) {
    const double eps =
        br.sign_hi == 0 ? br.lo : sc.bisect(br.lo, br.hi, br.sign_hi);
    if (!sc.admissible(eps)) {
      continue;
    }
    // Sign changes come from roots and from poles; only roots drive an
    // eigenvalue of H_eff - eps through zero.
    const Probe p = sc.probe(eps);
    if (!p.finite ||
        p.values.cwiseAbs().minCoeff() > 1e-6 * std::max(1.0, std::abs(eps))) {
      continue;
    }
    roots.push_back(sc.make_root(eps));
  }
  sort_and_dedupe(roots, cfg.degeneracy_tolerance);
  return roots;
}

// Minimum-cost assignment (rows to columns) of a square cost matrix.
std::vector<int> hungarian(const Eigen::MatrixXd &cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) {
    row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Each level receives exactly N_roots / N_b roots, maximising the summed
// weight |c_m|^2 of the assigned levels. When the dominant indices are
// already balanced this is the dominant-index assignment itself.
std::vector<int> balanced_levels(const std::vector<Root> &roots, int nb) {
  const int n = static_cast<int>(roots.size());
  const int per_level = n / nb;
  Eigen::MatrixXd cost(n, n);
  for (int r = 0; r < n; ++r) {
    for (int col = 0; col < n; ++col) {
      cost(r, col) = -std::norm(roots[r].coefficients[col / per_level]);
    }
  }
  const auto assign = hungarian(cost);
  std::vector<int> level(n);
  for (int r = 0; r < n; ++r) {
    level[r] = assign[r] / per_level;
  }
  return level;
}

} // namespace

std::vector<double> uniform_probabilities(const std::vector<Realisation> &rs) {
  return std::vector<double>(rs.size(), 1.0 / static_cast<double>(rs.size()));
}

std::vector<Root> enumerate_roots(const EffectiveOperator &op) {
  return op.problem().fixed_bloch() ? enumerate_bloch(op) : enumerate_energy(op);
}

OracleSpectrum oracle_spectrum(const ValidatedProblem &problem,
                               const EigenBasis &basis) {
  const int nb = problem.config().basis_size;
  const int G = problem.config().channel_cutoff;
  OracleSpectrum out;
  for (int g = -G; g <= G; ++g) {
    out.channels.push_back(g);
  }
  const int nc = 2 * G + 1;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(nc * nb, nc * nb);
  for (int a = 0; a < nc; ++a) {
    const int ga = out.channels[a];
    const double offset = ga == 0 ? 0.0 : channel_offset(problem, ga);
    for (int n = 0; n < nb; ++n) {
      h(a * nb + n, a * nb + n) = basis.energies[n] + offset;
    }
    for (int b = 0; b < nc; ++b) {
      const int diff = ga - out.channels[b];
      if (diff == 0 || std::abs(diff) > G) continue;
      h.block(a * nb, b * nb, nb, nb) = coupling_matrix(problem, basis, diff, nb, nb);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::ConvergenceFailure, "oracle eigensolve failed");
  }
  out.energies.assign(es.eigenvalues().data(),
                      es.eigenvalues().data() + es.eigenvalues().size());
  out.vectors = es.eigenvectors();
  out.p_weights.resize(out.energies.size());
  for (std::size_t k = 0; k < out.energies.size(); ++k) {
    out.p_weights[k] =
        out.vectors.col(static_cast<Eigen::Index>(k)).segment(G * nb, nb).norm();
  }
  out.matrix = std::move(h);
  return out;
}

OracleSpectrum oracle_spectrum(const ValidatedProblem &problem) {
  if (!problem.fixed_bloch()) {
    throw Error(ErrorCode::WrongMode, "oracle requires fixed-Bloch mode");
  }
  return oracle_spectrum(problem,
                         solve_unperturbed(problem.grid(), problem.units(),
                                           problem.spec().v0,
                                           problem.config().basis_size));
}

RealisationSet group_realisations(const std::vector<Root> &input,
                                  const SolverConfig &config, bool strict,
                                  const ProbabilityRule &probabilities) {
  const int nb = config.basis_size;
  std::vector<Root> roots = input;
  std::stable_sort(roots.begin(), roots.end(),
                   [](const Root &a, const Root &b) { return a.energy < b.energy; });
  const int n = static_cast<int>(roots.size());
  if (strict && n % nb != 0) {
    std::ostringstream os;
    os << n << " roots cannot form complete sets of " << nb;
    throw Error(ErrorCode::IncompleteRealisation, os.str());
  }

  RealisationSet set;
  if (config.grouping == GroupingRule::Balanced && n > 0 && n % nb == 0) {
    const auto level = balanced_levels(roots, nb);
    const int count = n / nb;
    set.realisations.resize(static_cast<std::size_t>(count));
    std::vector<int> filled(static_cast<std::size_t>(nb), 0);
    for (int i = 0; i < count; ++i) {
      set.realisations[i].index = i;
      set.realisations[i].levels.resize(static_cast<std::size_t>(nb));
    }
    for (int r = 0; r < n; ++r) {
      const int m = level[r];
      set.realisations[filled[m]++].levels[m] = roots[r];
    }
  } else {
    // Dominant-index greedy fill with position-order fallback.
    struct Partial {
      std::vector<std::optional<Root>> slots;
      int filled = 0;
    };
    std::vector<Partial> partial;
    auto fresh = [&]() -> Partial & {
      partial.push_back({std::vector<std::optional<Root>>(nb), 0});
      return partial.back();
    };
    for (const auto &r : roots) {
      if (r.dominance_margin >= kDominanceMargin) {
        Partial *target = nullptr;
        for (auto &p : partial) {
          if (!p.slots[r.dominant]) {
            target = &p;
            break;
          }
        }
        if (!target) target = &fresh();
        target->slots[r.dominant] = r;
        ++target->filled;
        continue;
      }
      Partial *target = nullptr;
      for (auto &p : partial) {
        if (p.filled < nb) {
          target = &p;
          break;
        }
      }
      if (!target) target = &fresh();
      for (int m = 0; m < nb; ++m) {
        if (!target->slots[m]) {
          target->slots[m] = r;
          break;
        }
      }
      ++target->filled;
    }
    for (auto &p : partial) {
      if (p.filled == nb) {
        Realisation real;
        real.index = set.count();
        for (auto &s : p.slots) real.levels.push_back(*s);
        set.realisations.push_back(std::move(real));
      } else {
        for (auto &s : p.slots) {
          if (s) set.ungrouped.push_back(*s);
        }
      }
    }
  }

  if (!set.realisations.empty()) {
    auto weights = probabilities(set.realisations);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (weights.size() != set.realisations.size() || !(total > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "probability rule returned bad weights");
    }
    for (auto &w : weights) w /= total;
    set.probabilities = std::move(weights);
  }
  return set;
}

const Eigen::VectorXcd TotalWavefunction::channel(int g) const {
  const auto it = std::find(channels.begin(), channels.end(), g);
  if (it == channels.end()) {
    throw Error(ErrorCode::IndexMismatch, "channel outside cutoff");
  }
  return amplitudes.col(it - channels.begin());
}

cplx TotalWavefunction::operator()(int j, double z) const {
  const double two_pi = 2.0 * 3.14159265358979323846;
  cplx sum = 0.0;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    sum += amplitudes(j, static_cast<Eigen::Index>(c)) *
           std::polar(1.0, two_pi * channels[c] * z / period);
  }
  return std::polar(1.0, kz * z) * sum;
}

double TotalWavefunction::cell_norm() const {
  return spacing * amplitudes.squaredNorm();
}

TotalWavefunction reconstruct_total(const EffectiveOperator &op,
                                    const Root &root) {
  const auto &p = op.problem();
  const int nb = op.basis_size();
  const int G = p.config().channel_cutoff;
  if (!p.fixed_bloch() && root.energy > p.total_energy()) {
    throw Error(ErrorCode::AboveTotalEnergy, "root above the total energy");
  }

  TotalWavefunction wf;
  wf.root = root;
  for (int g = -G; g <= G; ++g) wf.channels.push_back(g);
  wf.period = p.spec().period;
  wf.spacing = op.basis().spacing;
  wf.kz = p.fixed_bloch() ? p.kz()
                          : bloch_momentum_at(p.units(), p.total_energy(), root.energy);
  const auto &states = op.basis().states;
  wf.amplitudes = Eigen::MatrixXcd::Zero(p.grid().points, 2 * G + 1);
  wf.amplitudes.col(G) = states.leftCols(nb).cast<cplx>() * root.coefficients;

  const auto &terms = op.terms();
  Eigen::VectorXcd amp(static_cast<Eigen::Index>(terms.size()));
  // Roots inside a pole window are fine here: the large amplitude of the
  // resonant term is removed again by the cell normalisation. Only a
  // denominator at rounding level carries no information.
  const double floor = 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(root.energy));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const double d = op.denominator(terms[t], root.energy);
    if (std::abs(d) <= floor) {
      std::ostringstream os;
      os << "root " << root.energy << " coincides with pole " << terms[t].pole;
      throw Error(ErrorCode::PoleProximity, os.str());
    }
    amp[static_cast<Eigen::Index>(t)] = terms[t].residue.dot(root.coefficients) / d;
  }
  if (const auto &qb = op.q_block()) {
    const Eigen::VectorXcd qvec = qb->q_vectors * amp;
    for (std::size_t c = 0; c < qb->channels.size(); ++c) {
      const int col = qb->channels[c] + G;
      wf.amplitudes.col(col) =
          states.leftCols(nb).cast<cplx>() *
          qvec.segment(static_cast<Eigen::Index>(c) * nb, nb);
    }
  } else {
    for (std::size_t t = 0; t < terms.size(); ++t) {
      wf.amplitudes.col(terms[t].channel + G) +=
          amp[static_cast<Eigen::Index>(t)] * states.col(terms[t].index).cast<cplx>();
    }
  }
  wf.amplitudes /= std::sqrt(wf.cell_norm());
  return wf;
}

RealisationKernel realisation_kernel(const EffectiveOperator &op,
                                     const RealisationSet &set, int i, int m) {
  if (i < 0 || i >= set.count()) {
    throw Error(ErrorCode::IndexMismatch, "realisation index out of range");
  }
  if (m < 0 || m >= static_cast<int>(set.realisations[i].levels.size())) {
    throw Error(ErrorCode::IndexMismatch, "level index out of range");
  }
  const Root &root = set.realisations[i].levels[m];
  if (root.coefficients.size() != op.basis_size()) {
    throw Error(ErrorCode::IndexMismatch, "root does not belong to this operator");
  }
  return RealisationKernel(op, root.energy, root.coefficients, i, m);
}

std::vector<std::pair<int, int>> ascending_matching(const std::vector<double> &a,
                                                    const std::vector<double> &b) {
  std::vector<std::pair<int, int>> out;
  if (a.size() > b.size()) {
    for (auto [i, j] : ascending_matching(b, a)) out.emplace_back(j, i);
    return out;
  }
  const auto na = a.size();
  const auto nb = b.size();
  if (na == 0) return out;
  // best[i][j]: smallest achievable max deviation matching a[0..i) into b[0..j).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(na + 1, std::vector<double>(nb + 1, inf));
  for (std::size_t j = 0; j <= nb; ++j) best[0][j] = 0.0;
  for (std::size_t i = 1; i <= na; ++i) {
    for (std::size_t j = i; j <= nb; ++j) {
      const double take = std::max(best[i - 1][j - 1], std::abs(a[i - 1] - b[j - 1]));
      best[i][j] = std::min(best[i][j - 1], take);
    }
  }
  std::size_t i = na, j = nb;
  while (i > 0) {
    if (j > i && best[i][j] == best[i][j - 1]) {
      --j;
      continue;
    }
    out.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
    --i;
    --j;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

double channel_deviation(const TotalWavefunction &wf, const EigenBasis &basis,
                         const OracleSpectrum &oracle, int oracle_index) {
  const auto nb = static_cast<Eigen::Index>(
      oracle.vectors.rows() / static_cast<Eigen::Index>(oracle.channels.size()));
  const auto v = oracle.vectors.col(oracle_index);
  Eigen::MatrixXcd ref(wf.amplitudes.rows(), wf.amplitudes.cols());
  for (std::size_t c = 0; c < oracle.channels.size(); ++c) {
    const auto cc = static_cast<Eigen::Index>(c);
    ref.col(cc) = basis.states.leftCols(nb).cast<cplx>() * v.segment(cc * nb, nb);
  }
  const cplx overlap = (ref.conjugate().cwiseProduct(wf.amplitudes)).sum();
  const cplx phase = std::abs(overlap) > 0.0 ? std::conj(overlap) / std::abs(overlap)
                                             : cplx(1.0);
  return (wf.amplitudes * phase - ref).cwiseAbs().maxCoeff();
}

VerificationReport verify_against_oracle(const EffectiveOperator &op,
                                         const std::vector<Root> &roots) {
  VerificationReport rep;
  const auto &p = op.problem();
  rep.auxiliary = p.config().auxiliary;
  rep.root_count = static_cast<int>(roots.size());
  if (!p.fixed_bloch()) {
    rep.message = "no finite oracle in fixed-energy mode";
    return rep;
  }
  const OracleSpectrum oracle = oracle_spectrum(p, op.basis());
  std::vector<double> oracle_e;
  std::vector<int> oracle_idx;
  for (std::size_t k = 0; k < oracle.energies.size(); ++k) {
    if (oracle.p_weights[k] >= kOraclePWeightFloor) {
      oracle_e.push_back(oracle.energies[k]);
      oracle_idx.push_back(static_cast<int>(k));
    }
  }
  rep.oracle_count = static_cast<int>(oracle_e.size());
  rep.counts_equal = rep.root_count == rep.oracle_count;

  std::vector<double> root_e;
  for (const auto &r : roots) root_e.push_back(r.energy);
  for (auto [i, j] : ascending_matching(root_e, oracle_e)) {
    RootMatch m;
    m.root = root_e[i];
    m.oracle = oracle_e[j];
    m.deviation = std::abs(m.root - m.oracle);
    try {
      const auto wf = reconstruct_total(op, roots[i]);
      m.eigenvector_deviation = channel_deviation(wf, op.basis(), oracle, oracle_idx[j]);
    } catch (const Error &) {
      m.eigenvector_deviation = std::numeric_limits<double>::infinity();
    }
    rep.max_deviation = std::max(rep.max_deviation, m.deviation);
    rep.max_eigenvector_deviation =
        std::max(rep.max_eigenvector_deviation, m.eigenvector_deviation);
    rep.matches.push_back(m);
  }

  if (rep.auxiliary == AuxiliaryMode::ExactBlock) {
    rep.passed = rep.counts_equal && rep.max_deviation < kOracleTolerance &&
                 rep.max_eigenvector_deviation < kEigenvectorTolerance;
    rep.message = rep.passed ? "exact-block roots reproduce the coupled-channel spectrum"
                             : "exact-block roots deviate from the coupled-channel spectrum";
  } else {
    rep.passed = true;
    rep.message = "diagonal mode: deviations are the approximation error";
  }
  return rep;
}

VerificationReport verify_against_oracle(const Problem &problem) {
  const EffectiveOperator op(problem);
  return verify_against_oracle(op, enumerate_roots(op));
}

} // namespace epsolve
