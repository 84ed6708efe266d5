#include "epsolve/complexity.hpp"
#include "epsolve/error.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <thread>

namespace epsolve {

double complexity(int realisations, double prefactor) {
  if (realisations < 1) {
    throw Error(ErrorCode::InvalidCount, "realisation count must be at least 1");
  }
  if (!(prefactor > 0.0) || !std::isfinite(prefactor)) {
    throw Error(ErrorCode::InvalidArgument, "complexity prefactor must be positive");
  }
  return prefactor * std::log(static_cast<double>(realisations));
}

double shannon_entropy(const std::vector<double> &p, double k) {
  if (p.empty()) {
    throw Error(ErrorCode::NotDistribution, "empty distribution");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::NotDistribution, "negative or non-finite probability");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "probabilities sum to " << total;
    throw Error(ErrorCode::NotDistribution, os.str());
  }
  double s = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      s -= v * std::log(v);
    }
  }
  return k * s;
}

ComplexityReport report(const RealisationSet &set, double prefactor,
                        double entropy_constant) {
  if (!(entropy_constant > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "entropy constant must be positive");
  }
  ComplexityReport r;
  r.realisations = std::max(1, set.count());
  r.prefactor = prefactor;
  r.entropy_constant = entropy_constant;
  r.complexity = complexity(r.realisations, prefactor);
  r.entropy = entropy_constant * r.complexity / prefactor;
  return r;
}

std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
  // splitmix64
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (row + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

SweepRow run_row(const SystemSpec &base, const SolverConfig &config,
                 double value, const SweepOptions &options) {
  SweepRow row;
  row.parameter = value;
  try {
    SystemSpec spec = base;
    spec.coupling = value;
    const Problem problem = build_system(spec, config);
    const EffectiveOperator op(problem);
    const auto roots = enumerate_roots(op);
    const auto set = group_realisations(roots, config);
    const auto rep = report(set, options.prefactor, options.entropy_constant);
    row.root_count = static_cast<int>(roots.size());
    row.realisations = rep.realisations;
    row.ungrouped = static_cast<int>(set.ungrouped.size());
    row.complexity = rep.complexity;
    row.entropy = rep.entropy;
    if (problem->fixed_bloch()) {
      row.max_deviation = verify_against_oracle(op, roots).max_deviation;
    }
  } catch (const std::exception &e) {
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

} // namespace

bool complexity_conserved(const std::vector<SweepRow> &rows) {
  std::map<int, double> seen;
  for (const auto &r : rows) {
    if (r.failed) continue;
    const auto [it, inserted] = seen.emplace(r.realisations, r.complexity);
    if (!inserted &&
        std::memcmp(&it->second, &r.complexity, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

SweepResult sweep(const SystemSpec &base, const SolverConfig &config,
                  const std::vector<double> &couplings,
                  const SweepOptions &options) {
  if (couplings.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sweep grid is empty");
  }
  for (std::size_t i = 1; i < couplings.size(); ++i) {
    if (!(couplings[i] > couplings[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "sweep grid must be strictly ascending");
    }
  }
  SweepResult result;
  result.rows.resize(couplings.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < couplings.size(); i = next++) {
      result.rows[i] = run_row(base, config, couplings[i], options);
      result.rows[i].seed = row_seed(options.seed, i);
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(couplings.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();

  for (const auto &r : result.rows) {
    if (!r.failed && r.realisations > 1) {
      result.transition = r.parameter;
      break;
    }
  }
  result.conserved = complexity_conserved(result.rows);
  return result;
}

} // namespace epsolve
