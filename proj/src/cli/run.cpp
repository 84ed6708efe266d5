#include "epsolve/run.hpp"
#include "epsolve/complexity.hpp"
#include "epsolve/error.hpp"
#include "epsolve/fractal.hpp"
#include "epsolve/realisation.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace epsolve {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

struct Context {
  const RunConfig &config;
  const RunOptions &options;
  std::ostream &log;
  fs::path dir;
  std::string hash;

  void note(const std::string &msg) const {
    if (options.color) {
      log << "\033[36m[epsolve]\033[0m " << msg << "\n";
    } else {
      log << "[epsolve] " << msg << "\n";
    }
  }

  json metadata() const {
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"config_hash", hash},
            {"seed", config.seed},
            {"pipeline", std::string(to_string(config.pipeline.name))}};
  }

  std::string header() const {
    std::ostringstream os;
    os << "# tool: " << kToolName << "\n# version: " << kToolVersion
       << "\n# config_hash: " << hash << "\n# seed: " << config.seed
       << "\n# pipeline: " << to_string(config.pipeline.name) << "\n";
    return os.str();
  }

  void write(const std::string &name, const std::string &content) const {
    const fs::path path = dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    f << content;
    if (!f) {
      throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
    note("wrote " + path.string());
  }

  void write_json(const std::string &name, json body) const {
    json doc;
    doc["metadata"] = metadata();
    for (auto &[k, v] : body.items()) doc[k] = v;
    write(name, doc.dump(2) + "\n");
  }
};

// JSON numbers cannot be NaN or infinite; those become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string s;
  bool first = true;
  for (const auto &c : cells) {
    if (!first) s += ',';
    s += c;
    first = false;
  }
  return s + "\n";
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(long v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

json coefficients_json(const Eigen::VectorXcd &c) {
  json a = json::array();
  for (Eigen::Index i = 0; i < c.size(); ++i) a.push_back({c[i].real(), c[i].imag()});
  return a;
}

struct Solved {
  Problem problem;
  std::unique_ptr<EffectiveOperator> op;
  std::vector<Root> roots;
  RealisationSet set;
  ComplexityReport complexity;
};

Solved solve(const RunConfig &c) {
  Solved s;
  s.problem = build_system(system_spec(c), c.solver);
  s.op = std::make_unique<EffectiveOperator>(s.problem);
  s.roots = enumerate_roots(*s.op);
  s.set = group_realisations(s.roots, c.solver);
  s.complexity = report(s.set, c.pipeline.f_prefactor, c.pipeline.entropy_constant);
  return s;
}

// (realisation, level) of every root, -1 for ungrouped roots.
std::vector<std::pair<int, int>> membership(const Solved &s) {
  std::vector<std::pair<int, int>> out(s.roots.size(), {-1, -1});
  for (const auto &r : s.set.realisations) {
    for (std::size_t m = 0; m < r.levels.size(); ++m) {
      for (std::size_t k = 0; k < s.roots.size(); ++k) {
        if (out[k].first < 0 && s.roots[k].energy == r.levels[m].energy) {
          out[k] = {r.index, static_cast<int>(m)};
          break;
        }
      }
    }
  }
  return out;
}

json system_json(const ValidatedProblem &p) {
  json j;
  j["grid_points"] = p.grid().points;
  j["spacing"] = p.grid().spacing();
  j["basis_size"] = p.config().basis_size;
  j["channel_cutoff"] = p.config().channel_cutoff;
  j["auxiliary"] =
      p.config().auxiliary == AuxiliaryMode::ExactBlock ? "exact-block" : "diagonal";
  if (p.fixed_bloch()) {
    j["mode"] = "fixed-bloch";
    j["bloch_momentum"] = p.kz();
  } else {
    j["mode"] = "fixed-energy";
    j["total_energy"] = p.total_energy();
  }
  j["coupling"] = p.spec().coupling;
  j["warnings"] = p.warnings();
  return j;
}

json roots_json(const Solved &s) {
  const auto member = membership(s);
  json a = json::array();
  for (std::size_t k = 0; k < s.roots.size(); ++k) {
    const auto &r = s.roots[k];
    a.push_back({{"energy", r.energy},
                 {"dominant", r.dominant},
                 {"dominance_margin", r.dominance_margin},
                 {"residual", r.residual},
                 {"degenerate", r.degenerate},
                 {"realisation", member[k].first},
                 {"level", member[k].second},
                 {"coefficients", coefficients_json(r.coefficients)}});
  }
  return a;
}

json realisations_json(const RealisationSet &set) {
  json out;
  json a = json::array();
  for (const auto &r : set.realisations) {
    json e = json::array();
    for (const auto &l : r.levels) e.push_back(l.energy);
    a.push_back({{"index", r.index},
                 {"probability", set.probabilities[static_cast<std::size_t>(r.index)]},
                 {"energies", e}});
  }
  json u = json::array();
  for (const auto &r : set.ungrouped) u.push_back(r.energy);
  out["count"] = set.count();
  out["realisations"] = a;
  out["ungrouped"] = u;
  return out;
}

json complexity_json(const ComplexityReport &c) {
  return {{"realisations", c.realisations},
          {"f_prefactor", c.prefactor},
          {"entropy_constant", c.entropy_constant},
          {"complexity", c.complexity},
          {"entropy", c.entropy}};
}

json verification_json(const VerificationReport &r) {
  json m = json::array();
  for (const auto &x : r.matches) {
    m.push_back({{"root", x.root},
                 {"oracle", x.oracle},
                 {"deviation", x.deviation},
                 {"eigenvector_deviation", number(x.eigenvector_deviation)}});
  }
  return {{"auxiliary", r.auxiliary == AuxiliaryMode::ExactBlock ? "exact-block" : "diagonal"},
          {"root_count", r.root_count},
          {"oracle_count", r.oracle_count},
          {"counts_equal", r.counts_equal},
          {"max_deviation", number(r.max_deviation)},
          {"max_eigenvector_deviation", number(r.max_eigenvector_deviation)},
          {"passed", r.passed},
          {"message", r.message},
          {"matches", m}};
}

std::string summary(const std::string &pipeline, int nr, double c, double s,
                    double dev, const std::string &status) {
  std::ostringstream os;
  os << pipeline << ": N_R=" << nr << " C=" << format_number(c)
     << " S=" << format_number(s) << " max_dev=" << format_number(dev)
     << " status=" << status << "\n";
  return os.str();
}

int verify_pipeline(const Context &ctx, std::ostream &out) {
  const auto &c = ctx.config;
  const Solved s = solve(c);
  json body;
  body["config"] = serialize_config(c, false);
  body["system"] = system_json(*s.problem);
  body["roots"] = roots_json(s);
  body["grouping"] = realisations_json(s.set);
  body["complexity"] = complexity_json(s.complexity);

  bool passed = true;
  double max_dev = std::numeric_limits<double>::quiet_NaN();
  std::optional<VerificationReport> rep;
  if (s.problem->fixed_bloch()) {
    rep = verify_against_oracle(*s.op, s.roots);
    body["verification"] = verification_json(*rep);
    passed = rep->passed;
    max_dev = rep->max_deviation;
  } else {
    body["verification"] = nullptr;
  }

  json trials = json::array();
  if (c.pipeline.trials > 0 && s.problem->fixed_bloch()) {
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> lam(c.pipeline.trial_coupling.first,
                                               c.pipeline.trial_coupling.second);
    std::uniform_real_distribution<double> kz(c.pipeline.trial_bloch.first,
                                              c.pipeline.trial_bloch.second);
    for (int t = 0; t < c.pipeline.trials; ++t) {
      SystemSpec spec = system_spec(c);
      spec.coupling = lam(rng);
      spec.mode = FixedBloch{kz(rng)};
      json row = {{"coupling", spec.coupling},
                  {"bloch_momentum", std::get<FixedBloch>(spec.mode).kz}};
      try {
        const auto r = verify_against_oracle(build_system(spec, c.solver));
        row["root_count"] = r.root_count;
        row["oracle_count"] = r.oracle_count;
        row["max_deviation"] = number(r.max_deviation);
        row["max_eigenvector_deviation"] = number(r.max_eigenvector_deviation);
        row["passed"] = r.passed;
        passed = passed && r.passed;
      } catch (const Error &e) {
        row["passed"] = false;
        row["error"] = e.what();
        passed = false;
      }
      trials.push_back(row);
    }
  }
  body["trials"] = trials;
  body["passed"] = passed;
  ctx.write_json("verify_report.json", body);

  const auto member = membership(s);
  std::string csv = ctx.header();
  csv += "index,energy,dominant,dominance_margin,residual,degenerate,realisation,level\n";
  for (std::size_t k = 0; k < s.roots.size(); ++k) {
    const auto &r = s.roots[k];
    csv += csv_row({fmt(static_cast<int>(k)), fmt(r.energy), fmt(r.dominant),
                    fmt(r.dominance_margin), fmt(r.residual), r.degenerate ? "1" : "0",
                    fmt(member[k].first), fmt(member[k].second)});
  }
  ctx.write("roots.csv", csv);

  std::string dat = ctx.header() + "# columns: root oracle deviation\n";
  if (rep) {
    for (const auto &m : rep->matches) {
      dat += fmt(m.root) + " " + fmt(m.oracle) + " " + fmt(m.deviation) + "\n";
    }
  } else {
    for (const auto &r : s.roots) dat += fmt(r.energy) + " nan nan\n";
  }
  ctx.write("spectrum.dat", dat);

  out << summary("verify", s.complexity.realisations, s.complexity.complexity,
                 s.complexity.entropy, max_dev, passed ? "pass" : "fail");
  return passed ? kExitOk : kExitVerificationFailed;
}

int sweep_pipeline(const Context &ctx, std::ostream &out) {
  const auto &c = ctx.config;
  SweepOptions opt;
  opt.prefactor = c.pipeline.f_prefactor;
  opt.entropy_constant = c.pipeline.entropy_constant;
  opt.seed = c.seed;
  opt.jobs = ctx.options.jobs;
  const auto result = sweep(system_spec(c), c.solver, c.pipeline.couplings, opt);

  std::string csv = ctx.header();
  csv += "# parameter: " + result.parameter + "\n";
  csv += "parameter,seed,failed,root_count,realisations,ungrouped,complexity,entropy,"
         "max_deviation\n";
  std::string dat = ctx.header() + "# columns: coupling complexity\n";
  json rows = json::array();
  int failed = 0;
  for (const auto &r : result.rows) {
    failed += r.failed;
    csv += csv_row({fmt(r.parameter), std::to_string(r.seed), r.failed ? "1" : "0",
                    fmt(r.root_count), fmt(r.realisations), fmt(r.ungrouped),
                    fmt(r.complexity), fmt(r.entropy), fmt(r.max_deviation)});
    if (!r.failed) dat += fmt(r.parameter) + " " + fmt(r.complexity) + "\n";
    json row = {{"parameter", r.parameter}, {"seed", r.seed},
                {"failed", r.failed},       {"root_count", r.root_count},
                {"realisations", r.realisations}, {"ungrouped", r.ungrouped},
                {"complexity", r.complexity}, {"entropy", r.entropy},
                {"max_deviation", number(r.max_deviation)}};
    if (r.failed) row["error"] = r.error;
    rows.push_back(row);
  }
  json body;
  body["config"] = serialize_config(c, false);
  body["parameter"] = result.parameter;
  body["rows"] = rows;
  body["transition"] = result.transition ? json(*result.transition) : json(nullptr);
  body["conserved"] = result.conserved;
  body["annotations"] = {{"classical_border", result.classical_border},
                         {"quantum_border", "inf"},
                         {"note", "borders are echoed annotations, not computed"}};
  ctx.write("sweep.csv", csv);
  ctx.write_json("sweep.json", body);
  ctx.write("sweep_complexity.dat", dat);

  const SweepRow *last = nullptr;
  double dev = 0.0;
  for (const auto &r : result.rows) {
    if (r.failed) continue;
    last = &r;
    if (std::isfinite(r.max_deviation)) dev = std::max(dev, r.max_deviation);
  }
  std::ostringstream status;
  status << (failed ? "rows_failed=" + std::to_string(failed) : std::string("ok"));
  out << summary("sweep", last ? last->realisations : 0, last ? last->complexity : 0.0,
                 last ? last->entropy : 0.0, dev, status.str());
  return last ? kExitOk : kExitError;
}

std::pair<double, double> branch_window(const Realisation &r) {
  double lo = r.levels.front().energy, hi = lo;
  for (const auto &l : r.levels) {
    lo = std::min(lo, l.energy);
    hi = std::max(hi, l.energy);
  }
  const double pad = std::max(0.05, 0.1 * (hi - lo));
  return {lo - pad, hi + pad};
}

int fractal_pipeline(const Context &ctx, std::ostream &out) {
  const auto &c = ctx.config;
  const Solved s = solve(c);
  const auto ladder = dyadic_ladder(c.pipeline.ladder_first, c.pipeline.ladder_rungs);
  BranchObservable obs;
  obs.kind = c.pipeline.observable == "kernel-probe" ? ObservableKind::KernelProbe
                                                     : ObservableKind::SmallestMagnitudeEigenvalue;
  obs.probe_point = c.pipeline.probe_point;
  obs.level = c.pipeline.level;

  std::string scale = ctx.header() + "delta,count,realisation\n";
  json branches = json::array();
  for (const auto &r : s.set.realisations) {
    const auto window = c.pipeline.window.value_or(branch_window(r));
    const auto g = branch_graph(*s.op, s.set, r.index, window, c.pipeline.resolution, obs);
    const auto geo = box_count(g.points, ladder);
    std::string dat = ctx.header() + "# realisation: " + std::to_string(r.index) +
                      "\n# columns: eps y\n";
    for (const auto &p : g.points) dat += fmt(p[0]) + " " + fmt(p[1]) + "\n";
    ctx.write("branch_" + std::to_string(r.index) + ".dat", dat);
    for (std::size_t k = 0; k < geo.deltas.size(); ++k) {
      scale += csv_row({fmt(geo.deltas[k]), fmt(geo.counts[k]), fmt(r.index)});
    }
    json runs = json::array();
    for (auto [a, b] : g.runs) runs.push_back({a, b});
    branches.push_back({{"realisation", r.index},
                        {"window", {window.first, window.second}},
                        {"samples", g.points.size()},
                        {"runs", runs},
                        {"counts", geo.counts},
                        {"slope", geo.slope},
                        {"residual", geo.residual}});
  }
  ctx.write("scale_geometry.csv", scale);

  json support = nullptr;
  if (c.grid.boundary == Boundary::HardWall) {
    const auto curve = support_energy_curve(*s.problem, c.pipeline.deltas);
    std::string csv = ctx.header() + "delta,support_points,energy\n";
    json pts = json::array();
    for (const auto &p : curve) {
      csv += csv_row({fmt(p.delta), fmt(p.support_points), fmt(p.energy)});
      pts.push_back({{"delta", p.delta}, {"support_points", p.support_points},
                     {"energy", p.energy}});
    }
    ctx.write("support_energy.csv", csv);
    support = {{"points", pts}};
    if (curve.size() >= 2) {
      const auto fit = support_energy_slope(curve);
      support["slope"] = fit.slope;
      support["residual"] = fit.residual;
    }
  }

  json body;
  body["config"] = serialize_config(c, false);
  body["observable"] = c.pipeline.observable;
  body["ladder"] = ladder;
  body["branches"] = branches;
  body["support_energy"] = support;
  body["hierarchy"] = "first level only; deeper hierarchy levels are not implemented";
  body["complexity"] = complexity_json(s.complexity);
  ctx.write_json("fractal.json", body);

  out << summary("fractal", s.complexity.realisations, s.complexity.complexity,
                 s.complexity.entropy, std::numeric_limits<double>::quiet_NaN(), "ok");
  return kExitOk;
}

int wavefunction_pipeline(const Context &ctx, std::ostream &out) {
  const auto &c = ctx.config;
  const Solved s = solve(c);
  const int k = c.pipeline.root;
  if (k >= static_cast<int>(s.roots.size())) {
    throw Error(ErrorCode::IndexMismatch, "root index " + std::to_string(k) +
                                              " exceeds the " +
                                              std::to_string(s.roots.size()) + " roots");
  }
  const auto wf = reconstruct_total(*s.op, s.roots[static_cast<std::size_t>(k)]);
  const auto member = membership(s)[static_cast<std::size_t>(k)];
  const auto &grid = c.grid;

  json norms = json::array();
  for (std::size_t ch = 0; ch < wf.channels.size(); ++ch) {
    norms.push_back({{"g", wf.channels[ch]},
                     {"norm", wf.spacing * wf.amplitudes.col(static_cast<Eigen::Index>(ch))
                                               .squaredNorm()}});
  }
  json body;
  body["config"] = serialize_config(c, false);
  body["root"] = {{"index", k}, {"energy", wf.root.energy},
                  {"realisation", member.first}, {"level", member.second},
                  {"coefficients", coefficients_json(wf.root.coefficients)}};
  body["bloch_momentum"] = wf.kz;
  body["period"] = wf.period;
  body["cell_norm"] = wf.cell_norm();
  body["channels"] = norms;
  ctx.write_json("wavefunction.json", body);

  std::string ch = ctx.header() + "# columns: x";
  for (int g : wf.channels) ch += " re_" + std::to_string(g) + " im_" + std::to_string(g);
  ch += "\n";
  for (int j = 0; j < grid.points; ++j) {
    ch += fmt(grid.x(j));
    for (Eigen::Index col = 0; col < wf.amplitudes.cols(); ++col) {
      ch += " " + fmt(wf.amplitudes(j, col).real()) + " " + fmt(wf.amplitudes(j, col).imag());
    }
    ch += "\n";
  }
  ctx.write("channels.dat", ch);

  std::string psi = ctx.header() + "# columns: x z density\n";
  for (int j = 0; j < grid.points; ++j) {
    for (int m = 0; m < c.pipeline.z_samples; ++m) {
      const double z = wf.period * m / c.pipeline.z_samples;
      psi += fmt(grid.x(j)) + " " + fmt(z) + " " + fmt(std::norm(wf(j, z))) + "\n";
    }
  }
  ctx.write("psi_xz.dat", psi);

  out << summary("wavefunction", s.complexity.realisations, s.complexity.complexity,
                 s.complexity.entropy, std::numeric_limits<double>::quiet_NaN(), "ok");
  return kExitOk;
}

} // namespace

int run(const RunConfig &config, const RunOptions &options, std::ostream &out,
        std::ostream &log) {
  Context ctx{config, options, log, fs::path(config.pipeline.output),
              hash_hex(config_hash(config))};
  try {
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec) {
      throw Error(ErrorCode::IoError, "cannot create " + ctx.dir.string() + ": " + ec.message());
    }
    switch (config.pipeline.name) {
    case Pipeline::Verify: return verify_pipeline(ctx, out);
    case Pipeline::Sweep: return sweep_pipeline(ctx, out);
    case Pipeline::Fractal: return fractal_pipeline(ctx, out);
    case Pipeline::Wavefunction: return wavefunction_pipeline(ctx, out);
    }
  } catch (const std::exception &e) {
    json record = {{"error", true}, {"message", e.what()}};
    if (const auto *err = dynamic_cast<const Error *>(&e)) {
      record["code"] = std::string(to_string(err->code()));
    } else {
      record["code"] = "InternalError";
    }
    json doc = {{"metadata", ctx.metadata()}, {"error", record}};
    std::ofstream f(ctx.dir / "error.json", std::ios::binary);
    if (f) f << doc.dump(2) << "\n";
    log << record.dump() << "\n";
  }
  return kExitError;
}

} // namespace epsolve
