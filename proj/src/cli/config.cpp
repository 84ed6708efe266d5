#include "epsolve/config.hpp"
#include "epsolve/error.hpp"

#include <toml.hpp>

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace epsolve {

std::string_view to_string(Pipeline p) {
  switch (p) {
  case Pipeline::Verify: return "verify";
  case Pipeline::Sweep: return "sweep";
  case Pipeline::Fractal: return "fractal";
  case Pipeline::Wavefunction: return "wavefunction";
  }
  return "verify";
}

Pipeline parse_pipeline(std::string_view name) {
  for (auto p : {Pipeline::Verify, Pipeline::Sweep, Pipeline::Fractal,
                 Pipeline::Wavefunction}) {
    if (name == to_string(p)) return p;
  }
  throw Error(ErrorCode::SchemaError, "unknown pipeline '" + std::string(name) + "'");
}

AuxiliaryMode parse_auxiliary(std::string_view name) {
  if (name == "exact-block" || name == "exactblock") return AuxiliaryMode::ExactBlock;
  if (name == "diagonal") return AuxiliaryMode::Diagonal;
  throw Error(ErrorCode::SchemaError, "unknown auxiliary mode '" + std::string(name) + "'");
}

namespace {

std::string where(const toml::node &n) {
  std::ostringstream os;
  os << "line " << n.source().begin.line;
  return os.str();
}

// Typed access to one table; remembers which keys were read so that the
// rest can be reported as unknown.
class Section {
public:
  Section(const toml::table *table, std::string name)
      : table_(table), name_(std::move(name)) {}

  bool has(const char *key) const { return table_ && table_->contains(key); }

  double number(const char *key, double fallback) {
    const auto *n = get(key);
    return n ? to_number(*n, key) : fallback;
  }

  std::optional<double> number(const char *key) {
    const auto *n = get(key);
    if (!n) return std::nullopt;
    return to_number(*n, key);
  }

  long long integer(const char *key, long long fallback) {
    const auto *n = get(key);
    if (!n) return fallback;
    if (!n->is_integer()) fail(*n, key, "an integer");
    return n->as_integer()->get();
  }

  std::string string(const char *key, std::string fallback) {
    const auto *n = get(key);
    if (!n) return fallback;
    if (!n->is_string()) fail(*n, key, "a string");
    return n->as_string()->get();
  }

  std::vector<double> numbers(const char *key, std::vector<double> fallback) {
    const auto *n = get(key);
    if (!n) return fallback;
    if (!n->is_array()) fail(*n, key, "an array of numbers");
    std::vector<double> out;
    for (const auto &v : *n->as_array()) out.push_back(to_number(v, key));
    return out;
  }

  std::optional<std::pair<double, double>> range(const char *key) {
    const auto *n = get(key);
    if (!n) return std::nullopt;
    if (!n->is_array() || n->as_array()->size() != 2) fail(*n, key, "[lo, hi]");
    const auto &a = *n->as_array();
    return std::make_pair(to_number(a[0], key), to_number(a[1], key));
  }

  cplx complex(const char *key, cplx fallback) {
    const auto *n = get(key);
    if (!n) return fallback;
    if (n->is_array()) {
      const auto &a = *n->as_array();
      if (a.size() != 2) fail(*n, key, "a number or [re, im]");
      return {to_number(a[0], key), to_number(a[1], key)};
    }
    return to_number(*n, key);
  }

  const toml::node *raw(const char *key) { return get(key); }

  void finish() const {
    if (!table_) return;
    for (const auto &[k, v] : *table_) {
      if (!used_.count(std::string(k.str()))) {
        std::ostringstream os;
        os << "unknown key '" << name_ << (name_.empty() ? "" : ".") << k.str()
           << "' at " << where(v);
        throw Error(ErrorCode::UnknownKey, os.str());
      }
    }
  }

  [[noreturn]] void fail(const toml::node &n, const char *key,
                         const char *expected) const {
    std::ostringstream os;
    os << "'" << name_ << "." << key << "' at " << where(n) << " must be " << expected;
    throw Error(ErrorCode::SchemaError, os.str());
  }

  [[noreturn]] void invalid(const char *key, const std::string &why) {
    const auto *n = table_ ? table_->get(key) : nullptr;
    std::ostringstream os;
    os << "'" << name_ << "." << key << "'";
    if (n) os << " at " << where(*n);
    os << ": " << why;
    throw Error(ErrorCode::SchemaError, os.str());
  }

private:
  const toml::node *get(const char *key) {
    if (!table_) return nullptr;
    used_.insert(key);
    return table_->get(key);
  }

  double to_number(const toml::node &n, const char *key) const {
    if (n.is_floating_point()) return n.as_floating_point()->get();
    if (n.is_integer()) return static_cast<double>(n.as_integer()->get());
    fail(n, key, "a number");
  }

  const toml::table *table_;
  std::string name_;
  std::set<std::string> used_;
};

const toml::table *subtable(const toml::table &root, const char *name) {
  const auto *n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) {
    throw Error(ErrorCode::SchemaError,
                std::string("'") + name + "' at " + where(*n) + " must be a table");
  }
  return n->as_table();
}

ProfileSpec read_profile(Section &s, ProfileSpec p, bool real_only) {
  p.kind = s.string("kind", p.kind);
  if (p.kind != "constant" && p.kind != "cos" && p.kind != "gaussian") {
    s.invalid("kind", "expected constant, cos or gaussian");
  }
  p.amplitude = s.complex("amplitude", p.amplitude);
  if (real_only && p.amplitude.imag() != 0.0) {
    s.invalid("amplitude", "the base potential must be real");
  }
  p.wavenumber = s.number("wavenumber", p.wavenumber);
  p.phase = s.number("phase", p.phase);
  p.center = s.number("center", p.center);
  p.width = s.number("width", p.width);
  return p;
}

int checked_int(Section &s, const char *key, long long fallback, long long lo) {
  const long long v = s.integer(key, fallback);
  if (v < lo || v > 100000000) {
    s.invalid(key, "out of range");
  }
  return static_cast<int>(v);
}

} // namespace

RunConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error &e) {
    std::ostringstream os;
    os << source << ": line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorCode::SchemaError, os.str());
  }
  for (const auto &[k, v] : root) {
    static const std::set<std::string> known{"units",   "grid", "potential", "harmonics",
                                             "mode",    "solver", "pipeline"};
    if (!known.count(std::string(k.str()))) {
      throw Error(ErrorCode::UnknownKey,
                  "unknown section '" + std::string(k.str()) + "' at " + where(v));
    }
  }

  RunConfig c;
  {
    Section s(subtable(root, "units"), "units");
    c.units.hbar = s.number("hbar", c.units.hbar);
    c.units.mass = s.number("mass", c.units.mass);
    s.finish();
  }
  {
    Section s(subtable(root, "grid"), "grid");
    c.grid.length = s.number("length", c.grid.length);
    c.grid.points = checked_int(s, "points", c.grid.points, 1);
    const auto b = s.string("boundary", "hard-wall");
    if (b == "hard-wall") {
      c.grid.boundary = Boundary::HardWall;
    } else if (b == "periodic") {
      c.grid.boundary = Boundary::Periodic;
    } else {
      s.invalid("boundary", "expected hard-wall or periodic");
    }
    s.finish();
  }
  {
    Section s(subtable(root, "potential"), "potential");
    c.potential = read_profile(s, c.potential, true);
    s.finish();
  }
  {
    Section s(subtable(root, "harmonics"), "harmonics");
    c.period = s.number("period", c.period);
    c.coupling = s.number("coupling", c.coupling);
    if (const auto *terms = s.raw("term")) {
      if (!terms->is_array_of_tables()) {
        s.fail(*terms, "term", "an array of tables ([[harmonics.term]])");
      }
      std::set<int> seen;
      for (const auto &t : *terms->as_array()) {
        Section ts(t.as_table(), "harmonics.term");
        HarmonicSpec h;
        h.g = checked_int(ts, "g", 0, -1000);
        if (!ts.has("g")) {
          throw Error(ErrorCode::SchemaError,
                      "harmonic term at " + where(t) + " is missing 'g'");
        }
        if (!seen.insert(h.g).second) {
          throw Error(ErrorCode::SchemaError,
                      "duplicate harmonic index g = " + std::to_string(h.g) + " at " + where(t));
        }
        ProfileSpec def;
        def.kind = "cos";
        h.profile = read_profile(ts, def, false);
        ts.finish();
        c.harmonics.push_back(h);
      }
    }
    s.finish();
  }
  {
    Section s(subtable(root, "mode"), "mode");
    const auto kz = s.number("bloch_momentum");
    const auto e = s.number("total_energy");
    if (kz && e) {
      throw Error(ErrorCode::SchemaError,
                  "'mode.bloch_momentum' and 'mode.total_energy' are mutually exclusive");
    }
    if (e) {
      c.mode = FixedEnergy{*e};
    } else {
      c.mode = FixedBloch{kz.value_or(FixedBloch{}.kz)};
    }
    s.finish();
  }
  {
    Section s(subtable(root, "solver"), "solver");
    auto &v = c.solver;
    v.basis_size = checked_int(s, "basis_size", v.basis_size, 1);
    v.channel_cutoff = checked_int(s, "channel_cutoff", v.channel_cutoff, 1);
    v.auxiliary = parse_auxiliary(s.string("auxiliary", "exact-block"));
    v.aux_size = checked_int(s, "aux_size", v.aux_size, 0);
    v.window = s.range("window");
    v.scan_resolution = checked_int(s, "scan_resolution", v.scan_resolution, 1);
    v.root_tolerance = s.number("root_tolerance", v.root_tolerance);
    v.pole_window = s.number("pole_window", v.pole_window);
    v.degeneracy_tolerance = s.number("degeneracy_tolerance", v.degeneracy_tolerance);
    const auto g = s.string("grouping", "balanced");
    if (g == "balanced") {
      v.grouping = GroupingRule::Balanced;
    } else if (g == "dominant-greedy") {
      v.grouping = GroupingRule::DominantGreedy;
    } else {
      s.invalid("grouping", "expected balanced or dominant-greedy");
    }
    s.finish();
  }
  {
    Section s(subtable(root, "pipeline"), "pipeline");
    auto &p = c.pipeline;
    try {
      p.name = parse_pipeline(s.string("name", "verify"));
    } catch (const Error &e) {
      s.invalid("name", e.what());
    }
    p.output = s.string("output", p.output);
    const long long seed = s.integer("seed", 0);
    if (seed < 0) s.invalid("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    p.f_prefactor = s.number("f_prefactor", p.f_prefactor);
    p.entropy_constant = s.number("entropy_constant", p.entropy_constant);
    p.trials = checked_int(s, "trials", p.trials, 0);
    p.trial_coupling = s.range("trial_coupling").value_or(p.trial_coupling);
    p.trial_bloch = s.range("trial_bloch").value_or(p.trial_bloch);
    p.couplings = s.numbers("couplings", p.couplings);
    p.window = s.range("window");
    p.resolution = checked_int(s, "resolution", p.resolution, 2);
    p.observable = s.string("observable", p.observable);
    if (p.observable != "eigenvalue" && p.observable != "kernel-probe") {
      s.invalid("observable", "expected eigenvalue or kernel-probe");
    }
    p.probe_point = s.number("probe_point", p.probe_point);
    p.level = checked_int(s, "level", p.level, 0);
    p.ladder_first = checked_int(s, "ladder_first", p.ladder_first, 0);
    p.ladder_rungs = checked_int(s, "ladder_rungs", p.ladder_rungs, 6);
    p.deltas = s.numbers("deltas", p.deltas);
    p.root = checked_int(s, "root", p.root, 0);
    p.z_samples = checked_int(s, "z_samples", p.z_samples, 1);
    if (!(p.f_prefactor > 0.0)) s.invalid("f_prefactor", "must be positive");
    if (!(p.entropy_constant > 0.0)) s.invalid("entropy_constant", "must be positive");
    s.finish();
  }
  return c;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string numlist(const std::vector<double> &v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

std::string range(const std::pair<double, double> &r) {
  return "[" + num(r.first) + ", " + num(r.second) + "]";
}

std::string quoted(const std::string &s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

void write_profile(std::ostringstream &os, const ProfileSpec &p, bool complex) {
  os << "kind = " << quoted(p.kind) << "\n";
  if (complex && p.amplitude.imag() != 0.0) {
    os << "amplitude = [" << num(p.amplitude.real()) << ", " << num(p.amplitude.imag())
       << "]\n";
  } else {
    os << "amplitude = " << num(p.amplitude.real()) << "\n";
  }
  os << "wavenumber = " << num(p.wavenumber) << "\n"
     << "phase = " << num(p.phase) << "\n"
     << "center = " << num(p.center) << "\n"
     << "width = " << num(p.width) << "\n";
}

} // namespace

std::string serialize_config(const RunConfig &c, bool include_output) {
  std::ostringstream os;
  os << "[units]\nhbar = " << num(c.units.hbar) << "\nmass = " << num(c.units.mass)
     << "\n\n";
  os << "[grid]\nlength = " << num(c.grid.length) << "\npoints = " << c.grid.points
     << "\nboundary = "
     << (c.grid.boundary == Boundary::HardWall ? "\"hard-wall\"" : "\"periodic\"")
     << "\n\n";
  os << "[potential]\n";
  write_profile(os, c.potential, false);
  os << "\n[harmonics]\nperiod = " << num(c.period) << "\ncoupling = " << num(c.coupling)
     << "\n";
  for (const auto &h : c.harmonics) {
    os << "\n[[harmonics.term]]\ng = " << h.g << "\n";
    write_profile(os, h.profile, true);
  }
  os << "\n[mode]\n";
  if (const auto *b = std::get_if<FixedBloch>(&c.mode)) {
    os << "bloch_momentum = " << num(b->kz) << "\n";
  } else {
    os << "total_energy = " << num(std::get<FixedEnergy>(c.mode).energy) << "\n";
  }
  const auto &v = c.solver;
  os << "\n[solver]\nbasis_size = " << v.basis_size
     << "\nchannel_cutoff = " << v.channel_cutoff << "\nauxiliary = "
     << (v.auxiliary == AuxiliaryMode::ExactBlock ? "\"exact-block\"" : "\"diagonal\"")
     << "\naux_size = " << v.aux_size << "\n";
  if (v.window) os << "window = " << range(*v.window) << "\n";
  os << "scan_resolution = " << v.scan_resolution
     << "\nroot_tolerance = " << num(v.root_tolerance)
     << "\npole_window = " << num(v.pole_window)
     << "\ndegeneracy_tolerance = " << num(v.degeneracy_tolerance) << "\ngrouping = "
     << (v.grouping == GroupingRule::Balanced ? "\"balanced\"" : "\"dominant-greedy\"")
     << "\n";
  const auto &p = c.pipeline;
  os << "\n[pipeline]\nname = " << quoted(std::string(to_string(p.name))) << "\n";
  if (include_output) os << "output = " << quoted(p.output) << "\n";
  os << "seed = " << c.seed << "\nf_prefactor = " << num(p.f_prefactor)
     << "\nentropy_constant = " << num(p.entropy_constant) << "\ntrials = " << p.trials
     << "\ntrial_coupling = " << range(p.trial_coupling)
     << "\ntrial_bloch = " << range(p.trial_bloch)
     << "\ncouplings = " << numlist(p.couplings) << "\n";
  if (p.window) os << "window = " << range(*p.window) << "\n";
  os << "resolution = " << p.resolution << "\nobservable = " << quoted(p.observable)
     << "\nprobe_point = " << num(p.probe_point) << "\nlevel = " << p.level
     << "\nladder_first = " << p.ladder_first << "\nladder_rungs = " << p.ladder_rungs
     << "\ndeltas = " << numlist(p.deltas) << "\nroot = " << p.root
     << "\nz_samples = " << p.z_samples << "\n";
  return os.str();
}

std::uint64_t config_hash(const RunConfig &config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config, false)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

Samples profile_samples(const Grid &grid, const ProfileSpec &p) {
  if (p.kind == "cos") return cosine_samples(grid, 1.0, p.wavenumber, p.phase);
  if (p.kind == "gaussian") return gaussian_samples(grid, 1.0, p.center, p.width);
  return constant_samples(grid, 1.0);
}

SystemSpec system_spec(const RunConfig &c) {
  SystemSpec s;
  s.units = c.units;
  s.grid = c.grid;
  if (c.grid.points < 1) {
    throw Error(ErrorCode::InvalidArgument, "grid needs points");
  }
  s.v0 = profile_samples(c.grid, c.potential);
  for (auto &v : s.v0) v *= c.potential.amplitude.real();
  for (const auto &h : c.harmonics) {
    s.harmonics[h.g] = to_complex(profile_samples(c.grid, h.profile), h.profile.amplitude);
  }
  s.period = c.period;
  s.coupling = c.coupling;
  s.mode = c.mode;
  return s;
}

} // namespace epsolve
