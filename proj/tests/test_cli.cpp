#include "epsolve/config.hpp"
#include "epsolve/run.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace epsolve;
namespace fs = std::filesystem;

namespace {

const std::string kSource = EPSOLVE_SOURCE_DIR;

std::string slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() /
                   ("epsolve_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig load(const std::string &file, const fs::path &out) {
  auto c = parse_config(slurp(kSource + "/configs/" + file), file);
  c.pipeline.output = out.string();
  return c;
}

struct Outcome {
  int code;
  std::string out;
  std::string log;
};

Outcome execute(const RunConfig &c, int jobs = 1) {
  std::ostringstream out, log;
  const int code = run(c, {jobs, false}, out, log);
  return {code, out.str(), log.str()};
}

std::vector<std::string> files_in(const fs::path &dir) {
  std::vector<std::string> names;
  for (const auto &e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

// Splits into numeric and non-numeric tokens so numbers can be compared
// with a tolerance and everything else exactly.
std::vector<std::string> tokens(const std::string &s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_num_start = [&](std::size_t k) {
    return std::isdigit(static_cast<unsigned char>(s[k])) ||
           ((s[k] == '-' || s[k] == '.') && k + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[k + 1])));
  };
  while (i < s.size()) {
    std::size_t j = i;
    if (is_num_start(i)) {
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' ||
                              s[j] == '-' || s[j] == '+'))
        ++j;
    } else {
      while (j < s.size() && !is_num_start(j)) ++j;
    }
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool close(const std::string &a, const std::string &b) {
  if (a == b) return true;
  char *ea = nullptr, *eb = nullptr;
  const double x = std::strtod(a.c_str(), &ea), y = std::strtod(b.c_str(), &eb);
  if (*ea != '\0' || *eb != '\0') return false;
  return std::abs(x - y) <= 1e-9 * std::max(1.0, std::max(std::abs(x), std::abs(y)));
}

void compare_golden(const fs::path &dir, const std::string &golden) {
  const fs::path ref = kSource + "/tests/golden/" + golden;
  REQUIRE(files_in(dir) == files_in(ref));
  for (const auto &name : files_in(ref)) {
    const auto a = tokens(slurp(dir / name)), b = tokens(slurp(ref / name));
    INFO(name);
    REQUIRE(a.size() == b.size());
    std::size_t bad = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!close(a[k], b[k])) {
        if (bad++ < 5) CHECK_MESSAGE(false, "token " << k << ": " << a[k] << " vs " << b[k]);
      }
    }
    CHECK(bad == 0);
  }
}

} // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(std::log(3.0)) == "1.0986122886681098");
  CHECK(format_number(NAN) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("verify pipeline on the fixture") {
  const auto dir = scratch("verify");
  const auto r = execute(load("verify_fixture.toml", dir));
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("verify: N_R=3 C=1.0986122886681098", 0) == 0);
  CHECK(r.out.find("status=pass") != std::string::npos);
  CHECK(files_in(dir) == std::vector<std::string>{"roots.csv", "spectrum.dat", "verify_report.json"});

  const auto rep = nlohmann::json::parse(slurp(dir / "verify_report.json"));
  CHECK(rep["metadata"]["tool"] == "epsolve");
  CHECK(rep["metadata"]["version"] == kToolVersion);
  CHECK(rep["metadata"]["seed"] == 20261014u);
  CHECK(rep["passed"] == true);
  CHECK(rep["verification"]["max_deviation"].get<double>() < 1e-8);
  CHECK(rep["roots"].size() == 6);
  CHECK(rep["trials"].size() == 50);
  for (const auto &t : rep["trials"]) CHECK(t["passed"] == true);

  const auto hash = hash_hex(config_hash(load("verify_fixture.toml", dir)));
  CHECK(rep["metadata"]["config_hash"] == hash);
  for (const char *f : {"roots.csv", "spectrum.dat"}) {
    const auto text = slurp(dir / f);
    CHECK(text.find("# config_hash: " + hash) != std::string::npos);
    CHECK(text.find("# version: " + std::string(kToolVersion)) != std::string::npos);
  }
  compare_golden(dir, "verify");
  fs::remove_all(dir);
}

TEST_CASE("sweep pipeline on the fixture") {
  const auto dir = scratch("sweep");
  const auto r = execute(load("sweep_fixture.toml", dir));
  CHECK(r.code == kExitOk);
  const auto csv = slurp(dir / "sweep.csv");
  std::vector<std::string> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("parameter,", 0) == 0);
  CHECK(rows[1].find(",0,2,1,0,0,0,") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "sweep.json"));
  CHECK(j["conserved"] == true);
  CHECK(j["transition"].get<double>() == 0.05);
  compare_golden(dir, "sweep");
  fs::remove_all(dir);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  for (const char *file : {"verify_fixture.toml", "sweep_fixture.toml"}) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    REQUIRE(execute(load(file, a)).code == kExitOk);
    REQUIRE(execute(load(file, b), 3).code == kExitOk);
    REQUIRE(files_in(a) == files_in(b));
    for (const auto &name : files_in(a)) {
      INFO(file << " " << name);
      CHECK(slurp(a / name) == slurp(b / name));
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("fractal and wavefunction pipelines") {
  SUBCASE("fractal") {
    const auto dir = scratch("fractal");
    auto c = load("verify_fixture.toml", dir);
    c.pipeline.name = Pipeline::Fractal;
    c.pipeline.resolution = 401;
    c.pipeline.ladder_rungs = 7;
    const auto r = execute(c);
    CHECK(r.code == kExitOk);
    const auto names = files_in(dir);
    for (const char *f : {"branch_0.dat", "branch_1.dat", "branch_2.dat", "scale_geometry.csv",
                          "support_energy.csv", "fractal.json"})
      CHECK(std::find(names.begin(), names.end(), f) != names.end());
    const auto j = nlohmann::json::parse(slurp(dir / "fractal.json"));
    CHECK(j["metadata"]["pipeline"] == "fractal");
    CHECK(slurp(dir / "scale_geometry.csv").find("delta,count,realisation") != std::string::npos);
    fs::remove_all(dir);
  }
  SUBCASE("wavefunction") {
    const auto dir = scratch("wave");
    auto c = load("verify_fixture.toml", dir);
    c.pipeline.name = Pipeline::Wavefunction;
    c.pipeline.root = 3;
    c.pipeline.z_samples = 8;
    CHECK(execute(c).code == kExitOk);
    const auto j = nlohmann::json::parse(slurp(dir / "wavefunction.json"));
    CHECK(std::abs(j["cell_norm"].get<double>() - 1.0) < 1e-8);
    CHECK(fs::exists(dir / "channels.dat"));
    CHECK(fs::exists(dir / "psi_xz.dat"));
    fs::remove_all(dir);
  }
}

TEST_CASE("errors become structured records") {
  const auto dir = scratch("error");
  auto c = load("verify_fixture.toml", dir);
  c.mode = FixedEnergy{3.0};
  const auto r = execute(c);
  CHECK(r.code == kExitError);
  const auto e = nlohmann::json::parse(slurp(dir / "error.json"));
  CHECK(e["error"]["code"] == "WrongMode");
  CHECK(r.log.find("\"WrongMode\"") != std::string::npos);

  auto w = load("verify_fixture.toml", dir);
  w.pipeline.name = Pipeline::Wavefunction;
  w.pipeline.root = 99;
  CHECK(execute(w).code == kExitError);
  fs::remove_all(dir);
}
