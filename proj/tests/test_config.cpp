#include "epsolve/config.hpp"
#include "epsolve/error.hpp"
#include "epsolve/realisation.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace epsolve;

namespace {

std::string slurp(const std::string &path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture_text() {
  return slurp(std::string(EPSOLVE_SOURCE_DIR) + "/configs/verify_fixture.toml");
}

Error error_of(const std::string &text) {
  try {
    parse_config(text, "test.toml");
  } catch (const Error &e) {
    return e;
  }
  FAIL("config accepted: " << text);
  return Error(ErrorCode::InvalidArgument, "");
}

} // namespace

TEST_CASE("defaults") {
  const auto c = parse_config("");
  CHECK(c.grid.points == 256);
  CHECK(c.grid.boundary == Boundary::HardWall);
  CHECK(c.solver.basis_size == 2);
  CHECK(c.solver.auxiliary == AuxiliaryMode::ExactBlock);
  CHECK(c.pipeline.name == Pipeline::Verify);
  CHECK(c.pipeline.output == "out");
  CHECK(std::get<FixedBloch>(c.mode).kz == 0.3);
  CHECK(c.harmonics.empty());
}

TEST_CASE("the fixture file describes the well") {
  const auto c = parse_config(fixture_text(), "verify_fixture.toml");
  CHECK(c.seed == 20261014u);
  CHECK(c.pipeline.trials == 50);
  REQUIRE(c.harmonics.size() == 1);
  CHECK(c.harmonics[0].g == 1);
  CHECK(c.harmonics[0].profile.kind == "cos");

  // the parsed system equals the one assembled directly
  const auto a = build_system(system_spec(c), c.solver);
  const auto b = fixtures::Well{}.build();
  const auto va = a->scaled_harmonic(1), vb = b->scaled_harmonic(1);
  REQUIRE(va.size() == vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) CHECK(std::abs(va[i] - vb[i]) < 1e-15);
  CHECK(a->grid().length == b->grid().length);
  CHECK(a->kz() == b->kz());
  CHECK(a->spec().period == b->spec().period);
}

TEST_CASE("property: serialisation round-trips") {
  for (const auto &text :
       {fixture_text(), std::string(""),
        std::string("[grid]\nboundary = \"periodic\"\nlength = 6.5\n[mode]\ntotal_energy = 4.25\n"
                    "[solver]\nauxiliary = \"diagonal\"\naux_size = 9\nwindow = [-1.0, 7.0]\n"
                    "grouping = \"dominant-greedy\"\n"
                    "[[harmonics.term]]\ng = -2\nkind = \"gaussian\"\namplitude = [0.1, -0.3]\n"
                    "center = 1.5\nwidth = 0.25\n"
                    "[pipeline]\nname = \"fractal\"\nwindow = [0.5, 1.5]\nobservable = \"kernel-probe\"\n")}) {
    const auto c = parse_config(text);
    const auto once = serialize_config(c);
    const auto twice = serialize_config(parse_config(once));
    CHECK(once == twice);
    CHECK(config_hash(c) == config_hash(parse_config(once)));
  }
}

TEST_CASE("hash ignores only the output directory") {
  auto c = parse_config(fixture_text());
  const auto h = config_hash(c);
  c.pipeline.output = "/elsewhere";
  CHECK(config_hash(c) == h);
  CHECK(serialize_config(c, false).find("/elsewhere") == std::string::npos);
  CHECK(serialize_config(c, true).find("/elsewhere") != std::string::npos);
  c.seed += 1;
  CHECK(config_hash(c) != h);
  CHECK(hash_hex(h).size() == 16);
  CHECK(hash_hex(0x1f) == "000000000000001f");
}

TEST_CASE("numbers survive exactly") {
  auto c = parse_config("");
  c.coupling = 0.1 + 0.2;
  c.grid.length = 1e-300;
  const auto back = parse_config(serialize_config(c));
  CHECK(back.coupling == c.coupling);
  CHECK(back.grid.length == c.grid.length);
}

TEST_CASE("schema violations") {
  SUBCASE("unknown keys carry the line") {
    const auto e = error_of("[grid]\npoints = 64\nspacing = 0.1\n");
    CHECK(e.code() == ErrorCode::UnknownKey);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(error_of("[nonsense]\n").code() == ErrorCode::UnknownKey);
  }
  SUBCASE("duplicate harmonic index") {
    const auto e = error_of("[[harmonics.term]]\ng = 1\n[[harmonics.term]]\ng = 1\n");
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("g = 1") != std::string::npos);
  }
  SUBCASE("other violations") {
    for (const char *text : {
             "[grid]\npoints = \"many\"\n",
             "[[harmonics.term]]\nkind = \"cos\"\n",
             "[mode]\nbloch_momentum = 0.3\ntotal_energy = 2.0\n",
             "[grid]\nboundary = \"soft\"\n",
             "[solver]\nauxiliary = \"magic\"\n",
             "[pipeline]\nname = \"dance\"\n",
             "[pipeline]\nf_prefactor = 0.0\n",
             "[pipeline]\nentropy_constant = -1.0\n",
             "[potential]\namplitude = [1.0, 2.0]\n",
         }) {
      CHECK(error_of(text).code() == ErrorCode::SchemaError);
    }
  }
  SUBCASE("malformed TOML") {
    const auto e = error_of("[grid\n");
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("enum spellings") {
  CHECK(parse_auxiliary("exact-block") == AuxiliaryMode::ExactBlock);
  CHECK(parse_auxiliary("exactblock") == AuxiliaryMode::ExactBlock);
  CHECK(parse_auxiliary("diagonal") == AuxiliaryMode::Diagonal);
  for (auto p : {Pipeline::Verify, Pipeline::Sweep, Pipeline::Fractal, Pipeline::Wavefunction})
    CHECK(parse_pipeline(to_string(p)) == p);
}

TEST_CASE("profile samples") {
  const Grid g{fixtures::kPi, 9, Boundary::HardWall};
  ProfileSpec p;
  p.kind = "cos";
  p.wavenumber = 2.0;
  p.phase = 0.5;
  const auto s = profile_samples(g, p);
  for (int j = 0; j < 9; ++j) CHECK(s[j] == doctest::Approx(std::cos(2.0 * g.x(j) + 0.5)));
  p.kind = "gaussian";
  p.center = 1.0;
  p.width = 0.5;
  const auto q = profile_samples(g, p);
  CHECK(q[0] == doctest::Approx(std::exp(-0.5 * 4.0)));
  p.kind = "constant";
  for (double v : profile_samples(g, p)) CHECK(v == 1.0);
}
