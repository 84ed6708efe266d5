#include "epsolve/error.hpp"
#include "epsolve/model.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <functional>
#include <random>

using namespace epsolve;
using fixtures::kPi;

namespace {

ErrorCode code_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

} // namespace

TEST_CASE("default units are dimensionless") {
  UnitSystem u;
  CHECK(u.hbar == 1.0);
  CHECK(u.mass == 1.0);
  CHECK(u.kinetic_scale() == 0.5);
}

TEST_CASE("grid spacing follows the boundary") {
  Grid hw{kPi, 101, Boundary::HardWall};
  Grid pe{kPi, 100, Boundary::Periodic};
  CHECK(hw.spacing() == doctest::Approx(kPi / 100).epsilon(1e-15));
  CHECK(pe.spacing() == doctest::Approx(kPi / 100).epsilon(1e-15));
  CHECK(hw.x(100) == doctest::Approx(kPi));
}

TEST_CASE("consistent well input is accepted") {
  fixtures::Well w;
  w.points = 512;
  const auto p = w.build();
  CHECK(p->fixed_bloch());
  CHECK(p->kz() == 0.3);
  CHECK(p->warnings().empty());
  CHECK(p->q_channels() == std::vector<int>{-1, 1});
}

TEST_CASE("one-sided harmonics are completed with their conjugates") {
  fixtures::Well w;
  auto spec = w.spec();
  spec.harmonics[1] = to_complex(cosine_samples(spec.grid, 0.1, 1.0), cplx(0.0, 1.0));
  const auto p = build_system(spec, w.config());
  const auto plus = p->scaled_harmonic(1);
  const auto minus = p->scaled_harmonic(-1);
  REQUIRE(minus.size() == plus.size());
  for (std::size_t j = 0; j < plus.size(); ++j) {
    CHECK(minus[j] == std::conj(plus[j]));
  }
  CHECK(p->harmonic_indices() == std::vector<int>{-1, 1});
}

TEST_CASE("completion is idempotent") {
  const auto p = fixtures::Well{}.build();
  const auto q = build_system(p->spec(), p->config());
  CHECK(q->spec().harmonics == p->spec().harmonics);
}

TEST_CASE("non-conjugate partners are rejected") {
  fixtures::Well w;
  auto spec = w.spec();
  spec.harmonics[1] = to_complex(constant_samples(spec.grid, 1.0), cplx(0.0, 1.0));
  spec.harmonics[-1] = spec.harmonics[1];
  CHECK(code_of([&] { build_system(spec, w.config()); }) == ErrorCode::HermiticityViolation);
}

TEST_CASE("configuration invariants") {
  fixtures::Well w;
  SUBCASE("basis larger than a quarter of the grid") {
    w.points = 16;
    w.basis_size = 5;
    CHECK(code_of([&] { w.build(); }) == ErrorCode::GridTooCoarse);
  }
  SUBCASE("too few grid points") {
    w.points = 15;
    CHECK(code_of([&] { w.build(); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("reversed window") {
    auto c = w.config();
    c.window = std::make_pair(1.0, 0.0);
    CHECK(code_of([&] { build_system(w.spec(), c); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("non-positive tolerance") {
    auto c = w.config();
    c.root_tolerance = 0.0;
    CHECK(code_of([&] { build_system(w.spec(), c); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("harmonic beyond the cutoff") {
    auto s = w.spec();
    s.harmonics[2] = s.harmonics[1];
    CHECK(code_of([&] { build_system(s, w.config()); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("g = 0 is not a harmonic") {
    auto s = w.spec();
    s.harmonics[0] = s.harmonics[1];
    CHECK(code_of([&] { build_system(s, w.config()); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("negative coupling") {
    w.coupling = -0.1;
    CHECK(code_of([&] { w.build(); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("exact block has no fixed-energy form") {
    w.total_energy = 3.0;
    CHECK(code_of([&] { w.build(); }) == ErrorCode::WrongMode);
  }
}

TEST_CASE("missing harmonics with coupling only warn") {
  fixtures::Well w;
  auto s = w.spec();
  s.harmonics.clear();
  const auto p = build_system(s, w.config());
  REQUIRE(p->warnings().size() == 1);
  CHECK(p->warnings()[0].find("EmptyHarmonics") != std::string::npos);
}

TEST_CASE("channel offsets") {
  fixtures::Well w;
  w.kz = 0.0;
  const auto p0 = w.build();
  CHECK(channel_offset(*p0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(channel_offset(*p0, -1) == channel_offset(*p0, 1));
  w.kz = 0.3;
  const auto p = w.build();
  CHECK(channel_offset(*p, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(channel_offset(*p, -1) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(pg_energy(UnitSystem{}, 2 * kPi, 1) == doctest::Approx(0.5).epsilon(1e-15));

  w.auxiliary = AuxiliaryMode::Diagonal;
  w.total_energy = 3.0;
  const auto e = w.build();
  CHECK(code_of([&] { channel_offset(*e, 1); }) == ErrorCode::WrongMode);
}

TEST_CASE("property: offset asymmetry is linear in K_z") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 2.0), k(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    auto s = fixtures::Well{}.spec();
    s.units = {u(rng), u(rng)};
    s.period = u(rng) * 5.0;
    s.mode = FixedBloch{k(rng)};
    auto c = fixtures::Well{}.config();
    c.channel_cutoff = 3;
    const auto p = build_system(s, c);
    for (int g = 1; g <= 3; ++g) {
      const double expect =
          4.0 * kPi * s.units.hbar * s.units.hbar * p->kz() * g / (s.units.mass * s.period);
      const double got = channel_offset(*p, g) - channel_offset(*p, -g);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("property: coupling does not touch V0 or the offsets") {
  for (double lam : {0.0, 1e-6, 0.3, 2.0}) {
    fixtures::Well w;
    w.coupling = lam;
    const auto p = w.build();
    const auto ref = fixtures::Well{}.build();
    CHECK(p->spec().v0 == ref->spec().v0);
    CHECK(channel_offset(*p, 1) == channel_offset(*ref, 1));
    CHECK(channel_offset(*p, -1) == channel_offset(*ref, -1));
  }
}

TEST_CASE("fixed-energy Bloch momentum") {
  CHECK(bloch_momentum_at(UnitSystem{}, 2.0, 1.5) == doctest::Approx(1.0));
  CHECK(bloch_momentum_at(UnitSystem{1.0, 2.0}, 2.0, 1.0) == doctest::Approx(2.0));
}
