#include "epsolve/effective_potential.hpp"
#include "epsolve/error.hpp"
#include "epsolve/realisation.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <random>

using namespace epsolve;

namespace {

double max_abs(const Eigen::MatrixXcd &m) { return m.cwiseAbs().maxCoeff(); }

fixtures::Well diagonal_well(int nb, int aux, double kz) {
  fixtures::Well w;
  w.auxiliary = AuxiliaryMode::Diagonal;
  w.basis_size = nb;
  w.aux_size = aux;
  w.kz = kz;
  w.phase = 0.4;
  return w;
}

} // namespace

TEST_CASE("pole table of the well") {
  SUBCASE("K_z = 0 merges g and -g") {
    const EffectiveOperator op(diagonal_well(2, 2, 0.0).build());
    const auto t = pole_table(op);
    REQUIRE(t.size() == 2);
    CHECK(t.poles[0].value == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(t.poles[1].value == doctest::Approx(2.5).epsilon(1e-3));
    CHECK(t.poles[0].multiplicity == 2);
    CHECK(t.poles[1].multiplicity == 2);
    CHECK(t.poles[0].value == op.unperturbed_energy(0) + 0.5);
  }
  SUBCASE("K_z = 0.3 gives four simple poles") {
    const EffectiveOperator op(diagonal_well(2, 2, 0.3).build());
    const auto t = pole_table(op);
    REQUIRE(t.size() == 4);
    const double expect[] = {0.7, 1.3, 2.2, 2.8};
    for (int i = 0; i < 4; ++i) {
      CHECK(t.poles[i].value == doctest::Approx(expect[i]).epsilon(1e-3));
      CHECK(t.poles[i].multiplicity == 1);
      CHECK(t.poles[i].residue_rank == 1);
    }
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.poles[i].value > t.poles[i - 1].value);
  }
  SUBCASE("fixed-energy has no static poles") {
    auto w = diagonal_well(2, 2, 0.3);
    w.total_energy = 3.0;
    CHECK_THROWS_AS(pole_table(EffectiveOperator(w.build())), Error);
  }
}

TEST_CASE("coupling blocks are Hermitian partners") {
  const EffectiveOperator op(diagonal_well(2, 0, 0.3).build());
  for (int g = 1; g <= 2; ++g) {
    CHECK(max_abs(op.coupling(-g) - op.coupling(g).adjoint()) < 1e-15);
  }
}

TEST_CASE("effective matrix") {
  SUBCASE("decoupled") {
    auto w = diagonal_well(3, 0, 0.3);
    w.coupling = 0.0;
    const EffectiveOperator op(w.build());
    for (double eps : {-1.0, 0.3, 7.0}) {
      const auto h = ep_matrix(op, eps);
      Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(3, 3);
      for (int n = 0; n < 3; ++n) d(n, n) = op.unperturbed_energy(n);
      CHECK(max_abs(h - d) == 0.0);
    }
  }
  SUBCASE("Hermitian everywhere sampled") {
    for (auto aux : {AuxiliaryMode::Diagonal, AuxiliaryMode::ExactBlock}) {
      auto w = diagonal_well(3, 0, 0.3);
      w.auxiliary = aux;
      w.amplitude = 0.3;
      const EffectiveOperator op(w.build());
      for (int k = 0; k < 200; ++k) {
        const double eps = -2.0 + 0.05 * k + 1e-3;
        try {
          const auto h = ep_matrix(op, eps);
          CHECK(max_abs(h - h.adjoint()) < 1e-12);
        } catch (const Error &e) {
          CHECK(e.code() == ErrorCode::PoleProximity);
        }
      }
    }
  }
  SUBCASE("pole proximity") {
    const EffectiveOperator op(diagonal_well(2, 2, 0.3).build());
    const double p = op.terms().front().pole;
    CHECK_THROWS_AS(ep_matrix(op, p + 1e-9), Error);
    CHECK_NOTHROW(ep_matrix(op, p + 1e-6));
  }
  SUBCASE("above the total energy") {
    auto w = diagonal_well(2, 2, 0.3);
    w.total_energy = 1.0;
    const EffectiveOperator op(w.build());
    try {
      ep_matrix(op, 1.1);
      FAIL("expected AboveTotalEnergy");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::AboveTotalEnergy);
    }
  }
}

TEST_CASE("property: fixed-energy and fixed-Bloch matrices coincide") {
  const double E = 4.0;
  auto we = diagonal_well(2, 0, 0.0);
  we.total_energy = E;
  const EffectiveOperator fe(we.build());
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, E);
  for (int k = 0; k < 100; ++k) {
    const double eps = u(rng);
    auto wb = diagonal_well(2, 0, bloch_momentum_at(UnitSystem{}, E, eps));
    const EffectiveOperator fb(wb.build(), fe.basis());
    const auto a = fe.matrix_unchecked(eps);
    const auto b = fb.matrix_unchecked(eps);
    CHECK(max_abs(a - b) < 1e-12);
  }
}

TEST_CASE("property: nonlocal part scales as lambda squared") {
  auto w = diagonal_well(2, 0, 0.3);
  w.coupling = 0.1;
  const EffectiveOperator a(w.build());
  w.coupling = 0.2;
  const EffectiveOperator b(w.build(), a.basis());
  for (double eps : {-0.5, 0.1, 3.7}) {
    CHECK(max_abs(nonlocal_part(b, eps) - 4.0 * nonlocal_part(a, eps)) < 1e-10);
  }
}

TEST_CASE("characteristic function") {
  SUBCASE("decoupled product form") {
    auto w = diagonal_well(3, 0, 0.3);
    w.coupling = 0.0;
    const EffectiveOperator op(w.build());
    CHECK(std::abs(characteristic(op, op.unperturbed_energy(0))) < 1e-12);
    const double mid = 0.5 * (op.unperturbed_energy(0) + op.unperturbed_energy(1));
    double prod = 1.0;
    for (int n = 0; n < 3; ++n) prod *= op.unperturbed_energy(n) - mid;
    CHECK(characteristic_signed(op, mid).sign == -1);
    CHECK(characteristic(op, mid) == doctest::Approx(prod).epsilon(1e-12));
  }
  SUBCASE("scalar pole sum") {
    auto w = diagonal_well(1, 0, 0.3);
    w.coupling = 0.3;
    const EffectiveOperator op(w.build());
    // independent pole sum from the basis
    const auto &b = op.basis();
    const auto &p = op.problem();
    struct Term { double pole, weight; };
    std::vector<Term> terms;
    for (int g : {-1, 1}) {
      const auto v = p.scaled_harmonic(-g);
      for (int q = 0; q < 3; ++q) {
        cplx s = 0.0;
        for (int x = 0; x < p.grid().points; ++x) s += b.states(x, 0) * v[x] * b.states(x, q);
        terms.push_back({b.energies[q] + channel_offset(p, g), std::norm(b.spacing * s)});
      }
    }
    auto f = [&](double eps) {
      double s = b.energies[0] - eps;
      for (const auto &t : terms) s += t.weight / (eps - t.pole);
      return s;
    };
    for (double eps : {-1.0, 0.3, 0.9, 1.7, 2.4, 3.1, 5.0, 6.3}) {
      bool near = false;
      for (const auto &t : terms) near = near || std::abs(eps - t.pole) < 1e-3;
      if (near) continue;
      CHECK(characteristic(op, eps) == doctest::Approx(f(eps)).epsilon(1e-10));
    }
    for (const auto &t : terms) {
      if (t.weight < 1e-5) continue;
      const double off = 1e-2 * t.weight;
      CHECK(characteristic(op, t.pole + off) > 0.0);
      CHECK(characteristic(op, t.pole - off) < 0.0);
    }
  }
}

TEST_CASE("property: scalar secular function is monotone between poles") {
  auto w = diagonal_well(1, 0, 0.3);
  w.coupling = 0.5;
  const EffectiveOperator op(w.build());
  const auto t = pole_table(op);
  std::vector<double> edges{t.poles.front().value - 3.0};
  for (const auto &p : t.poles) edges.push_back(p.value);
  edges.push_back(t.poles.back().value + 3.0);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double a = edges[k] + 1e-4, b = edges[k + 1] - 1e-4;
    double last = -characteristic(op, a);
    for (int i = 1; i <= 400; ++i) {
      const double v = -characteristic(op, a + (b - a) * i / 400);
      CHECK(v > last);
      last = v;
    }
  }
}

TEST_CASE("property: inertia counts roots in pole-free intervals") {
  auto w = diagonal_well(2, 0, 0.3);
  w.coupling = 0.4;
  const EffectiveOperator op(w.build());
  const auto roots = enumerate_roots(op);
  const auto t = pole_table(op);
  std::vector<double> cuts{roots.front().energy - 1.0};
  for (const auto &p : t.poles) {
    cuts.push_back(p.value - 1e-4);
    cuts.push_back(p.value + 1e-4);
  }
  cuts.push_back(roots.back().energy + 1.0);
  for (std::size_t k = 0; k + 1 < cuts.size(); k += 2) {
    const double a = cuts[k], b = cuts[k + 1];
    const long inside = std::count_if(roots.begin(), roots.end(), [&](const Root &r) {
      return r.energy > a && r.energy <= b;
    });
    CHECK(positive_inertia(op, a) - positive_inertia(op, b) == inside);
  }
}

TEST_CASE("realisation kernel") {
  auto w = diagonal_well(2, 0, 0.3);
  w.coupling = 0.5;
  const EffectiveOperator op(w.build());
  const auto roots = enumerate_roots(op);
  const auto set = group_realisations(roots, op.problem().config());
  REQUIRE(set.count() > 0);

  SUBCASE("conjugate symmetric") {
    const auto k = realisation_kernel(op, set, 0, 0);
    std::vector<int> pts;
    for (int i = 0; i < 32; ++i) pts.push_back(4 + 7 * i);
    const auto m = k.sample(pts);
    CHECK(max_abs(m - m.adjoint()) < 1e-12);
  }
  SUBCASE("local form integrates to the projected nonlocal part") {
    for (int i = 0; i < set.count(); ++i) {
      for (int m = 0; m < 2; ++m) {
        const auto k = realisation_kernel(op, set, i, m);
        const auto &root = set.realisations[i].levels[m];
        const auto j = k.local_potential();
        const auto &psi = k.state();
        cplx integral = 0.0;
        for (Eigen::Index x = 0; x < psi.size(); ++x) {
          if (!std::isnan(j[x].real())) integral += j[x] * std::norm(psi[x]);
        }
        integral *= op.basis().spacing;
        Eigen::MatrixXcd nonlocal = op.matrix_unchecked(root.energy);
        for (int n = 0; n < 2; ++n) nonlocal(n, n) -= op.unperturbed_energy(n);
        const cplx expect = (root.coefficients.adjoint() * nonlocal * root.coefficients)(0, 0);
        const double tol = 1e-10 * std::max(1.0, std::abs(expect));
        CHECK(std::abs(integral - expect) < tol);
        CHECK(std::abs(op.basis().spacing * k.local_density().sum() - expect) < tol);
        const auto veff = k.effective_potential();
        CHECK(std::abs(veff[psi.size() / 3] - j[psi.size() / 3]) < 1e-15);
      }
    }
  }
  SUBCASE("index checks") {
    CHECK_THROWS_AS(realisation_kernel(op, set, set.count(), 0), Error);
    CHECK_THROWS_AS(realisation_kernel(op, set, 0, 2), Error);
  }
  SUBCASE("decoupled kernel vanishes") {
    auto w0 = w;
    w0.coupling = 0.0;
    const EffectiveOperator op0(w0.build());
    const auto r0 = enumerate_roots(op0);
    const auto s0 = group_realisations(r0, op0.problem().config());
    const auto k = realisation_kernel(op0, s0, 0, 1);
    CHECK(k.diagonal().cwiseAbs().maxCoeff() == 0.0);
    const auto veff = k.effective_potential();
    const auto &v0 = op0.problem().spec().v0;
    for (Eigen::Index x = 1; x + 1 < veff.size(); ++x) {
      if (!std::isnan(veff[x].real())) CHECK(veff[x].real() == v0[x]);
    }
  }
}
