#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "stickyflow/forms.hpp"
#include "stickyflow/rng.hpp"

using namespace stickyflow;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> random_vec(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(size);
  for (auto& x : f) x = 2.0 * rng.uniform01() - 1.0;
  return f;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// independent spectral evaluation of the two-particle product-form energy
double product_energy_spectral(const GridGenerator& gen, const std::vector<double>& f) {
  const int L = gen.size();
  double acc = 0.0;
  for (int k1 = 0; k1 < L; ++k1)
    for (int k2 = 0; k2 < L; ++k2) {
      std::complex<double> F(0.0, 0.0);
      for (int x1 = 0; x1 < L; ++x1)
        for (int x2 = 0; x2 < L; ++x2) {
          const double ang = -kTwoPi * (k1 * x1 + k2 * x2) / static_cast<double>(L);
          F += f[static_cast<std::size_t>(x1 * L + x2)] *
               std::complex<double>(std::cos(ang), std::sin(ang));
        }
      const double lam = -gen.eigenvalues()[static_cast<std::size_t>(k1)] -
                         gen.eigenvalues()[static_cast<std::size_t>(k2)];
      acc += lam * std::norm(F);
    }
  const double Ld = static_cast<double>(L);
  return acc / (Ld * Ld * Ld * Ld);
}

}  // namespace

TEST_CASE("assembled measure basics") {
  const GridMeasure m1 = assemble_mn(1, StickyParam(0.7), 8);
  for (double v : m1.mass) CHECK(v == Catch::Approx(1.0 / 8.0).margin(1e-15));

  const GridMeasure flat = assemble_mn(2, StickyParam(0.0), 8);
  for (double v : flat.mass) CHECK(v == Catch::Approx(1.0 / 64.0).margin(1e-16));

  const GridMeasure m2 = assemble_mn(2, StickyParam(0.5), 8);
  CHECK(std::abs(m2.total() - 1.0) < 1e-12);
  double diag = 0.0;
  for (int x = 0; x < 8; ++x) diag += m2.mass[static_cast<std::size_t>(x * 8 + x)];
  CHECK(diag == Catch::Approx(0.5625).margin(1e-12));  // tau + (1-tau)/L
}

TEST_CASE("measure symmetry is bit-exact") {
  const GridMeasure m = assemble_mn(3, StickyParam(0.4), 8);
  const int L = 8;
  for (int x1 = 0; x1 < L; ++x1)
    for (int x2 = 0; x2 < L; ++x2)
      for (int x3 = 0; x3 < L; ++x3) {
        const auto at = [&](int a, int b, int c) {
          return m.mass[static_cast<std::size_t>((a * L + b) * L + c)];
        };
        CHECK(at(x1, x2, x3) == at(x2, x1, x3));
        CHECK(at(x1, x2, x3) == at(x1, x3, x2));
        CHECK(at(x1, x2, x3) == at((x1 + 1) % L, (x2 + 1) % L, (x3 + 1) % L));
      }
}

TEST_CASE("coalescent measure is the uniform diagonal") {
  // tau = 1 is a valid measure even though the operator modules reject it
  const GridMeasure m = assemble_mn(2, StickyParam(1.0), 8);
  CHECK(std::abs(m.total() - 1.0) < 1e-12);
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      CHECK(m.mass[static_cast<std::size_t>(x * 8 + y)] == (x == y ? 0.125 : 0.0));
}

TEST_CASE("assembly guards") {
  CHECK_THROWS_AS(assemble_mn(5, StickyParam(0.5), 8), std::invalid_argument);
  CHECK_THROWS_AS(assemble_mn(2, StickyParam(0.5), 3), std::invalid_argument);
  AssemblyLimits tight;
  tight.max_points = 32;
  CHECK_THROWS_AS(assemble_mn(2, StickyParam(0.5), 8, tight), std::invalid_argument);
}

TEST_CASE("coalescent parameter is rejected with a diagnostic") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 8);
  try {
    FormOperator op(2, StickyParam(1.0), gen);
    FAIL("tau=1 must be rejected");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("tau=1") != std::string::npos);
  }
}

TEST_CASE("stratum map embeds and restricts consistently") {
  const int L = 8;
  const auto pi = SetPartition::from_blocks(3, {{1, 3}, {2}});
  const StratumMap sm(pi, L);
  REQUIRE(sm.k() == 2);
  REQUIRE(sm.stratum_size() == 64);

  // scatter then gather is the identity on stratum functions
  const auto h = random_vec(sm.stratum_size(), 17);
  std::vector<double> full(512, 0.0), back(sm.stratum_size(), 0.0);
  sm.scatter_add(h, 1.0, full);
  sm.gather(full, back);
  CHECK(sup_diff(h, back) == 0.0);

  // the embedding lands on the stratum: coordinates 1 and 3 coincide
  sm.for_each([&](std::size_t y, std::size_t x) {
    const int x3 = static_cast<int>(x % L);
    const int x1 = static_cast<int>((x / (L * L)) % L);
    CHECK(x1 == x3);
    CHECK(sm.embed_index(y) == x);
  });
}

TEST_CASE("form kills constants and reduces to the single-particle form at n=1") {
  const GridGenerator gen(LevySymbol::stable(1.5, 1.0), 16);
  const FormOperator op(1, StickyParam(0.3), gen);

  std::vector<double> ones(16, 1.0), out(16);
  op.apply_B(ones, out);
  for (double v : out) CHECK(v == 0.0);

  const auto f = random_vec(16, 21);
  op.apply_B(f, out);
  std::vector<double> qf(16);
  gen.apply_generator(f, qf);
  for (int x = 0; x < 16; ++x)
    CHECK(out[static_cast<std::size_t>(x)] ==
          Catch::Approx(-qf[static_cast<std::size_t>(x)] / 16.0).margin(1e-13));
}

TEST_CASE("independent-product energy matches the spectral formula") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 8);
  const FormOperator op(2, StickyParam(0.0), gen);
  const auto f = random_vec(64, 22);
  const double direct = op.energy(f);
  const double spectral = product_energy_spectral(gen, f);
  CHECK(std::abs(direct - spectral) / std::max(1.0, std::abs(spectral)) < 1e-10);
}

TEST_CASE("superposition and recurrence routes agree") {
  for (double tau : {0.25, 0.5, 0.75})
    for (int L : {8, 16})
      for (int n : {1, 2}) {
        const GridGenerator gen(LevySymbol::brownian(1.0), L);
        const FormOperator op_n(n, StickyParam(tau), gen);
        const FormOperator op_np1(n + 1, StickyParam(tau), gen);
        const RecursiveForm rec(op_n);
        const auto g = random_vec(op_np1.size(), 23 + static_cast<std::uint64_t>(L + n));
        std::vector<double> sup_route(op_np1.size());
        op_np1.apply_B(g, sup_route);
        const auto rec_route = rec.apply_B(g);
        double scale = 0.0;
        for (double v : sup_route) scale = std::max(scale, std::abs(v));
        CHECK(sup_diff(sup_route, rec_route) / std::max(1.0, scale) < 1e-10);
      }
}

TEST_CASE("recurrence on a function of the first coordinate gives the level-1 energy") {
  const int L = 16;
  const GridGenerator gen(LevySymbol::brownian(1.0), L);
  const FormOperator op1(1, StickyParam(0.5), gen);
  const RecursiveForm rec(op1);

  const auto h = random_vec(static_cast<std::size_t>(L), 25);
  const auto g = lift(h, L);  // g(x, y) = h(x)
  const double e1 = op1.energy(h);
  CHECK(std::abs(rec.energy(g) - e1) / std::max(1.0, std::abs(e1)) < 1e-12);
  CHECK(rec.energy(std::vector<double>(static_cast<std::size_t>(L * L), 1.0)) == 0.0);
}

TEST_CASE("projection operator") {
  const int L = 8, n = 2;
  const StickyParam p(0.5);

  const auto g = random_vec(64, 26);
  const auto back = project(lift(g, L), n, L, p);
  CHECK(sup_diff(back, g) < 1e-14);  // lifted functions are fixed points

  // tau = 0: plain average over the last coordinate
  const auto f = random_vec(512, 27);
  const auto proj0 = project(f, n, L, StickyParam(0.0));
  for (std::size_t x = 0; x < 64; ++x) {
    double mean = 0.0;
    for (int y = 0; y < L; ++y) mean += f[x * L + static_cast<std::size_t>(y)];
    CHECK(proj0[x] == Catch::Approx(mean / L).margin(1e-14));
  }

  // idempotence through the lift
  const auto once = project(f, n, L, p);
  const auto twice = project(lift(once, L), n, L, p);
  CHECK(sup_diff(once, twice) < 1e-12);

  CHECK_THROWS_AS(project(g, 2, L, p), std::invalid_argument);
}

TEST_CASE("semigroup: conservation, identity, single-particle reduction") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const FormOperator op2(2, StickyParam(0.5), gen);

  std::vector<double> ones(256, 1.0);
  const auto still = op2.apply_semigroup(ones, 0.3);
  for (double v : still) CHECK(v == 1.0);

  const auto f = random_vec(256, 28);
  CHECK(op2.apply_semigroup(f, 0.0) == f);

  double sup_in = 0.0, sup_out = 0.0;
  const auto evolved = op2.apply_semigroup(f, 0.1, 1e-10);
  for (std::size_t i = 0; i < f.size(); ++i) {
    sup_in = std::max(sup_in, std::abs(f[i]));
    sup_out = std::max(sup_out, std::abs(evolved[i]));
  }
  CHECK(sup_out <= sup_in + 1e-12);

  const FormOperator op1(1, StickyParam(0.5), gen);
  const auto g = random_vec(16, 29);
  const auto via_forms = op1.apply_semigroup(g, 0.2, 1e-11);
  const auto via_spectral = gen.apply_semigroup(g, 0.2);
  CHECK(sup_diff(via_forms, via_spectral) < 1e-9);
}

TEST_CASE("semigroup is self-adjoint in L2(m)") {
  const GridGenerator gen(LevySymbol::stable(1.5, 1.0), 8);
  const FormOperator op(2, StickyParam(0.25), gen);
  const auto f = random_vec(64, 30);
  const auto g = random_vec(64, 31);
  const auto pf = op.apply_semigroup(f, 0.15, 1e-11);
  const auto pg = op.apply_semigroup(g, 0.15, 1e-11);
  CHECK(std::abs(op.inner_m(pf, g) - op.inner_m(f, pg)) < 1e-9);
}

TEST_CASE("independent limit factorizes into the tensor semigroup") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const FormOperator op(2, StickyParam(0.0), gen);
  const auto f = random_vec(256, 32);
  const auto coupled = op.apply_semigroup(f, 0.12, 1e-10);
  const auto tensor = apply_tensor_semigroup(gen, 2, f, 0.12);
  CHECK(sup_diff(coupled, tensor) < 1e-8);
}

TEST_CASE("adjoint semigroup evolves measures and fixes m_n") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 8);
  const FormOperator op(2, StickyParam(0.5), gen);
  const auto& mass = op.measure().mass;

  const auto still = op.apply_semigroup_adjoint(mass, 0.4, 1e-10);
  CHECK(sup_diff(still, mass) == 0.0);  // stationarity is exact

  std::vector<double> rho(64, 0.0);
  rho[5] = 1.0;
  const auto evolved = op.apply_semigroup_adjoint(rho, 0.05, 1e-11);
  double total = 0.0;
  for (double v : evolved) {
    CHECK(v >= -1e-15);
    total += v;
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("resolvent: constants, spectral check, large-alpha asymptotics") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const FormOperator op1(1, StickyParam(0.5), gen);

  std::vector<double> ones(16, 1.0);
  const auto rc = op1.resolvent(ones, 2.0, 1e-13);
  REQUIRE(rc.converged);
  for (double v : rc.u) CHECK(v == Catch::Approx(0.5).margin(1e-11));

  // n=1 diagonalization: u_hat(k) = g_hat(k) / (alpha + |lambda_k|)
  const auto g = random_vec(16, 33);
  const double alpha = 0.8;
  const auto rr = op1.resolvent(g, alpha, 1e-13);
  REQUIRE(rr.converged);
  for (int k = 0; k < 16; ++k) {
    std::complex<double> gh(0.0, 0.0), uh(0.0, 0.0);
    for (int x = 0; x < 16; ++x) {
      const double ang = -kTwoPi * k * x / 16.0;
      const std::complex<double> w(std::cos(ang), std::sin(ang));
      gh += g[static_cast<std::size_t>(x)] * w;
      uh += rr.u[static_cast<std::size_t>(x)] * w;
    }
    const double lam = -gen.eigenvalues()[static_cast<std::size_t>(k)];
    CHECK(std::abs(uh - gh / (alpha + lam)) < 1e-10 * std::max(1.0, std::abs(gh)));
  }

  // alpha -> infinity: alpha * u -> g at rate ||A g||_inf / alpha
  const FormOperator op2(2, StickyParam(0.5), gen);
  const auto g2 = random_vec(256, 34);
  const double big = 1e6;
  const auto rb = op2.resolvent(g2, big, 1e-13);
  REQUIRE(rb.converged);
  std::vector<double> bg(256);
  op2.apply_B(g2, bg);
  double a_sup = 0.0;
  for (std::size_t i = 0; i < bg.size(); ++i)
    a_sup = std::max(a_sup, std::abs(bg[i] / op2.measure().mass[i]));
  double err = 0.0;
  for (std::size_t i = 0; i < bg.size(); ++i)
    err = std::max(err, std::abs(big * rb.u[i] - g2[i]));
  CHECK(err <= 1.5 * a_sup / big + 1e-9);
}

TEST_CASE("resolvent reports non-convergence instead of throwing") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const FormOperator op(2, StickyParam(0.5), gen);
  const auto g = random_vec(256, 35);
  const auto r = op.resolvent(g, 0.5, 1e-13, /*max_iter=*/1);
  CHECK_FALSE(r.converged);
  CHECK(r.rel_residual > 0.0);
  CHECK_THROWS_AS(op.resolvent(g, 0.0), std::invalid_argument);
}

TEST_CASE("second eigenvalue estimate matches the single-particle gap at n=1") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const FormOperator op(1, StickyParam(0.5), gen);
  const double lam2 = estimate_lambda2(op);
  const double expected = gen.eigenvalues()[1];
  CHECK(std::abs(lam2 - expected) / std::abs(expected) < 1e-6);
}

TEST_CASE("sticky two-point generator has a strictly negative gap") {
  const GridGenerator gen(LevySymbol::brownian(1.0), 8);
  for (double tau : {0.0, 0.25, 0.75}) {
    const FormOperator op(2, StickyParam(tau), gen);
    CHECK(estimate_lambda2(op) < -1e-6);
  }
}
