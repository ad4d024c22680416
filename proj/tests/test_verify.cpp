#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "stickyflow/io.hpp"
#include "stickyflow/verify.hpp"

using namespace stickyflow;

TEST_CASE("moment oracle values") {
  CHECK(moment_oracle(MomentQuery(2, {1, -1}), StickyParam(0.5)).real() ==
        Catch::Approx(0.5).margin(1e-15));
  CHECK(moment_oracle(MomentQuery(3, {0, 0, 0}), StickyParam(0.3)).real() ==
        Catch::Approx(1.0).margin(1e-15));
  CHECK(moment_oracle(MomentQuery(3, {1, 1, -2}), StickyParam(0.5)).real() ==
        Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(moment_oracle(MomentQuery(2, {1, 1}), StickyParam(0.5)).real() == 0.0);
  CHECK(moment_oracle(MomentQuery(1, {1}), StickyParam(0.9)).real() == 0.0);
  CHECK_THROWS_AS(MomentQuery(2, {1}), std::invalid_argument);
  CHECK_THROWS_AS(MomentQuery(1, {99}), std::invalid_argument);
}

TEST_CASE("moment oracle is permutation and conjugation symmetric") {
  for (const auto& q : default_moment_battery())
    for (double tau : {0.25, 0.5, 0.75}) {
      const double ref = moment_oracle(q, StickyParam(tau)).real();
      CHECK(moment_oracle(q, StickyParam(tau)).imag() == 0.0);

      std::vector<int> k = q.k;
      std::sort(k.begin(), k.end());
      do {
        CHECK(moment_oracle(MomentQuery(q.n, k), StickyParam(tau)).real() ==
              Catch::Approx(ref).margin(1e-15));
      } while (std::next_permutation(k.begin(), k.end()));

      std::vector<int> neg = q.k;
      for (int& v : neg) v = -v;
      CHECK(moment_oracle(MomentQuery(q.n, neg), StickyParam(tau)).real() ==
            Catch::Approx(ref).margin(1e-15));
    }
}

TEST_CASE("form identity battery passes on representative configurations") {
  const auto brownian = LevySymbol::brownian(1.0);
  const auto stable = LevySymbol::stable(1.5, 1.0);

  const auto r1 = check_form_identities(1, StickyParam(0.5), stable, 8, 101);
  INFO(io::report_to_text(r1));
  CHECK(r1.passed);

  const auto r2 = check_form_identities(2, StickyParam(0.0), brownian, 8, 102);
  INFO(io::report_to_text(r2));
  CHECK(r2.passed);
  for (const auto& [name, value] : r2.residuals) {
    if (name == "pythagoras") CHECK(value < 1e-12);  // pure tensor algebra at tau=0
    if (name == "measure_symmetry") CHECK(value == 0.0);
  }

  // these hold to strictly tighter precision than the battery gate
  for (double tau : {0.25, 0.5})
    for (const auto& [name, value] :
         check_form_identities(1, StickyParam(tau), brownian, 16, 105).residuals) {
      if (name == "lift_isometry") CHECK(value < 1e-12);
      if (name == "marginal_identity") CHECK(value < 1e-12);
      if (name == "measure_total_minus_1") CHECK(value < 1e-12);
    }
}

TEST_CASE("form identity battery passes for a custom symbol") {
  // spectrum of a brownian grid chain fed back as a custom table
  const GridGenerator ref(LevySymbol::brownian(1.0), 8);
  std::vector<double> table(5);
  for (int k = 0; k <= 4; ++k)
    table[static_cast<std::size_t>(k)] = -ref.eigenvalues()[static_cast<std::size_t>(k)];
  table[0] = 0.0;
  const auto r = check_form_identities(1, StickyParam(0.5), LevySymbol::custom(table), 8, 103);
  INFO(io::report_to_text(r));
  CHECK(r.passed);

  const auto r2 = check_form_identities(2, StickyParam(0.25), LevySymbol::stable(2.0, 1.0), 8, 104);
  INFO(io::report_to_text(r2));
  CHECK(r2.passed);  // stable boundary index alpha = 2
}

TEST_CASE("intertwining holds at semigroup and resolvent level") {
  const auto brownian = LevySymbol::brownian(1.0);

  const auto r = check_intertwining(1, StickyParam(0.5), brownian, 16, {0.2}, {0.5, 2.0}, 7);
  INFO(io::report_to_text(r));
  CHECK(r.passed);

  const auto r0 = check_intertwining(1, StickyParam(0.5), brownian, 16, {0.0}, {}, 7);
  REQUIRE(r0.residuals.size() == 1);
  CHECK(r0.residuals[0].second < 1e-14);

  const auto rind = check_intertwining(1, StickyParam(0.0), brownian, 16, {0.3}, {1.0}, 7);
  INFO(io::report_to_text(rind));
  CHECK(rind.passed);
}

TEST_CASE("relaxation curve is identically zero from the stationary start") {
  std::vector<double> uniform(16, 1.0 / 16.0);
  std::vector<double> t_grid{0.0, 0.05, 0.2, 1.0};
  const auto curve =
      relaxation_curve(1, StickyParam(0.5), LevySymbol::brownian(1.0), 16, uniform, t_grid);
  for (const auto& pt : curve.points) CHECK(pt.tv_distance < 1e-12);
  CHECK(curve.lambda2 < 0.0);
}

TEST_CASE("relaxation from a point mass decays at the spectral gap") {
  const int L = 16;
  std::vector<double> delta(static_cast<std::size_t>(L), 0.0);
  delta[0] = 1.0;
  // probe the gap first, then lay the grid across the clean decay window
  std::vector<double> probe{0.1};
  auto pre = relaxation_curve(2, StickyParam(0.5), LevySymbol::brownian(1.0), L, delta, probe);
  const double scale = 1.0 / std::abs(pre.lambda2);
  std::vector<double> t_grid;
  for (int j = 2; j <= 26; j += 2) t_grid.push_back(static_cast<double>(j) * scale);
  const auto curve =
      relaxation_curve(2, StickyParam(0.5), LevySymbol::brownian(1.0), L, delta, t_grid, 1e-11);
  REQUIRE(curve.fit_ok);
  INFO("lambda2=" << curve.lambda2 << " fitted=" << curve.fitted_rate);
  CHECK(std::abs(curve.fitted_rate - std::abs(curve.lambda2)) / std::abs(curve.lambda2) < 0.05);
}

TEST_CASE("Monte Carlo moment suite matches the oracle battery") {
  const auto result = mc_moment_suite(3, StickyParam(0.5), 20000, 314159);
  INFO("fraction within 3 s.e. = " << result.fraction_within_3se);
  CHECK(result.passed);
  CHECK(result.rows.size() == default_moment_battery().size());
  for (const auto& row : result.rows) CHECK(row.has_paintbox);
}

TEST_CASE("moment suite at the endpoints") {
  // tau = 0: no paintbox route, urn estimates of nonzero modes center on 0
  const auto r0 = mc_moment_suite(3, StickyParam(0.0), 20000, 11);
  CHECK(r0.passed);
  for (const auto& row : r0.rows) CHECK_FALSE(row.has_paintbox);

  // tau = 1: full coalescence, zero-sum queries are exact
  const auto r1 = mc_moment_suite(3, StickyParam(1.0), 20000, 12);
  CHECK(r1.passed);
  for (const auto& row : r1.rows) {
    long long ksum = 0;
    for (int k : row.query.k) ksum += k;
    if (ksum == 0) {
      CHECK(row.oracle == 1.0);
      CHECK(row.urn_estimate == 1.0);
    }
  }
}

TEST_CASE("atomicity suite") {
  CHECK_THROWS_AS(atomicity_suite(StickyParam(0.0), 20000, 5), std::invalid_argument);

  const auto exact = atomicity_suite(StickyParam(1.0), 1000, 5);
  CHECK(exact.passed);
  for (const auto& [k, v] : exact.info)
    if (k == "mean_sum_sq") CHECK(v == 1.0);

  const auto mid = atomicity_suite(StickyParam(0.5), 20000, 6);
  INFO(io::report_to_text(mid));
  CHECK(mid.passed);
}

TEST_CASE("suites are deterministic under a fixed seed") {
  const auto a = atomicity_suite(StickyParam(0.5), 5000, 99);
  const auto b = atomicity_suite(StickyParam(0.5), 5000, 99);
  CHECK(io::to_json(a, false).dump() == io::to_json(b, false).dump());

  const auto ma = mc_moment_suite(2, StickyParam(0.5), 10000, 99);
  const auto mb = mc_moment_suite(2, StickyParam(0.5), 10000, 99);
  REQUIRE(ma.reports.size() == mb.reports.size());
  for (std::size_t i = 0; i < ma.reports.size(); ++i)
    CHECK(io::to_json(ma.reports[i], false).dump() == io::to_json(mb.reports[i], false).dump());

  const auto fa = check_form_identities(1, StickyParam(0.5), LevySymbol::brownian(1.0), 8, 7);
  const auto fb = check_form_identities(1, StickyParam(0.5), LevySymbol::brownian(1.0), 8, 7);
  CHECK(io::to_json(fa, false).dump() == io::to_json(fb, false).dump());
}
