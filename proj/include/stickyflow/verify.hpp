/*
 * Copyright 2026 The stickyflow authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stickyflow/forms.hpp"
#include "stickyflow/paintbox.hpp"
#include "stickyflow/partition.hpp"
#include "stickyflow/rng.hpp"
#include "stickyflow/stats.hpp"

namespace stickyflow {

struct CheckMetadata {
  int n = 0;
  int L = 0;
  double tau = 0.0;
  std::string symbol;
  std::uint64_t seed = 0;
  double runtime_sec = 0.0;
};

/// One verification item: named residuals gated by a single tolerance
/// (passed iff every residual <= tolerance), plus ungated informational
/// values. Deterministic under a fixed seed apart from runtime_sec.
struct CheckReport {
  std::string name;
  std::vector<std::pair<std::string, double>> residuals;
  double tolerance = 0.0;
  bool passed = false;
  CheckMetadata meta;
  std::vector<std::pair<std::string, double>> info;

  double max_residual() const {
    double m = 0.0;
    for (const auto& [k, v] : residuals) m = std::max(m, v);
    return m;
  }

  void finalize() {
    passed = true;
    for (const auto& [k, v] : residuals)
      if (!(v <= tolerance)) passed = false;
  }
};

/// Fourier moment query against m_n: the test function is
/// prod_j e^{2 pi i k_j x_j}.
struct MomentQuery {
  int n = 0;
  std::vector<int> k;

  static constexpr int default_max_mode = 8;

  MomentQuery(int n_, std::vector<int> k_, int max_mode = default_max_mode) : n(n_), k(std::move(k_)) {
    if (n < 1 || static_cast<int>(k.size()) != n)
      throw std::invalid_argument("MomentQuery: k must have length n");
    for (int kj : k)
      if (kj < -max_mode || kj > max_mode)
        throw std::invalid_argument("MomentQuery: |k_j| exceeds the mode bound");
  }

  std::string label() const {
    std::ostringstream os;
    os << "n=" << n << ",k=(";
    for (std::size_t j = 0; j < k.size(); ++j) os << (j ? "," : "") << k[j];
    os << ")";
    return os.str();
  }
};

/// Exact moment of m_n: integrating prod_j e^{2 pi i k_j x_j} against a
/// stratum measure factorizes over blocks, each block contributing 1 iff its
/// k-sum vanishes, so the moment is sum_pi p_pi prod_blocks [sum_{j in B} k_j = 0].
/// Real by k -> -k symmetry; returned as complex per the interface contract.
inline std::complex<double> moment_oracle(const MomentQuery& q, StickyParam p) {
  const auto partitions = enumerate_partitions(q.n);
  double acc = 0.0;
  for (const auto& pi : partitions) {
    bool contributes = true;
    for (const auto& block : pi.blocks()) {
      long long sum = 0;
      for (int e : block) sum += q.k[static_cast<std::size_t>(e - 1)];
      if (sum != 0) {
        contributes = false;
        break;
      }
    }
    if (contributes) acc += eppf(pi, p);
  }
  return {acc, 0.0};
}

namespace detail {

inline std::vector<double> random_vector(std::size_t size, Rng& rng) {
  std::vector<double> v(size);
  for (auto& x : v) x = 2.0 * rng.uniform01() - 1.0;
  return v;
}

// permute coordinates: out(x_1, ..., x_n) = f(x_{sigma(1)}, ..., x_{sigma(n)})
inline std::vector<double> permute_coordinates(std::span<const double> f, int n, int L,
                                               const std::vector<int>& sigma) {
  std::vector<double> out(f.size());
  int digits[16];
  int perm[16];
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    decode_digits(idx, n, L, digits);
    for (int i = 0; i < n; ++i) perm[i] = digits[sigma[static_cast<std::size_t>(i)]];
    std::size_t src = 0;
    for (int i = 0; i < n; ++i) src = src * static_cast<std::size_t>(L) + static_cast<std::size_t>(perm[i]);
    out[idx] = f[src];
  }
  return out;
}

inline double sup_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sup_norm(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double rel_scale(double reference) { return std::max(1.0, std::abs(reference)); }

}  // namespace detail

/// Bundled structural identities between levels n and n+1, each reported as
/// one residual: exchangeability of the form, bit-exact symmetry of the
/// measure, lift isometry, the projection identity, the orthogonal
/// decomposition, agreement of the superposition and recurrence assemblies,
/// self-adjointness, positivity, and the product-form marginal identity.
/// All are exact on the grid; residuals measure floating-point noise only.
inline CheckReport check_form_identities(int n, StickyParam p, const LevySymbol& symbol, int L,
                                         std::uint64_t seed, double tolerance = 1e-10) {
  const auto t_start = std::chrono::steady_clock::now();
  CheckReport report;
  report.name = "form_identities";
  report.tolerance = tolerance;
  report.meta = {n, L, p.tau, symbol.describe(), seed, 0.0};

  GridGenerator gen(symbol, L);
  FormOperator op_n(n, p, gen);
  FormOperator op_np1(n + 1, p, gen);
  RecursiveForm recursive(op_n);

  Rng rng = Rng(seed).stream(1);
  const std::size_t size_n = op_n.size();
  const std::size_t size_np1 = op_np1.size();

  // test pool: the constant function plus seeded random vectors
  std::vector<std::vector<double>> fs{std::vector<double>(size_np1, 1.0)};
  std::vector<std::vector<double>> gs{std::vector<double>(size_n, 1.0)};
  for (int i = 0; i < 3; ++i) fs.push_back(detail::random_vector(size_np1, rng));
  for (int i = 0; i < 3; ++i) gs.push_back(detail::random_vector(size_n, rng));

  double r_exch = 0.0, r_lift = 0.0, r_proj = 0.0, r_pyth = 0.0, r_routes = 0.0;
  double r_sym = 0.0, r_psd = 0.0, r_const = 0.0;

  // exchangeability under all transpositions of [n+1]
  for (int a = 0; a < n + 1; ++a)
    for (int b = a + 1; b < n + 1; ++b) {
      std::vector<int> sigma(static_cast<std::size_t>(n + 1));
      for (int i = 0; i <= n; ++i) sigma[static_cast<std::size_t>(i)] = i;
      std::swap(sigma[static_cast<std::size_t>(a)], sigma[static_cast<std::size_t>(b)]);
      const auto fs_perm = detail::permute_coordinates(fs[1], n + 1, L, sigma);
      const auto gs_perm = detail::permute_coordinates(fs[2], n + 1, L, sigma);
      const double e0 = op_np1.energy(fs[1], fs[2]);
      const double e1 = op_np1.energy(fs_perm, gs_perm);
      r_exch = std::max(r_exch, std::abs(e1 - e0) / detail::rel_scale(e0));
    }

  for (const auto& g : gs) {
    // lift isometry E_{n+1}(g (x) 1) = E_n(g)
    const auto lifted = lift(g, L);
    const double en = op_n.energy(g);
    r_lift = std::max(r_lift, std::abs(op_np1.energy(lifted) - en) / detail::rel_scale(en));
    for (const auto& f : fs) {
      // projection identity E_{n+1}(f, g (x) 1) = E_n(pi_n f, g)
      const auto pf = project(f, n, L, p);
      const double lhs = op_np1.energy(f, lifted);
      const double rhs = op_n.energy(pf, g);
      r_proj = std::max(r_proj, std::abs(lhs - rhs) / detail::rel_scale(lhs));
    }
  }

  for (const auto& f : fs) {
    // orthogonal decomposition E_{n+1}(f) = E_n(pi f) + E_{n+1}(f - pi f (x) 1)
    const auto pf = project(f, n, L, p);
    const auto lifted = lift(pf, L);
    std::vector<double> u(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) u[i] = f[i] - lifted[i];
    const double total = op_np1.energy(f);
    const double parts = op_n.energy(pf) + op_np1.energy(u);
    r_pyth = std::max(r_pyth, std::abs(total - parts) / detail::rel_scale(total));

    // superposition vs recurrence assembly of B_{n+1}
    std::vector<double> b_sup(f.size());
    op_np1.apply_B(f, b_sup);
    const auto b_rec = recursive.apply_B(f);
    r_routes = std::max(r_routes, detail::sup_diff(b_sup, b_rec) /
                                      detail::rel_scale(detail::sup_norm(b_sup)));

    // positivity of the quadratic form
    r_psd = std::max(r_psd, std::max(0.0, -total) / detail::rel_scale(total));
  }

  // self-adjointness of B (equivalently M A symmetric)
  {
    const double lhs = op_np1.energy(fs[1], fs[3]);
    const double rhs = op_np1.energy(fs[3], fs[1]);
    r_sym = std::abs(lhs - rhs) / detail::rel_scale(lhs);
  }

  // forms kill constants
  {
    std::vector<double> b1(size_np1);
    op_np1.apply_B(fs[0], b1);
    r_const = detail::sup_norm(b1);
  }

  // measure symmetry is bit-exact: transpositions and simultaneous rotation
  double r_meas = 0.0;
  {
    const auto& mass = op_np1.measure().mass;
    for (int a = 0; a < n + 1; ++a)
      for (int b = a + 1; b < n + 1; ++b) {
        std::vector<int> sigma(static_cast<std::size_t>(n + 1));
        for (int i = 0; i <= n; ++i) sigma[static_cast<std::size_t>(i)] = i;
        std::swap(sigma[static_cast<std::size_t>(a)], sigma[static_cast<std::size_t>(b)]);
        const auto permuted = detail::permute_coordinates(mass, n + 1, L, sigma);
        r_meas = std::max(r_meas, detail::sup_diff(mass, permuted));
      }
    std::vector<double> rotated(mass.size());
    int digits[16];
    for (std::size_t idx = 0; idx < mass.size(); ++idx) {
      detail::decode_digits(idx, n + 1, L, digits);
      std::size_t src = 0;
      for (int i = 0; i <= n; ++i)
        src = src * static_cast<std::size_t>(L) + static_cast<std::size_t>((digits[i] + 1) % L);
      rotated[idx] = mass[src];
    }
    r_meas = std::max(r_meas, detail::sup_diff(mass, rotated));
  }

  // product-form marginal identity (k = 1):
  // <f, B2 (g (x) 1)> = (1/L) sum_x <f(., x), B1 g>  with B_k the pure
  // product forms of the single-site generator.
  double r_marginal = 0.0;
  {
    const std::size_t L2 = static_cast<std::size_t>(L) * static_cast<std::size_t>(L);
    const auto f2 = detail::random_vector(L2, rng);
    const auto g1 = detail::random_vector(static_cast<std::size_t>(L), rng);
    const auto g_lift = lift(g1, L);
    std::vector<double> b2(L2, 0.0);
    detail::add_neg_product_generator(gen, 2, g_lift, b2);
    double lhs = 0.0;
    for (std::size_t i = 0; i < L2; ++i) lhs += f2[i] * b2[i] / static_cast<double>(L2);
    std::vector<double> b1(static_cast<std::size_t>(L), 0.0);
    detail::add_neg_product_generator(gen, 1, g1, b1);
    // f_x(x1) = f(x1, x): integrate the slice over the last coordinate,
    // then pair with (B1 g)(x1)
    double rhs = 0.0;
    for (int x1 = 0; x1 < L; ++x1) {
      double slice_sum = 0.0;
      for (int x = 0; x < L; ++x) slice_sum += f2[static_cast<std::size_t>(x1 * L + x)];
      rhs += slice_sum * b1[static_cast<std::size_t>(x1)] / static_cast<double>(L * L);
    }
    r_marginal = std::abs(lhs - rhs) / detail::rel_scale(lhs);
  }

  report.residuals = {
      {"exchangeability", r_exch},   {"measure_symmetry", r_meas},
      {"lift_isometry", r_lift},     {"projection_identity", r_proj},
      {"pythagoras", r_pyth},        {"route_agreement", r_routes},
      {"self_adjointness", r_sym},   {"positivity", r_psd},
      {"kills_constants", r_const},  {"marginal_identity", r_marginal},
      {"measure_total_minus_1", std::abs(op_np1.measure().total() - 1.0)},
  };
  report.finalize();
  report.meta.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

/// Compatibility at the operator level: P^{(n+1)}_t (g (x) 1) = (P^{(n)}_t g) (x) 1
/// and the resolvent analogue G_alpha (g (x) 1) = (G^{(n)}_alpha g) (x) 1,
/// checked in the sup norm on seeded random functions. Exact identities on
/// the grid; the tolerance absorbs semigroup truncation and solver residuals.
inline CheckReport check_intertwining(int n, StickyParam p, const LevySymbol& symbol, int L,
                                      const std::vector<double>& t_list,
                                      const std::vector<double>& alpha_list, std::uint64_t seed,
                                      double tolerance = 1e-8) {
  const auto t_start = std::chrono::steady_clock::now();
  CheckReport report;
  report.name = "intertwining";
  report.tolerance = tolerance;
  report.meta = {n, L, p.tau, symbol.describe(), seed, 0.0};

  GridGenerator gen(symbol, L);
  FormOperator op_n(n, p, gen);
  FormOperator op_np1(n + 1, p, gen);

  Rng rng = Rng(seed).stream(2);
  auto g = detail::random_vector(op_n.size(), rng);
  const auto lifted = lift(g, L);

  const double semi_tol = std::min(1e-10, tolerance / 100.0);
  for (double t : t_list) {
    const auto upper = op_np1.apply_semigroup(lifted, t, semi_tol);
    const auto lower = lift(op_n.apply_semigroup(g, t, semi_tol), L);
    std::ostringstream name;
    name << "semigroup_t=" << t;
    report.residuals.emplace_back(name.str(), detail::sup_diff(upper, lower));
  }
  for (double alpha : alpha_list) {
    const auto upper = op_np1.resolvent(lifted, alpha, 1e-13);
    const auto lower = op_n.resolvent(g, alpha, 1e-13);
    if (!upper.converged || !lower.converged)
      report.info.emplace_back("resolvent_unconverged_residual",
                               std::max(upper.rel_residual, lower.rel_residual));
    const auto lower_lift = lift(lower.u, L);
    std::ostringstream name;
    name << "resolvent_alpha=" << alpha;
    report.residuals.emplace_back(name.str(), detail::sup_diff(upper.u, lower_lift));
  }

  report.finalize();
  report.meta.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

struct RelaxationPoint {
  double t = 0.0;
  double tv_distance = 0.0;
};

/// Relaxation of nu_0^{(x) n} P^{(n)}_t towards m_n: the full curve of
/// total-variation distances, the second generator eigenvalue, and the decay
/// rate fitted on the clean exponential window of the curve.
struct RelaxationCurve {
  std::vector<RelaxationPoint> points;
  double lambda2 = 0.0;
  double fitted_rate = 0.0;
  bool fit_ok = false;
  CheckMetadata meta;
};

inline RelaxationCurve relaxation_curve(int n, StickyParam p, const LevySymbol& symbol, int L,
                                        std::span<const double> nu0,
                                        std::span<const double> t_grid, double semi_tol = 1e-10,
                                        double fit_cap = 1e-3, double fit_floor = 1e-11) {
  if (nu0.size() != static_cast<std::size_t>(L))
    throw std::invalid_argument("relaxation_curve: nu0 must live on Z_L");
  double nu_total = 0.0;
  for (double x : nu0) {
    if (!(x >= 0.0)) throw std::invalid_argument("relaxation_curve: nu0 must be nonnegative");
    nu_total += x;
  }
  if (std::abs(nu_total - 1.0) > 1e-9)
    throw std::invalid_argument("relaxation_curve: nu0 must sum to 1");

  GridGenerator gen(symbol, L);
  FormOperator op(n, p, gen);

  // product initial law on (Z_L)^n
  std::vector<double> rho0(op.size());
  int digits[16];
  for (std::size_t idx = 0; idx < rho0.size(); ++idx) {
    detail::decode_digits(idx, n, L, digits);
    double v = 1.0;
    for (int i = 0; i < n; ++i) v *= nu0[static_cast<std::size_t>(digits[i])];
    rho0[idx] = v;
  }

  RelaxationCurve curve;
  curve.meta = {n, L, p.tau, symbol.describe(), 0, 0.0};
  const auto t_start = std::chrono::steady_clock::now();
  const auto& mass = op.measure().mass;
  for (double t : t_grid) {
    const auto rho_t = op.apply_semigroup_adjoint(rho0, t, semi_tol);
    double tv = 0.0;
    for (std::size_t i = 0; i < rho_t.size(); ++i) tv += std::abs(rho_t[i] - mass[i]);
    curve.points.push_back({t, 0.5 * tv});
  }

  curve.lambda2 = estimate_lambda2(op);

  std::vector<double> xs, ys;
  for (const auto& pt : curve.points)
    if (pt.tv_distance > fit_floor && pt.tv_distance < fit_cap) {
      xs.push_back(pt.t);
      ys.push_back(std::log(pt.tv_distance));
    }
  if (xs.size() >= 3) {
    curve.fitted_rate = -fit_line(xs, ys).slope;
    curve.fit_ok = true;
  }
  curve.meta.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return curve;
}

/// Default Fourier-moment battery: 13 queries, n <= 3, |k_j| <= 2, mixing
/// zero and nonzero oracle values.
inline std::vector<MomentQuery> default_moment_battery(int max_n = 3) {
  std::vector<MomentQuery> battery;
  auto add = [&](int n, std::vector<int> k) {
    if (n <= max_n) battery.emplace_back(n, std::move(k));
  };
  add(1, {1});
  add(1, {2});
  add(2, {1, -1});
  add(2, {2, -2});
  add(2, {1, 1});
  add(2, {2, -1});
  add(2, {1, 0});
  add(3, {1, -1, 0});
  add(3, {1, 1, -2});
  add(3, {2, -1, -1});
  add(3, {1, 1, 1});
  add(3, {2, -2, 0});
  add(3, {1, -1, 2});
  return battery;
}

struct MomentRow {
  MomentQuery query;
  double oracle = 0.0;
  double urn_estimate = 0.0;
  double urn_std_error = 0.0;
  double urn_z = 0.0;
  bool has_paintbox = false;
  double paintbox_estimate = 0.0;
  double paintbox_std_error = 0.0;
  double paintbox_z = 0.0;
};

struct MomentSuiteResult {
  std::vector<MomentRow> rows;
  std::vector<CheckReport> reports;  // one per query, tolerance 3 on |z|
  double fraction_within_3se = 1.0;
  bool passed = false;               // >= 95% of z-scores within 3 s.e.
};

namespace detail {

inline double z_score(double estimate, double oracle, double std_error) {
  // degenerate estimators (zero or rounding-level spread) are judged by the
  // absolute gap instead of a meaningless ratio
  if (std_error <= 1e-12)
    return std::abs(estimate - oracle) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
  return (estimate - oracle) / std_error;
}

}  // namespace detail

/// Monte Carlo moments of m_n versus the exact oracle, through both sampling
/// routes: the sequential urn (average of prod_j e^{2 pi i k_j x_j}) and the
/// paintbox (average of prod_j mu_hat(k_j), the conditional expectation given
/// the sampled atomic measure; truncation bias <= n * trunc_eps, far below
/// the Monte Carlo error). Pass rule: at least 95% of all z-scores within 3,
/// a documented family-wise allowance rather than a formal correction.
/// At tau = 0 the paintbox route is skipped (no atomic stationary measure).
inline MomentSuiteResult mc_moment_suite(int max_n, StickyParam p, int samples,
                                         std::uint64_t seed,
                                         std::vector<MomentQuery> battery = {},
                                         double trunc_eps = 1e-8) {
  if (samples < 10000)
    throw std::invalid_argument("mc_moment_suite: need at least 10^4 samples");
  if (max_n > 3) throw std::invalid_argument("mc_moment_suite: max_n must be <= 3");
  if (battery.empty()) battery = default_moment_battery(max_n);
  for (const auto& q : battery)
    if (q.n > max_n)
      throw std::invalid_argument("mc_moment_suite: battery entry exceeds max_n");

  constexpr double two_pi = 6.283185307179586476925286766559;
  const bool paintbox_available = !p.is_independent();

  std::vector<MeanAccumulator> urn_acc(battery.size());
  std::vector<MeanAccumulator> pb_acc(battery.size());

  // urn route: one pool of n-point samples per level, shared by that level's queries
  for (int n = 1; n <= max_n; ++n) {
    std::vector<std::size_t> active;
    for (std::size_t qi = 0; qi < battery.size(); ++qi)
      if (battery[qi].n == n) active.push_back(qi);
    if (active.empty()) continue;
    Rng rng = Rng(seed).stream(100 + static_cast<std::uint64_t>(n));
    for (int s = 0; s < samples; ++s) {
      const auto x = sample_mn_urn(n, p, rng);
      for (std::size_t qi : active) {
        double phase = 0.0;
        for (int j = 0; j < n; ++j)
          phase += static_cast<double>(battery[qi].k[static_cast<std::size_t>(j)]) * x[static_cast<std::size_t>(j)];
        urn_acc[qi].add(std::cos(two_pi * phase));
      }
    }
  }

  // paintbox route: one pool of measures, Fourier coefficients reused
  if (paintbox_available) {
    int max_mode = 0;
    for (const auto& q : battery)
      for (int kj : q.k) max_mode = std::max(max_mode, std::abs(kj));
    Rng rng = Rng(seed).stream(200);
    for (int s = 0; s < samples; ++s) {
      const auto mu = sample_mu(p, trunc_eps, rng);
      std::vector<std::complex<double>> hat(static_cast<std::size_t>(max_mode) + 1);
      hat[0] = {1.0 - mu.weights.residual, 0.0};
      for (int k = 1; k <= max_mode; ++k) hat[static_cast<std::size_t>(k)] = fourier_weight(mu, k);
      for (std::size_t qi = 0; qi < battery.size(); ++qi) {
        std::complex<double> prod(1.0, 0.0);
        for (int kj : battery[qi].k) {
          const auto h = hat[static_cast<std::size_t>(std::abs(kj))];
          prod *= kj >= 0 ? h : std::conj(h);
        }
        pb_acc[qi].add(prod.real());
      }
    }
  }

  MomentSuiteResult result;
  int within = 0, total = 0;
  for (std::size_t qi = 0; qi < battery.size(); ++qi) {
    MomentRow row{battery[qi]};
    row.oracle = moment_oracle(battery[qi], p).real();
    row.urn_estimate = urn_acc[qi].mean();
    row.urn_std_error = urn_acc[qi].std_error();
    row.urn_z = detail::z_score(row.urn_estimate, row.oracle, row.urn_std_error);
    ++total;
    if (std::abs(row.urn_z) <= 3.0) ++within;
    if (paintbox_available) {
      row.has_paintbox = true;
      row.paintbox_estimate = pb_acc[qi].mean();
      row.paintbox_std_error = pb_acc[qi].std_error();
      row.paintbox_z = detail::z_score(row.paintbox_estimate, row.oracle, row.paintbox_std_error);
      ++total;
      if (std::abs(row.paintbox_z) <= 3.0) ++within;
    }

    CheckReport r;
    r.name = "moment/" + battery[qi].label();
    r.tolerance = 3.0;
    r.meta = {battery[qi].n, 0, p.tau, "", seed, 0.0};
    r.residuals.emplace_back("z_urn", std::abs(row.urn_z));
    if (row.has_paintbox) r.residuals.emplace_back("z_paintbox", std::abs(row.paintbox_z));
    r.info.emplace_back("oracle", row.oracle);
    r.info.emplace_back("urn_estimate", row.urn_estimate);
    if (row.has_paintbox) r.info.emplace_back("paintbox_estimate", row.paintbox_estimate);
    r.finalize();
    result.reports.push_back(std::move(r));
    result.rows.push_back(std::move(row));
  }
  result.fraction_within_3se = total > 0 ? static_cast<double>(within) / total : 1.0;
  result.passed = result.fraction_within_3se >= 0.95;
  return result;
}

/// Atomicity statistics of the stationary measure: the Monte Carlo mean of
/// sum P_i^2 must match tau (it equals the two-point diagonal mass), plus a
/// distribution summary of the 99%-support size and a residual-mass audit.
inline CheckReport atomicity_suite(StickyParam p, int samples, std::uint64_t seed,
                                   double trunc_eps = 1e-8) {
  if (p.is_independent())
    throw std::invalid_argument("atomicity_suite: tau must be in (0, 1]");
  const auto t_start = std::chrono::steady_clock::now();

  Rng rng = Rng(seed).stream(300);
  MeanAccumulator sum_sq, atoms99, max_w;
  double max_residual = 0.0;
  int max_atoms99 = 0;
  for (int s = 0; s < samples; ++s) {
    const auto mu = sample_mu(p, trunc_eps, rng);
    const auto stats = atom_statistics(mu);
    sum_sq.add(stats.sum_sq);
    atoms99.add(static_cast<double>(stats.num_atoms_99));
    max_w.add(stats.max_weight);
    max_residual = std::max(max_residual, mu.weights.residual);
    max_atoms99 = std::max(max_atoms99, stats.num_atoms_99);
  }

  CheckReport report;
  report.name = "atomicity";
  report.tolerance = 3.0;
  report.meta = {0, 0, p.tau, "", seed, 0.0};
  report.residuals.emplace_back(
      "z_sum_sq", std::abs(detail::z_score(sum_sq.mean(), p.tau, sum_sq.std_error())));
  report.info = {
      {"mean_sum_sq", sum_sq.mean()},
      {"std_error_sum_sq", sum_sq.std_error()},
      {"mean_num_atoms_99", atoms99.mean()},
      {"max_num_atoms_99", static_cast<double>(max_atoms99)},
      {"mean_max_weight", max_w.mean()},
      {"max_residual_mass", max_residual},
      {"trunc_eps", trunc_eps},
  };
  report.finalize();
  if (max_residual > trunc_eps) report.passed = false;  // residual-mass audit
  report.meta.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace stickyflow
