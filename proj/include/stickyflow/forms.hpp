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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stickyflow/partition.hpp"
#include "stickyflow/rng.hpp"
#include "stickyflow/spectral.hpp"

namespace stickyflow {

namespace detail {

inline std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Coincidence profile of a grid point: the sorted (descending) group sizes
// of equal coordinates, packed four bits per group. Works for n <= 15.
inline std::uint64_t point_profile_key(const int* digits, int n) {
  int sizes[16];
  bool used[16] = {false};
  int ng = 0;
  for (int i = 0; i < n; ++i) {
    if (used[i]) continue;
    int c = 1;
    for (int j = i + 1; j < n; ++j)
      if (!used[j] && digits[j] == digits[i]) {
        used[j] = true;
        ++c;
      }
    sizes[ng++] = c;
  }
  std::sort(sizes, sizes + ng, std::greater<int>());
  std::uint64_t key = 0;
  for (int g = 0; g < ng; ++g) key = (key << 4) | static_cast<std::uint64_t>(sizes[g]);
  return key;
}

inline std::uint64_t sizes_profile_key(std::vector<int> sizes) {
  std::sort(sizes.begin(), sizes.end(), std::greater<int>());
  std::uint64_t key = 0;
  for (int s : sizes) key = (key << 4) | static_cast<std::uint64_t>(s);
  return key;
}

// pi refines kappa iff every block of pi lies inside one block of kappa
inline bool refines(const SetPartition& pi, const std::vector<int>& kappa_labels) {
  for (const auto& block : pi.blocks()) {
    const int lab = kappa_labels[static_cast<std::size_t>(block.front() - 1)];
    for (int e : block)
      if (kappa_labels[static_cast<std::size_t>(e - 1)] != lab) return false;
  }
  return true;
}

// Per coincidence profile, the superposed stratum weights:
//   mass      = sum over refinements pi of p_pi / L^{|pi|}
//   diag_rate = sum over refinements pi of p_pi * |pi| / L^{|pi|}
// The mass at a point depends only on the profile of its coincidence
// partition, which is what makes permutation and rotation invariance of the
// assembled measure bit-exact.
struct ProfileTable {
  std::vector<std::uint64_t> keys;
  std::vector<double> mass;
  std::vector<double> diag_rate;

  std::size_t index_of(std::uint64_t key) const {
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == key) return i;
    throw std::logic_error("ProfileTable: unknown coincidence profile");
  }
};

inline ProfileTable build_profile_table(int n, StickyParam p, int L) {
  const auto partitions = enumerate_partitions(n);
  ProfileTable table;
  for (const auto& kappa : partitions) {
    const std::uint64_t key = sizes_profile_key(kappa.block_sizes());
    if (std::find(table.keys.begin(), table.keys.end(), key) != table.keys.end()) continue;
    const auto kappa_labels = kappa.labels();
    double mass = 0.0;
    double diag = 0.0;
    for (const auto& pi : partitions) {
      if (!refines(pi, kappa_labels)) continue;
      const double w = eppf(pi, p);
      if (w == 0.0) continue;
      const double scale = w / static_cast<double>(ipow(static_cast<std::size_t>(L), pi.num_blocks()));
      mass += scale;
      diag += scale * static_cast<double>(pi.num_blocks());
    }
    table.keys.push_back(key);
    table.mass.push_back(mass);
    table.diag_rate.push_back(diag);
  }
  return table;
}

inline void decode_digits(std::size_t idx, int n, int L, int* digits) {
  for (int i = n - 1; i >= 0; --i) {
    digits[i] = static_cast<int>(idx % static_cast<std::size_t>(L));
    idx /= static_cast<std::size_t>(L);
  }
}

// out += sum over axes of (-Q_axis) applied to `in` on (Z_L)^k, in the
// difference form sum_d r(d) (f(x) - f(x + d e_axis)) so that constants map
// to exact zeros.
inline void add_neg_product_generator(const GridGenerator& gen, int k,
                                      std::span<const double> in, std::span<double> out) {
  const int L = gen.size();
  const auto& rates = gen.rates();
  const auto& jumps = gen.jump_set();
  const std::size_t total = in.size();
  for (int axis = 0; axis < k; ++axis) {
    const std::size_t stride = ipow(static_cast<std::size_t>(L), k - 1 - axis);
    const std::size_t block = stride * static_cast<std::size_t>(L);
    for (std::size_t base = 0; base < total; base += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        const std::size_t off = base + inner;
        for (int j = 0; j < L; ++j) {
          const double fx = in[off + static_cast<std::size_t>(j) * stride];
          double acc = 0.0;
          for (int d : jumps)
            acc += rates[static_cast<std::size_t>(d)] *
                   (fx - in[off + static_cast<std::size_t>((j + d) % L) * stride]);
          out[off + static_cast<std::size_t>(j) * stride] += acc;
        }
      }
    }
  }
}

}  // namespace detail

/// Discretized n-point measure on (Z_L)^n, dense row-major array
/// (last coordinate fastest).
struct GridMeasure {
  int n = 0;
  int L = 0;
  std::vector<double> mass;

  double total() const {
    double t = 0.0;
    for (double m : mass) t += m;
    return t;
  }
};

struct AssemblyLimits {
  int max_n = 4;
  std::size_t max_points = std::size_t{1} << 22;
};

/// Superposition measure m_n = sum over partitions pi of p_pi * (uniform
/// pushed forward onto the stratum of pi). Overlapping strata add, exactly as
/// the superposition dictates. Assembled through the coincidence-profile
/// table, so permutation and simultaneous-rotation invariance hold bit-exactly.
inline GridMeasure assemble_mn(int n, StickyParam p, int L, AssemblyLimits limits = {}) {
  if (n < 1 || n > limits.max_n)
    throw std::invalid_argument("assemble_mn: n out of range [1, " + std::to_string(limits.max_n) + "]");
  if (L < 4) throw std::invalid_argument("assemble_mn: L must be >= 4");
  const std::size_t total = detail::ipow(static_cast<std::size_t>(L), n);
  if (total > limits.max_points)
    throw std::invalid_argument("assemble_mn: L^n exceeds the dense-array guard");

  const detail::ProfileTable table = detail::build_profile_table(n, p, L);
  GridMeasure m;
  m.n = n;
  m.L = L;
  m.mass.resize(total);
  int digits[16];
  for (std::size_t idx = 0; idx < total; ++idx) {
    detail::decode_digits(idx, n, L, digits);
    m.mass[idx] = table.mass[table.index_of(detail::point_profile_key(digits, n))];
  }
  return m;
}

/// Embedding phi of (Z_L)^k onto the stratum of a partition pi of [n]
/// (the diagonal where coordinates within each block coincide), with gather
/// (pullback of functions) and scatter-add (adjoint in the counting inner
/// product). phi is injective, so gather(scatter) is the identity on stratum
/// functions.
class StratumMap {
 public:
  StratumMap(const SetPartition& pi, int L) : L_(L), k_(pi.num_blocks()) {
    const int n = pi.ground_size();
    size_ = detail::ipow(static_cast<std::size_t>(L), k_);
    weights_.assign(static_cast<std::size_t>(k_), 0);
    const auto labels = pi.labels();
    std::size_t stride = 1;
    for (int i = n - 1; i >= 0; --i) {
      weights_[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += stride;
      stride *= static_cast<std::size_t>(L);
    }
  }

  int k() const { return k_; }
  std::size_t stratum_size() const { return size_; }

  /// Flat index in (Z_L)^n of the image of the flat stratum point y.
  std::size_t embed_index(std::size_t y) const {
    std::size_t x = 0;
    for (int j = k_ - 1; j >= 0; --j) {
      x += (y % static_cast<std::size_t>(L_)) * weights_[static_cast<std::size_t>(j)];
      y /= static_cast<std::size_t>(L_);
    }
    return x;
  }

  /// Visit all stratum points: fn(y_flat, x_flat). Odometer walk, no
  /// per-point decoding.
  template <class F>
  void for_each(F&& fn) const {
    std::vector<int> dig(static_cast<std::size_t>(k_), 0);
    std::size_t x = 0;
    for (std::size_t y = 0; y < size_; ++y) {
      fn(y, x);
      for (int j = k_ - 1; j >= 0; --j) {
        if (++dig[static_cast<std::size_t>(j)] < L_) {
          x += weights_[static_cast<std::size_t>(j)];
          break;
        }
        dig[static_cast<std::size_t>(j)] = 0;
        x -= weights_[static_cast<std::size_t>(j)] * static_cast<std::size_t>(L_ - 1);
      }
    }
  }

  void gather(std::span<const double> f, std::span<double> out) const {
    for_each([&](std::size_t y, std::size_t x) { out[y] = f[x]; });
  }

  void scatter_add(std::span<const double> h, double coeff, std::span<double> out) const {
    for_each([&](std::size_t y, std::size_t x) { out[x] += coeff * h[y]; });
  }

 private:
  int L_;
  int k_;
  std::size_t size_;
  std::vector<std::size_t> weights_;
};

struct ResolventResult {
  std::vector<double> u;
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

/// Matrix-free n-point sticky form on (Z_L)^n. In the counting inner product
/// the form matrix is B_n = sum_pi p_pi R_pi^T B^(k) R_pi, where R_pi
/// restricts to the stratum of pi and B^(k) = (1/L^k) sum_i (-Q_i) is the
/// k-particle product form of the single-site generator Q. The reference
/// measure M_n is the assembled m_n; the generator is A_n = -M_n^{-1} B_n.
///
/// tau = 1 is rejected: m_n then charges only the full diagonal, L^2(m_n)
/// collapses to single-particle functions, and representing that here would
/// misstate the coalescent flow. The single-particle module covers it.
class FormOperator {
 public:
  FormOperator(int n, StickyParam p, GridGenerator gen, AssemblyLimits limits = {})
      : n_(n), L_(gen.size()), p_(p), gen_(std::move(gen)) {
    if (p.is_coalescent())
      throw std::invalid_argument(
          "FormOperator: tau=1 degenerates m_n to the full diagonal (single-particle motion); "
          "n-point operators are defined for tau in [0, 1) only");
    if (n < 1 || n > limits.max_n)
      throw std::invalid_argument("FormOperator: n out of range [1, " + std::to_string(limits.max_n) + "]");
    size_ = detail::ipow(static_cast<std::size_t>(L_), n_);
    if (size_ > limits.max_points)
      throw std::invalid_argument("FormOperator: L^n exceeds the dense-array guard");

    measure_ = assemble_mn(n_, p_, L_, limits);

    const auto partitions = enumerate_partitions(n_);
    for (const auto& pi : partitions) {
      const double w = eppf(pi, p_);
      if (w == 0.0) continue;
      strata_.emplace_back(StratumMap(pi, L_), w);
    }

    // diagonal of B and the uniformization rate Lambda = max |diag A|
    const detail::ProfileTable table = detail::build_profile_table(n_, p_, L_);
    diag_B_.resize(size_);
    int digits[16];
    for (std::size_t idx = 0; idx < size_; ++idx) {
      detail::decode_digits(idx, n_, L_, digits);
      const std::size_t pi_idx = table.index_of(detail::point_profile_key(digits, n_));
      diag_B_[idx] = gen_.total_rate() * table.diag_rate[pi_idx];
    }
    unif_rate_ = 0.0;
    for (std::size_t i = 0; i < table.keys.size(); ++i)
      unif_rate_ = std::max(unif_rate_, gen_.total_rate() * table.diag_rate[i] / table.mass[i]);
  }

  int n() const { return n_; }
  int L() const { return L_; }
  std::size_t size() const { return size_; }
  StickyParam param() const { return p_; }
  const GridGenerator& generator() const { return gen_; }
  const GridMeasure& measure() const { return measure_; }
  const std::vector<double>& diag_B() const { return diag_B_; }
  double uniformization_rate() const { return unif_rate_; }

  /// out = B_n f (counting inner product convention), matrix-free over strata.
  void apply_B(std::span<const double> f, std::span<double> out) const {
    check_dim(f);
    check_dim(out);
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> g, h;
    for (const auto& [sm, weight] : strata_) {
      g.assign(sm.stratum_size(), 0.0);
      h.assign(sm.stratum_size(), 0.0);
      sm.gather(f, g);
      detail::add_neg_product_generator(gen_, sm.k(), g, h);
      const double coeff =
          weight / static_cast<double>(detail::ipow(static_cast<std::size_t>(L_), sm.k()));
      sm.scatter_add(h, coeff, out);
    }
  }

  void apply_M(std::span<const double> f, std::span<double> out) const {
    check_dim(f);
    check_dim(out);
    for (std::size_t i = 0; i < size_; ++i) out[i] = measure_.mass[i] * f[i];
  }

  double energy(std::span<const double> f) const { return energy(f, f); }

  double energy(std::span<const double> f, std::span<const double> g) const {
    check_dim(f);
    check_dim(g);
    std::vector<double> bg(size_);
    apply_B(g, bg);
    double acc = 0.0;
    for (std::size_t i = 0; i < size_; ++i) acc += f[i] * bg[i];
    return acc;
  }

  double inner_m(std::span<const double> f, std::span<const double> g) const {
    check_dim(f);
    check_dim(g);
    double acc = 0.0;
    for (std::size_t i = 0; i < size_; ++i) acc += f[i] * measure_.mass[i] * g[i];
    return acc;
  }

  /// e^{t A_n} f by uniformization: a Poisson(Lambda t) mixture of powers of
  /// the stochastic matrix P = I + A/Lambda, truncated once the remaining
  /// Poisson tail times sup|f| is below tol; the remainder weight is closed
  /// with the current iterate, so the result is an exact convex combination
  /// (constants are preserved exactly, sup norm contracts).
  std::vector<double> apply_semigroup(std::span<const double> f, double t,
                                      double tol = 1e-10) const {
    return uniformized(f, t, tol);
  }

  /// Adjoint action on measures (row vectors): rho e^{t A_n}. By
  /// reversibility the density u = rho / m_n evolves under the primal
  /// semigroup, so this is e^{tA}(rho/m) * m. Preserves total mass and
  /// nonnegativity; m_n itself is a bitwise fixed point.
  std::vector<double> apply_semigroup_adjoint(std::span<const double> rho, double t,
                                              double tol = 1e-10) const {
    check_dim(rho);
    std::vector<double> density(size_);
    for (std::size_t i = 0; i < size_; ++i) density[i] = rho[i] / measure_.mass[i];
    auto evolved = uniformized(density, t, tol);
    for (std::size_t i = 0; i < size_; ++i) evolved[i] *= measure_.mass[i];
    return evolved;
  }

  /// Solves (alpha M + B) u = M g by Jacobi-preconditioned conjugate
  /// gradients; u is the resolvent G_alpha g. Non-convergence within the
  /// iteration cap is reported, not thrown.
  ResolventResult resolvent(std::span<const double> g, double alpha, double tol = 1e-12,
                            int max_iter = 20000) const {
    check_dim(g);
    if (!(alpha > 0.0)) throw std::invalid_argument("resolvent: alpha must be > 0");

    std::vector<double> b(size_);
    apply_M(g, b);
    double b_norm = 0.0;
    for (double v : b) b_norm += v * v;
    b_norm = std::sqrt(b_norm);

    ResolventResult res;
    res.u.assign(size_, 0.0);
    if (b_norm == 0.0) {
      res.converged = true;
      return res;
    }

    std::vector<double> precond(size_);
    for (std::size_t i = 0; i < size_; ++i)
      precond[i] = 1.0 / (alpha * measure_.mass[i] + diag_B_[i]);

    std::vector<double> r = b, z(size_), q(size_), pdir(size_);
    for (std::size_t i = 0; i < size_; ++i) z[i] = precond[i] * r[i];
    pdir = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < size_; ++i) rz += r[i] * z[i];

    double r_norm = b_norm;
    int it = 0;
    while (it < max_iter && r_norm > tol * b_norm) {
      ++it;
      apply_B(pdir, q);
      for (std::size_t i = 0; i < size_; ++i) q[i] += alpha * measure_.mass[i] * pdir[i];
      double pq = 0.0;
      for (std::size_t i = 0; i < size_; ++i) pq += pdir[i] * q[i];
      const double step = rz / pq;
      for (std::size_t i = 0; i < size_; ++i) {
        res.u[i] += step * pdir[i];
        r[i] -= step * q[i];
      }
      double rz_new = 0.0;
      r_norm = 0.0;
      for (std::size_t i = 0; i < size_; ++i) {
        z[i] = precond[i] * r[i];
        rz_new += r[i] * z[i];
        r_norm += r[i] * r[i];
      }
      r_norm = std::sqrt(r_norm);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < size_; ++i) pdir[i] = z[i] + beta * pdir[i];
    }
    res.iterations = it;
    res.rel_residual = r_norm / b_norm;
    res.converged = res.rel_residual <= tol;
    return res;
  }

 private:
  void check_dim(std::span<const double> f) const {
    if (f.size() != size_) throw std::invalid_argument("FormOperator: array dimension mismatch");
  }

  std::vector<double> uniformized(std::span<const double> f, double t, double tol) const {
    check_dim(f);
    if (!(t >= 0.0)) throw std::invalid_argument("apply_semigroup: t must be >= 0");
    std::vector<double> v(f.begin(), f.end());
    if (t == 0.0) return v;

    const double lam = unif_rate_;
    const double lt = lam * t;
    double sup = 0.0;
    for (double x : v) sup = std::max(sup, std::abs(x));
    const double target = tol / std::max(1.0, sup);

    std::vector<double> result(size_, 0.0), tmp(size_);
    const double log_lt = std::log(lt);
    double cum = 0.0;
    const std::size_t max_terms =
        static_cast<std::size_t>(lt + 60.0 * std::sqrt(lt + 16.0) + 64.0);
    for (std::size_t j = 0;; ++j) {
      const double lw = -lt + static_cast<double>(j) * log_lt -
                        std::lgamma(static_cast<double>(j) + 1.0);
      if (lw > -745.0) {
        const double w = std::exp(lw);
        for (std::size_t i = 0; i < size_; ++i) result[i] += w * v[i];
        cum += w;
      }
      if (1.0 - cum <= target || j >= max_terms) {
        const double rem = 1.0 - cum;
        for (std::size_t i = 0; i < size_; ++i) result[i] += rem * v[i];
        break;
      }
      // v <- P v: P = I + A/Lambda with A = -M^{-1} B
      apply_B(v, tmp);
      for (std::size_t i = 0; i < size_; ++i) v[i] -= tmp[i] / (lam * measure_.mass[i]);
    }
    return result;
  }

  int n_;
  int L_;
  StickyParam p_;
  GridGenerator gen_;
  std::size_t size_ = 0;
  GridMeasure measure_;
  std::vector<std::pair<StratumMap, double>> strata_;
  std::vector<double> diag_B_;
  double unif_rate_ = 0.0;
};

/// g on (Z_L)^n lifted to (Z_L)^{n+1}: (g tensor 1)(x, y) = g(x).
inline std::vector<double> lift(std::span<const double> g, int L) {
  std::vector<double> out(g.size() * static_cast<std::size_t>(L));
  for (std::size_t x = 0; x < g.size(); ++x)
    for (int y = 0; y < L; ++y) out[x * static_cast<std::size_t>(L) + static_cast<std::size_t>(y)] = g[x];
  return out;
}

/// Conditional expectation of f onto the first n coordinates under m_{n+1}:
/// (pi_n f)(x) = [(1-tau)/L * sum_y f(x, y) + tau * sum_i f(x, x_i)] / ((1-tau) + n tau).
/// This is the L^2(m_{n+1}) orthogonal projection onto lifted functions.
inline std::vector<double> project(std::span<const double> f, int n, int L, StickyParam p) {
  const std::size_t base = detail::ipow(static_cast<std::size_t>(L), n);
  if (f.size() != base * static_cast<std::size_t>(L))
    throw std::invalid_argument("project: array dimension mismatch");
  const double tau = p.tau;
  const double norm = (1.0 - tau) + static_cast<double>(n) * tau;
  std::vector<double> out(base);
  int digits[16];
  for (std::size_t x = 0; x < base; ++x) {
    const std::size_t row = x * static_cast<std::size_t>(L);
    double acc = 0.0;
    if (tau < 1.0) {
      double mean = 0.0;
      for (int y = 0; y < L; ++y) mean += f[row + static_cast<std::size_t>(y)];
      acc += (1.0 - tau) * mean / static_cast<double>(L);
    }
    if (tau > 0.0) {
      detail::decode_digits(x, n, L, digits);
      double sub = 0.0;
      for (int i = 0; i < n; ++i) sub += f[row + static_cast<std::size_t>(digits[i])];
      acc += tau * sub;
    }
    out[x] = acc / norm;
  }
  return out;
}

/// The level-(n+1) form realized from a level-n operator by the recurrence
///   E_{n+1}(g) = [(1-tau) (E_n (x) E)(g) + tau sum_i E_n(g^i)] / ((1-tau) + n tau),
/// with g^i the substitution x_{n+1} := x_i. In matrix terms this is
///   (1-tau)/norm * [ (1/L)(B_n (x) I) + diag(m_n) (x) B_1 ]
///   + tau/norm * sum_i S_i^T B_n S_i,
/// which agrees with the superposition route exactly; the residual between
/// the two routes is a standing verification target.
class RecursiveForm {
 public:
  explicit RecursiveForm(const FormOperator& base) : base_(base) {}

  std::vector<double> apply_B(std::span<const double> g) const {
    const int n = base_.n();
    const int L = base_.L();
    const std::size_t base_size = base_.size();
    if (g.size() != base_size * static_cast<std::size_t>(L))
      throw std::invalid_argument("RecursiveForm: array dimension mismatch");

    const double tau = base_.param().tau;
    const double norm = (1.0 - tau) + static_cast<double>(n) * tau;
    const double w_prod = (1.0 - tau) / norm;
    const double w_sub = tau / norm;
    const double invL = 1.0 / static_cast<double>(L);

    std::vector<double> out(g.size(), 0.0);
    std::vector<double> buf(base_size), res(base_size);

    // (1/L)(B_n tensor I): level-n action on each slice of the last coordinate
    if (w_prod != 0.0) {
      for (int y = 0; y < L; ++y) {
        for (std::size_t x = 0; x < base_size; ++x)
          buf[x] = g[x * static_cast<std::size_t>(L) + static_cast<std::size_t>(y)];
        base_.apply_B(buf, res);
        for (std::size_t x = 0; x < base_size; ++x)
          out[x * static_cast<std::size_t>(L) + static_cast<std::size_t>(y)] += w_prod * invL * res[x];
      }
      // diag(m_n) tensor B_1 with B_1 = (1/L)(-Q): contiguous last-axis lines
      const auto& mass = base_.measure().mass;
      const auto& gen = base_.generator();
      std::vector<double> line(static_cast<std::size_t>(L)), qline(static_cast<std::size_t>(L));
      for (std::size_t x = 0; x < base_size; ++x) {
        const std::size_t row = x * static_cast<std::size_t>(L);
        for (int y = 0; y < L; ++y) line[static_cast<std::size_t>(y)] = g[row + static_cast<std::size_t>(y)];
        std::fill(qline.begin(), qline.end(), 0.0);
        detail::add_neg_product_generator(gen, 1, line, qline);
        const double c = w_prod * mass[x] * invL;
        for (int y = 0; y < L; ++y) out[row + static_cast<std::size_t>(y)] += c * qline[static_cast<std::size_t>(y)];
      }
    }

    // substitution pullbacks S_i^T B_n S_i
    if (w_sub != 0.0) {
      for (int i = 0; i < n; ++i) {
        const std::size_t stride = detail::ipow(static_cast<std::size_t>(L), n - 1 - i);
        for (std::size_t x = 0; x < base_size; ++x) {
          const std::size_t d = (x / stride) % static_cast<std::size_t>(L);
          buf[x] = g[x * static_cast<std::size_t>(L) + d];
        }
        base_.apply_B(buf, res);
        for (std::size_t x = 0; x < base_size; ++x) {
          const std::size_t d = (x / stride) % static_cast<std::size_t>(L);
          out[x * static_cast<std::size_t>(L) + d] += w_sub * res[x];
        }
      }
    }
    return out;
  }

  double energy(std::span<const double> g) const {
    const auto bg = apply_B(g);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * bg[i];
    return acc;
  }

 private:
  const FormOperator& base_;
};

/// k-fold tensor action of the 1-d spectral semigroup: the exact product
/// semigroup, which the n-point semigroup must reduce to at tau = 0.
inline std::vector<double> apply_tensor_semigroup(const GridGenerator& gen, int k,
                                                  std::span<const double> f, double t) {
  const int L = gen.size();
  const std::size_t total = detail::ipow(static_cast<std::size_t>(L), k);
  if (f.size() != total) throw std::invalid_argument("apply_tensor_semigroup: dimension mismatch");
  std::vector<double> cur(f.begin(), f.end());
  std::vector<double> line(static_cast<std::size_t>(L));
  for (int axis = 0; axis < k; ++axis) {
    const std::size_t stride = detail::ipow(static_cast<std::size_t>(L), k - 1 - axis);
    const std::size_t block = stride * static_cast<std::size_t>(L);
    for (std::size_t base = 0; base < total; base += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        const std::size_t off = base + inner;
        for (int j = 0; j < L; ++j) line[static_cast<std::size_t>(j)] = cur[off + static_cast<std::size_t>(j) * stride];
        const auto evolved = gen.apply_semigroup(line, t);
        for (int j = 0; j < L; ++j) cur[off + static_cast<std::size_t>(j) * stride] = evolved[static_cast<std::size_t>(j)];
      }
    }
  }
  return cur;
}

/// Second-largest eigenvalue of the generator A_n (the negative spectral
/// gap), by power iteration on the shifted symmetrized operator
/// 2 Lambda I - M^{1/2} A M^{-1/2} with the stationary direction deflated.
inline double estimate_lambda2(const FormOperator& op, int max_iter = 50000, double tol = 1e-11,
                               std::uint64_t seed = 12345) {
  const std::size_t N = op.size();
  const auto& mass = op.measure().mass;
  std::vector<double> v0(N), inv_sqrt(N);
  for (std::size_t i = 0; i < N; ++i) {
    v0[i] = std::sqrt(mass[i]);
    inv_sqrt[i] = 1.0 / v0[i];
  }
  double v0n = 0.0;
  for (double x : v0) v0n += x * x;
  v0n = std::sqrt(v0n);
  for (auto& x : v0) x /= v0n;

  Rng rng(seed);
  std::vector<double> w(N);
  for (auto& x : w) x = rng.uniform01() - 0.5;

  const double shift = 2.0 * op.uniformization_rate();
  std::vector<double> t1(N), t2(N), y(N);
  auto deflate_normalize = [&](std::vector<double>& vec) {
    double dot = 0.0;
    for (std::size_t i = 0; i < N; ++i) dot += vec[i] * v0[i];
    for (std::size_t i = 0; i < N; ++i) vec[i] -= dot * v0[i];
    double nrm = 0.0;
    for (double x : vec) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) throw std::runtime_error("estimate_lambda2: degenerate start vector");
    for (auto& x : vec) x /= nrm;
  };
  deflate_normalize(w);

  double rayleigh_prev = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // y = shift * w - S w, S = M^{-1/2} B M^{-1/2}
    for (std::size_t i = 0; i < N; ++i) t1[i] = w[i] * inv_sqrt[i];
    op.apply_B(t1, t2);
    for (std::size_t i = 0; i < N; ++i) y[i] = shift * w[i] - t2[i] * inv_sqrt[i];
    double rayleigh = 0.0;
    for (std::size_t i = 0; i < N; ++i) rayleigh += w[i] * y[i];
    deflate_normalize(y);
    w.swap(y);
    if (it > 32 && std::abs(rayleigh - rayleigh_prev) <= tol * std::max(1.0, std::abs(rayleigh))) {
      rayleigh_prev = rayleigh;
      break;
    }
    rayleigh_prev = rayleigh;
  }
  const double s2 = shift - rayleigh_prev;  // smallest nonzero eigenvalue of S
  return -s2;
}

}  // namespace stickyflow
