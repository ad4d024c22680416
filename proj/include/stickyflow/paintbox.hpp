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
#include <complex>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "stickyflow/partition.hpp"
#include "stickyflow/rng.hpp"

namespace stickyflow {

enum class WeightOrder { size_biased, ranked };

/// Truncated random weight sequence with explicit residual bookkeeping:
/// sum(weights) + residual = 1. Residual mass is never silently dropped;
/// estimators built on a WeightSequence carry a bias bound of
/// residual * sup-norm of the test function.
struct WeightSequence {
  std::vector<double> weights;
  double residual = 0.0;
  WeightOrder order_tag = WeightOrder::size_biased;

  double sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

/// Atomic probability measure on the circle R/Z: weights plus atom
/// positions in [0, 1), positions independent of weights.
struct AtomicMeasure {
  WeightSequence weights;
  std::vector<double> atoms;
};

/// Stick-breaking (size-biased) weights of the Dirichlet process with
/// concentration theta = (1-tau)/tau: P_1 = V_1, P_i = V_i prod_{j<i}(1-V_j)
/// with V_j i.i.d. Beta(1, theta), sampled by inverse CDF V = 1 - U^(1/theta).
/// Generation stops once the unbroken stick is below trunc_eps. tau = 1
/// returns the single weight 1. tau = 0 is rejected: the limit measure is
/// nonatomic and has no weight representation.
inline WeightSequence sample_gem(StickyParam p, double trunc_eps, Rng& rng) {
  if (p.is_independent())
    throw std::invalid_argument(
        "sample_gem: tau=0 has a nonatomic stationary measure; no atomic weights exist");
  if (!(trunc_eps > 0.0 && trunc_eps < 1.0))
    throw std::invalid_argument("sample_gem: trunc_eps must lie in (0, 1)");

  WeightSequence w;
  w.order_tag = WeightOrder::size_biased;
  if (p.is_coalescent()) {
    w.weights = {1.0};
    w.residual = 0.0;
    return w;
  }

  const double theta = p.theta();
  const double inv_theta = 1.0 / theta;
  double stick = 1.0;
  const std::size_t max_sticks = 1u << 22;
  for (std::size_t i = 0; i < max_sticks; ++i) {
    if (stick < trunc_eps) {
      w.residual = stick;
      return w;
    }
    const double u = rng.uniform01();
    const double v = 1.0 - std::pow(u, inv_theta);  // Beta(1, theta)
    const double weight = stick * v;
    if (weight > 0.0) w.weights.push_back(weight);
    stick *= (1.0 - v);
  }
  throw std::runtime_error("sample_gem: truncation threshold not reached (theta too large?)");
}

/// Stationary atomic random measure: stick-breaking weights paired with
/// i.i.d. uniform atoms on [0, 1).
inline AtomicMeasure sample_mu(StickyParam p, double trunc_eps, Rng& rng) {
  AtomicMeasure m;
  m.weights = sample_gem(p, trunc_eps, rng);
  m.atoms.reserve(m.weights.weights.size());
  for (std::size_t i = 0; i < m.weights.weights.size(); ++i)
    m.atoms.push_back(rng.uniform01());
  return m;
}

/// Sequential urn sample from the n-point measure m_n on [0,1)^n: the first
/// coordinate is uniform; each next coordinate is fresh-uniform with
/// probability (1-tau)/((1-tau)+m*tau) or an exact copy of an earlier
/// coordinate chosen uniformly (each with probability tau/((1-tau)+m*tau)).
/// Copies are bit-exact, so coincidence statistics need no tolerance.
inline std::vector<double> sample_mn_urn(int n, StickyParam p, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_mn_urn: n must be >= 1");
  const double tau = p.tau;
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(n));
  x.push_back(rng.uniform01());
  for (int m = 1; m < n; ++m) {
    if (tau == 0.0) {
      x.push_back(rng.uniform01());
      continue;
    }
    if (tau == 1.0) {
      x.push_back(x[0]);
      continue;
    }
    const double p_new = (1.0 - tau) / ((1.0 - tau) + static_cast<double>(m) * tau);
    if (rng.uniform01() < p_new)
      x.push_back(rng.uniform01());
    else
      x.push_back(x[static_cast<std::size_t>(rng.uniform_int(m))]);
  }
  return x;
}

struct AtomStatistics {
  int num_atoms_99 = 0;   // least k with the top-k ranked weights summing >= 0.99
  double sum_sq = 0.0;    // sum of squared weights
  double max_weight = 0.0;
};

inline AtomStatistics atom_statistics(const AtomicMeasure& m) {
  AtomStatistics s;
  std::vector<double> ranked = m.weights.weights;
  std::sort(ranked.begin(), ranked.end(), std::greater<>());
  double cum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    s.sum_sq += ranked[i] * ranked[i];
    if (cum < 0.99) {
      cum += ranked[i];
      s.num_atoms_99 = static_cast<int>(i + 1);
    }
  }
  if (cum < 0.99) s.num_atoms_99 = static_cast<int>(ranked.size());
  s.max_weight = ranked.empty() ? 0.0 : ranked.front();
  return s;
}

/// Fourier coefficient of the atomic measure: mu_hat(k) = sum_i P_i e^{2 pi i k X_i}.
/// mu_hat(0) = 1 - residual.
inline std::complex<double> fourier_weight(const AtomicMeasure& m, int k) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t i = 0; i < m.atoms.size(); ++i) {
    const double phase = two_pi * static_cast<double>(k) * m.atoms[i];
    acc += m.weights.weights[i] * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return acc;
}

}  // namespace stickyflow
