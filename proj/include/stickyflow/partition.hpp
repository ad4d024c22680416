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
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stickyflow/rng.hpp"

namespace stickyflow {

/// Stickiness parameter tau in [0, 1]. tau = 0 is the independent limit
/// (all particles move freely, partitions are all-singletons), tau = 1 the
/// fully coalescent limit (a single block). For tau in (0, 1] the associated
/// Dirichlet-process concentration is theta = (1 - tau) / tau.
struct StickyParam {
  double tau;

  explicit StickyParam(double tau_) : tau(tau_) {
    if (!(tau >= 0.0 && tau <= 1.0))
      throw std::invalid_argument("StickyParam: tau must lie in [0, 1]");
  }

  bool is_independent() const { return tau == 0.0; }
  bool is_coalescent() const { return tau == 1.0; }

  /// Concentration (1 - tau) / tau; +infinity at tau = 0.
  double theta() const {
    if (tau == 0.0) return std::numeric_limits<double>::infinity();
    return (1.0 - tau) / tau;
  }
};

/// A set partition of {1, ..., n} in canonical form: each block sorted
/// ascending, blocks ordered by least element. Canonical form is unique,
/// so equality, ordering and hashing of partitions are unambiguous.
class SetPartition {
 public:
  static SetPartition from_blocks(int n, std::vector<std::vector<int>> blocks) {
    SetPartition p;
    p.n_ = n;
    p.blocks_ = std::move(blocks);
    p.canonicalize_and_validate();
    return p;
  }

  /// Build from block labels: labels[i] is the block id of element i+1.
  /// Label values are arbitrary; blocks come out in canonical order.
  static SetPartition from_labels(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("SetPartition: empty label vector");
    const int n = static_cast<int>(labels.size());
    std::vector<std::vector<int>> blocks;
    std::vector<int> block_of_label;  // maps label value (by first occurrence) to block index
    std::vector<int> seen_labels;
    for (int i = 0; i < n; ++i) {
      const int lab = labels[i];
      auto it = std::find(seen_labels.begin(), seen_labels.end(), lab);
      std::size_t idx;
      if (it == seen_labels.end()) {
        seen_labels.push_back(lab);
        blocks.emplace_back();
        idx = blocks.size() - 1;
      } else {
        idx = static_cast<std::size_t>(it - seen_labels.begin());
      }
      blocks[idx].push_back(i + 1);
    }
    return from_blocks(n, std::move(blocks));
  }

  static SetPartition singletons(int n) {
    std::vector<std::vector<int>> blocks;
    blocks.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) blocks.push_back({i});
    return from_blocks(n, std::move(blocks));
  }

  static SetPartition single_block(int n) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i + 1;
    return from_blocks(n, {all});
  }

  int ground_size() const { return n_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const std::vector<std::vector<int>>& blocks() const { return blocks_; }

  std::vector<int> block_sizes() const {
    std::vector<int> sizes;
    sizes.reserve(blocks_.size());
    for (const auto& b : blocks_) sizes.push_back(static_cast<int>(b.size()));
    return sizes;
  }

  /// Canonical labels: labels()[i] is the (0-based) index of the block
  /// containing element i+1. Because blocks are ordered by least element,
  /// this is a restricted-growth string.
  std::vector<int> labels() const {
    std::vector<int> lab(static_cast<std::size_t>(n_), 0);
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      for (int e : blocks_[b]) lab[static_cast<std::size_t>(e - 1)] = static_cast<int>(b);
    return lab;
  }

  int block_of(int element) const {
    if (element < 1 || element > n_) throw std::invalid_argument("block_of: element out of range");
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      if (std::binary_search(blocks_[b].begin(), blocks_[b].end(), element))
        return static_cast<int>(b);
    throw std::logic_error("block_of: canonical invariant violated");
  }

  /// Restriction to {1, ..., m}: intersect blocks, drop empties, recanonicalize.
  SetPartition restrict_to(int m) const {
    if (m < 1 || m > n_) throw std::invalid_argument("restrict_to: m out of range");
    std::vector<std::vector<int>> blocks;
    for (const auto& b : blocks_) {
      std::vector<int> nb;
      for (int e : b)
        if (e <= m) nb.push_back(e);
      if (!nb.empty()) blocks.push_back(std::move(nb));
    }
    return from_blocks(m, std::move(blocks));
  }

  bool operator==(const SetPartition& other) const {
    return n_ == other.n_ && blocks_ == other.blocks_;
  }
  bool operator!=(const SetPartition& other) const { return !(*this == other); }
  bool operator<(const SetPartition& other) const {
    if (n_ != other.n_) return n_ < other.n_;
    return labels() < other.labels();
  }

 private:
  SetPartition() = default;

  void canonicalize_and_validate() {
    if (n_ < 1) throw std::invalid_argument("SetPartition: ground set must be nonempty");
    for (auto& b : blocks_) {
      if (b.empty()) throw std::invalid_argument("SetPartition: empty block");
      std::sort(b.begin(), b.end());
    }
    std::sort(blocks_.begin(), blocks_.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    std::vector<bool> seen(static_cast<std::size_t>(n_), false);
    std::size_t count = 0;
    for (const auto& b : blocks_)
      for (int e : b) {
        if (e < 1 || e > n_) throw std::invalid_argument("SetPartition: element out of range");
        if (seen[static_cast<std::size_t>(e - 1)])
          throw std::invalid_argument("SetPartition: blocks not disjoint");
        seen[static_cast<std::size_t>(e - 1)] = true;
        ++count;
      }
    if (count != static_cast<std::size_t>(n_))
      throw std::invalid_argument("SetPartition: blocks do not cover the ground set");
  }

  int n_ = 0;
  std::vector<std::vector<int>> blocks_;
};

namespace detail {

inline void validate_sizes(std::span<const int> sizes) {
  if (sizes.empty()) throw std::invalid_argument("eppf: empty size vector");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("eppf: block sizes must be positive");
}

}  // namespace detail

/// Exchangeable partition probability function of the one-parameter sticky
/// family, evaluated by the one-step seating recursion from the base case
/// p(1) = 1: appending a new singleton to a configuration of total size m
/// multiplies by (1-tau) / ((1-tau) + m*tau), growing a block of size s
/// multiplies by s*tau / ((1-tau) + m*tau). The value is a symmetric
/// function of the sizes (a tested property, not an assumption here).
inline double eppf(std::span<const int> sizes, StickyParam p) {
  detail::validate_sizes(sizes);
  const double tau = p.tau;
  if (tau == 0.0) {
    for (int s : sizes)
      if (s != 1) return 0.0;
    return 1.0;
  }
  if (tau == 1.0) return sizes.size() == 1 ? 1.0 : 0.0;

  double value = 1.0;
  int m = 1;  // elements placed so far; the first one opens the first block
  bool first_block = true;
  for (int size : sizes) {
    if (!first_block) {
      value *= (1.0 - tau) / ((1.0 - tau) + static_cast<double>(m) * tau);
      ++m;
    }
    first_block = false;
    for (int s = 1; s < size; ++s) {
      value *= (static_cast<double>(s) * tau) / ((1.0 - tau) + static_cast<double>(m) * tau);
      ++m;
    }
  }
  return value;
}

inline double eppf(const SetPartition& pi, StickyParam p) {
  const auto sizes = pi.block_sizes();
  return eppf(std::span<const int>(sizes.data(), sizes.size()), p);
}

/// Independent oracle for eppf: the Dirichlet-process product formula
/// theta^k * prod_j (n_j - 1)! / (theta (theta+1) ... (theta+n-1)),
/// evaluated in the log domain. tau in {0, 1} handled as limits.
inline double eppf_closed_form(std::span<const int> sizes, StickyParam p) {
  detail::validate_sizes(sizes);
  const double tau = p.tau;
  if (tau == 0.0) {
    for (int s : sizes)
      if (s != 1) return 0.0;
    return 1.0;
  }
  if (tau == 1.0) return sizes.size() == 1 ? 1.0 : 0.0;

  const double theta = p.theta();
  int n = 0;
  double log_p = 0.0;
  for (int s : sizes) {
    n += s;
    log_p += std::log(theta) + std::lgamma(static_cast<double>(s));
  }
  for (int i = 0; i < n; ++i) log_p -= std::log(theta + static_cast<double>(i));
  return std::exp(log_p);
}

inline double eppf_closed_form(const SetPartition& pi, StickyParam p) {
  const auto sizes = pi.block_sizes();
  return eppf_closed_form(std::span<const int>(sizes.data(), sizes.size()), p);
}

/// All partitions of {1, ..., n} in restricted-growth-string lexicographic
/// order; size is the Bell number B(n). The guard bounds memory
/// (B(10) = 115975 partitions by default).
inline std::vector<SetPartition> enumerate_partitions(int n, int n_max = 10) {
  if (n < 1 || n > n_max)
    throw std::invalid_argument("enumerate_partitions: n out of range [1, " +
                                std::to_string(n_max) + "]");
  std::vector<SetPartition> out;
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  auto rec = [&](auto&& self, int pos, int next_label) -> void {
    if (pos == n) {
      out.push_back(SetPartition::from_labels(labels));
      return;
    }
    for (int b = 0; b <= next_label; ++b) {
      labels[static_cast<std::size_t>(pos)] = b;
      self(self, pos + 1, std::max(next_label, b + 1));
    }
  };
  rec(rec, 1, 1);
  return out;
}

/// Sequential (Chinese-restaurant) sampler induced by the seating kernel:
/// element m+1 opens a new block with probability (1-tau)/((1-tau)+m*tau)
/// and joins an existing block B with probability |B|*tau/((1-tau)+m*tau).
/// The law of the result has EPPF eppf(). tau = 0 and tau = 1 are exact
/// combinatorial limits, no theta arithmetic involved.
inline SetPartition sample_crp(int n, StickyParam p, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_crp: n must be >= 1");
  if (p.is_independent()) return SetPartition::singletons(n);
  if (p.is_coalescent()) return SetPartition::single_block(n);

  const double tau = p.tau;
  std::vector<std::vector<int>> blocks{{1}};
  for (int m = 1; m < n; ++m) {
    const double total = (1.0 - tau) + static_cast<double>(m) * tau;
    const double u = rng.uniform01() * total;
    if (u < 1.0 - tau) {
      blocks.push_back({m + 1});
      continue;
    }
    double acc = 1.0 - tau;
    std::size_t chosen = blocks.size() - 1;  // rounding fallback: last block
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      acc += static_cast<double>(blocks[b].size()) * tau;
      if (u < acc) {
        chosen = b;
        break;
      }
    }
    blocks[chosen].push_back(m + 1);
  }
  return SetPartition::from_blocks(n, std::move(blocks));
}

}  // namespace stickyflow
