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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stickyflow/paintbox.hpp"
#include "stickyflow/partition.hpp"
#include "stickyflow/spectral.hpp"
#include "stickyflow/verify.hpp"

namespace stickyflow::io {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary array format assumes a little-endian host");

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Write-temp-then-rename, so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("atomic_write: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json to_json(const SetPartition& pi) {
  json blocks = json::array();
  for (const auto& b : pi.blocks()) blocks.push_back(b);
  return blocks;
}

inline json to_json(const AtomicMeasure& m) {
  return json{{"weights", m.weights.weights},
              {"atoms", m.atoms},
              {"residual", m.weights.residual}};
}

inline json to_json(const CheckReport& r, bool include_runtime = true) {
  json residuals = json::object();
  for (const auto& [k, v] : r.residuals) residuals[k] = v;
  json info = json::object();
  for (const auto& [k, v] : r.info) info[k] = v;
  json meta{{"n", r.meta.n},
            {"L", r.meta.L},
            {"tau", r.meta.tau},
            {"symbol", r.meta.symbol},
            {"seed", r.meta.seed}};
  if (include_runtime) meta["runtime_sec"] = r.meta.runtime_sec;
  return json{{"name", r.name},
              {"tolerance", r.tolerance},
              {"passed", r.passed},
              {"residuals", residuals},
              {"info", info},
              {"meta", meta}};
}

/// Aligned human-readable rendering of a report.
inline std::string report_to_text(const CheckReport& r) {
  std::ostringstream os;
  os << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "  (tol " << r.tolerance
     << ", n=" << r.meta.n << " L=" << r.meta.L << " tau=" << r.meta.tau;
  if (!r.meta.symbol.empty()) os << " " << r.meta.symbol;
  os << " seed=" << r.meta.seed << ")\n";
  std::size_t width = 0;
  for (const auto& [k, v] : r.residuals) width = std::max(width, k.size());
  for (const auto& [k, v] : r.info) width = std::max(width, k.size());
  for (const auto& [k, v] : r.residuals)
    os << "    " << std::left << std::setw(static_cast<int>(width)) << k << "  "
       << format_double(v) << (v <= r.tolerance ? "" : "  <-- exceeds tolerance") << "\n";
  for (const auto& [k, v] : r.info)
    os << "    " << std::left << std::setw(static_cast<int>(width)) << k << "  "
       << format_double(v) << "  (info)\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Binary grid arrays: 8-byte magic, u64 little-endian header length, JSON
// header {n, L, tau, symbol, count, ...}, then count doubles little-endian,
// row-major over coordinates (last coordinate fastest).
// ---------------------------------------------------------------------------

inline constexpr char kArrayMagic[8] = {'S', 'T', 'K', 'Y', 'A', 'R', 'R', '1'};

struct ArrayHeader {
  int n = 0;
  int L = 0;
  double tau = 0.0;
  std::string symbol;
  json extra = json::object();
};

inline void write_array(const std::filesystem::path& path, const ArrayHeader& header,
                        std::span<const double> data) {
  json h = header.extra;
  h["n"] = header.n;
  h["L"] = header.L;
  h["tau"] = header.tau;
  h["symbol"] = header.symbol;
  h["count"] = data.size();
  const std::string header_str = h.dump();

  std::string blob;
  blob.reserve(16 + header_str.size() + data.size() * sizeof(double));
  blob.append(kArrayMagic, sizeof(kArrayMagic));
  const std::uint64_t hlen = header_str.size();
  blob.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  blob.append(header_str);
  blob.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  atomic_write(path, blob);
}

inline std::pair<ArrayHeader, std::vector<double>> read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_array: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kArrayMagic, 8))
    throw std::runtime_error("read_array: bad magic in " + path.string());
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (std::uint64_t{1} << 24))
    throw std::runtime_error("read_array: corrupt header length");
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  const json h = json::parse(header_str);

  ArrayHeader header;
  header.n = h.at("n").get<int>();
  header.L = h.at("L").get<int>();
  header.tau = h.at("tau").get<double>();
  header.symbol = h.value("symbol", "");
  header.extra = h;
  const std::size_t count = h.at("count").get<std::size_t>();
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("read_array: truncated payload in " + path.string());
  return {std::move(header), std::move(data)};
}

// ---------------------------------------------------------------------------
// CSV emission. Every file starts with `# key=value` preamble lines carrying
// the run configuration, then a fixed documented header row.
// ---------------------------------------------------------------------------

class CsvBuilder {
 public:
  void metadata(const json& config) {
    for (auto it = config.begin(); it != config.end(); ++it) {
      os_ << "# " << it.key() << "=";
      if (it.value().is_string())
        os_ << it.value().get<std::string>();
      else
        os_ << it.value().dump();
      os_ << "\n";
    }
  }

  void comment(const std::string& text) { os_ << "# " << text << "\n"; }

  void header(const std::vector<std::string>& cols) { row_of_strings(cols); }

  void row_of_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ",";
      os_ << quote(cells[i]);
    }
    os_ << "\n";
  }

  std::string str() const { return os_.str(); }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return q;
  }

  std::ostringstream os_;
};

inline std::string sizes_label(const std::vector<int>& sizes) {
  std::ostringstream os;
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? "+" : "") << sizes[i];
  return os.str();
}

/// EPPF table over all partitions of [n]: columns partition,sizes,probability,
/// with the normalization sum recorded in the preamble.
inline std::string eppf_table_csv(int n, StickyParam p, const json& config) {
  const auto partitions = enumerate_partitions(n);
  double total = 0.0;
  for (const auto& pi : partitions) total += eppf(pi, p);

  CsvBuilder csv;
  csv.metadata(config);
  csv.comment("normalization_sum=" + format_double(total));
  csv.header({"partition", "sizes", "probability"});
  for (const auto& pi : partitions)
    csv.row_of_strings({to_json(pi).dump(), sizes_label(pi.block_sizes()),
                        format_double(eppf(pi, p))});
  return csv.str();
}

/// Generator spectrum against the continuum exponent: k,lambda_k,psi_k,rel_err.
inline std::string eigenvalue_table_csv(const GridGenerator& gen, const json& config) {
  CsvBuilder csv;
  csv.metadata(config);
  csv.header({"k", "lambda_k", "psi_k", "rel_err"});
  for (int k = 0; k <= gen.size() / 2; ++k) {
    const double lam = gen.eigenvalues()[static_cast<std::size_t>(k)];
    const double psi = gen.psi_reference(k);
    const double rel = k == 0 ? 0.0 : std::abs(-lam - psi) / psi;
    csv.row_of_strings({std::to_string(k), format_double(lam), format_double(psi),
                        format_double(rel)});
  }
  return csv.str();
}

/// Monte Carlo moment report: statistic,estimate,std_error,oracle,z_score,
/// one row per (query, sampling route).
inline std::string moment_suite_csv(const MomentSuiteResult& result, const json& config) {
  CsvBuilder csv;
  csv.metadata(config);
  csv.comment("fraction_within_3se=" + format_double(result.fraction_within_3se));
  csv.header({"statistic", "estimate", "std_error", "oracle", "z_score"});
  for (const auto& row : result.rows) {
    csv.row_of_strings({"urn/" + row.query.label(), format_double(row.urn_estimate),
                        format_double(row.urn_std_error), format_double(row.oracle),
                        format_double(row.urn_z)});
    if (row.has_paintbox)
      csv.row_of_strings({"paintbox/" + row.query.label(), format_double(row.paintbox_estimate),
                          format_double(row.paintbox_std_error), format_double(row.oracle),
                          format_double(row.paintbox_z)});
  }
  return csv.str();
}

/// Relaxation curve: t,distance,fitted_rate,lambda2.
inline std::string relaxation_csv(const RelaxationCurve& curve, const json& config) {
  CsvBuilder csv;
  csv.metadata(config);
  csv.header({"t", "distance", "fitted_rate", "lambda2"});
  for (const auto& pt : curve.points)
    csv.row_of_strings({format_double(pt.t), format_double(pt.tv_distance),
                        format_double(curve.fitted_rate), format_double(curve.lambda2)});
  return csv.str();
}

/// 1-d / 2-d slice export of a grid array: coordinates then value.
inline std::string grid_slice_csv(std::span<const double> data, int n, int L, const json& config) {
  if (n != 1 && n != 2) throw std::invalid_argument("grid_slice_csv: only 1-d and 2-d arrays");
  CsvBuilder csv;
  csv.metadata(config);
  if (n == 1) {
    csv.header({"x", "value"});
    for (int x = 0; x < L; ++x)
      csv.row_of_strings({std::to_string(x), format_double(data[static_cast<std::size_t>(x)])});
  } else {
    csv.header({"x1", "x2", "value"});
    for (int x1 = 0; x1 < L; ++x1)
      for (int x2 = 0; x2 < L; ++x2)
        csv.row_of_strings({std::to_string(x1), std::to_string(x2),
                            format_double(data[static_cast<std::size_t>(x1 * L + x2)])});
  }
  return csv.str();
}

}  // namespace stickyflow::io
