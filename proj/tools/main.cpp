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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stickyflow/stickyflow.hpp"

namespace {

using stickyflow::io::json;

struct RunConfig {
  double tau = 0.5;
  std::string symbol = "brownian";
  double sigma = 1.0;
  double alpha = 1.5;
  double c = 1.0;
  int n = 2;
  int L = 16;
  std::vector<double> t_list;
  std::vector<double> alpha_res{0.5, 2.0};
  double t = 0.2;
  int samples = 100000;
  std::uint64_t seed = 1;
  std::string out;
  std::string format;
  double tol_algebraic = 1e-10;
  double tol_iterative = 1e-8;
  double trunc_eps = 1e-8;
  std::string nu0 = "delta";

  stickyflow::LevySymbol make_symbol() const {
    if (symbol == "brownian") return stickyflow::LevySymbol::brownian(sigma);
    if (symbol == "stable") return stickyflow::LevySymbol::stable(alpha, c);
    throw std::invalid_argument("unknown symbol kind '" + symbol + "' (brownian|stable)");
  }

  json to_json(const std::string& command) const {
    json j{{"command", command}, {"tau", tau},       {"symbol", symbol},
           {"sigma", sigma},     {"alpha", alpha},   {"c", c},
           {"n", n},             {"grid", L},        {"samples", samples},
           {"seed", seed},       {"trunc_eps", trunc_eps},
           {"tol_algebraic", tol_algebraic},         {"tol_iterative", tol_iterative}};
    if (!t_list.empty()) j["t_list"] = t_list;
    j["t"] = t;
    j["alpha_res"] = alpha_res;
    if (!nu0.empty()) j["nu0"] = nu0;
    return j;
  }
};

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--tau", cfg.tau, "stickiness parameter in [0,1]");
  cmd->add_option("--symbol", cfg.symbol, "single-particle exponent kind: brownian|stable");
  cmd->add_option("--sigma", cfg.sigma, "brownian diffusivity (sigma > 0)");
  cmd->add_option("--alpha", cfg.alpha, "stable index in (1,2]");
  cmd->add_option("--c", cfg.c, "stable scale (c > 0)");
  cmd->add_option("--n", cfg.n, "number of points / level");
  cmd->add_option("--grid", cfg.L, "circle lattice size L (even, >= 4)");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--out", cfg.out, "output file path");
  cmd->add_option("--format", cfg.format, "output format override");
}

int cmd_eppf(const RunConfig& cfg) {
  const stickyflow::StickyParam p(cfg.tau);
  const json config = cfg.to_json("eppf");
  const std::string format = cfg.format.empty() ? "csv" : cfg.format;

  std::string content;
  if (format == "csv") {
    content = stickyflow::io::eppf_table_csv(cfg.n, p, config);
  } else if (format == "json") {
    const auto partitions = stickyflow::enumerate_partitions(cfg.n);
    double total = 0.0;
    json rows = json::array();
    for (const auto& pi : partitions) {
      const double prob = stickyflow::eppf(pi, p);
      total += prob;
      rows.push_back(json{{"partition", stickyflow::io::to_json(pi)},
                          {"sizes", stickyflow::io::sizes_label(pi.block_sizes())},
                          {"probability", prob}});
    }
    content = json{{"config", config}, {"normalization_sum", total}, {"rows", rows}}.dump(2);
    content += "\n";
  } else {
    throw std::invalid_argument("eppf: format must be csv or json");
  }

  if (cfg.out.empty()) {
    std::cout << content;
  } else {
    stickyflow::io::atomic_write(cfg.out, content);
    std::cout << "wrote " << cfg.out << " (" << stickyflow::enumerate_partitions(cfg.n).size()
              << " partitions)\n";
  }
  return 0;
}

int cmd_spectrum(const RunConfig& cfg) {
  const auto symbol = cfg.make_symbol();
  const stickyflow::GridGenerator gen(symbol, cfg.L);
  const auto content = stickyflow::io::eigenvalue_table_csv(gen, cfg.to_json("spectrum"));
  if (cfg.out.empty()) {
    std::cout << content;
  } else {
    stickyflow::io::atomic_write(cfg.out, content);
    std::cout << "wrote " << cfg.out << " (modes 0.." << cfg.L / 2;
    if (gen.clipped_mass() > 0.0) std::cout << ", clipped rate mass " << gen.clipped_mass();
    std::cout << ")\n";
  }
  return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& what) {
  const stickyflow::StickyParam p(cfg.tau);
  stickyflow::Rng rng(cfg.seed);
  std::ostringstream os;
  os << json{{"config", cfg.to_json("sample/" + what)}}.dump() << "\n";
  for (int s = 0; s < cfg.samples; ++s) {
    if (what == "crp") {
      os << json{{"blocks", stickyflow::io::to_json(stickyflow::sample_crp(cfg.n, p, rng))}}.dump();
    } else if (what == "urn") {
      os << json{{"x", stickyflow::sample_mn_urn(cfg.n, p, rng)}}.dump();
    } else if (what == "paintbox") {
      os << stickyflow::io::to_json(stickyflow::sample_mu(p, cfg.trunc_eps, rng)).dump();
    } else {
      throw std::invalid_argument("sample: --what must be crp|paintbox|urn");
    }
    os << "\n";
  }
  if (cfg.out.empty()) {
    std::cout << os.str();
  } else {
    stickyflow::io::atomic_write(cfg.out, os.str());
    std::cout << "wrote " << cfg.out << " (" << cfg.samples << " samples)\n";
  }
  return 0;
}

int cmd_semigroup(const RunConfig& cfg, const std::string& input, bool n_given, bool L_given) {
  const auto [header, data] = stickyflow::io::read_array(input);
  if ((n_given && header.n != cfg.n) || (L_given && header.L != cfg.L))
    throw std::invalid_argument("semigroup: input file is (n=" + std::to_string(header.n) +
                                ", L=" + std::to_string(header.L) +
                                "), which conflicts with the flags");
  const stickyflow::StickyParam p(cfg.tau);
  const auto symbol = cfg.make_symbol();
  stickyflow::GridGenerator gen(symbol, header.L);
  stickyflow::FormOperator op(header.n, p, gen);
  const auto evolved = op.apply_semigroup(data, cfg.t, cfg.tol_iterative / 100.0);

  const json config = cfg.to_json("semigroup");
  if (cfg.format == "csv") {
    stickyflow::io::atomic_write(
        cfg.out, stickyflow::io::grid_slice_csv(evolved, header.n, header.L, config));
  } else {
    stickyflow::io::ArrayHeader out_header;
    out_header.n = header.n;
    out_header.L = header.L;
    out_header.tau = cfg.tau;
    out_header.symbol = symbol.describe();
    out_header.extra = json{{"config", config}};
    stickyflow::io::write_array(cfg.out, out_header, evolved);
  }
  std::cout << "wrote " << cfg.out << " (n=" << header.n << ", L=" << header.L
            << ", t=" << cfg.t << ")\n";
  return 0;
}

stickyflow::CheckReport relaxation_report(const RunConfig& cfg) {
  const stickyflow::StickyParam p(cfg.tau);
  const auto symbol = cfg.make_symbol();
  const int n = std::min(cfg.n, 2);

  std::vector<double> nu0(static_cast<std::size_t>(cfg.L), 0.0);
  if (cfg.nu0 == "uniform")
    std::fill(nu0.begin(), nu0.end(), 1.0 / static_cast<double>(cfg.L));
  else if (cfg.nu0 == "delta")
    nu0[0] = 1.0;
  else
    throw std::invalid_argument("relaxation: --nu0 must be uniform|delta");

  // probe the gap, then lay a grid across the decay window up to t* = 50/|lambda2|
  stickyflow::GridGenerator gen(symbol, cfg.L);
  stickyflow::FormOperator op(n, p, gen);
  const double lambda2 = stickyflow::estimate_lambda2(op);
  const double t_star = 50.0 / std::abs(lambda2);
  std::vector<double> t_grid = cfg.t_list;
  if (t_grid.empty())
    for (int j = 2; j <= 26; j += 2) t_grid.push_back(static_cast<double>(j) / std::abs(lambda2));
  t_grid.push_back(t_star);

  const auto curve = stickyflow::relaxation_curve(n, p, symbol, cfg.L, nu0, t_grid, 1e-11);

  stickyflow::CheckReport report;
  report.name = "relaxation";
  report.tolerance = 1.0;
  report.meta = {n, cfg.L, cfg.tau, symbol.describe(), cfg.seed, curve.meta.runtime_sec};
  const double tv_star = curve.points.back().tv_distance;
  report.residuals.emplace_back("tv_at_tstar_over_1e-6", tv_star / 1e-6);
  if (cfg.nu0 == "uniform" && n == 1) {
    // stationary start: the whole curve must vanish; no rate to fit
    report.residuals.emplace_back("max_tv_over_1e-12",
                                  [&] {
                                    double m = 0.0;
                                    for (const auto& pt : curve.points)
                                      m = std::max(m, pt.tv_distance);
                                    return m / 1e-12;
                                  }());
  } else if (curve.fit_ok) {
    const double gap =
        std::abs(curve.fitted_rate - std::abs(curve.lambda2)) / std::abs(curve.lambda2);
    report.residuals.emplace_back("rate_rel_gap_over_5pct", gap / 0.05);
    report.info.emplace_back("fitted_rate", curve.fitted_rate);
  }
  report.info.emplace_back("lambda2", curve.lambda2);
  report.info.emplace_back("tv_at_tstar", tv_star);
  report.finalize();

  if (!cfg.out.empty()) {
    const auto csv_path = cfg.out + ".curve.csv";
    stickyflow::io::atomic_write(
        csv_path, stickyflow::io::relaxation_csv(curve, cfg.to_json("verify/relaxation")));
    std::cout << "wrote " << csv_path << "\n";
  }
  return report;
}

int cmd_verify(const RunConfig& cfg, const std::string& suite) {
  const stickyflow::StickyParam p(cfg.tau);
  std::vector<stickyflow::CheckReport> reports;

  const bool all = suite == "all";
  const std::vector<double> ts = cfg.t_list.empty() ? std::vector<double>{0.05, 0.2, 1.0}
                                                    : cfg.t_list;

  if (all || suite == "identities") {
    const auto symbol = cfg.make_symbol();
    for (int level = 1; level <= std::min(cfg.n, 2); ++level)
      reports.push_back(stickyflow::check_form_identities(level, p, symbol, cfg.L, cfg.seed,
                                                          cfg.tol_algebraic));
  }
  if (all || suite == "intertwining") {
    const auto symbol = cfg.make_symbol();
    for (int level = 1; level <= std::min(cfg.n, 2); ++level)
      reports.push_back(stickyflow::check_intertwining(level, p, symbol, cfg.L, ts, cfg.alpha_res,
                                                       cfg.seed, cfg.tol_iterative));
  }
  if (all || suite == "relaxation") reports.push_back(relaxation_report(cfg));
  if (all || suite == "moments") {
    auto result = stickyflow::mc_moment_suite(3, p, cfg.samples, cfg.seed, {}, cfg.trunc_eps);
    for (auto& r : result.reports) reports.push_back(std::move(r));
    stickyflow::CheckReport summary;
    summary.name = "moments_summary";
    summary.tolerance = 0.05;
    summary.meta = {3, 0, cfg.tau, "", cfg.seed, 0.0};
    summary.residuals.emplace_back("fraction_exceeding_3se", 1.0 - result.fraction_within_3se);
    summary.finalize();
    reports.push_back(std::move(summary));
    if (!cfg.out.empty()) {
      const auto csv_path = cfg.out + ".moments.csv";
      stickyflow::io::atomic_write(
          csv_path, stickyflow::io::moment_suite_csv(result, cfg.to_json("verify/moments")));
      std::cout << "wrote " << csv_path << "\n";
    }
  }
  if (all || suite == "atomicity")
    reports.push_back(stickyflow::atomicity_suite(p, cfg.samples, cfg.seed, cfg.trunc_eps));

  if (reports.empty())
    throw std::invalid_argument(
        "verify: --suite must be identities|intertwining|relaxation|moments|atomicity|all");

  bool all_passed = true;
  for (const auto& r : reports) {
    std::cout << stickyflow::io::report_to_text(r);
    all_passed = all_passed && r.passed;
  }

  if (!cfg.out.empty()) {
    json out = json::array();
    for (const auto& r : reports) out.push_back(stickyflow::io::to_json(r));
    const json doc{{"config", cfg.to_json("verify/" + suite)}, {"reports", out}};
    if (cfg.format == "text") {
      std::string text;
      for (auto it = doc["config"].begin(); it != doc["config"].end(); ++it)
        text += "# " + it.key() + "=" + it.value().dump() + "\n";
      for (const auto& r : reports) text += stickyflow::io::report_to_text(r);
      stickyflow::io::atomic_write(cfg.out, text);
    } else {
      stickyflow::io::atomic_write(cfg.out, doc.dump(2) + "\n");
    }
    std::cout << "wrote " << cfg.out << "\n";
  }

  if (!all_passed) {
    for (const auto& r : reports)
      if (!r.passed)
        for (const auto& [name, value] : r.residuals)
          if (!(value <= r.tolerance)) {
            std::cerr << "FAILED: " << r.name << ": " << name << "="
                      << stickyflow::io::format_double(value) << " exceeds tolerance "
                      << stickyflow::io::format_double(r.tolerance) << "\n";
            return 1;
          }
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sticky-flow numerics on the circle: samplers, grid forms, verification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI config file (flags win)");

  RunConfig cfg;

  auto* eppf_cmd = app.add_subcommand("eppf", "tabulate the partition distribution on [n]");
  add_model_options(eppf_cmd, cfg);

  auto* spectrum_cmd =
      app.add_subcommand("spectrum", "tabulate generator eigenvalues against the exponent");
  add_model_options(spectrum_cmd, cfg);

  auto* sample_cmd = app.add_subcommand("sample", "draw partitions, urn points, or paintbox measures");
  add_model_options(sample_cmd, cfg);
  std::string what = "crp";
  sample_cmd->add_option("--what", what, "crp|paintbox|urn");
  sample_cmd->add_option("--samples", cfg.samples, "number of samples")->default_val(100);
  sample_cmd->add_option("--trunc-eps", cfg.trunc_eps, "stick-breaking truncation threshold");

  auto* semi_cmd = app.add_subcommand("semigroup", "apply the n-point semigroup to a function file");
  add_model_options(semi_cmd, cfg);
  std::string input;
  semi_cmd->add_option("--in", input, "input array file")->required();
  semi_cmd->add_option("--t", cfg.t, "time");
  semi_cmd->add_option("--tol-iterative", cfg.tol_iterative, "iterative tolerance");

  auto* verify_cmd = app.add_subcommand("verify", "run verification suites; exit 0 iff all pass");
  add_model_options(verify_cmd, cfg);
  std::string suite = "all";
  verify_cmd->add_option("--suite", suite,
                         "identities|intertwining|relaxation|moments|atomicity|all");
  verify_cmd->add_option("--samples", cfg.samples, "Monte Carlo sample count");
  verify_cmd->add_option("--t", cfg.t_list, "semigroup times / relaxation grid");
  verify_cmd->add_option("--alpha-res", cfg.alpha_res, "resolvent alphas");
  verify_cmd->add_option("--tol-algebraic", cfg.tol_algebraic, "algebraic identity tolerance");
  verify_cmd->add_option("--tol-iterative", cfg.tol_iterative, "semigroup/resolvent tolerance");
  verify_cmd->add_option("--trunc-eps", cfg.trunc_eps, "stick-breaking truncation threshold");
  verify_cmd->add_option("--nu0", cfg.nu0, "relaxation start: uniform|delta");

  CLI11_PARSE(app, argc, argv);

  try {
    if (eppf_cmd->parsed()) return cmd_eppf(cfg);
    if (spectrum_cmd->parsed()) return cmd_spectrum(cfg);
    if (sample_cmd->parsed()) {
      if (sample_cmd->count("--out") == 0 && cfg.samples > 1000)
        throw std::invalid_argument("sample: use --out for more than 1000 samples");
      return cmd_sample(cfg, what);
    }
    if (semi_cmd->parsed()) {
      if (cfg.out.empty()) throw std::invalid_argument("semigroup: --out is required");
      return cmd_semigroup(cfg, input, semi_cmd->count("--n") > 0, semi_cmd->count("--grid") > 0);
    }
    if (verify_cmd->parsed()) return cmd_verify(cfg, suite);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
