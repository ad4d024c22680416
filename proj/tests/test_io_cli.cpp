#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stickyflow/io.hpp"

using namespace stickyflow;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "stickyflow_test_io";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

const char* cli_path() { return std::getenv("STICKYFLOW_BIN"); }

CliResult run_cli(const std::string& args) {
  const fs::path out = test_dir() / "cli_stdout.txt";
  const fs::path err = test_dir() / "cli_stderr.txt";
  const std::string cmd = std::string(cli_path()) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// data rows of a CSV file: skips '#' preamble and the header row
std::vector<std::string> csv_rows(const std::string& content) {
  std::vector<std::string> rows;
  std::istringstream is(content);
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    rows.push_back(line);
  }
  return rows;
}

}  // namespace

TEST_CASE("partition and measure JSON forms") {
  const auto pi = SetPartition::from_blocks(3, {{1, 3}, {2}});
  CHECK(io::to_json(pi).dump() == "[[1,3],[2]]");

  AtomicMeasure m;
  m.weights.weights = {0.75, 0.25};
  m.weights.residual = 0.0;
  m.atoms = {0.5, 0.125};
  const auto j = io::to_json(m);
  CHECK(j["weights"].size() == 2);
  CHECK(j["atoms"][1] == 0.125);
  CHECK(j["residual"] == 0.0);
}

TEST_CASE("binary array round trip is bit exact") {
  io::ArrayHeader h;
  h.n = 2;
  h.L = 8;
  h.tau = 0.5;
  h.symbol = "brownian(sigma=1)";
  std::vector<double> data(64);
  Rng rng(1);
  for (auto& x : data) x = rng.uniform01();

  const auto path = test_dir() / "array.bin";
  io::write_array(path, h, data);
  const auto [h2, data2] = io::read_array(path);
  CHECK(h2.n == 2);
  CHECK(h2.L == 8);
  CHECK(h2.tau == 0.5);
  CHECK(h2.symbol == "brownian(sigma=1)");
  CHECK(data2 == data);

  CHECK_THROWS(io::read_array(test_dir() / "missing.bin"));
}

TEST_CASE("CSV builders carry metadata and quote reserved characters") {
  io::CsvBuilder csv;
  csv.metadata(io::json{{"tau", 0.5}, {"note", "a,b"}});
  csv.header({"x", "label"});
  csv.row_of_strings({"1", "with,comma"});
  const auto s = csv.str();
  CHECK(s.find("# tau=0.5\n") != std::string::npos);
  CHECK(s.find("\"with,comma\"") != std::string::npos);

  const auto table = io::eppf_table_csv(3, StickyParam(0.5), io::json{{"seed", 1}});
  CHECK(csv_rows(table).size() == 5);
  const auto pos = table.find("normalization_sum=");
  REQUIRE(pos != std::string::npos);
  const double norm = std::stod(table.substr(pos + std::string("normalization_sum=").size()));
  CHECK(std::abs(norm - 1.0) < 1e-12);

  const GridGenerator gen(LevySymbol::brownian(1.0), 16);
  const auto eigen = io::eigenvalue_table_csv(gen, io::json::object());
  CHECK(csv_rows(eigen).size() == 9);  // k = 0..8
}

TEST_CASE("moment and relaxation CSV emitters") {
  const auto suite = mc_moment_suite(2, StickyParam(0.5), 10000, 1);
  const auto csv = io::moment_suite_csv(suite, io::json{{"seed", 1}});
  CHECK(csv.find("statistic,estimate,std_error,oracle,z_score") != std::string::npos);
  CHECK(csv_rows(csv).size() == 2 * suite.rows.size());  // urn + paintbox per query
  CHECK(csv.find("urn/n=2,k=(1,-1)") != std::string::npos);

  RelaxationCurve curve;
  curve.points = {{0.1, 0.5}, {0.2, 0.25}};
  curve.lambda2 = -3.0;
  curve.fitted_rate = 2.9;
  const auto rcsv = io::relaxation_csv(curve, io::json::object());
  CHECK(rcsv.find("t,distance,fitted_rate,lambda2") != std::string::npos);
  CHECK(csv_rows(rcsv).size() == 2);
}

TEST_CASE("grid slice CSV") {
  std::vector<double> data{1.0, 2.0, 3.0, 4.0};
  const auto csv = io::grid_slice_csv(data, 2, 2, io::json::object());
  const auto rows = csv_rows(csv);
  REQUIRE(rows.size() == 4);
  CHECK(rows[3] == "1,1,4");
  CHECK_THROWS_AS(io::grid_slice_csv(data, 3, 2, io::json::object()), std::invalid_argument);
}

TEST_CASE("cli: eppf table") {
  REQUIRE(cli_path() != nullptr);
  const auto out = (test_dir() / "eppf.csv").string();
  const auto r = run_cli("eppf --n 3 --tau 0.5 --out " + out);
  REQUIRE(r.exit_code == 0);
  const auto rows = csv_rows(read_file(out));
  REQUIRE(rows.size() == 5);
  double total = 0.0;
  for (const auto& row : rows) total += std::stod(row.substr(row.rfind(',') + 1));
  CHECK(std::abs(total - 1.0) < 1e-12);

  // independent limit: the all-singletons partition carries everything
  const auto out0 = (test_dir() / "eppf0.csv").string();
  REQUIRE(run_cli("eppf --n 3 --tau 0 --out " + out0).exit_code == 0);
  for (const auto& row : csv_rows(read_file(out0))) {
    const double p = std::stod(row.substr(row.rfind(',') + 1));
    if (row.find("1+1+1") != std::string::npos)
      CHECK(p == 1.0);
    else
      CHECK(p == 0.0);
  }

  CHECK(run_cli("eppf --n 64 --out " + out).exit_code != 0);  // enumeration guard
}

TEST_CASE("cli: spectrum table") {
  REQUIRE(cli_path() != nullptr);
  const auto out = (test_dir() / "spec.csv").string();
  const auto r = run_cli("spectrum --symbol stable --alpha 1.5 --grid 32 --out " + out);
  REQUIRE(r.exit_code == 0);
  const auto content = read_file(out);
  CHECK(content.find("k,lambda_k,psi_k,rel_err") != std::string::npos);
  CHECK(csv_rows(content).size() == 17);  // modes 0..16
  CHECK(run_cli("spectrum --symbol stable --alpha 0.5 --grid 32").exit_code != 0);
}

TEST_CASE("cli: samplers") {
  REQUIRE(cli_path() != nullptr);
  const auto out = (test_dir() / "crp.jsonl").string();
  const auto r = run_cli("sample --what crp --n 4 --tau 1 --samples 50 --seed 3 --out " + out);
  REQUIRE(r.exit_code == 0);
  std::istringstream lines(read_file(out));
  std::string line;
  std::getline(lines, line);  // config record
  CHECK(line.find("\"config\"") != std::string::npos);
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("[[1,2,3,4]]") != std::string::npos);
    ++count;
  }
  CHECK(count == 50);

  const auto bad = run_cli("sample --what paintbox --tau 0 --samples 5 --out " +
                           (test_dir() / "pb.jsonl").string());
  CHECK(bad.exit_code != 0);
  CHECK(bad.err.find("nonatomic") != std::string::npos);
}

TEST_CASE("cli: identical seeds give byte-identical outputs") {
  REQUIRE(cli_path() != nullptr);
  const auto a = (test_dir() / "urn_a.jsonl").string();
  const auto b = (test_dir() / "urn_b.jsonl").string();
  const std::string args = "sample --what urn --n 3 --tau 0.5 --samples 500 --seed 11 --out ";
  REQUIRE(run_cli(args + a).exit_code == 0);
  REQUIRE(run_cli(args + b).exit_code == 0);
  CHECK(read_file(a) == read_file(b));
}

TEST_CASE("cli: semigroup on a function file") {
  REQUIRE(cli_path() != nullptr);
  io::ArrayHeader h;
  h.n = 2;
  h.L = 8;
  h.tau = 0.5;
  h.symbol = "brownian(sigma=1)";
  const auto in_path = test_dir() / "fn.bin";

  std::vector<double> ones(64, 1.0);
  io::write_array(in_path, h, ones);
  const auto out_path = test_dir() / "fn_out.bin";
  const auto r = run_cli("semigroup --in " + in_path.string() + " --t 0.4 --tau 0.5 --out " +
                         out_path.string());
  REQUIRE(r.exit_code == 0);
  const auto [oh, odata] = io::read_array(out_path);
  CHECK(oh.n == 2);
  for (double v : odata) CHECK(v == 1.0);  // conservation

  Rng rng(5);
  std::vector<double> f(64);
  for (auto& x : f) x = rng.uniform01();
  io::write_array(in_path, h, f);
  REQUIRE(run_cli("semigroup --in " + in_path.string() + " --t 0 --tau 0.5 --out " +
                  out_path.string())
              .exit_code == 0);
  CHECK(io::read_array(out_path).second == f);  // t = 0 echoes the input

  const auto rej = run_cli("semigroup --in " + in_path.string() + " --t 0.1 --tau 1 --out " +
                           out_path.string());
  CHECK(rej.exit_code != 0);
  CHECK(rej.err.find("tau=1") != std::string::npos);

  const auto mism = run_cli("semigroup --in " + in_path.string() +
                            " --t 0.1 --tau 0.5 --n 3 --out " + out_path.string());
  CHECK(mism.exit_code != 0);
}

TEST_CASE("cli: semigroup eigenfunction decay at n=1") {
  REQUIRE(cli_path() != nullptr);
  const int L = 16;
  io::ArrayHeader h;
  h.n = 1;
  h.L = L;
  h.tau = 0.5;
  h.symbol = "brownian(sigma=1)";
  std::vector<double> cosine(static_cast<std::size_t>(L));
  for (int j = 0; j < L; ++j)
    cosine[static_cast<std::size_t>(j)] = std::cos(2.0 * std::numbers::pi * j / L);
  const auto in_path = test_dir() / "cos.bin";
  const auto out_path = test_dir() / "cos_out.bin";
  io::write_array(in_path, h, cosine);
  REQUIRE(run_cli("semigroup --in " + in_path.string() + " --t 0.2 --tau 0.5 --out " +
                  out_path.string())
              .exit_code == 0);
  const GridGenerator gen(LevySymbol::brownian(1.0), L);
  const double decay = std::exp(0.2 * gen.eigenvalues()[1]);
  const auto evolved = io::read_array(out_path).second;
  for (int j = 0; j < L; ++j)
    CHECK(std::abs(evolved[static_cast<std::size_t>(j)] -
                   decay * cosine[static_cast<std::size_t>(j)]) < 1e-8);
}

TEST_CASE("cli: relaxation from the stationary start is a zero curve") {
  REQUIRE(cli_path() != nullptr);
  const auto r = run_cli("verify --suite relaxation --n 1 --nu0 uniform --grid 8 --tau 0.5");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("[PASS] relaxation") != std::string::npos);
}

TEST_CASE("cli: suite=all honors the exit-code contract") {
  REQUIRE(cli_path() != nullptr);
  const auto out = (test_dir() / "all.json").string();
  const auto ok = run_cli("verify --suite all --grid 8 --samples 20000 --seed 5 --out " + out);
  REQUIRE(ok.exit_code == 0);
  const auto doc = io::json::parse(read_file(out));
  CHECK(doc["reports"].size() >= 5);

  const auto bad = run_cli("verify --suite all --grid 8 --samples 20000 --seed 5 "
                           "--tol-algebraic 1e-30 --tol-iterative 1e-30");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("cli: config file feeds options, flags win") {
  REQUIRE(cli_path() != nullptr);
  const auto cfg = test_dir() / "run.ini";
  {
    std::ofstream out(cfg);
    out << "[eppf]\ntau=0.25\nn=3\n";
  }
  const auto a = run_cli("--config " + cfg.string() + " eppf");
  REQUIRE(a.exit_code == 0);
  CHECK(a.out.find("# tau=0.25") != std::string::npos);
  const auto b = run_cli("--config " + cfg.string() + " eppf --tau 0.75");
  REQUIRE(b.exit_code == 0);
  CHECK(b.out.find("# tau=0.75") != std::string::npos);
}

TEST_CASE("cli: verify gates on its tolerances") {
  REQUIRE(cli_path() != nullptr);
  const auto out = (test_dir() / "report.json").string();
  const auto ok = run_cli("verify --suite identities --n 1 --grid 8 --tau 0.5 --out " + out);
  REQUIRE(ok.exit_code == 0);
  CHECK(ok.out.find("[PASS]") != std::string::npos);
  const auto doc = io::json::parse(read_file(out));
  CHECK(doc.contains("config"));
  CHECK(doc["reports"][0]["passed"] == true);

  const auto bad =
      run_cli("verify --suite identities --n 1 --grid 8 --tau 0.5 --tol-algebraic 1e-30");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("FAILED") != std::string::npos);
}
