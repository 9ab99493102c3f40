#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ddlasso/cli.hpp"
#include "ddlasso/config.hpp"
#include "ddlasso/csv.hpp"
#include "ddlasso/error.hpp"
#include "ddlasso/simgen.hpp"
#include "helpers.hpp"

#include <unistd.h>

using namespace ddlasso;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("ddlasso_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ddlasso");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

void write_matrix(const std::string& path, const MatrixXd& X, const VectorXd* Y = nullptr) {
  std::ofstream f(path);
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < X.cols(); ++c) header.push_back("x" + std::to_string(c + 1));
  if (Y) header.push_back("y");
  csv::write_row(f, header);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < X.cols(); ++c) row.push_back(csv::format_number(X(r, c)));
    if (Y) row.push_back(csv::format_number((*Y)(r)));
    csv::write_row(f, row);
  }
}

// Raw string cells keyed by row label then column name.
std::map<std::string, std::map<std::string, std::string>> read_keyed(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(h);
  }
  std::map<std::string, std::map<std::string, std::string>> out;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.push_back("");
    for (std::size_t c = 1; c < header.size() && c < fields.size(); ++c) out[fields[0]][header[c]] = fields[c];
  }
  return out;
}

double num(const std::string& s) { return std::stod(s); }

std::size_t data_lines(const std::string& text) {
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  return lines - 1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("csv reading") {
  SUBCASE("header, BOM, blank lines and signs") {
    std::istringstream in("\xEF\xBB\xBF" "a, b,c\n1,2,3\n\n-4.5,+5e-1, 6\n");
    const auto t = csv::read(in);
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.data.rows() == 2);
    CHECK(t.data(1, 0) == -4.5);
    CHECK(t.data(1, 1) == 0.5);
    CHECK(t.column("c") == 2);
    CHECK(t.column("z") == -1);
  }
  SUBCASE("quoted header fields") {
    std::istringstream in("\"a,1\",\"b\"\"q\"\n1,2\n");
    const auto t = csv::read(in);
    CHECK(t.header == std::vector<std::string>{"a,1", "b\"q"});
  }
  SUBCASE("malformed input names the line") {
    std::istringstream ragged("a,b\n1,2\n3\n");
    try {
      csv::read(ragged);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidArgument);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::istringstream text("a,b\n1,x\n");
    CHECK_THROWS_AS(csv::read(text), Error);
    std::istringstream nonfinite("a\ninf\n");
    CHECK_THROWS_AS(csv::read(nonfinite), Error);
    std::istringstream empty("");
    CHECK_THROWS_AS(csv::read(empty), Error);
    std::istringstream quote("a\n\"1\n");
    CHECK_THROWS_AS(csv::read(quote), Error);
  }
}

TEST_CASE("csv writing") {
  CHECK(csv::format_number(0.1) == "0.1");
  CHECK(csv::format_number(1.0 / 3.0) == "0.333333333333333");
  CHECK(csv::format_number(1e-20) == "1e-20");
  CHECK(csv::format_number(-0.0) == "0");
  CHECK(csv::format_number(std::nan("")) == "nan");
  CHECK(csv::format_number(-INFINITY) == "-inf");
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::ostringstream out;
  csv::write_row(out, {"x", "1,2", ""});
  CHECK(out.str() == "x,\"1,2\",\n");
  // Writing then reading is lossless at 15 digits for these values.
  std::istringstream back("v\n" + csv::format_number(12345.678901234) + "\n");
  CHECK(csv::read(back).data(0, 0) == 12345.678901234);
}

TEST_CASE("json configuration") {
  config::SimulateConfig c;
  c.master_seed = 9;
  c.reps = 7;
  c.target = 2;
  c.scenario.n = 50;
  c.scenario.p = 40;
  c.scenario.cov.kind = simgen::CovKind::Toeplitz;
  c.scenario.loadings.frac = 0.5;
  c.ddl.rho_j = 0.3;
  c.ddl.tuning = "theory:1.5:1:2";
  c.ddl.confounders = 3;
  c.sweep = {"kappa", {0.2, 0.6}};
  c.methods = {bench::Method::DDL};
  const auto json = config::simulate_to_json(c);
  const auto back = config::simulate_from_json(json);
  CHECK(config::simulate_to_json(back) == json);
  CHECK(back.scenario == c.scenario);
  CHECK(back.ddl.confounders == 3);
  CHECK(back.cells().size() == 2);
  CHECK(back.cells()[1].scenario.cov.kappa == 0.6);
  CHECK(back.cells()[0].target == 1);

  auto bad = json;
  bad["scenario"]["bogus"] = 1;
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  bad = json;
  bad["extra"] = true;
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  bad = json;
  bad["ddl"]["rho"] = 0.0;
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  bad = json;
  bad["reps"] = 2.5;
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  bad = json;
  bad["target"] = 41;
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  bad = json;
  bad["sweep"]["axis"] = "colour";
  CHECK_THROWS_AS(config::simulate_from_json(bad), Error);
  CHECK_THROWS_AS(config::fit_from_json(config::Json{{"inputs", "x"}}), Error);
}

TEST_CASE("transform and tuning strings") {
  CHECK(config::parse_transform("trim").kind == inference::TransformKind::Trim);
  CHECK(config::parse_transform("identity").kind == inference::TransformKind::Identity);
  const auto pca = config::parse_transform("pca:4");
  CHECK(pca.kind == inference::TransformKind::PcaAdjust);
  CHECK(pca.q_hat == 4);
  CHECK(config::to_string(pca) == "pca:4");
  for (const char* s : {"pca:", "pca:-1", "pca:x", "trimmed", ""}) CHECK_THROWS_AS(config::parse_transform(s), Error);

  CHECK(config::parse_tuning("cv").mode == inference::TuningMode::CrossValidation);
  const auto t = config::parse_tuning("theory:2:0.5:1.5");
  CHECK(t.mode == inference::TuningMode::Theoretical);
  CHECK(t.A == 2.0);
  CHECK(t.sigma_e == 0.5);
  CHECK(t.sigma_j == 1.5);
  for (const char* s : {"theory:1:1", "theory:a:1:1", "theory:-1:1:1", "theory:1:1:1x", "lasso"})
    CHECK_THROWS_AS(config::parse_tuning(s), Error);
}

TEST_CASE("fit reproduces least squares with a zero penalty") {
  const TempDir dir;
  const MatrixXd X = testing::gaussian(40, 2, 5);
  const VectorXd Y = X * VectorXd::Constant(2, 0.7) + testing::gaussian(40, 1, 6).col(0) + VectorXd::Constant(40, 3.0);
  write_matrix(dir / "data.csv", X, &Y);
  const auto r = run_cli({"fit", "--input", dir / "data.csv", "--response", "y", "--transform", "identity", "--tuning",
                          "theory:0:1:1", "--out-dir", dir / "out"});
  REQUIRE(r.code == 0);

  // Centred least squares, sigma^2 = RSS / n.
  const MatrixXd Xc = inference::center_columns(X);
  const VectorXd Yc = inference::center(Y);
  const MatrixXd G = Xc.transpose() * Xc;
  const VectorXd b = G.ldlt().solve(Xc.transpose() * Yc);
  const double s2 = (Yc - Xc * b).squaredNorm() / 40.0;
  const MatrixXd Ginv = G.inverse();
  const auto rows = read_keyed(dir / "out/estimates.csv");
  REQUIRE(rows.size() == 2);
  for (int j = 0; j < 2; ++j) {
    const auto& row = rows.at("x" + std::to_string(j + 1));
    CHECK(num(row.at("beta_hat")) == doctest::Approx(b(j)).epsilon(1e-9));
    CHECK(num(row.at("std_err")) == doctest::Approx(std::sqrt(s2 * Ginv(j, j))).epsilon(1e-8));
    CHECK(num(row.at("sigma_e2_hat")) == doctest::Approx(s2).epsilon(1e-9));
    CHECK(num(row.at("lambda")) == 0.0);
  }
}

TEST_CASE("fit input errors") {
  const TempDir dir;
  write_text(dir / "data.csv", "a,b,y\n1,2,3\n2,1,4\n3,5,1\n");
  CHECK(run_cli({"fit", "--input", dir / "data.csv", "--out-dir", dir / "o"}).code == 2);
  CHECK(run_cli({"fit", "--input", dir / "data.csv", "--response", "z", "--out-dir", dir / "o"}).code == 2);
  CHECK(run_cli({"fit", "--input", dir / "missing.csv", "--response", "y", "--out-dir", dir / "o"}).code == 2);
  CHECK(run_cli({"fit", "--input", dir / "data.csv", "--response", "y", "--targets", "q", "--out-dir", dir / "o"})
            .code == 2);
  CHECK(run_cli({"fit", "--input", dir / "data.csv", "--response", "y", "--rho", "2", "--out-dir", dir / "o"}).code ==
        2);
  CHECK(run_cli({"fit", "--input", dir / "data.csv", "--response", "y", "--tuning", "magic", "--out-dir", dir / "o"})
            .code == 2);
  write_text(dir / "bad.csv", "a,y\n1,2\n3\n");
  const auto r = run_cli({"fit", "--input", dir / "bad.csv", "--response", "y", "--out-dir", dir / "o"});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK(run_cli({"bogus"}).code == 2);
  CHECK(run_cli({}).code == 2);
}

TEST_CASE("fit output is reproducible and matches the stored fixture") {
  const TempDir dir;
  const std::string input = std::string(DDLASSO_TEST_DATA) + "/fit_small.csv";
  const std::vector<std::string> base{"fit", "--input", input, "--response", "y", "--seed", "3"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  REQUIRE(run_cli(with({"--out-dir", dir / "a"})).code == 0);
  REQUIRE(run_cli(with({"--out-dir", dir / "b", "--workers", "3"})).code == 0);
  const std::string a = slurp(dir / "a/estimates.csv");
  CHECK(a == slurp(dir / "b/estimates.csv"));

  // Numeric comparison, so the fixture survives last-digit platform drift.
  const auto got = read_keyed(dir / "a/estimates.csv");
  const auto want = read_keyed(std::string(DDLASSO_TEST_DATA) + "/fit_small_estimates.csv");
  REQUIRE(got.size() == want.size());
  for (const auto& [target, cols] : want) {
    for (const auto& [name, value] : cols) {
      if (name == "flags") {
        CHECK(got.at(target).at(name) == value);
      } else {
        INFO(target << " " << name);
        CHECK(num(got.at(target).at(name)) == doctest::Approx(num(value)).epsilon(1e-7));
      }
    }
  }

  // A JSON config gives the same answer; explicit flags override it.
  write_text(dir / "fit.json", config::Json{{"input", input}, {"response", "y"}, {"seed", 3}, {"out_dir", dir / "c"}}.dump());
  REQUIRE(run_cli({"fit", "--config", dir / "fit.json"}).code == 0);
  CHECK(slurp(dir / "c/estimates.csv") == a);
  REQUIRE(run_cli({"fit", "--config", dir / "fit.json", "--targets", "x2", "--out-dir", dir / "d"}).code == 0);
  const auto one = read_keyed(dir / "d/estimates.csv");
  REQUIRE(one.size() == 1);
  CHECK(one.at("x2").at("beta_hat") == got.at("x2").at("beta_hat"));
}

TEST_CASE("fit with only degenerate targets exits with code 3") {
  const TempDir dir;
  write_text(dir / "data.csv", "a,c,y\n1,5,3\n2,5,4\n3,5,1\n4,5,2\n");
  const auto r = run_cli({"fit", "--input", dir / "data.csv", "--response", "y", "--targets", "c", "--out-dir",
                          dir / "o"});
  CHECK(r.code == 3);
  CHECK(r.err.find("zero-variance") != std::string::npos);
  const auto rows = read_keyed(dir / "o/estimates.csv");
  REQUIRE(rows.count("c") == 1);
  CHECK(rows.at("c").at("beta_hat") == "nan");
  CHECK(rows.at("c").at("flags") == "zero-variance column dropped");
}

TEST_CASE("simulate") {
  const TempDir dir;
  config::SimulateConfig c;
  c.scenario.n = 40;
  c.scenario.p = 50;
  c.reps = 1;
  c.methods = {bench::Method::DDL};
  write_text(dir / "sim.json", config::simulate_to_json(c).dump());

  SUBCASE("single replication") {
    const auto r = run_cli({"simulate", "--config", dir / "sim.json", "--out-dir", dir / "a", "--seed", "4"});
    REQUIRE(r.code == 0);
    CHECK(data_lines(slurp(dir / "a/records.csv")) == 1);
    REQUIRE(run_cli({"simulate", "--config", dir / "sim.json", "--out-dir", dir / "b", "--seed", "4"}).code == 0);
    CHECK(slurp(dir / "a/records.csv") == slurp(dir / "b/records.csv"));
    CHECK(slurp(dir / "a/report.csv") == slurp(dir / "b/report.csv"));
  }
  SUBCASE("a sweep writes every cell") {
    c.sweep = {"rho_j", {0.5, 0.25, 0.0}};
    c.reps = 2;
    c.methods = {bench::Method::DDL, bench::Method::DebiasedLasso};
    write_text(dir / "sweep.json", config::simulate_to_json(c).dump());
    const auto r = run_cli({"simulate", "--config", dir / "sweep.json", "--out-dir", dir / "s", "--workers", "2"});
    REQUIRE(r.code == 0);
    const std::string report = slurp(dir / "s/report.csv");
    for (const char* v : {"rho_j,0.5,ddl,", "rho_j,0.25,ddl,", "rho_j,0,ddl,", "rho_j,0,debiased_lasso,"})
      CHECK(report.find(v) != std::string::npos);
    CHECK(data_lines(slurp(dir / "s/records.csv")) == 3 * 2 * 2);
  }
  SUBCASE("bad configuration") {
    write_text(dir / "bad.json", R"({"scenario": {"n": 10, "wat": 1}})");
    CHECK(run_cli({"simulate", "--config", dir / "bad.json", "--out-dir", dir / "x"}).code == 2);
    write_text(dir / "broken.json", "{");
    CHECK(run_cli({"simulate", "--config", dir / "broken.json", "--out-dir", dir / "x"}).code == 2);
    CHECK(run_cli({"simulate", "--config", dir / "sim.json", "--reps", "0", "--out-dir", dir / "x"}).code == 2);
  }
}

TEST_CASE("diagnose") {
  const TempDir dir;
  SUBCASE("zero design") {
    write_matrix(dir / "zero.csv", MatrixXd::Zero(6, 4));
    const auto r = run_cli({"diagnose", "--input", dir / "zero.csv", "--out-dir", dir / "z"});
    REQUIRE(r.code == 0);
    std::istringstream spec(slurp(dir / "z/spectrum.csv"));
    const auto t = csv::read(spec);
    REQUIRE(t.data.rows() == 4);
    CHECK(t.data.col(1).isZero(0.0));
    const auto p1 = read_keyed(dir / "z/p1.csv");
    CHECK(num(p1.at("threshold").at("value")) == 0.0);
    CHECK(num(p1.at("spike_ratio").at("value")) == 0.0);
    CHECK(r.out.find("note:") != std::string::npos);
  }
  SUBCASE("orthogonal design has a flat spectrum") {
    const MatrixXd Q = testing::random_orthonormal(20, 5, 8) * 3.0;
    write_matrix(dir / "flat.csv", Q);
    REQUIRE(run_cli({"diagnose", "--input", dir / "flat.csv", "--no-center", "--out-dir", dir / "f"}).code == 0);
    std::istringstream spec(slurp(dir / "f/spectrum.csv"));
    const auto t = csv::read(spec);
    CHECK(t.data.col(1).maxCoeff() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(t.data.col(1).minCoeff() == doctest::Approx(3.0).epsilon(1e-12));
    const auto p1 = read_keyed(dir / "f/p1.csv");
    CHECK(num(p1.at("spike_ratio").at("value")) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(num(p1.at("trim_count").at("value")) == 2.0);
  }
  SUBCASE("confounded design shows a spike") {
    simgen::Scenario sc;
    sc.n = 200;
    sc.p = 150;
    const auto data = simgen::sample_dataset(sc, 12);
    write_matrix(dir / "conf.csv", data.X, &data.Y);
    const auto r = run_cli({"diagnose", "--input", dir / "conf.csv", "--response", "y", "--rho", "0.5", "--out-dir",
                            dir / "c"});
    REQUIRE(r.code == 0);
    const auto p1 = read_keyed(dir / "c/p1.csv");
    CHECK(num(p1.at("d").at("value")) == 150.0);
    CHECK(num(p1.at("spike_ratio").at("value")) > 3.0);
    CHECK(num(p1.at("trim_count").at("value")) == 75.0);
    std::istringstream spec(slurp(dir / "c/spectrum.csv"));
    const auto t = csv::read(spec);
    REQUIRE(t.data.rows() == 150);
    // Shrink factors: below one on the leading half, one afterwards.
    CHECK(t.data(0, 2) < 1.0);
    CHECK(t.data(149, 2) == 1.0);
  }
  SUBCASE("errors") {
    write_matrix(dir / "x.csv", MatrixXd::Identity(3, 3));
    CHECK(run_cli({"diagnose", "--input", dir / "x.csv", "--rho", "0", "--out-dir", dir / "e"}).code == 2);
    CHECK(run_cli({"diagnose", "--input", dir / "x.csv", "--response", "nope", "--out-dir", dir / "e"}).code == 2);
    CHECK(run_cli({"diagnose"}).code == 2);
  }
}

}  // TEST_SUITE
