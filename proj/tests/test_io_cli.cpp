#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qte/io.hpp"

using namespace qte;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/qte_test_") + name;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QTE_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("dataset round-trips through CSV exactly") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss;
  Dataset d;
  d.covariates.resize(20, 3);
  d.indicator.resize(20);
  d.outcome.resize(20);
  for (int i = 0; i < 20; ++i) {
    for (int c = 0; c < 3; ++c) d.covariates(i, c) = gauss(rng);
    d.indicator[i] = i % 3 == 0 ? 0.0 : 1.0;
    d.outcome[i] = d.indicator[i] == 1.0
                       ? gauss(rng)
                       : std::numeric_limits<double>::quiet_NaN();
  }

  const std::string path = temp_path("roundtrip.csv");
  {
    std::ofstream out(path);
    write_dataset_csv(out, d);
  }
  const Dataset back = ingest_csv(path);
  CHECK(back.kind == EstimandKind::MissingOutcome);
  CHECK(back.covariates == d.covariates);
  CHECK(back.indicator == d.indicator);
  for (int i = 0; i < 20; ++i) {
    if (d.indicator[i] == 1.0) {
      CHECK(back.outcome[i] == d.outcome[i]);
    } else {
      CHECK_FALSE(std::isfinite(back.outcome[i]));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("ingest rejects malformed inputs with located errors") {
  const std::string path = temp_path("bad.csv");

  write_file(path, "a,b,c\n1,2,3\n");
  CHECK_THROWS_WITH_AS(ingest_csv(path), doctest::Contains("'y'"),
                       std::invalid_argument);

  write_file(path, "y,m,x1\n1.0,1,oops\n");
  CHECK_THROWS_WITH_AS(ingest_csv(path), doctest::Contains("row 2"),
                       std::invalid_argument);

  write_file(path, "y,m,x1\nNA,1,0.5\n");
  CHECK_THROWS_WITH_AS(ingest_csv(path), doctest::Contains("missing outcome"),
                       std::invalid_argument);

  write_file(path, "y,m,x1\n1.0,1\n");
  CHECK_THROWS(ingest_csv(path));

  write_file(path, "y,t,x1\n1.0,1,0.5\n2.0,0,0.1\n");
  CHECK(ingest_csv(path).kind == EstimandKind::EffectOnTreated);

  std::remove(path.c_str());
}

TEST_CASE("summary CSV prints NA coverage for point estimators") {
  CellSummary a;
  a.scenario = "a";
  a.n = 10;
  a.q = 0.5;
  a.estimator = "od";
  a.reps = 2;
  CellSummary b = a;
  b.estimator = "tmle";
  b.coverage = 0.95;
  b.has_coverage = true;
  std::ostringstream out;
  write_summary_csv(out, {a, b});
  CHECK(out.str().find(",NA,") != std::string::npos);
  CHECK(out.str().find("0.95") != std::string::npos);
}

TEST_CASE("cli estimate produces one row per estimator and level") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  std::ostringstream body;
  body << "y,m,x1\n";
  for (int i = 0; i < 120; ++i) {
    const double x = gauss(rng);
    const bool obs = unif(rng) < 0.7;
    if (obs) {
      body << (1.0 + x + gauss(rng)) << ",1," << x << "\n";
    } else {
      body << "NA,0," << x << "\n";
    }
  }
  const std::string in = temp_path("est_in.csv");
  const std::string out = temp_path("est_out.csv");
  write_file(in, body.str());

  const int rc = run_cli("estimate --input " + in +
                         " --q 0.25 --q 0.5 --grid-size 50 --output " + out);
  CHECK(rc == 0);
  std::ifstream f(out);
  std::string line;
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 1 + 2 * 5);

  const int rc_json = run_cli("estimate --input " + in +
                              " --format json --grid-size 50 --output " + out);
  CHECK(rc_json == 0);
  std::ifstream jf(out);
  std::stringstream buf;
  buf << jf.rdbuf();
  CHECK(buf.str().find("\"schema_version\"") != std::string::npos);
  CHECK(buf.str().find("\"tmle\"") != std::string::npos);

  std::remove(in.c_str());
  std::remove(out.c_str());
}

TEST_CASE("cli rejects missing inputs with exit code 2") {
  CHECK(run_cli("estimate --input /nonexistent/file.csv 2>/dev/null") == 2);
  CHECK(run_cli("simulate --scenario z --reps 1 --n 50 2>/dev/null") == 2);
  CHECK(run_cli("estimate --input /dev/null --q 2.0 2>/dev/null") == 2);
}

TEST_CASE("cli simulate writes the summary schema") {
  const std::string out = temp_path("sim_out.csv");
  const int rc = run_cli(
      "simulate --scenario a --n 100 --reps 2 --grid-size 40 --seed 5 "
      "--output " + out);
  CHECK(rc == 0);
  std::ifstream f(out);
  std::string header;
  std::getline(f, header);
  CHECK(header == "scenario,n,q,estimator,bias,sd,rmse,coverage,reps,failures");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == 5);
  std::remove(out.c_str());
}
