#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gmrf/oracle.hpp"
#include "harness.hpp"
#include "test_support.hpp"

using namespace gmrf;
namespace h = gmrf::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmrf_harness_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> column(const fs::path& csv, int col) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c <= col; ++c) std::getline(ss, cell, ',');
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  h::Config c;
  CHECK(c.str("model.kind") == "ar1");
  c.set(" partition.J = 4 ");
  CHECK(c.integer("partition.J") == 4);
  CHECK_THROWS_AS(c.set("partition.j=4"), h::UsageError);
  CHECK_THROWS_AS(c.set("partition.J"), h::UsageError);
  c.set("partition.J", "four");
  CHECK_THROWS_AS(c.integer("partition.J"), h::UsageError);
  c.set("model.phi", "0.9x");
  CHECK_THROWS_AS(c.real("model.phi"), h::UsageError);
  CHECK(c.integers("bench.workers") == std::vector<long>{1, 2, 4, 8});

  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "# comment\nmodel.kind = lattice   # trailing\n\nmodel.nx=5\n";
  }
  h::Config d;
  d.load_file(dir / "run.cfg");
  CHECK(d.str("model.kind") == "lattice");
  CHECK(d.integer("model.nx") == 5);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "model.kind\n";
  }
  CHECK_THROWS_AS(d.load_file(dir / "bad.cfg"), h::UsageError);
  CHECK_THROWS_AS(d.load_file(dir / "missing.cfg"), h::UsageError);
}

TEST_CASE("model construction") {
  h::Config c;
  c.set("model.kind=spacetime");
  c.set("model.nx=2");
  c.set("model.ny=2");
  c.set("model.n_t=2");
  const LatentModel m = h::build_model(c);
  CHECK(m.n_u() == 8);
  CHECK(m.slab_size == 4);
  CHECK(m.n_slabs == 2);
  CHECK(m.n_obs() == 0);

  h::Config bad;
  bad.set("model.kind=torus");
  CHECK_THROWS_AS(h::build_model(bad), h::UsageError);
  h::Config no_obs;
  no_obs.set("obs.n_beta=2");
  CHECK_THROWS_AS(h::build_model(no_obs), h::UsageError);

  h::Config obs;
  obs.set("obs.count=20");
  obs.set("obs.n_beta=2");
  const LatentModel a = h::build_model(obs);
  const LatentModel b = h::build_model(obs);
  CHECK(a.n_obs() == 20);
  CHECK(a.n_beta() == 2);
  CHECK(a.y == b.y);
  for (Index o = 0; o < 20; ++o) CHECK(a.A_beta(o, 0) == 1.0);
}

TEST_CASE("estimator dispatch") {
  const SparseMatrix q = build_ar1_precision(0.95, 99);
  h::Config c;
  c.set("estimator.name=wrong");
  CHECK_THROWS_AS(h::run_estimator(q, c, 1, 1), h::UsageError);
  c.set("estimator.name=parallel");
  c.set("partition.J=2");
  auto run = h::run_estimator(q, c, 1, 1);
  REQUIRE(run.plan);
  CHECK(run.plan->separator == std::vector<Index>{49});
  CHECK(run.distance[49] == 0);
  CHECK(run.distance[0] == 49);

  c.set("estimator.name=overlapping");
  c.set("partition.l=10");
  run = h::run_estimator(q, c, 1, 1);
  REQUIRE(run.plan->parts[0].back() == 49);
  CHECK(run.plan->frontiers[0] == std::vector<Index>{60});
  CHECK(run.plan->frontiers[1] == std::vector<Index>{39});
  CHECK(run.distance[0] == 60);
  CHECK(run.distance[49] == 11);
  CHECK(run.distance[50] == 11);
  CHECK(run.distance[98] == 59);

  for (const char* name : {"exact", "hutchinson", "probing", "basic", "recursive", "parallel_exact"}) {
    c.set("estimator.name", name);
    const auto r = h::run_estimator(q, c, 1, 1);
    CHECK(r.result.diag_variance.size() == 99);
    if (std::string(name) == "parallel_exact") CHECK(r.distance[49] == 0);
    else CHECK(r.distance == std::vector<Index>(99, -1));
  }
}

TEST_CASE("infer with one partition matches the dense posterior") {
  const fs::path dir = scratch("infer");
  h::Config c;
  c.set("obs.count=25");
  c.set("obs.n_beta=2");
  c.set("model.n=60");
  c.set("model.dir", (dir / "model").string());
  c.set("out", (dir / "out").string());
  CHECK(h::cmd_build(c) == 0);
  c.set("estimator.name=overlapping");
  c.set("partition.J=1");
  CHECK(h::cmd_infer(c) == 0);

  const LatentModel m = load_model(dir / "model");
  const auto o = oracle::dense_posterior(m);
  const auto mean = column(dir / "out" / "posterior.csv", 1);
  const auto sd = column(dir / "out" / "posterior.csv", 2);
  REQUIRE(sd.size() == 60);
  for (Index i = 0; i < 60; ++i) {
    CHECK(sd[i] == doctest::Approx(std::sqrt(o.exact_diag[i])).epsilon(1e-9));
    CHECK(mean[i] == doctest::Approx(o.exact_mu[i]).epsilon(1e-8));
  }
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["v"] == 1);
  CHECK(report["solve_count"] == 4);
  CHECK(report["beta"].size() == 2);
  CHECK(report["beta"][0]["sd"].get<double>() == doctest::Approx(std::sqrt(o.exact_diag[60])).epsilon(1e-9));
}

TEST_CASE("identical seeds give identical files") {
  const fs::path dir = scratch("seeds");
  h::Config c;
  c.set("model.dir", (dir / "model").string());
  CHECK(h::cmd_build(c) == 0);
  c.set("partition.J=3");
  c.set("partition.l=4");
  c.set("estimator.K=5");
  for (const char* run : {"a", "b"}) {
    c.set("out", (dir / run).string());
    CHECK(h::cmd_infer(c) == 0);
    CHECK(h::cmd_sample(c) == 0);
  }
  CHECK(slurp(dir / "a" / "posterior.csv") == slurp(dir / "b" / "posterior.csv"));
  CHECK(slurp(dir / "a" / "samples.csv") == slurp(dir / "b" / "samples.csv"));
  c.set("seed=2");
  c.set("out", (dir / "c").string());
  CHECK(h::cmd_infer(c) == 0);
  CHECK(slurp(dir / "a" / "posterior.csv") != slurp(dir / "c" / "posterior.csv"));
}

TEST_CASE("compare with a saturating overlap is exact") {
  const fs::path dir = scratch("compare");
  h::Config c;
  c.set("model.dir", (dir / "model").string());
  c.set("out", (dir / "out").string());
  CHECK(h::cmd_build(c) == 0);
  c.set("partition.J=2");
  c.set("partition.l=99");
  c.set("estimator.replications=3");
  CHECK(h::cmd_compare(c) == 0);
  const auto s = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(s["max_rel_error"].get<double>() <= 1e-9);
  const auto err = column(dir / "out" / "errors.csv", 3);
  CHECK(err.size() == 99);
  for (double e : err) CHECK(e <= 1e-9);

  c.set("model.dir", (dir / "none").string());
  CHECK_THROWS_AS(h::cmd_compare(c), h::UsageError);
}

TEST_CASE("bench reports identical results across worker counts") {
  const fs::path dir = scratch("bench");
  h::Config c;
  c.set("out", dir.string());
  c.set("estimator.name=parallel");
  c.set("partition.J=4");
  c.set("bench.workers=1,2,3");
  CHECK(h::cmd_bench(c) == 0);
  const auto b = nlohmann::json::parse(slurp(dir / "bench.json"));
  CHECK(b["runs"].size() == 3);
  CHECK(b["identical"] == true);
  c.set("bench.workers=0");
  CHECK_THROWS_AS(h::cmd_bench(c), h::UsageError);
}
