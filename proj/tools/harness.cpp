#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gmrf/inference.hpp"
#include "gmrf/krylov.hpp"
#include "gmrf/oracle.hpp"

namespace gmrf::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d{
      {"model.kind", "ar1"},         {"model.dir", ""},          {"model.phi", "0.95"},
      {"model.n", "99"},             {"model.nx", "16"},         {"model.ny", "16"},
      {"model.spacing", "1"},        {"model.kappa", "1"},       {"model.tau", "1"},
      {"model.alpha", "2"},          {"model.n_t", "10"},        {"model.dt", "1"},
      {"model.gamma_t", "1"},        {"model.gamma_s", "1"},     {"model.gamma_e", "1"},
      {"model.alpha_t", "1"},        {"model.alpha_s", "2"},     {"model.alpha_e", "1"},
      {"obs.count", "0"},            {"obs.tau_y", "1"},         {"obs.n_beta", "0"},
      {"obs.q_beta", "0.01"},        {"obs.seed", "7"},          {"partition.J", "1"},
      {"partition.strategy", "temporal"}, {"partition.l", "0"},  {"partition.slab_size", "0"},
      {"estimator.name", "overlapping"},  {"estimator.K", "10"}, {"estimator.p", "2"},
      {"estimator.base_size", "64"}, {"estimator.rtol", "1e-10"}, {"estimator.maxit", "1000"},
      {"estimator.cg_rtol", "1e-10"}, {"estimator.replications", "1"}, {"solver.rtol", "1e-12"},
      {"solver.maxit", "20000"},     {"bench.workers", "1,2,4,8"}, {"seed", "1"},
      {"workers", "0"},              {"out", "."},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

fs::path out_dir(const Config& c) {
  fs::path out = c.str("out");
  fs::create_directories(out);
  return out;
}

fs::path model_dir(const Config& c) {
  if (!c.has_value("model.dir")) throw UsageError("model.dir is not set");
  const fs::path dir = c.str("model.dir");
  if (!fs::is_directory(dir)) throw UsageError("model directory not found: " + dir.string());
  return dir;
}

Index slab_size_for(const Config& c, const LatentModel& m) {
  const long s = c.integer("partition.slab_size");
  if (s > 0) return s;
  return m.slab_size > 0 ? m.slab_size : 1;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json timings_json(const MarginalResult& r) {
  json t = json::object();
  for (const auto& [name, secs] : r.timings) t[name] = secs;
  return t;
}

json run_summary(const Config& c, const MarginalResult& r) {
  json j;
  j["estimator"] = to_string(r.estimator);
  j["K"] = r.K;
  j["l"] = r.l;
  j["J"] = c.integer("partition.J");
  j["seed"] = c.integer("seed");
  j["workers"] = c.integer("workers");
  j["max_iterations"] = r.max_iterations;
  j["converged"] = r.converged;
  json parts = json::array();
  for (const auto& p : r.partitions)
    parts.push_back({{"owned", p.owned},
                     {"local_size", p.local_size},
                     {"frontier_size", p.frontier_size},
                     {"factor_nnz", p.factor_nnz},
                     {"dense", p.dense},
                     {"correction_solves", p.correction_solves}});
  j["partitions"] = parts;
  return j;
}

}  // namespace

Config::Config() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

void Config::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  if (!values_.count(k)) throw UsageError("unknown config key '" + k + "'");
  values_[k] = trim(value);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(no) + ": expected key=value");
    set(line);
  }
}

std::string Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

double Config::real(const std::string& key) const {
  const std::string v = str(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

long Config::integer(const std::string& key) const {
  const std::string v = str(key);
  try {
    std::size_t used = 0;
    const long i = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::vector<long> Config::integers(const std::string& key) const {
  std::vector<long> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    Config tmp;
    tmp.values_[key] = trim(item);
    out.push_back(tmp.integer(key));
  }
  if (out.empty()) throw UsageError("config key '" + key + "' is empty");
  return out;
}

LatentModel build_model(const Config& c) {
  LatentModel m;
  const std::string kind = c.str("model.kind");
  SpatialSpec sp;
  sp.nx = c.integer("model.nx");
  sp.ny = c.integer("model.ny");
  sp.spacing = c.real("model.spacing");
  sp.kappa = c.real("model.kappa");
  sp.tau = c.real("model.tau");
  sp.alpha = static_cast<int>(c.integer("model.alpha"));
  if (kind == "ar1") {
    const long n = c.integer("model.n");
    if (n < 1) throw UsageError("model.n must be >= 1");
    m.Q_u = build_ar1_precision(c.real("model.phi"), n);
    m.slab_size = 1;
    m.n_slabs = n;
  } else if (kind == "lattice") {
    m.Q_u = build_spatial_precision(sp);
    m.slab_size = sp.nx * sp.ny;
    m.n_slabs = 1;
  } else if (kind == "spacetime") {
    SpaceTimeSpec st;
    st.spatial = sp;
    st.n_t = c.integer("model.n_t");
    st.dt = c.real("model.dt");
    st.gamma_t = c.real("model.gamma_t");
    st.gamma_s = c.real("model.gamma_s");
    st.gamma_e = c.real("model.gamma_e");
    st.alpha_t = static_cast<int>(c.integer("model.alpha_t"));
    st.alpha_s = static_cast<int>(c.integer("model.alpha_s"));
    st.alpha_e = static_cast<int>(c.integer("model.alpha_e"));
    m.Q_u = build_spacetime_precision(st);
    m.slab_size = sp.nx * sp.ny;
    m.n_slabs = st.n_t;
  } else {
    throw UsageError("unknown model.kind '" + kind + "' (expected ar1, lattice or spacetime)");
  }

  const Index n = m.Q_u.rows();
  const long n_obs = c.integer("obs.count");
  const long n_beta = c.integer("obs.n_beta");
  if (n_obs < 0 || n_beta < 0) throw UsageError("obs.count and obs.n_beta must be >= 0");
  if (n_beta > 0 && n_obs == 0) throw UsageError("obs.n_beta > 0 needs observations (obs.count > 0)");
  m.Q_beta = SparseMatrix::diagonal(std::vector<double>(static_cast<std::size_t>(n_beta), c.real("obs.q_beta")));
  m.tau_y = n_obs > 0 ? c.real("obs.tau_y") : 0.0;
  m.A_beta = DenseMatrix(n_obs, n_beta);
  if (n_obs == 0) {
    m.A_u = SparseMatrix::zero(0, n);
    m.validate();
    return m;
  }
  if (!(m.tau_y > 0.0)) throw UsageError("obs.tau_y must be > 0");
  // Evenly spread single-node observations of a prior draw plus covariates
  // with unit coefficients and Gaussian noise.
  const auto seed = static_cast<std::uint64_t>(c.integer("obs.seed"));
  std::vector<Triplet> t;
  for (long o = 0; o < n_obs; ++o) t.push_back({static_cast<Index>(o), static_cast<Index>((o * n) / n_obs), 1.0});
  m.A_u = SparseMatrix::from_triplets(n_obs, n, std::move(t));
  const auto truth = sample_gmrf(m.Q_u, sparse_cholesky(m.Q_u, Ordering::min_fill), 1, seed, {}).samples.front();
  for (long b = 0; b < n_beta; ++b) {
    const auto col = standard_normal(seed + 1, static_cast<std::uint64_t>(b), n_obs);
    for (long o = 0; o < n_obs; ++o) m.A_beta(o, b) = b == 0 ? 1.0 : col[o];
  }
  const auto noise = standard_normal(seed + 2, 0, n_obs);
  m.y = spmv(m.A_u, truth);
  for (long o = 0; o < n_obs; ++o) {
    for (long b = 0; b < n_beta; ++b) m.y[o] += m.A_beta(o, b);
    m.y[o] += noise[o] / std::sqrt(m.tau_y);
  }
  m.validate();
  return m;
}

PartitionPlan make_plan(const SparseMatrix& q, const Config& c, Index slab_size) {
  const std::string name = c.str("estimator.name");
  const std::string strategy = c.str("partition.strategy");
  PartitionOptions opt;
  if (strategy == "temporal") opt.strategy = PartitionStrategy::temporal_interval;
  else if (strategy == "bisection") opt.strategy = PartitionStrategy::recursive_bisection;
  else throw UsageError("unknown partition.strategy '" + strategy + "' (expected temporal or bisection)");
  opt.slab_size = opt.strategy == PartitionStrategy::temporal_interval ? slab_size : 1;
  const long parts = c.integer("partition.J");
  if (parts < 1) throw UsageError("partition.J must be >= 1");
  const long l = c.integer("partition.l");
  if (l < 0) throw UsageError("partition.l must be >= 0");
  const Graph g = graph_from_precision(q);
  if (name == "overlapping") {
    opt.with_separator = false;
    return expand_overlap(g, partition(g, parts, opt), static_cast<int>(l));
  }
  opt.with_separator = true;
  return partition(g, parts, opt);
}

EstimatorSettings estimator_settings(const Config& c) {
  EstimatorSettings s;
  s.krylov.rtol = c.real("estimator.rtol");
  s.krylov.maxit = static_cast<int>(c.integer("estimator.maxit"));
  s.cg_rtol = c.real("estimator.cg_rtol");
  s.workers = static_cast<int>(c.integer("workers"));
  if (s.workers < 0) throw UsageError("workers must be >= 0");
  return s;
}

EstimatorRun run_estimator(const SparseMatrix& q, const Config& c, std::uint64_t seed, Index slab_size) {
  const std::string name = c.str("estimator.name");
  const EstimatorSettings s = estimator_settings(c);
  const int K = static_cast<int>(c.integer("estimator.K"));
  EstimatorRun run;
  run.distance.assign(static_cast<std::size_t>(q.rows()), -1);
  if (name == "exact") {
    run.result = exact_diag(q, s);
  } else if (name == "hutchinson") {
    run.result = hutchinson_diag(q, K, seed, s);
  } else if (name == "probing") {
    run.result = probing_diag(q, static_cast<int>(c.integer("estimator.p")), s);
  } else if (name == "basic") {
    run.result = basic_rbmc(q, draw_samples(q, K, seed, s).samples);
  } else if (name == "recursive" || name == "recursive_exact") {
    const auto mode = name == "recursive" ? InterfaceMode::sampled : InterfaceMode::exact_interface;
    run.result = recursive_rbmc(q, c.integer("estimator.base_size"), K, seed, mode, s);
  } else if (name == "parallel" || name == "parallel_exact") {
    run.plan = make_plan(q, c, slab_size);
    const auto mode = name == "parallel" ? InterfaceMode::sampled : InterfaceMode::exact_interface;
    run.result = parallel_rbmc(q, *run.plan, K, seed, mode, s);
    if (!run.plan->separator.empty()) run.distance = hop_distance(graph_from_precision(q), run.plan->separator);
  } else if (name == "overlapping") {
    run.plan = make_plan(q, c, slab_size);
    run.result = overlapping_rbmc(q, *run.plan, K, seed, s);
    const Graph g = graph_from_precision(q);
    for (Index j = 0; j < run.plan->part_count(); ++j) {
      if (run.plan->frontiers[j].empty()) continue;
      const auto d = hop_distance(g, run.plan->frontiers[j]);
      for (const Index i : run.plan->parts[j]) run.distance[i] = d[i];
    }
  } else {
    throw UsageError("unknown estimator.name '" + name +
                     "' (expected exact, hutchinson, probing, basic, parallel, parallel_exact, overlapping, "
                     "recursive or recursive_exact)");
  }
  return run;
}

int cmd_build(const Config& c) {
  const LatentModel m = build_model(c);
  const fs::path dir = c.has_value("model.dir") ? fs::path(c.str("model.dir")) : out_dir(c) / "model";
  save_model(m, dir);
  json j;
  j["v"] = 1;
  j["command"] = "build";
  j["model_dir"] = dir.string();
  j["kind"] = c.str("model.kind");
  j["n_u"] = m.n_u();
  j["n_obs"] = m.n_obs();
  j["n_beta"] = m.n_beta();
  j["nnz_Q_u"] = m.Q_u.nnz();
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_infer(const Config& c) {
  const LatentModel m = load_model(model_dir(c));
  const fs::path out = out_dir(c);
  SolverSettings ss;
  ss.rtol = c.real("solver.rtol");
  ss.maxit = static_cast<int>(c.integer("solver.maxit"));

  const auto t0 = Clock::now();
  const PosteriorSummary post = posterior_mean(m, ss);
  const double mean_time = seconds_since(t0);
  const PosteriorBlocks blocks = assemble_posterior_blocks(m);
  const auto run = run_estimator(blocks.Q_uu, c, static_cast<std::uint64_t>(c.integer("seed")), slab_size_for(c, m));
  const auto t1 = Clock::now();
  long extra = 0;
  const auto var = marginal_variance(m, run.result, post.S_inv, ss, &extra);
  const double var_time = seconds_since(t1);

  {
    std::ofstream csv(out / "posterior.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "posterior.csv").string());
    csv << "node_id,mean,sd\n" << std::setprecision(17);
    for (Index i = 0; i < m.n_u(); ++i) csv << i << "," << post.mu_u[i] << "," << std::sqrt(var[i]) << "\n";
  }
  json j;
  j["v"] = 1;
  j["command"] = "infer";
  j["n_u"] = m.n_u();
  j["n_beta"] = m.n_beta();
  j["run"] = run_summary(c, run.result);
  json t = timings_json(run.result);
  t["posterior_mean"] = mean_time;
  t["fixed_effects_correction"] = var_time;
  j["timings"] = t;
  j["solve_count"] = post.solve_count;
  j["correction_solve_count"] = extra;
  json beta = json::array();
  for (Index b = 0; b < m.n_beta(); ++b) beta.push_back({{"mean", post.mu_beta[b]}, {"sd", std::sqrt(post.S_inv(b, b))}});
  j["beta"] = beta;
  std::vector<std::string> warnings = post.warnings;
  warnings.insert(warnings.end(), run.result.warnings.begin(), run.result.warnings.end());
  j["warnings"] = warnings;
  write_json(out / "report.json", j);
  return run.result.converged ? 0 : 1;
}

int cmd_sample(const Config& c) {
  const LatentModel m = load_model(model_dir(c));
  const fs::path out = out_dir(c);
  const PosteriorBlocks blocks = assemble_posterior_blocks(m);
  const EstimatorSettings s = estimator_settings(c);
  const int K = static_cast<int>(c.integer("estimator.K"));
  std::vector<std::string> warnings;
  const auto t0 = Clock::now();
  const SampleSet set = draw_samples(blocks.Q_uu, K, static_cast<std::uint64_t>(c.integer("seed")), s, &warnings);
  const double secs = seconds_since(t0);
  write_samples_csv(out / "samples.csv", set);
  json j;
  j["v"] = 1;
  j["command"] = "sample";
  j["n_u"] = m.n_u();
  j["K"] = K;
  j["seed"] = c.integer("seed");
  j["timings"] = {{"sampling", secs}};
  json reps = json::array();
  for (const auto& r : set.reports)
    reps.push_back({{"iterations", r.iterations}, {"residual", r.final_residual}, {"converged", r.converged}});
  j["reports"] = reps;
  j["warnings"] = warnings;
  write_json(out / "report.json", j);
  return set.all_converged() ? 0 : 1;
}

int cmd_compare(const Config& c) {
  const LatentModel m = load_model(model_dir(c));
  const fs::path out = out_dir(c);
  const SparseMatrix q = assemble_posterior_blocks(m).Q_uu;
  std::vector<double> truth;
  try {
    truth = oracle::dense_inverse_diag(q);
  } catch (const oracle::OracleLimitExceeded& e) {
    throw UsageError(e.what());
  }
  const long reps = c.integer("estimator.replications");
  if (reps < 1) throw UsageError("estimator.replications must be >= 1");
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  const std::size_t n = truth.size();
  std::vector<double> first, sq(n, 0.0);
  std::vector<Index> distance;
  MarginalResult summary_run;
  for (long r = 0; r < reps; ++r) {
    auto run = run_estimator(q, c, seed + static_cast<std::uint64_t>(r), slab_size_for(c, m));
    for (std::size_t i = 0; i < n; ++i) {
      const double e = (run.result.diag_variance[i] - truth[i]) / truth[i];
      sq[i] += e * e;
    }
    if (r == 0) {
      first = run.result.diag_variance;
      distance = run.distance;
      summary_run = std::move(run.result);
    }
  }

  struct Bucket {
    long count = 0;
    double max_err = 0.0, sum_err = 0.0, sum_sq = 0.0;
  };
  std::map<Index, Bucket> buckets;
  double max_err = 0.0, sum_err = 0.0;
  {
    std::ofstream csv(out / "errors.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "errors.csv").string());
    csv << "node_id,estimate,truth,rel_error,rel_rmse,hop_distance\n" << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
      const double err = std::abs(first[i] - truth[i]) / truth[i];
      const double rmse = std::sqrt(sq[i] / static_cast<double>(reps));
      csv << i << "," << first[i] << "," << truth[i] << "," << err << "," << rmse << "," << distance[i] << "\n";
      max_err = std::max(max_err, err);
      sum_err += err;
      auto& b = buckets[distance[i]];
      ++b.count;
      b.max_err = std::max(b.max_err, err);
      b.sum_err += err;
      b.sum_sq += sq[i] / static_cast<double>(reps);
    }
  }
  json jb = json::array();
  {
    std::ofstream csv(out / "buckets.csv");
    csv << "hop_distance,count,max_rel_error,mean_rel_error,rel_rmse\n" << std::setprecision(17);
    for (const auto& [d, b] : buckets) {
      const double mean = b.sum_err / static_cast<double>(b.count);
      const double rmse = std::sqrt(b.sum_sq / static_cast<double>(b.count));
      csv << d << "," << b.count << "," << b.max_err << "," << mean << "," << rmse << "\n";
      jb.push_back({{"hop_distance", d}, {"count", b.count}, {"max_rel_error", b.max_err},
                    {"mean_rel_error", mean}, {"rel_rmse", rmse}});
    }
  }
  json j;
  j["v"] = 1;
  j["command"] = "compare";
  j["n"] = n;
  j["replications"] = reps;
  j["run"] = run_summary(c, summary_run);
  j["max_rel_error"] = max_err;
  j["mean_rel_error"] = sum_err / static_cast<double>(n);
  j["buckets"] = jb;
  j["warnings"] = summary_run.warnings;
  write_json(out / "summary.json", j);
  return summary_run.converged ? 0 : 1;
}

int cmd_bench(const Config& c) {
  const LatentModel m =
      c.has_value("model.dir") ? load_model(model_dir(c)) : build_model(c);  // in memory when no directory is given
  const fs::path out = out_dir(c);
  const SparseMatrix q = assemble_posterior_blocks(m).Q_uu;
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  json runs = json::array();
  std::vector<double> reference;
  double worst = 0.0;
  for (const long w : c.integers("bench.workers")) {
    if (w < 1) throw UsageError("bench.workers entries must be >= 1");
    Config cw = c;
    cw.set("workers", std::to_string(w));
    const auto t0 = Clock::now();
    const auto run = run_estimator(q, cw, seed, slab_size_for(c, m));
    const double total = seconds_since(t0);
    if (reference.empty()) reference = run.result.diag_variance;
    double diff = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i)
      diff = std::max(diff, std::abs(run.result.diag_variance[i] - reference[i]) / std::abs(reference[i]));
    worst = std::max(worst, diff);
    json r;
    r["workers"] = w;
    r["total"] = total;
    r["timings"] = timings_json(run.result);
    r["max_rel_diff_vs_first"] = diff;
    runs.push_back(r);
  }
  json j;
  j["v"] = 1;
  j["command"] = "bench";
  j["n_u"] = m.n_u();
  j["estimator"] = c.str("estimator.name");
  j["runs"] = runs;
  j["max_rel_diff"] = worst;
  j["identical"] = worst <= 1e-13;
  write_json(out / "bench.json", j);
  std::cout << j.dump() << "\n";
  return worst <= 1e-13 ? 0 : 1;
}

}  // namespace gmrf::harness
