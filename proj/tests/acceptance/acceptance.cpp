// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance            run all nine
//   acceptance 3 7        run a subset
// Exit code 0 only when every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gmrf/estimators.hpp"
#include "gmrf/inference.hpp"
#include "gmrf/oracle.hpp"
#include "test_support.hpp"

using namespace gmrf;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

/// Per-node relative RMSE over replications.
class ErrorTally {
 public:
  explicit ErrorTally(std::vector<double> truth) : truth_(std::move(truth)), sq_(truth_.size(), 0.0) {}

  /// Adds one replication and returns its node-averaged squared relative error.
  double add(std::span<const double> est) {
    double avg = 0.0;
    for (std::size_t i = 0; i < truth_.size(); ++i) {
      const double e = (est[i] - truth_[i]) / truth_[i];
      sq_[i] += e * e;
      avg += e * e;
    }
    ++reps_;
    return avg / static_cast<double>(truth_.size());
  }
  double rmse(Index i) const { return std::sqrt(sq_[i] / reps_); }
  double node_average() const {
    double s = 0.0;
    for (Index i = 0; i < static_cast<Index>(truth_.size()); ++i) s += rmse(i);
    return s / static_cast<double>(truth_.size());
  }

 private:
  std::vector<double> truth_;
  std::vector<double> sq_;
  int reps_ = 0;
};

PartitionPlan separator_plan(const SparseMatrix& q, Index parts, PartitionStrategy s, Index slab = 1) {
  const Graph g = graph_from_precision(q);
  return partition(g, parts, {s, true, slab});
}

PartitionPlan overlap_plan(const SparseMatrix& q, Index parts, int l, PartitionStrategy s, Index slab = 1) {
  const Graph g = graph_from_precision(q);
  return expand_overlap(g, partition(g, parts, {s, false, slab}), l);
}

SpaceTimeSpec critical_diffusion(Index side, Index n_t, double spatial_range, double temporal_range) {
  SpaceTimeSpec st;
  st.spatial.nx = st.spatial.ny = side;
  st.n_t = n_t;
  // Range-style parameters: κ = √8/r_s and γ_t = r_t κ²/2 for (1,2,1) in 2D.
  st.gamma_s = std::sqrt(8.0) / spatial_range;
  st.gamma_t = temporal_range * st.gamma_s * st.gamma_s / 2.0;
  st.gamma_e = 1.0;
  return st;
}

struct Named {
  std::string name;
  SparseMatrix q;
  Index slab = 1;
};

std::vector<Named> corpus() {
  std::mt19937_64 rng(17);
  std::vector<Named> c;
  c.push_back({"ar1 phi=0.95 n=99", build_ar1_precision(0.95, 99)});
  c.push_back({"ar1 phi=0.5 n=200", build_ar1_precision(0.5, 200)});
  c.push_back({"ar1 phi=0.99 n=150", build_ar1_precision(0.99, 150)});
  c.push_back({"lattice 16x16 alpha=1", testing::lattice_precision(16, 16, 1)});
  c.push_back({"lattice 16x16 alpha=2", testing::lattice_precision(16, 16, 2)});
  c.push_back({"lattice 10x9 alpha=3", testing::lattice_precision(10, 9, 3, 0.3)});
  c.push_back({"spacetime 4x4x8", build_spacetime_precision(testing::spacetime_spec(4, 4, 8)), 16});
  c.push_back({"spacetime 10x10x20", build_spacetime_precision(critical_diffusion(10, 20, 4.0, 5.0)), 100});
  return c;
}

// ---------------------------------------------------------------------------

void criterion_1(Verdict& v) {
  const auto t0 = Clock::now();
  const double phi = 0.95;
  const SparseMatrix q = build_ar1_precision(phi, 99);
  const Graph g = graph_from_precision(q);
  const auto truth = oracle::dense_inverse_diag(q);
  const auto sep = separator_plan(q, 2, PartitionStrategy::temporal_interval);
  v.require(sep.separator == std::vector<Index>{49}, "separator is node 49");
  const auto ovl = overlap_plan(q, 2, 10, PartitionStrategy::temporal_interval);
  std::vector<Index> dist(99, 0);
  for (Index j = 0; j < 2; ++j) {
    const auto d = hop_distance(g, ovl.frontiers[j]);
    for (const Index i : ovl.parts[j]) dist[i] = d[i];
  }
  const int R = 200;
  EstimatorSettings s;
  s.workers = 0;
  for (const int K : {10, 100, 1000}) {
    ErrorTally par(truth), over(truth);
    for (int r = 0; r < R; ++r) {
      const std::uint64_t seed = 1000003ull * K + r;
      par.add(parallel_rbmc(q, sep, K, seed, InterfaceMode::sampled, s).diag_variance);
      over.add(overlapping_rbmc(q, ovl, K, seed, s).diag_variance);
    }
    const double base = std::sqrt(2.0 / K);
    const double lo = std::min(par.rmse(48), par.rmse(50)) / base;
    const double hi = std::max(par.rmse(48), par.rmse(50)) / base;
    Index inside = 0;
    for (Index i = 0; i < 99; ++i) inside += over.rmse(i) < 1.5 * oracle::rbmc_rmse_theory(phi, K, static_cast<int>(dist[i]));
    const double frac = inside / 99.0;
    v.detail << " K=" << K << ": adjacent/sqrt(2/K) in [" << lo << ", " << hi << "], overlap envelope "
             << inside << "/99;";
    v.require(lo >= 0.5 && hi <= 2.0, "adjacent-node ratio within [0.5, 2] at K=" + std::to_string(K));
    v.require(frac >= 0.95, "envelope coverage >= 95% at K=" + std::to_string(K));
  }
  const double secs = seconds_since(t0);
  v.detail << " " << secs << " s";
  v.require(secs < 60.0, "runtime < 60 s");
}

void criterion_2(Verdict& v) {
  const auto t0 = Clock::now();
  double worst_par = 0.0, worst_ovl = 0.0;
  for (const auto& m : corpus()) {
    const auto truth = oracle::dense_inverse_diag(m.q);
    std::vector<PartitionPlan> plans{separator_plan(m.q, 2, PartitionStrategy::recursive_bisection),
                                     separator_plan(m.q, 4, PartitionStrategy::recursive_bisection)};
    if (m.slab > 1) plans.push_back(separator_plan(m.q, 3, PartitionStrategy::temporal_interval, m.slab));
    for (const auto& plan : plans) {
      const auto r = parallel_rbmc(m.q, plan, 0, 0, InterfaceMode::exact_interface);
      const double e = testing::max_rel_error(r.diag_variance, truth);
      worst_par = std::max(worst_par, e);
      v.require(e <= 1e-9, "exact-interface parallel on " + m.name);
    }
    for (const Index parts : {2, 5}) {
      const auto plan = overlap_plan(m.q, parts, static_cast<int>(m.q.rows()), PartitionStrategy::recursive_bisection);
      const auto r = overlapping_rbmc(m.q, plan, 5, 1);
      const double e = testing::max_rel_error(r.diag_variance, truth);
      worst_ovl = std::max(worst_ovl, e);
      v.require(e <= 1e-9, "saturated overlap on " + m.name);
    }
  }
  const double secs = seconds_since(t0);
  v.detail << " " << corpus().size() << " matrices, worst exact-interface " << worst_par << ", worst saturated "
           << worst_ovl << ", " << secs << " s";
  v.require(secs < 120.0, "runtime < 120 s");
}

void criterion_3(Verdict& v) {
  const auto t0 = Clock::now();
  const Index side = 16, n_t = 100, slab = side * side;
  LatentModel m;
  m.Q_u = build_spacetime_precision(critical_diffusion(side, n_t, 4.0, 10.0));
  const Index n = m.Q_u.rows();
  // Every other node observed with unit noise precision.
  const Index n_obs = n / 2;
  std::vector<Triplet> t;
  for (Index o = 0; o < n_obs; ++o) t.push_back({o, 2 * o, 1.0});
  m.A_u = SparseMatrix::from_triplets(n_obs, n, std::move(t));
  m.A_beta = DenseMatrix(n_obs, 0);
  m.Q_beta = SparseMatrix::zero(0, 0);
  m.tau_y = 1.0;
  m.y.assign(static_cast<std::size_t>(n_obs), 0.0);
  m.slab_size = slab;
  m.n_slabs = n_t;
  const SparseMatrix q = assemble_posterior_blocks(m).Q_uu;

  const auto truth = oracle::block_tridiagonal_inverse_diag(q, slab);
  const auto plan = overlap_plan(q, 4, 10, PartitionStrategy::temporal_interval, slab);
  EstimatorSettings s;
  const auto r = overlapping_rbmc(q, plan, 10, 3, s);
  const double err = testing::max_rel_error(r.diag_variance, truth);
  const double secs = seconds_since(t0);
  v.detail << " n=" << n << ", max relative error " << err << ", sampler iterations " << r.max_iterations << ", "
           << secs << " s";
  v.require(r.converged, "sampler converged");
  v.require(err <= 1e-3, "max relative error <= 1e-3");
  v.require(secs < 600.0, "runtime < 10 min");
}

void criterion_4(Verdict& v) {
  const auto t0 = Clock::now();
  const SparseMatrix q = build_ar1_precision(0.95, 100);
  const DenseMatrix cov = oracle::dense_inverse(q);
  double norm = 0.0;
  for (double x : cov.values()) norm += x * x;
  norm = std::sqrt(norm);
  const CholeskyFactor pre = ic0(q);
  for (const std::uint64_t seed : {1, 2, 3}) {
    double last = 1e300;
    v.detail << " seed " << seed << ":";
    for (const int K : {100, 1000, 10000}) {
      const auto set = sample_gmrf(q, pre, K, seed, {});
      v.require(set.all_converged(), "sampler converged");
      const DenseMatrix emp = oracle::empirical_covariance(set.samples);
      double diff = 0.0;
      for (Index i = 0; i < 100; ++i)
        for (Index j = 0; j < 100; ++j) diff += (emp(i, j) - cov(i, j)) * (emp(i, j) - cov(i, j));
      const double rel = std::sqrt(diff) / norm;
      v.detail << " " << rel;
      v.require(rel < last, "strictly decreasing in K (seed " + std::to_string(seed) + ")");
      last = rel;
    }
    v.require(last <= 0.05, "<= 0.05 at K=10000 (seed " + std::to_string(seed) + ")");
  }
  const double secs = seconds_since(t0);
  v.detail << "; " << secs << " s";
  v.require(secs < 300.0, "runtime < 5 min");
}

void criterion_5(Verdict& v) {
  std::mt19937_64 rng(2024);
  double worst_mean = 0.0, worst_var = 0.0;
  for (const Index n : {40, 120, 200})
    for (const Index nb : {1, 3, 5}) {
      const LatentModel m = testing::random_model(n, nb, rng);
      const auto o = oracle::dense_posterior(m);
      const PosteriorSummary post = posterior_mean(m);
      std::vector<double> mu(post.mu_u);
      mu.insert(mu.end(), post.mu_beta.begin(), post.mu_beta.end());
      const double e_mean = testing::rel_norm_error(mu, o.exact_mu);
      worst_mean = std::max(worst_mean, e_mean);
      v.require(e_mean <= 1e-8, "mean n=" + std::to_string(n) + " n_beta=" + std::to_string(nb));
      v.require(post.solve_count == nb + 2, "solve count n_beta + 2 (got " + std::to_string(post.solve_count) + ")");

      const auto quu = exact_diag(assemble_posterior_blocks(m).Q_uu);
      const auto var = marginal_variance(m, quu, post.S_inv);
      double e_var = testing::max_rel_error(var, std::span<const double>(o.exact_diag).first(n));
      for (Index b = 0; b < nb; ++b)
        e_var = std::max(e_var, std::abs(post.S_inv(b, b) - o.exact_diag[n + b]) / o.exact_diag[n + b]);
      worst_var = std::max(worst_var, e_var);
      v.require(e_var <= 1e-8, "variance n=" + std::to_string(n) + " n_beta=" + std::to_string(nb));
    }
  v.detail << " 9 models, worst mean error " << worst_mean << ", worst variance error " << worst_var;
}

void criterion_6(Verdict& v) {
  double worst = 0.0;
  int count = 0;
  std::mt19937_64 rng(5);
  auto all = corpus();
  all.push_back({"random spd n=300", testing::random_spd(300, 0.01, rng)});
  for (const auto& m : all) {
    const auto truth = oracle::dense_inverse_diag(m.q);
    for (const auto ord : {Ordering::natural, Ordering::amd_like, Ordering::min_fill}) {
      const auto z = selected_inverse_diagonal(sparse_cholesky(m.q, ord));
      const double e = testing::max_rel_error(z, truth);
      worst = std::max(worst, e);
      ++count;
      v.require(e <= 1e-9, m.name);
    }
  }
  v.detail << " " << count << " factorizations, worst " << worst;
}

void criterion_7(Verdict& v) {
  const double phi = 0.95;
  const SparseMatrix q = build_ar1_precision(phi, 99);
  const auto truth = oracle::dense_inverse_diag(q);
  const auto plan = overlap_plan(q, 2, 10, PartitionStrategy::temporal_interval);
  const int K = 100, R = 200;
  ErrorTally hut(truth), basic(truth), over(truth);
  std::vector<double> d_hb, d_bo;
  for (int r = 0; r < R; ++r) {
    const std::uint64_t seed = 777000 + r;
    const auto samples = draw_samples(q, K, seed, {}).samples;
    const double h = hut.add(hutchinson_diag(q, K, seed).diag_variance);
    const double b = basic.add(basic_rbmc(q, samples).diag_variance);
    const double o = over.add(overlapping_rbmc(q, plan, samples).diag_variance);
    d_hb.push_back(h - b);
    d_bo.push_back(b - o);
  }
  // One-sided paired t statistic on per-replication mean squared relative error.
  auto t_stat = [](const std::vector<double>& d) {
    const double n = static_cast<double>(d.size());
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    return mean / std::sqrt(ss / (n - 1.0) / n);
  };
  const double critical = 2.3452;  // t quantile 0.99, 199 degrees of freedom
  const double t1 = t_stat(d_hb), t2 = t_stat(d_bo);
  v.detail << " node-averaged relative RMSE: hutchinson " << hut.node_average() << ", basic " << basic.node_average()
           << ", overlapping " << over.node_average() << "; paired t " << t1 << ", " << t2 << " (critical "
           << critical << ")";
  v.require(hut.node_average() > basic.node_average() && basic.node_average() > over.node_average(), "ordering");
  v.require(t1 > critical, "hutchinson > basic at the 0.01 level");
  v.require(t2 > critical, "basic > overlapping at the 0.01 level");
}

void criterion_8(Verdict& v) {
  // (a) worker invariance
  {
    const SparseMatrix q = testing::lattice_precision(20, 20, 2, 0.3);
    const auto sp = separator_plan(q, 4, PartitionStrategy::recursive_bisection);
    const auto op = overlap_plan(q, 4, 3, PartitionStrategy::recursive_bisection);
    std::vector<std::function<MarginalResult(const EstimatorSettings&)>> runs{
        [&](const EstimatorSettings& s) { return parallel_rbmc(q, sp, 20, 3, InterfaceMode::sampled, s); },
        [&](const EstimatorSettings& s) { return parallel_rbmc(q, sp, 0, 3, InterfaceMode::exact_interface, s); },
        [&](const EstimatorSettings& s) { return overlapping_rbmc(q, op, 20, 3, s); },
        [&](const EstimatorSettings& s) { return recursive_rbmc(q, 60, 20, 3, InterfaceMode::sampled, s); },
        [&](const EstimatorSettings& s) { return hutchinson_diag(q, 40, 3, s); },
        [&](const EstimatorSettings& s) { return probing_diag(q, 2, s); },
        [&](const EstimatorSettings& s) { return basic_rbmc(q, draw_samples(q, 20, 3, s).samples); },
    };
    double worst = 0.0;
    for (const auto& run : runs) {
      EstimatorSettings s;
      s.workers = 1;
      const auto ref = run(s).diag_variance;
      for (const int w : {2, 4, 8}) {
        s.workers = w;
        worst = std::max(worst, testing::max_rel_error(run(s).diag_variance, ref));
      }
    }
    v.detail << " (a) max deviation across workers {1,2,4,8}: " << worst << ";";
    v.require(worst <= 1e-13, "(a) results invariant across worker counts");
  }
  // (b) partition-loop wall time on a 100096-unknown space-time model
  {
    const Index side = 16, n_t = 391, slab = side * side;
    const SparseMatrix q = build_spacetime_precision(critical_diffusion(side, n_t, 4.0, 10.0));
    const auto plan = overlap_plan(q, 8, 2, PartitionStrategy::temporal_interval, slab);
    // Exact draws from the banded factor; the timing only needs valid input.
    const auto f = sparse_cholesky(q, Ordering::natural);
    std::vector<std::vector<double>> samples;
    for (std::uint64_t k = 0; k < 2; ++k)
      samples.push_back(triangular_solve(f, standard_normal(11, k, q.rows()), SolveMode::backward));
    std::vector<double> wall;
    for (const int w : {1, 2, 4}) {
      EstimatorSettings s;
      s.workers = w;
      wall.push_back(overlapping_rbmc(q, plan, samples, s).timing("partition_loop"));
    }
    v.detail << " (b) n=" << q.rows() << ", partition loop wall time 1/2/4 workers: " << wall[0] << " / " << wall[1]
             << " / " << wall[2] << " s";
    v.require(wall[1] < wall[0] && wall[2] < wall[1], "(b) wall time strictly decreasing from 1 to 4 workers");
  }
}

void criterion_9(Verdict& v) {
  double worst = 0.0;
  for (const Index n : {2, 17, 99, 200})
    for (const double phi : {0.3, 0.8, 0.95}) {
      const SparseMatrix q = build_ar1_precision(phi, n);
      // Entries are quadratic in φ, so the central difference is the derivative.
      const double h = 1e-3;
      const SparseMatrix dq = scale(add(build_ar1_precision(phi + h, n), build_ar1_precision(phi - h, n), 1.0, -1.0),
                                    0.5 / h);
      const double got = trace_inv_times(takahashi_selected_inverse(sparse_cholesky(q, Ordering::min_fill)), dq);
      const DenseMatrix inv = oracle::dense_inverse(q);
      double want = 0.0;
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) want += inv(i, j) * dq.at(j, i);
      const double e = std::abs(got - want) / std::abs(want);
      worst = std::max(worst, e);
      v.require(e <= 1e-10, "n=" + std::to_string(n) + " phi=" + std::to_string(phi));
    }
  v.detail << " 12 chains, worst relative error " << worst;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, void (*)(Verdict&)>> all{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9},
  };
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  bool ok = true;
  for (const auto& [id, run] : all) {
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << v.detail.str() << std::endl;
    ok = ok && v.pass;
  }
  return ok ? 0 : 1;
}
