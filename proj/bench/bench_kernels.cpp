// Serial vs OpenMP timings for the hot kernels: sparse mat-vec, sampling
// and the partition loop of the overlapping estimator.
#include <chrono>
#include <cmath>
#include <iostream>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "gmrf/estimators.hpp"
#include "gmrf/model.hpp"
#include "gmrf/partition.hpp"

using namespace gmrf;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmarks"};
  Index nx = 16, nt = 100;
  int K = 10, parts = 8, l = 2, reps = 3;
  std::vector<int> workers{1, 2, 4, 8};
  app.add_option("--nx", nx, "spatial side (nx x nx)");
  app.add_option("--nt", nt, "time slabs");
  app.add_option("-K", K, "samples");
  app.add_option("-J", parts, "partitions");
  app.add_option("-l", l, "overlap");
  app.add_option("--reps", reps, "repetitions per timing (best kept)");
  app.add_option("--workers", workers, "thread counts")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  SpaceTimeSpec spec;
  spec.spatial.nx = spec.spatial.ny = nx;
  spec.n_t = nt;
  const SparseMatrix q = build_spacetime_precision(spec);
  const Index n = q.rows();
  const Graph g = graph_from_precision(q);
  PartitionOptions opt;
  opt.slab_size = nx * nx;
  const PartitionPlan plan = expand_overlap(g, partition(g, parts, opt), l);

  EstimatorSettings s;
  std::vector<double> x(static_cast<std::size_t>(n), 1.0), y(x.size());
  const double serial = best_of(reps, [&] { for (int k = 0; k < 20; ++k) spmv_serial(q, x, y); });

  nlohmann::ordered_json out;
  out["n"] = n;
  out["nnz"] = q.nnz();
  out["max_threads"] = omp_get_max_threads();
  out["spmv_serial_x20"] = serial;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  std::vector<double> reference;
  double worst = 0.0;
  for (int w : workers) {
    omp_set_num_threads(w);
    const double par = best_of(reps, [&] { for (int k = 0; k < 20; ++k) spmv_into(q, x, y); });
    s.workers = w;
    SampleSet set;
    const double sampling = best_of(1, [&] { set = draw_samples(q, K, 1, s); });
    MarginalResult r;
    const double loop = best_of(reps, [&] { r = overlapping_rbmc(q, plan, set.samples, s); });
    if (reference.empty()) reference = r.diag_variance;
    for (std::size_t i = 0; i < reference.size(); ++i)
      worst = std::max(worst, std::abs(r.diag_variance[i] - reference[i]) / reference[i]);
    runs.push_back({{"workers", w},
                    {"spmv_x20", par},
                    {"spmv_speedup", serial / par},
                    {"sampling", sampling},
                    {"overlapping_total", loop},
                    {"partition_loop", r.timing("partition_loop")}});
  }
  out["runs"] = runs;
  out["max_rel_diff"] = worst;
  std::cout << out.dump(2) << "\n";
  return worst <= 1e-13 ? 0 : 1;
}
