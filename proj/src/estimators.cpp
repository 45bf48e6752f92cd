#include "gmrf/estimators.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace gmrf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int thread_count(const EstimatorSettings& s) { return s.workers > 0 ? s.workers : omp_get_max_threads(); }

// Runs body(j) for j in [0, count) on `threads` threads and rethrows the
// exception of the lowest failing j.
template <class Body>
void parallel_loop(std::ptrdiff_t count, int threads, Body body) {
  std::exception_ptr error;
  std::ptrdiff_t error_j = count;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    try {
      body(j);
    } catch (...) {
#pragma omp critical(gmrf_estimator_error)
      if (j < error_j) {
        error_j = j;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

std::uint64_t mix_seed(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_samples(std::span<const std::vector<double>> samples, Index n) {
  if (samples.empty()) throw std::invalid_argument("RBMC: K must be >= 1");
  for (const auto& s : samples)
    if (static_cast<Index>(s.size()) != n) throw DimensionError("RBMC: sample length does not match Q");
}

void finish(MarginalResult& r) {
  for (std::size_t i = 0; i < r.diag_variance.size(); ++i)
    if (!(r.diag_variance[i] > 0.0)) {
      r.warnings.push_back("non-positive variance estimate at node " + std::to_string(i));
      break;
    }
}

// Σ_k (Q_BB⁻¹ Q_BF u_F^{(k)})² / K for every position of B.
std::vector<double> sampled_correction(const SparseMatrix& q, const LocalSolver& solver, std::span<const Index> b,
                                       std::span<const Index> frontier,
                                       std::span<const std::vector<double>> samples) {
  std::vector<double> acc(b.size(), 0.0);
  if (frontier.empty()) return acc;
  const SparseMatrix coupling = extract_offdiag_block(q, b, frontier);
  std::vector<double> uf(frontier.size()), rhs(b.size());
  for (const auto& u : samples) {
    for (std::size_t t = 0; t < frontier.size(); ++t) uf[t] = u[frontier[t]];
    spmv_serial(coupling, uf, rhs);
    const auto m = solver.solve(rhs);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m[i] * m[i];
  }
  const double k = static_cast<double>(samples.size());
  for (auto& a : acc) a /= k;
  return acc;
}

// diag(W Σ Wᵀ), W = Q_AA⁻¹ Q_AS restricted to the separator columns touching A.
std::vector<double> exact_correction(const SparseMatrix& q, const LocalSolver& solver, std::span<const Index> a,
                                     std::span<const Index> separator, const DenseMatrix& sigma_ss,
                                     long* solves) {
  std::vector<double> acc(a.size(), 0.0);
  if (separator.empty()) return acc;
  const SparseMatrix coupling = extract_offdiag_block(q, a, separator);
  const SparseMatrix ct = coupling.transpose();
  std::vector<Index> touching;
  std::vector<std::vector<double>> w;
  for (Index c = 0; c < ct.rows(); ++c) {
    const auto r = ct.row(c);
    if (r.cols.empty()) continue;
    std::vector<double> col(a.size(), 0.0);
    for (std::size_t p = 0; p < r.cols.size(); ++p) col[r.cols[p]] = r.values[p];
    w.push_back(solver.solve(col));
    touching.push_back(c);
    if (solves) ++*solves;
  }
  for (std::size_t x = 0; x < touching.size(); ++x)
    for (std::size_t y = 0; y < touching.size(); ++y) {
      const double s = sigma_ss(touching[x], touching[y]);
      if (s == 0.0) continue;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[x][i] * s * w[y][i];
    }
  return acc;
}

void require_separator_plan(const SparseMatrix& q, const PartitionPlan& plan, const char* who) {
  if (plan.n != q.rows()) throw DimensionError(std::string(who) + ": plan size does not match Q");
  const Graph g = graph_from_precision(q);
  const std::string msg = validate_plan(g, plan);
  if (!msg.empty()) throw std::invalid_argument(std::string(who) + ": invalid plan: " + msg);
  Index covered = static_cast<Index>(plan.separator.size());
  for (const auto& p : plan.parts) covered += static_cast<Index>(p.size());
  if (covered != q.rows()) throw std::invalid_argument(std::string(who) + ": parts and separator do not cover Q");
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::exact: return "exact";
    case EstimatorKind::hutchinson: return "hutchinson";
    case EstimatorKind::probing: return "probing";
    case EstimatorKind::basic_rbmc: return "basic_rbmc";
    case EstimatorKind::parallel_rbmc: return "parallel_rbmc";
    case EstimatorKind::parallel_rbmc_exact: return "parallel_rbmc_exact";
    case EstimatorKind::overlapping_rbmc: return "overlapping_rbmc";
    case EstimatorKind::recursive_rbmc: return "recursive_rbmc";
    case EstimatorKind::recursive_rbmc_exact: return "recursive_rbmc_exact";
  }
  return "unknown";
}

double MarginalResult::timing(const std::string& phase) const {
  for (const auto& [name, t] : timings)
    if (name == phase) return t;
  return 0.0;
}

LocalSolver::LocalSolver(const SparseMatrix& q, const EstimatorSettings& settings) : n_(q.rows()) {
  if (!q.is_square()) throw DimensionError("LocalSolver: matrix not square");
  dense_ = n_ <= settings.dense_limit;
  if (dense_) {
    dense_factor_ = q.to_dense();
    dense_cholesky_inplace(dense_factor_);
  } else {
    sparse_factor_.emplace(sparse_cholesky(q, settings.ordering));
  }
}

Offset LocalSolver::factor_nnz() const {
  return dense_ ? static_cast<Offset>(n_) * (n_ + 1) / 2 : sparse_factor_->nnz();
}

std::vector<double> LocalSolver::inverse_diagonal() const {
  if (!dense_) return selected_inverse_diagonal(*sparse_factor_);
  // diag(A⁻¹)_i = Σ_k (L⁻¹)_{ki}²; column i of L⁻¹ by forward substitution.
  std::vector<double> d(static_cast<std::size_t>(n_), 0.0), x(static_cast<std::size_t>(n_));
  for (Index i = 0; i < n_; ++i) {
    std::fill(x.begin(), x.end(), 0.0);
    x[i] = 1.0 / dense_factor_(i, i);
    double s = x[i] * x[i];
    for (Index r = i + 1; r < n_; ++r) {
      double acc = 0.0;
      for (Index c = i; c < r; ++c) acc -= dense_factor_(r, c) * x[c];
      x[r] = acc / dense_factor_(r, r);
      s += x[r] * x[r];
    }
    d[i] = s;
  }
  return d;
}

std::vector<double> LocalSolver::solve(std::span<const double> b) const {
  if (dense_) return dense_cholesky_solve(dense_factor_, b);
  return triangular_solve(*sparse_factor_, b, SolveMode::full);
}

CholeskyFactor preconditioner_for(const SparseMatrix& q, std::vector<std::string>* warnings) {
  try {
    return ic0(q);
  } catch (const Ic0Breakdown& e) {
    if (warnings) warnings->push_back(std::string(e.what()) + "; using the Jacobi preconditioner");
    return jacobi_factor(q);
  }
}

SampleSet draw_samples(const SparseMatrix& q, int K, std::uint64_t seed, const EstimatorSettings& settings,
                       std::vector<std::string>* warnings) {
  const CholeskyFactor precond = preconditioner_for(q, warnings);
  SampleSet set = sample_gmrf(q, precond, K, seed, settings.krylov, settings.workers);
  if (!set.all_converged() && warnings) warnings->push_back("sampler: Lanczos did not converge for some samples");
  return set;
}

MarginalResult exact_diag(const SparseMatrix& q, const EstimatorSettings& settings) {
  const auto t0 = Clock::now();
  const LocalSolver solver(q, settings);
  MarginalResult r;
  r.estimator = EstimatorKind::exact;
  r.diag_variance = solver.inverse_diagonal();
  r.partitions.push_back({q.rows(), q.rows(), 0, solver.factor_nnz(), solver.dense(), 0});
  r.timings.emplace_back("factorization", seconds_since(t0));
  finish(r);
  return r;
}

MarginalResult hutchinson_diag(const SparseMatrix& q, int K, std::uint64_t seed, const EstimatorSettings& settings) {
  if (K < 1) throw std::invalid_argument("hutchinson_diag: K must be >= 1");
  const auto t0 = Clock::now();
  MarginalResult r;
  r.estimator = EstimatorKind::hutchinson;
  r.K = K;
  const Index n = q.rows();
  const CholeskyFactor precond = preconditioner_for(q, &r.warnings);
  const LinearOperator op = make_operator(q);
  std::vector<double> num(static_cast<std::size_t>(n), 0.0), den(static_cast<std::size_t>(n), 0.0);
  constexpr int chunk = 64;
  std::vector<std::vector<double>> prod(chunk), sq(chunk);
  std::vector<SolveReport> reports(chunk);
  for (int base = 0; base < K; base += chunk) {
    const int count = std::min(chunk, K - base);
    parallel_loop(count, thread_count(settings), [&](std::ptrdiff_t c) {
      const auto z = standard_normal(seed, static_cast<std::uint64_t>(base + c), n);
      const auto res = cg_solve(op, &precond, z, settings.cg_rtol, settings.cg_maxit);
      prod[c].resize(static_cast<std::size_t>(n));
      sq[c].resize(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        prod[c][i] = z[i] * res.x[i];
        sq[c][i] = z[i] * z[i];
      }
      reports[c] = res.report;
    });
    for (int c = 0; c < count; ++c) {
      for (Index i = 0; i < n; ++i) {
        num[i] += prod[c][i];
        den[i] += sq[c][i];
      }
      r.max_iterations = std::max(r.max_iterations, reports[c].iterations);
      r.converged = r.converged && reports[c].converged;
    }
  }
  r.diag_variance.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (den[i] < 1e-300) throw std::runtime_error("hutchinson_diag: vanishing denominator at node " + std::to_string(i));
    r.diag_variance[i] = num[i] / den[i];
  }
  r.timings.emplace_back("solves", seconds_since(t0));
  finish(r);
  return r;
}

std::vector<Index> distance_coloring(const Graph& graph, int p) {
  if (p < 1) throw std::invalid_argument("distance_coloring: p must be >= 1");
  const Index n = graph.n;
  std::vector<Index> color(static_cast<std::size_t>(n), -1);
  std::vector<Index> mark(static_cast<std::size_t>(n), -1);  // BFS visit stamp
  std::vector<Index> depth(static_cast<std::size_t>(n), 0);
  std::vector<char> used;
  std::vector<Index> frontier;
  for (Index v = 0; v < n; ++v) {
    used.assign(used.size(), 0);
    frontier.assign(1, v);
    mark[v] = v;
    depth[v] = 0;
    for (std::size_t h = 0; h < frontier.size(); ++h) {
      const Index x = frontier[h];
      if (color[x] >= 0) {
        if (static_cast<std::size_t>(color[x]) >= used.size()) used.resize(static_cast<std::size_t>(color[x]) + 1, 0);
        used[color[x]] = 1;
      }
      if (depth[x] == p) continue;
      for (const Index w : graph.adjacency[x])
        if (mark[w] != v) {
          mark[w] = v;
          depth[w] = depth[x] + 1;
          frontier.push_back(w);
        }
    }
    Index c = 0;
    while (static_cast<std::size_t>(c) < used.size() && used[c]) ++c;
    color[v] = c;
  }
  return color;
}

MarginalResult probing_diag(const SparseMatrix& q, int p, const EstimatorSettings& settings) {
  if (p < 1) throw std::invalid_argument("probing_diag: p must be >= 1");
  const auto t0 = Clock::now();
  MarginalResult r;
  r.estimator = EstimatorKind::probing;
  const Index n = q.rows();
  const auto color = distance_coloring(graph_from_precision(q), p);
  const Index colors = n == 0 ? 0 : *std::max_element(color.begin(), color.end()) + 1;
  r.K = colors;
  if (2 * colors > n)
    r.warnings.push_back("probing: " + std::to_string(colors) + " colors exceed n/2; probing is no cheaper than exact");
  const CholeskyFactor precond = preconditioner_for(q, &r.warnings);
  const LinearOperator op = make_operator(q);
  r.diag_variance.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<SolveReport> reports(static_cast<std::size_t>(colors));
  parallel_loop(colors, thread_count(settings), [&](std::ptrdiff_t c) {
    std::vector<double> z(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i)
      if (color[i] == c) z[i] = 1.0;
    const auto res = cg_solve(op, &precond, z, settings.cg_rtol, settings.cg_maxit);
    for (Index i = 0; i < n; ++i)
      if (color[i] == c) r.diag_variance[i] = res.x[i];
    reports[c] = res.report;
  });
  for (const auto& rep : reports) {
    r.max_iterations = std::max(r.max_iterations, rep.iterations);
    r.converged = r.converged && rep.converged;
  }
  r.timings.emplace_back("solves", seconds_since(t0));
  finish(r);
  return r;
}

MarginalResult basic_rbmc(const SparseMatrix& q, std::span<const std::vector<double>> samples) {
  const Index n = q.rows();
  check_samples(samples, n);
  MarginalResult r;
  r.estimator = EstimatorKind::basic_rbmc;
  r.K = static_cast<int>(samples.size());
  r.diag_variance.assign(static_cast<std::size_t>(n), 0.0);
  const auto k = static_cast<double>(samples.size());
  for (Index i = 0; i < n; ++i) {
    const auto row = q.row(i);
    double qii = 0.0;
    for (std::size_t p = 0; p < row.cols.size(); ++p)
      if (row.cols[p] == i) qii = row.values[p];
    if (!(qii > 0.0)) throw NotPositiveDefinite(i);
    double acc = 0.0;
    for (const auto& x : samples) {
      double m = 0.0;
      for (std::size_t p = 0; p < row.cols.size(); ++p)
        if (row.cols[p] != i) m += row.values[p] * x[row.cols[p]];
      m /= qii;
      acc += m * m;
    }
    r.diag_variance[i] = 1.0 / qii + acc / k;
  }
  finish(r);
  return r;
}

DenseMatrix schur_interface_variance(const SparseMatrix& q, const PartitionPlan& plan,
                                     const EstimatorSettings& settings) {
  require_separator_plan(q, plan, "schur_interface_variance");
  const auto& sep = plan.separator;
  const auto ns = static_cast<Index>(sep.size());
  if (ns == 0) return DenseMatrix(0, 0);
  if (ns > settings.interface_limit)
    throw InterfaceTooLarge("schur_interface_variance: interface too large (|S| = " + std::to_string(ns) +
                            ", limit " + std::to_string(settings.interface_limit) + ")");
  DenseMatrix schur = extract_principal_submatrix(q, sep).to_dense();
  std::vector<DenseMatrix> terms(plan.parts.size(), DenseMatrix(ns, ns));
  parallel_loop(plan.part_count(), thread_count(settings), [&](std::ptrdiff_t j) {
    const auto& a = plan.parts[j];
    if (a.empty()) return;
    const SparseMatrix coupling = extract_offdiag_block(q, a, sep);
    const SparseMatrix ct = coupling.transpose();
    const LocalSolver solver(extract_principal_submatrix(q, a), settings);
    for (Index c = 0; c < ns; ++c) {
      const auto r = ct.row(c);
      if (r.cols.empty()) continue;
      std::vector<double> col(a.size(), 0.0);
      for (std::size_t p = 0; p < r.cols.size(); ++p) col[r.cols[p]] = r.values[p];
      const auto w = solver.solve(col);
      const auto proj = spmv(ct, w);  // Q_SA Q_AA⁻¹ Q_AS e_c
      for (Index s = 0; s < ns; ++s) terms[j](s, c) = proj[s];
    }
  });
  for (const auto& t : terms)
    for (Index s = 0; s < ns; ++s)
      for (Index c = 0; c < ns; ++c) schur(s, c) -= t(s, c);
  // Symmetrize roundoff before inverting.
  for (Index s = 0; s < ns; ++s)
    for (Index c = s + 1; c < ns; ++c) schur(s, c) = schur(c, s) = 0.5 * (schur(s, c) + schur(c, s));
  return dense_spd_inverse(schur);
}

namespace {

MarginalResult parallel_rbmc_impl(const SparseMatrix& q, const PartitionPlan& plan,
                                  std::span<const std::vector<double>> samples, const DenseMatrix* sigma_ss,
                                  const EstimatorSettings& settings, MarginalResult r) {
  const Index n = q.rows();
  const auto& sep = plan.separator;
  r.diag_variance.assign(static_cast<std::size_t>(n), 0.0);
  r.partitions.resize(plan.parts.size());
  const auto t0 = Clock::now();
  std::vector<std::optional<LocalSolver>> solvers(plan.parts.size());
  parallel_loop(plan.part_count(), thread_count(settings), [&](std::ptrdiff_t j) {
    const auto& a = plan.parts[j];
    if (a.empty()) return;
    solvers[j].emplace(extract_principal_submatrix(q, a), settings);
    const auto d = solvers[j]->inverse_diagonal();
    for (std::size_t i = 0; i < a.size(); ++i) r.diag_variance[a[i]] = d[i];
    auto& diag = r.partitions[j];
    diag.owned = diag.local_size = static_cast<Index>(a.size());
    diag.factor_nnz = solvers[j]->factor_nnz();
    diag.dense = solvers[j]->dense();
  });
  r.timings.emplace_back("factorization", seconds_since(t0));

  const auto t1 = Clock::now();
  parallel_loop(plan.part_count(), thread_count(settings), [&](std::ptrdiff_t j) {
    const auto& a = plan.parts[j];
    if (a.empty() || sep.empty()) return;
    // Separator vertices adjacent to A_j; the rest do not enter Q_{A_jS}.
    const SparseMatrix ct = extract_offdiag_block(q, a, sep).transpose();
    Index touching = 0;
    for (Index c = 0; c < ct.rows(); ++c) touching += ct.row(c).cols.empty() ? 0 : 1;
    r.partitions[j].frontier_size = touching;
    std::vector<double> add;
    if (sigma_ss) {
      add = exact_correction(q, *solvers[j], a, sep, *sigma_ss, &r.partitions[j].correction_solves);
    } else {
      add = sampled_correction(q, *solvers[j], a, sep, samples);
      r.partitions[j].correction_solves = static_cast<long>(samples.size());
    }
    for (std::size_t i = 0; i < a.size(); ++i) r.diag_variance[a[i]] += add[i];
  });
  for (std::size_t t = 0; t < sep.size(); ++t) {
    if (sigma_ss) {
      r.diag_variance[sep[t]] = (*sigma_ss)(static_cast<Index>(t), static_cast<Index>(t));
    } else {
      double acc = 0.0;
      for (const auto& u : samples) acc += u[sep[t]] * u[sep[t]];
      r.diag_variance[sep[t]] = acc / static_cast<double>(samples.size());
    }
  }
  if (!sigma_ss && !sep.empty())
    r.warnings.push_back("separator variances are plain Monte Carlo estimates (lowest accuracy region)");
  r.timings.emplace_back("correction", seconds_since(t1));
  finish(r);
  return r;
}

}  // namespace

MarginalResult parallel_rbmc(const SparseMatrix& q, const PartitionPlan& plan, int K, std::uint64_t seed,
                             InterfaceMode mode, const EstimatorSettings& settings) {
  require_separator_plan(q, plan, "parallel_rbmc");
  MarginalResult r;
  r.K = plan.separator.empty() ? 0 : K;
  if (mode == InterfaceMode::exact_interface) {
    r.estimator = EstimatorKind::parallel_rbmc_exact;
    const auto t0 = Clock::now();
    const DenseMatrix sigma = schur_interface_variance(q, plan, settings);
    r.timings.emplace_back("interface", seconds_since(t0));
    r.K = 0;
    return parallel_rbmc_impl(q, plan, {}, &sigma, settings, std::move(r));
  }
  r.estimator = EstimatorKind::parallel_rbmc;
  if (plan.separator.empty()) return parallel_rbmc_impl(q, plan, {}, nullptr, settings, std::move(r));
  if (K < 1) throw std::invalid_argument("parallel_rbmc: K must be >= 1");
  const auto t0 = Clock::now();
  const SampleSet set = draw_samples(q, K, seed, settings, &r.warnings);
  r.timings.emplace_back("sampling", seconds_since(t0));
  for (const auto& rep : set.reports) {
    r.max_iterations = std::max(r.max_iterations, rep.iterations);
    r.converged = r.converged && rep.converged;
  }
  return parallel_rbmc_impl(q, plan, set.samples, nullptr, settings, std::move(r));
}

MarginalResult parallel_rbmc(const SparseMatrix& q, const PartitionPlan& plan,
                             std::span<const std::vector<double>> samples, const EstimatorSettings& settings) {
  require_separator_plan(q, plan, "parallel_rbmc");
  if (!plan.separator.empty()) check_samples(samples, q.rows());
  MarginalResult r;
  r.estimator = EstimatorKind::parallel_rbmc;
  r.K = static_cast<int>(samples.size());
  return parallel_rbmc_impl(q, plan, samples, nullptr, settings, std::move(r));
}

MarginalResult overlapping_rbmc(const SparseMatrix& q, const PartitionPlan& plan,
                                std::span<const std::vector<double>> samples, const EstimatorSettings& settings) {
  const Index n = q.rows();
  if (plan.n != n) throw DimensionError("overlapping_rbmc: plan size does not match Q");
  if (!plan.has_extensions()) throw std::invalid_argument("overlapping_rbmc: plan has no extensions");
  if (!plan.separator.empty())
    throw std::invalid_argument("overlapping_rbmc: plan keeps a global separator; absorb it into the parts first");
  const Graph g = graph_from_precision(q);
  if (const auto msg = validate_plan(g, plan); !msg.empty())
    throw std::invalid_argument("overlapping_rbmc: invalid plan: " + msg);
  Index covered = 0;
  for (const auto& p : plan.parts) covered += static_cast<Index>(p.size());
  if (covered != n) throw std::invalid_argument("overlapping_rbmc: parts do not cover Q");
  const bool needs_samples = std::any_of(plan.frontiers.begin(), plan.frontiers.end(),
                                         [](const auto& s) { return !s.empty(); });
  if (needs_samples) check_samples(samples, n);

  MarginalResult r;
  r.estimator = EstimatorKind::overlapping_rbmc;
  r.K = needs_samples ? static_cast<int>(samples.size()) : 0;
  r.l = plan.overlap;
  r.diag_variance.assign(static_cast<std::size_t>(n), 0.0);
  r.partitions.resize(plan.parts.size());
  double factor_time = 0.0, correction_time = 0.0;
  const auto loop_start = Clock::now();
  parallel_loop(plan.part_count(), thread_count(settings), [&](std::ptrdiff_t j) {
    const auto& b = plan.extended[j];
    const auto& s = plan.frontiers[j];
    const auto t0 = Clock::now();
    const LocalSolver solver(extract_principal_submatrix(q, b), settings);
    auto d = solver.inverse_diagonal();
    const double tf = seconds_since(t0);
    const auto t1 = Clock::now();
    if (!s.empty()) {
      const auto add = sampled_correction(q, solver, b, s, samples);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += add[i];
    }
    const double tc = seconds_since(t1);
    const auto sel = partition_of_unity(plan, static_cast<Index>(j));
    const auto& a = plan.parts[j];
    for (std::size_t t = 0; t < a.size(); ++t) r.diag_variance[a[t]] = d[sel[t]];
    auto& diag = r.partitions[j];
    diag.owned = static_cast<Index>(a.size());
    diag.local_size = static_cast<Index>(b.size());
    diag.frontier_size = static_cast<Index>(s.size());
    diag.factor_nnz = solver.factor_nnz();
    diag.dense = solver.dense();
    diag.correction_solves = s.empty() ? 0 : static_cast<long>(samples.size());
#pragma omp critical(gmrf_overlap_timing)
    {
      factor_time += tf;
      correction_time += tc;
    }
  });
  const double loop_wall = seconds_since(loop_start);
  // Summed over partitions (CPU seconds, not wall time).
  r.timings.emplace_back("factorization", factor_time);
  r.timings.emplace_back("correction", correction_time);
  r.timings.emplace_back("partition_loop", loop_wall);
  finish(r);
  return r;
}

MarginalResult overlapping_rbmc(const SparseMatrix& q, const PartitionPlan& plan, int K, std::uint64_t seed,
                                const EstimatorSettings& settings) {
  const bool needs_samples = plan.has_extensions() &&
                             std::any_of(plan.frontiers.begin(), plan.frontiers.end(),
                                         [](const auto& s) { return !s.empty(); });
  std::vector<std::string> warnings;
  SampleSet set;
  double sampling = 0.0;
  if (needs_samples) {
    if (K < 1) throw std::invalid_argument("overlapping_rbmc: K must be >= 1");
    const auto t0 = Clock::now();
    set = draw_samples(q, K, seed, settings, &warnings);
    sampling = seconds_since(t0);
  }
  MarginalResult r = overlapping_rbmc(q, plan, set.samples, settings);
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  r.timings.insert(r.timings.begin() + 1, {"sampling", sampling});
  for (const auto& rep : set.reports) {
    r.max_iterations = std::max(r.max_iterations, rep.iterations);
    r.converged = r.converged && rep.converged;
  }
  return r;
}

namespace {

struct RecursionContext {
  Index base_size;
  int K;
  std::uint64_t seed;
  InterfaceMode mode;
  const EstimatorSettings* settings;
  MarginalResult* result;
};

// Fills out[t] with the variance of local vertex t of `q` given everything
// outside it.
void recursive_node(const SparseMatrix& q, int depth, std::uint64_t node, const RecursionContext& ctx,
                    std::span<double> out) {
  if (depth > 32) throw std::runtime_error("recursive_rbmc: recursion depth exceeds 32");
  const Index n = q.rows();
  auto leaf = [&] {
    const LocalSolver solver(q, *ctx.settings);
    const auto d = solver.inverse_diagonal();
    std::copy(d.begin(), d.end(), out.begin());
    ctx.result->partitions.push_back({n, n, 0, solver.factor_nnz(), solver.dense(), 0});
  };
  if (n <= ctx.base_size) return leaf();
  const Graph g = graph_from_precision(q);
  PartitionPlan plan;
  try {
    plan = partition(g, 2, {PartitionStrategy::recursive_bisection, true, 1});
  } catch (const std::invalid_argument&) {
    return leaf();  // too small to split further
  }
  const auto& sep = plan.separator;
  std::vector<std::vector<double>> samples;
  DenseMatrix sigma;
  if (!sep.empty()) {
    if (ctx.mode == InterfaceMode::exact_interface) {
      sigma = schur_interface_variance(q, plan, *ctx.settings);
    } else {
      auto set = draw_samples(q, ctx.K, mix_seed(ctx.seed ^ mix_seed(node)), *ctx.settings, &ctx.result->warnings);
      for (const auto& rep : set.reports) {
        ctx.result->max_iterations = std::max(ctx.result->max_iterations, rep.iterations);
        ctx.result->converged = ctx.result->converged && rep.converged;
      }
      samples = std::move(set.samples);
    }
  }
  for (int side = 0; side < 2; ++side) {
    const auto& a = plan.parts[side];
    const SparseMatrix qa = extract_principal_submatrix(q, a);
    std::vector<double> local(a.size());
    recursive_node(qa, depth + 1, 2 * node + static_cast<std::uint64_t>(side), ctx, local);
    if (!sep.empty()) {
      const LocalSolver solver(qa, *ctx.settings);
      const auto add = ctx.mode == InterfaceMode::exact_interface
                           ? exact_correction(q, solver, a, sep, sigma, nullptr)
                           : sampled_correction(q, solver, a, sep, samples);
      for (std::size_t i = 0; i < a.size(); ++i) local[i] += add[i];
    }
    for (std::size_t i = 0; i < a.size(); ++i) out[a[i]] = local[i];
  }
  for (std::size_t t = 0; t < sep.size(); ++t) {
    if (ctx.mode == InterfaceMode::exact_interface) {
      out[sep[t]] = sigma(static_cast<Index>(t), static_cast<Index>(t));
    } else {
      double acc = 0.0;
      for (const auto& u : samples) acc += u[sep[t]] * u[sep[t]];
      out[sep[t]] = acc / static_cast<double>(samples.size());
    }
  }
}

}  // namespace

MarginalResult recursive_rbmc(const SparseMatrix& q, Index base_size, int K, std::uint64_t seed, InterfaceMode mode,
                              const EstimatorSettings& settings) {
  if (base_size < 1) throw std::invalid_argument("recursive_rbmc: base_size must be >= 1");
  if (mode == InterfaceMode::sampled && K < 1) throw std::invalid_argument("recursive_rbmc: K must be >= 1");
  if (!q.is_square()) throw DimensionError("recursive_rbmc: matrix not square");
  const auto t0 = Clock::now();
  MarginalResult r;
  r.estimator = mode == InterfaceMode::exact_interface ? EstimatorKind::recursive_rbmc_exact
                                                       : EstimatorKind::recursive_rbmc;
  r.K = mode == InterfaceMode::exact_interface ? 0 : K;
  r.diag_variance.assign(static_cast<std::size_t>(q.rows()), 0.0);
  const RecursionContext ctx{base_size, K, seed, mode, &settings, &r};
  recursive_node(q, 0, 1, ctx, r.diag_variance);
  r.timings.emplace_back("total", seconds_since(t0));
  finish(r);
  return r;
}

void write_marginal_csv(const std::filesystem::path& path, const MarginalResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "node_id,variance,estimator,K,l\n" << std::setprecision(17);
  const std::string name = to_string(result.estimator);
  for (std::size_t i = 0; i < result.diag_variance.size(); ++i)
    out << i << "," << result.diag_variance[i] << "," << name << "," << result.K << "," << result.l << "\n";
}

}  // namespace gmrf
