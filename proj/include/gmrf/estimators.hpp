// Estimators of diag(Q⁻¹): Hutchinson, probing, Rao-Blackwellized Monte Carlo
// (basic, recursive, parallel and overlapping) and exact substructuring.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmrf/cholesky.hpp"
#include "gmrf/krylov.hpp"
#include "gmrf/partition.hpp"
#include "gmrf/sparse.hpp"

namespace gmrf {

enum class EstimatorKind {
  exact,
  hutchinson,
  probing,
  basic_rbmc,
  parallel_rbmc,
  parallel_rbmc_exact,
  overlapping_rbmc,
  recursive_rbmc,
  recursive_rbmc_exact,
};

std::string to_string(EstimatorKind kind);

enum class InterfaceMode { sampled, exact_interface };

class InterfaceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EstimatorSettings {
  KrylovSettings krylov;  // sampler
  double cg_rtol = 1e-10;
  int cg_maxit = 10000;
  /// Threads for the partition and sample loops (0: OpenMP default).
  int workers = 0;
  Ordering ordering = Ordering::min_fill;
  /// Local problems up to this size are inverted densely.
  Index dense_limit = 64;
  /// Largest separator for which the dense Schur complement is formed.
  Index interface_limit = 2000;
};

struct PartitionDiagnostics {
  Index owned = 0;          // |A_j|
  Index local_size = 0;     // |B_j| (or |A_j| without overlap)
  Index frontier_size = 0;  // |S_j| or the adjacent part of S
  Offset factor_nnz = 0;    // nonzeros of the local factor (dense: n(n+1)/2)
  bool dense = false;
  long correction_solves = 0;
};

struct MarginalResult {
  std::vector<double> diag_variance;
  EstimatorKind estimator = EstimatorKind::exact;
  int K = 0;
  int l = 0;
  std::vector<PartitionDiagnostics> partitions;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timings;  // phase → seconds
  /// Worst sampler / CG report seen.
  int max_iterations = 0;
  bool converged = true;

  double timing(const std::string& phase) const;
};

/// Factorization of a local principal submatrix reused for its selected
/// inverse and repeated solves. Dense at or below `dense_limit`.
class LocalSolver {
 public:
  LocalSolver(const SparseMatrix& q, const EstimatorSettings& settings);

  Index size() const { return n_; }
  bool dense() const { return dense_; }
  Offset factor_nnz() const;
  std::vector<double> inverse_diagonal() const;
  std::vector<double> solve(std::span<const double> b) const;

 private:
  Index n_ = 0;
  bool dense_ = false;
  DenseMatrix dense_factor_;
  std::optional<CholeskyFactor> sparse_factor_;
};

/// IC(0) of q, or the Jacobi factor (with a warning appended) on breakdown.
CholeskyFactor preconditioner_for(const SparseMatrix& q, std::vector<std::string>* warnings);

/// Global sample set from N(0, Q⁻¹) using preconditioner_for(q).
SampleSet draw_samples(const SparseMatrix& q, int K, std::uint64_t seed, const EstimatorSettings& settings,
                       std::vector<std::string>* warnings = nullptr);

/// Exact diag(Q⁻¹) by sparse Cholesky and Takahashi.
MarginalResult exact_diag(const SparseMatrix& q, const EstimatorSettings& settings = {});

MarginalResult hutchinson_diag(const SparseMatrix& q, int K, std::uint64_t seed,
                               const EstimatorSettings& settings = {});

/// Greedy distance-p coloring (lowest index first, smallest free color).
std::vector<Index> distance_coloring(const Graph& graph, int p);
MarginalResult probing_diag(const SparseMatrix& q, int p, const EstimatorSettings& settings = {});

/// 1/q_ii + (1/K) Σ_k (q_ii⁻¹ Q_{i,−i} x_{−i}^{(k)})².
MarginalResult basic_rbmc(const SparseMatrix& q, std::span<const std::vector<double>> samples);

/// Σ_SS = (Q_SS − Σ_j Q_{SA_j} Q_{A_jA_j}⁻¹ Q_{A_jS})⁻¹ over the global separator.
DenseMatrix schur_interface_variance(const SparseMatrix& q, const PartitionPlan& plan,
                                     const EstimatorSettings& settings = {});

MarginalResult parallel_rbmc(const SparseMatrix& q, const PartitionPlan& plan, int K, std::uint64_t seed,
                             InterfaceMode mode, const EstimatorSettings& settings = {});
/// Sampled variant with a caller-supplied sample set.
MarginalResult parallel_rbmc(const SparseMatrix& q, const PartitionPlan& plan,
                             std::span<const std::vector<double>> samples, const EstimatorSettings& settings = {});

/// Requires a covering plan (empty global separator) with extensions.
MarginalResult overlapping_rbmc(const SparseMatrix& q, const PartitionPlan& plan, int K, std::uint64_t seed,
                                const EstimatorSettings& settings = {});
MarginalResult overlapping_rbmc(const SparseMatrix& q, const PartitionPlan& plan,
                                std::span<const std::vector<double>> samples, const EstimatorSettings& settings = {});

MarginalResult recursive_rbmc(const SparseMatrix& q, Index base_size, int K, std::uint64_t seed, InterfaceMode mode,
                              const EstimatorSettings& settings = {});

/// CSV: node_id,variance,estimator,K,l
void write_marginal_csv(const std::filesystem::path& path, const MarginalResult& result);

}  // namespace gmrf
