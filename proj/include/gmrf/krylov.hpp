// Conjugate gradients, Lanczos tridiagonalization and the preconditioned
// Lanczos-quadrature sampler for N(0, Q⁻¹).
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gmrf/cholesky.hpp"
#include "gmrf/sparse.hpp"

namespace gmrf {

/// Symmetric linear map x ↦ y (y is fully overwritten).
struct LinearOperator {
  Index dimension = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;

  std::vector<double> operator()(std::span<const double> x) const;
};

/// Raised when pᵀQp ≤ 0 in CG or a Lanczos Ritz value is not positive.
class IndefiniteOperator : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

LinearOperator make_operator(const SparseMatrix& q);
/// L̂⁻¹ Q L̂⁻ᵀ for L̂ = P·L of `precond`. Both referents must outlive the operator.
LinearOperator split_preconditioned(const SparseMatrix& q, const CholeskyFactor& precond);

/// max over `trials` random pairs of |xᵀ(Ay) − (Ax)ᵀy| / (‖x‖‖Ay‖ + ‖Ax‖‖y‖).
double symmetry_defect(const LinearOperator& op, int trials = 3, std::uint64_t seed = 7);

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;  // ‖b − Qx‖ / ‖b‖
  bool converged = false;
};

struct CgResult {
  std::vector<double> x;
  SolveReport report;
};

/// Preconditioned CG; `precond` (may be null) is applied as (L̂L̂ᵀ)⁻¹.
CgResult cg_solve(const LinearOperator& op, const CholeskyFactor* precond, std::span<const double> b,
                  double rtol, int maxit);

struct LanczosDecomposition {
  std::vector<std::vector<double>> basis;  // V_m, orthonormal columns
  std::vector<double> diag;                // α_1..α_m
  std::vector<double> offdiag;             // β_2..β_m
  double beta = 0.0;                       // ‖b‖
  double next_beta = 0.0;                  // β_{m+1}
  std::vector<double> next_vector;         // v_{m+1} (empty after breakdown)
  double residual_estimate = 0.0;          // CG-equivalent relative residual
  bool breakdown = false;
  bool converged = false;

  int m() const { return static_cast<int>(diag.size()); }
};

/// Lanczos with full reorthogonalization (classical Gram–Schmidt, twice).
/// Stops once β_{m+1}|y_m|/β ≤ rtol where T_m y = βe₁, on breakdown (an
/// invariant subspace, counted as converged) or at maxit.
LanczosDecomposition lanczos(const LinearOperator& op, std::span<const double> b, double rtol, int maxit);

struct TridiagonalEigen {
  std::vector<double> values;     // ascending
  std::vector<double> first_row;  // first component of each eigenvector
  DenseMatrix vectors;            // column j is the eigenvector of values[j]
};

/// Implicit-shift QL on a symmetric tridiagonal matrix.
TridiagonalEigen tridiag_eig(std::span<const double> diag, std::span<const double> offdiag);

struct KrylovSettings {
  double rtol = 1e-10;
  int maxit = 1000;
  /// Also stop when ‖u_m − u_{m−1}‖/‖u_m‖ ≤ rtol.
  bool stagnation_rule = false;
};

struct InvSqrtResult {
  std::vector<double> x;
  SolveReport report;
};

/// Q^{-1/2}z ≈ V_m Ũ Λ^{-1/2} Ũᵀ (βe₁) on a fresh Krylov subspace.
InvSqrtResult apply_inv_sqrt(const LinearOperator& op, std::span<const double> z, const KrylovSettings& settings);

/// Standard normal stream k of `seed`: mt19937_64 seeded with
/// seed_seq{seed_lo, seed_hi, k_lo, k_hi}, Box–Muller in pairs (cos first), each
/// uniform taken from the top 53 bits.
std::vector<double> standard_normal(std::uint64_t seed, std::uint64_t k, Index n);

struct SampleSet {
  std::vector<std::vector<double>> samples;
  std::vector<SolveReport> reports;

  bool all_converged() const;
};

/// K draws from N(0, Q⁻¹): ũ = (L̂⁻¹QL̂⁻ᵀ)^{-1/2} z_k, u_k = L̂⁻ᵀ ũ. Samples are
/// generated concurrently over k with `workers` threads (0: OpenMP default)
/// and do not depend on the thread count.
SampleSet sample_gmrf(const SparseMatrix& q, const CholeskyFactor& precond, int K, std::uint64_t seed,
                      const KrylovSettings& settings, int workers = 0);

/// One sample per column.
void write_samples_csv(const std::filesystem::path& path, const SampleSet& set);

}  // namespace gmrf
