// Sparse Cholesky, IC(0), triangular solves and Takahashi selected inversion.
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmrf/sparse.hpp"

namespace gmrf {

/// min_fill: whichever of natural and amd_like gives the smaller factor.
enum class Ordering { natural, amd_like, min_fill };
enum class SolveMode { forward, backward, full };

/// IC(0) met a non-positive pivot. The caller may switch to jacobi_factor().
class Ic0Breakdown : public std::runtime_error {
 public:
  explicit Ic0Breakdown(Index row)
      : std::runtime_error("IC(0) breakdown at row " + std::to_string(row)), row_(row) {}
  Index row() const { return row_; }

 private:
  Index row_;
};

/// Lower factor L of the symmetrically permuted matrix, P·L·Lᵀ·Pᵀ = A.
///
/// Columns are stored compressed: column k keeps its diagonal first and then
/// strictly increasing row indices. `permutation()[k]` is the original index
/// of pivot k.
class CholeskyFactor {
 public:
  CholeskyFactor(Index n, std::vector<Offset> col_offsets, std::vector<Index> row_indices,
                 std::vector<double> values, std::vector<Index> permutation, bool is_complete);

  Index size() const { return n_; }
  bool is_complete() const { return complete_; }
  Offset nnz() const { return static_cast<Offset>(values_.size()); }
  std::span<const Index> permutation() const { return perm_; }
  std::span<const Offset> col_offsets() const { return col_offsets_; }
  std::span<const Index> row_indices() const { return row_indices_; }
  std::span<const double> values() const { return values_; }

  /// L as a row-compressed lower triangular matrix (permuted indexing).
  SparseMatrix lower_triangle() const;

  // In-place kernels on already-permuted vectors.
  void lower_solve_inplace(std::span<double> x) const;         // L x = b
  void lower_transpose_solve_inplace(std::span<double> x) const;  // Lᵀ x = b
  void lower_multiply_inplace(std::span<double> x) const;       // x ← L x

 private:
  Index n_;
  std::vector<Offset> col_offsets_;
  std::vector<Index> row_indices_;
  std::vector<double> values_;
  std::vector<Index> perm_;
  bool complete_;
};

/// Minimum-degree ordering on the explicit elimination graph; ties go to the
/// lowest vertex index.
std::vector<Index> minimum_degree_ordering(const SparseMatrix& a);

/// Nonzeros of L under `permutation`, diagonal included (symbolic only).
Offset symbolic_factor_nnz(const SparseMatrix& a, std::span<const Index> permutation);
std::vector<Index> fill_reducing_permutation(const SparseMatrix& a, Ordering ordering);

CholeskyFactor sparse_cholesky(const SparseMatrix& a, Ordering ordering = Ordering::natural);
/// Factorization with a caller-supplied permutation.
CholeskyFactor sparse_cholesky(const SparseMatrix& a, std::span<const Index> permutation);

/// Incomplete Cholesky restricted to the lower pattern of `a`. Throws
/// Ic0Breakdown; never shifts silently.
CholeskyFactor ic0(const SparseMatrix& a);
/// Diagonal factor sqrt(diag(a)), the explicit fallback for IC(0).
CholeskyFactor jacobi_factor(const SparseMatrix& a);

/// With L̂ = P·L: forward solves L̂x=b, backward solves L̂ᵀx=b and full solves
/// L̂L̂ᵀx=b.
std::vector<double> triangular_solve(const CholeskyFactor& f, std::span<const double> b, SolveMode mode);
/// x ← L̂ x
std::vector<double> apply_factor(const CholeskyFactor& f, std::span<const double> x);

/// Entries of A⁻¹ on the filled pattern of L + Lᵀ, from the Takahashi
/// recursion.
class SelectedInverse {
 public:
  SelectedInverse(const CholeskyFactor& f, std::vector<double> z);

  Index size() const { return n_; }
  /// Original-index lookup; nullopt when (i, j) lies outside the pattern.
  std::optional<double> value(Index i, Index j) const;
  /// diag(A⁻¹) in original ordering.
  std::vector<double> diagonal() const;
  /// Full symmetric pattern in original ordering (zeros kept out).
  SparseMatrix to_sparse() const;
  Offset pattern_nnz() const { return static_cast<Offset>(z_.size()); }

 private:
  Index n_;
  std::vector<Offset> col_offsets_;
  std::vector<Index> row_indices_;
  std::vector<double> z_;
  std::vector<Index> perm_;
  std::vector<Index> inverse_perm_;
};

SelectedInverse takahashi_selected_inverse(const CholeskyFactor& f);
/// Diagonal only; same recursion.
std::vector<double> selected_inverse_diagonal(const CholeskyFactor& f);

}  // namespace gmrf
