// Compressed-row sparse matrices and the small dense matrix used for Schur
// complements, covariates and tridiagonal eigenvectors.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmrf {

using Index = std::int32_t;
using Offset = std::int64_t;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Non-positive pivot met during a (dense or sparse) Cholesky factorization.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(long pivot)
      : std::runtime_error("not positive definite (pivot " + std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  long pivot() const { return pivot_; }

 private:
  long pivot_;
};

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(Index rows, Index cols, double fill = 0.0)
      : rows_(rows), cols_(cols),
        values_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}
  DenseMatrix(Index rows, Index cols, std::vector<double> values);

  static DenseMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  double& operator()(Index i, Index j) { return values_[offset(i, j)]; }
  double operator()(Index i, Index j) const { return values_[offset(i, j)]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> row(Index i) const {
    return {values_.data() + offset(i, 0), static_cast<std::size_t>(cols_)};
  }

  DenseMatrix transpose() const;
  std::vector<double> column(Index j) const;

 private:
  std::size_t offset(Index i, Index j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(j);
  }
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> values_;
};

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
std::vector<double> multiply(const DenseMatrix& a, std::span<const double> x);
/// aᵀ·x
std::vector<double> multiply_transposed(const DenseMatrix& a, std::span<const double> x);

/// In-place lower Cholesky of a symmetric positive definite dense matrix; the
/// strict upper triangle is zeroed. Throws NotPositiveDefinite.
void dense_cholesky_inplace(DenseMatrix& a);
/// Solves (L Lᵀ) x = b for a factor produced by dense_cholesky_inplace.
std::vector<double> dense_cholesky_solve(const DenseMatrix& lower, std::span<const double> b);
DenseMatrix dense_spd_inverse(const DenseMatrix& a);

/// Sparse matrix in compressed row form.
///
/// Symmetric matrices store both triangles. Column indices are strictly
/// increasing within a row and no explicit zeros are kept.
class SparseMatrix {
 public:
  struct RowView {
    std::span<const Index> cols;
    std::span<const double> values;
  };

  SparseMatrix() = default;
  /// Takes ownership of raw CSR arrays and validates them.
  SparseMatrix(Index rows, Index cols, std::vector<Offset> row_offsets,
               std::vector<Index> col_indices, std::vector<double> values,
               bool symmetric = false);

  /// Duplicates are summed and zeros dropped. With `symmetric` the triplets
  /// must already describe both triangles; the result is checked for symmetry.
  static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> triplets,
                                    bool symmetric = false);
  /// Mirrors the given lower (or upper) triangle into a full symmetric pattern.
  static SparseMatrix from_triangle(Index n, std::vector<Triplet> triangle);
  static SparseMatrix identity(Index n);
  static SparseMatrix diagonal(std::span<const double> d);
  static SparseMatrix zero(Index rows, Index cols);
  static SparseMatrix from_dense(const DenseMatrix& d, bool symmetric = false);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Offset nnz() const { return static_cast<Offset>(values_.size()); }
  bool is_symmetric() const { return symmetric_; }
  bool is_square() const { return rows_ == cols_; }

  std::span<const Offset> row_offsets() const { return row_offsets_; }
  std::span<const Index> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }
  RowView row(Index i) const;

  /// Entry lookup by binary search; 0 when not stored.
  double at(Index i, Index j) const;
  std::vector<double> diagonal() const;
  SparseMatrix transpose() const;
  DenseMatrix to_dense() const;

  /// Verifies |a_ij − a_ji| ≤ tol·max|a| and sets the symmetry flag.
  SparseMatrix& mark_symmetric(double tol = 0.0);

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Offset> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
  bool symmetric_ = false;
};

/// y = A x, rows distributed over OpenMP threads; each row accumulates in
/// ascending column order so the result does not depend on the thread count.
std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x);
void spmv_into(const SparseMatrix& a, std::span<const double> x, std::span<double> y);
/// Single-threaded reference for spmv.
void spmv_serial(const SparseMatrix& a, std::span<const double> x, std::span<double> y);

/// alpha·A + beta·B.
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha = 1.0,
                 double beta = 1.0);
SparseMatrix scale(const SparseMatrix& a, double s);
/// Sparse product A·B (Gustavson).
SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);
/// diag(d)·A
SparseMatrix scale_rows(const SparseMatrix& a, std::span<const double> d);
SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b);

/// A[rows, rows]; `rows` sorted, unique and in range.
SparseMatrix extract_principal_submatrix(const SparseMatrix& a, std::span<const Index> rows);
/// A[rows, cols] for disjoint sorted index sets.
SparseMatrix extract_offdiag_block(const SparseMatrix& a, std::span<const Index> rows,
                                   std::span<const Index> cols);

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);

// MatrixMarket coordinate format. Symmetric matrices are written as their
// lower triangle with 17 significant digits.
SparseMatrix read_matrix_market(std::istream& in);
SparseMatrix read_matrix_market(const std::string& path);
void write_matrix_market(std::ostream& out, const SparseMatrix& a);
void write_matrix_market(const std::string& path, const SparseMatrix& a);

}  // namespace gmrf
