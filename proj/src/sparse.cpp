#include "gmrf/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace gmrf {

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

DenseMatrix::DenseMatrix(Index rows, Index cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw DimensionError("DenseMatrix: value count does not match shape");
  }
}

DenseMatrix DenseMatrix::identity(Index n) {
  DenseMatrix m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (Index i = 0; i < rows_; ++i)
    for (Index j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::vector<double> DenseMatrix::column(Index j) const {
  std::vector<double> c(static_cast<std::size_t>(rows_));
  for (Index i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("dense multiply: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (Index j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

std::vector<double> multiply(const DenseMatrix& a, std::span<const double> x) {
  if (static_cast<std::size_t>(a.cols()) != x.size())
    throw DimensionError("dense matvec: dimension mismatch");
  std::vector<double> y(static_cast<std::size_t>(a.rows()), 0.0);
  for (Index i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

std::vector<double> multiply_transposed(const DenseMatrix& a, std::span<const double> x) {
  if (static_cast<std::size_t>(a.rows()) != x.size())
    throw DimensionError("dense transposed matvec: dimension mismatch");
  std::vector<double> y(static_cast<std::size_t>(a.cols()), 0.0);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) y[j] += a(i, j) * x[i];
  return y;
}

void dense_cholesky_inplace(DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("dense cholesky: matrix not square");
  const Index n = a.rows();
  for (Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Index k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
    for (Index k = j + 1; k < n; ++k) a(j, k) = 0.0;
  }
}

std::vector<double> dense_cholesky_solve(const DenseMatrix& lower, std::span<const double> b) {
  const Index n = lower.rows();
  if (static_cast<std::size_t>(n) != b.size()) throw DimensionError("dense solve: dimension mismatch");
  std::vector<double> x(b.begin(), b.end());
  for (Index i = 0; i < n; ++i) {
    double s = x[i];
    for (Index k = 0; k < i; ++k) s -= lower(i, k) * x[k];
    x[i] = s / lower(i, i);
  }
  for (Index i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (Index k = i + 1; k < n; ++k) s -= lower(k, i) * x[k];
    x[i] = s / lower(i, i);
  }
  return x;
}

DenseMatrix dense_spd_inverse(const DenseMatrix& a) {
  DenseMatrix l = a;
  dense_cholesky_inplace(l);
  const Index n = a.rows();
  DenseMatrix inv(n, n);
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    const auto col = dense_cholesky_solve(l, e);
    for (Index i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  // Exact symmetry.
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double s = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = s;
      inv(j, i) = s;
    }
  return inv;
}

// ---------------------------------------------------------------------------
// SparseMatrix
// ---------------------------------------------------------------------------

SparseMatrix::SparseMatrix(Index rows, Index cols, std::vector<Offset> row_offsets,
                           std::vector<Index> col_indices, std::vector<double> values,
                           bool symmetric)
    : rows_(rows), cols_(cols), row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)), values_(std::move(values)), symmetric_(symmetric) {
  if (rows < 0 || cols < 0) throw DimensionError("SparseMatrix: negative dimension");
  if (row_offsets_.size() != static_cast<std::size_t>(rows) + 1 || row_offsets_.front() != 0)
    throw DimensionError("SparseMatrix: row_offsets must have length rows+1 and start at 0");
  if (col_indices_.size() != values_.size() ||
      static_cast<std::size_t>(row_offsets_.back()) != values_.size())
    throw DimensionError("SparseMatrix: inconsistent array lengths");
  for (Index i = 0; i < rows; ++i) {
    if (row_offsets_[i + 1] < row_offsets_[i])
      throw DimensionError("SparseMatrix: row_offsets not nondecreasing");
    for (Offset p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      if (col_indices_[p] < 0 || col_indices_[p] >= cols)
        throw DimensionError("SparseMatrix: column index out of range");
      if (p > row_offsets_[i] && col_indices_[p] <= col_indices_[p - 1])
        throw DimensionError("SparseMatrix: column indices not strictly increasing");
    }
  }
  if (symmetric_ && rows_ != cols_) throw DimensionError("SparseMatrix: symmetric flag on non-square matrix");
}

SparseMatrix SparseMatrix::from_triplets(Index rows, Index cols, std::vector<Triplet> triplets,
                                         bool symmetric) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw DimensionError("from_triplets: index out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Offset> offsets(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<Index> ci;
  std::vector<double> v;
  ci.reserve(triplets.size());
  v.reserve(triplets.size());
  std::size_t k = 0;
  while (k < triplets.size()) {
    const Index r = triplets[k].row;
    const Index c = triplets[k].col;
    double sum = 0.0;
    while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) sum += triplets[k++].value;
    if (sum != 0.0) {
      ci.push_back(c);
      v.push_back(sum);
      ++offsets[r + 1];
    }
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  SparseMatrix m(rows, cols, std::move(offsets), std::move(ci), std::move(v), false);
  if (symmetric) m.mark_symmetric(0.0);
  return m;
}

SparseMatrix SparseMatrix::from_triangle(Index n, std::vector<Triplet> triangle) {
  const std::size_t count = triangle.size();
  for (std::size_t k = 0; k < count; ++k) {
    const auto t = triangle[k];
    if (t.row != t.col) triangle.push_back({t.col, t.row, t.value});
  }
  return from_triplets(n, n, std::move(triangle), true);
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
  return diagonal(ones);
}

SparseMatrix SparseMatrix::diagonal(std::span<const double> d) {
  std::vector<Triplet> t;
  t.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    t.push_back({static_cast<Index>(i), static_cast<Index>(i), d[i]});
  const auto n = static_cast<Index>(d.size());
  return from_triplets(n, n, std::move(t), true);
}

SparseMatrix SparseMatrix::zero(Index rows, Index cols) {
  return SparseMatrix(rows, cols, std::vector<Offset>(static_cast<std::size_t>(rows) + 1, 0), {}, {},
                      rows == cols);
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& d, bool symmetric) {
  std::vector<Triplet> t;
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
  return from_triplets(d.rows(), d.cols(), std::move(t), symmetric);
}

SparseMatrix::RowView SparseMatrix::row(Index i) const {
  const auto b = static_cast<std::size_t>(row_offsets_[i]);
  const auto e = static_cast<std::size_t>(row_offsets_[i + 1]);
  return {std::span<const Index>(col_indices_).subspan(b, e - b),
          std::span<const double>(values_).subspan(b, e - b)};
}

double SparseMatrix::at(Index i, Index j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.cols.begin(), r.cols.end(), j);
  if (it == r.cols.end() || *it != j) return 0.0;
  return r.values[static_cast<std::size_t>(it - r.cols.begin())];
}

std::vector<double> SparseMatrix::diagonal() const {
  const Index n = std::min(rows_, cols_);
  std::vector<double> d(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) d[i] = at(i, i);
  return d;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Offset> offsets(static_cast<std::size_t>(cols_) + 1, 0);
  for (const Index c : col_indices_) ++offsets[c + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<Offset> next(offsets.begin(), offsets.end() - 1);
  std::vector<Index> ci(col_indices_.size());
  std::vector<double> v(values_.size());
  for (Index i = 0; i < rows_; ++i) {
    for (Offset p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      const Offset q = next[col_indices_[p]]++;
      ci[q] = i;
      v[q] = values_[p];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(offsets), std::move(ci), std::move(v), symmetric_);
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (Index i = 0; i < rows_; ++i)
    for (Offset p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) d(i, col_indices_[p]) = values_[p];
  return d;
}

SparseMatrix& SparseMatrix::mark_symmetric(double tol) {
  if (rows_ != cols_) throw DimensionError("mark_symmetric: matrix not square");
  double scale = 0.0;
  for (const double v : values_) scale = std::max(scale, std::abs(v));
  for (Index i = 0; i < rows_; ++i) {
    for (Offset p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      const Index j = col_indices_[p];
      if (std::abs(values_[p] - at(j, i)) > tol * scale)
        throw std::invalid_argument("mark_symmetric: matrix is not symmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
    }
  }
  symmetric_ = true;
  return *this;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace {

inline double row_dot(const SparseMatrix& a, Index i, std::span<const double> x) {
  const auto offs = a.row_offsets();
  const auto ci = a.col_indices();
  const auto v = a.values();
  double s = 0.0;
  for (Offset p = offs[i]; p < offs[i + 1]; ++p) s += v[p] * x[ci[p]];
  return s;
}

void check_spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
  if (x.size() != static_cast<std::size_t>(a.cols()))
    throw DimensionError("spmv: x has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(a.cols()));
  if (y.size() != static_cast<std::size_t>(a.rows())) throw DimensionError("spmv: output length mismatch");
}

}  // namespace

void spmv_serial(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
  check_spmv(a, x, y);
  for (Index i = 0; i < a.rows(); ++i) y[i] = row_dot(a, i, x);
}

void spmv_into(const SparseMatrix& a, std::span<const double> x, std::span<double> y) {
  check_spmv(a, x, y);
  const Index n = a.rows();
  // Small products are not worth a parallel region.
  if (a.nnz() < 20000) {
    for (Index i = 0; i < n; ++i) y[i] = row_dot(a, i, x);
    return;
  }
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y[i] = row_dot(a, i, x);
}

std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x) {
  std::vector<double> y(static_cast<std::size_t>(a.rows()));
  spmv_into(a, x, y);
  return y;
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha, double beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shapes differ");
  std::vector<Offset> offsets(static_cast<std::size_t>(a.rows()) + 1, 0);
  std::vector<Index> ci;
  std::vector<double> v;
  ci.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  v.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  for (Index i = 0; i < a.rows(); ++i) {
    const auto ra = a.row(i);
    const auto rb = b.row(i);
    std::size_t p = 0, q = 0;
    while (p < ra.cols.size() || q < rb.cols.size()) {
      Index c;
      double s;
      if (q == rb.cols.size() || (p < ra.cols.size() && ra.cols[p] < rb.cols[q])) {
        c = ra.cols[p];
        s = alpha * ra.values[p++];
      } else if (p == ra.cols.size() || rb.cols[q] < ra.cols[p]) {
        c = rb.cols[q];
        s = beta * rb.values[q++];
      } else {
        c = ra.cols[p];
        s = alpha * ra.values[p++] + beta * rb.values[q++];
      }
      if (s != 0.0) {
        ci.push_back(c);
        v.push_back(s);
      }
    }
    offsets[i + 1] = static_cast<Offset>(ci.size());
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(ci), std::move(v),
                      a.is_symmetric() && b.is_symmetric());
}

SparseMatrix scale(const SparseMatrix& a, double s) {
  if (s == 0.0) return SparseMatrix::zero(a.rows(), a.cols());
  std::vector<double> v(a.values().begin(), a.values().end());
  for (double& x : v) x *= s;
  return SparseMatrix(a.rows(), a.cols(), {a.row_offsets().begin(), a.row_offsets().end()},
                      {a.col_indices().begin(), a.col_indices().end()}, std::move(v), a.is_symmetric());
}

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("sparse multiply: inner dimensions differ");
  const Index n = b.cols();
  std::vector<Offset> offsets(static_cast<std::size_t>(a.rows()) + 1, 0);
  std::vector<Index> ci;
  std::vector<double> v;
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<Index> mark(static_cast<std::size_t>(n), -1);
  std::vector<Index> pattern;
  for (Index i = 0; i < a.rows(); ++i) {
    pattern.clear();
    const auto ra = a.row(i);
    for (std::size_t p = 0; p < ra.cols.size(); ++p) {
      const auto rb = b.row(ra.cols[p]);
      for (std::size_t q = 0; q < rb.cols.size(); ++q) {
        const Index j = rb.cols[q];
        if (mark[j] != i) {
          mark[j] = i;
          acc[j] = 0.0;
          pattern.push_back(j);
        }
        acc[j] += ra.values[p] * rb.values[q];
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (const Index j : pattern) {
      if (acc[j] != 0.0) {
        ci.push_back(j);
        v.push_back(acc[j]);
      }
    }
    offsets[i + 1] = static_cast<Offset>(ci.size());
  }
  return SparseMatrix(a.rows(), n, std::move(offsets), std::move(ci), std::move(v), false);
}

SparseMatrix scale_rows(const SparseMatrix& a, std::span<const double> d) {
  if (d.size() != static_cast<std::size_t>(a.rows())) throw DimensionError("scale_rows: length mismatch");
  std::vector<double> v(a.values().begin(), a.values().end());
  const auto offs = a.row_offsets();
  for (Index i = 0; i < a.rows(); ++i)
    for (Offset p = offs[i]; p < offs[i + 1]; ++p) v[p] *= d[i];
  return SparseMatrix(a.rows(), a.cols(), {offs.begin(), offs.end()},
                      {a.col_indices().begin(), a.col_indices().end()}, std::move(v), false);
}

SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b) {
  const auto limit = static_cast<std::int64_t>(std::numeric_limits<Index>::max());
  const std::int64_t rows = static_cast<std::int64_t>(a.rows()) * b.rows();
  const std::int64_t cols = static_cast<std::int64_t>(a.cols()) * b.cols();
  if (rows > limit || cols > limit) throw std::overflow_error("kron: index space overflow");
  std::vector<Offset> offsets(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<Index> ci;
  std::vector<double> v;
  ci.reserve(static_cast<std::size_t>(a.nnz() * b.nnz()));
  v.reserve(static_cast<std::size_t>(a.nnz() * b.nnz()));
  for (Index i = 0; i < a.rows(); ++i) {
    const auto ra = a.row(i);
    for (Index k = 0; k < b.rows(); ++k) {
      const auto rb = b.row(k);
      for (std::size_t p = 0; p < ra.cols.size(); ++p) {
        const Index base = ra.cols[p] * b.cols();
        for (std::size_t q = 0; q < rb.cols.size(); ++q) {
          ci.push_back(base + rb.cols[q]);
          v.push_back(ra.values[p] * rb.values[q]);
        }
      }
      offsets[static_cast<std::size_t>(i) * b.rows() + k + 1] = static_cast<Offset>(ci.size());
    }
  }
  return SparseMatrix(static_cast<Index>(rows), static_cast<Index>(cols), std::move(offsets), std::move(ci),
                      std::move(v), a.is_symmetric() && b.is_symmetric());
}

namespace {

void check_index_set(std::span<const Index> set, Index n, const char* what) {
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set[k] < 0 || set[k] >= n)
      throw DimensionError(std::string(what) + ": index " + std::to_string(set[k]) + " out of range");
    if (k > 0 && set[k] <= set[k - 1])
      throw std::invalid_argument(std::string(what) + ": indices must be sorted and unique");
  }
}

SparseMatrix extract_block(const SparseMatrix& a, std::span<const Index> rows, std::span<const Index> cols,
                           bool symmetric) {
  std::vector<Index> local(static_cast<std::size_t>(a.cols()), -1);
  for (std::size_t k = 0; k < cols.size(); ++k) local[cols[k]] = static_cast<Index>(k);
  std::vector<Offset> offsets(rows.size() + 1, 0);
  std::vector<Index> ci;
  std::vector<double> v;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = a.row(rows[r]);
    // Column order is preserved because `cols` is sorted.
    for (std::size_t p = 0; p < row.cols.size(); ++p) {
      const Index c = local[row.cols[p]];
      if (c >= 0) {
        ci.push_back(c);
        v.push_back(row.values[p]);
      }
    }
    offsets[r + 1] = static_cast<Offset>(ci.size());
  }
  return SparseMatrix(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()), std::move(offsets),
                      std::move(ci), std::move(v), symmetric);
}

}  // namespace

SparseMatrix extract_principal_submatrix(const SparseMatrix& a, std::span<const Index> rows) {
  if (!a.is_square()) throw DimensionError("extract_principal_submatrix: matrix not square");
  check_index_set(rows, a.rows(), "extract_principal_submatrix");
  return extract_block(a, rows, rows, a.is_symmetric());
}

SparseMatrix extract_offdiag_block(const SparseMatrix& a, std::span<const Index> rows,
                                   std::span<const Index> cols) {
  check_index_set(rows, a.rows(), "extract_offdiag_block");
  check_index_set(cols, a.cols(), "extract_offdiag_block");
  std::size_t p = 0, q = 0;
  while (p < rows.size() && q < cols.size()) {
    if (rows[p] == cols[q]) throw std::invalid_argument("extract_offdiag_block: row and column sets overlap");
    if (rows[p] < cols[q]) ++p; else ++q;
  }
  return extract_block(a, rows, cols, false);
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

// ---------------------------------------------------------------------------
// MatrixMarket
// ---------------------------------------------------------------------------

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("MatrixMarket: empty input", 0);
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  if (banner != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate")
    throw ParseError("MatrixMarket: expected '%%MatrixMarket matrix coordinate' header", lineno);
  field = lower(field);
  symmetry = lower(symmetry);
  if (field != "real" && field != "integer" && field != "pattern")
    throw ParseError("MatrixMarket: unsupported field '" + field + "'", lineno);
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError("MatrixMarket: unsupported symmetry '" + symmetry + "'", lineno);

  long rows = -1, cols = -1, entries = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> entries) || rows < 0 || cols < 0 || entries < 0)
      throw ParseError("MatrixMarket: malformed size line", lineno);
    break;
  }
  if (rows < 0) throw ParseError("MatrixMarket: missing size line", lineno);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(entries));
  long read = 0;
  while (read < entries && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    long i = 0, j = 0;
    double v = 1.0;
    if (!(ss >> i >> j)) throw ParseError("MatrixMarket: malformed entry", lineno);
    if (field != "pattern" && !(ss >> v)) throw ParseError("MatrixMarket: missing value", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("MatrixMarket: index out of range", lineno);
    t.push_back({static_cast<Index>(i - 1), static_cast<Index>(j - 1), v});
    ++read;
  }
  if (read != entries) throw ParseError("MatrixMarket: expected " + std::to_string(entries) + " entries", lineno);
  if (symmetry == "symmetric") {
    if (rows != cols) throw ParseError("MatrixMarket: symmetric matrix must be square", lineno);
    return SparseMatrix::from_triangle(static_cast<Index>(rows), std::move(t));
  }
  return SparseMatrix::from_triplets(static_cast<Index>(rows), static_cast<Index>(cols), std::move(t));
}

SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_matrix_market(in);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  const bool sym = a.is_symmetric();
  Offset count = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (const Index j : r.cols)
      if (!sym || j <= i) ++count;
  }
  out << "%%MatrixMarket matrix coordinate real " << (sym ? "symmetric" : "general") << "\n";
  out << a.rows() << " " << a.cols() << " " << count << "\n";
  out << std::setprecision(17);
  for (Index i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t p = 0; p < r.cols.size(); ++p)
      if (!sym || r.cols[p] <= i) out << (i + 1) << " " << (r.cols[p] + 1) << " " << r.values[p] << "\n";
  }
}

void write_matrix_market(const std::string& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_matrix_market(out, a);
}

}  // namespace gmrf
