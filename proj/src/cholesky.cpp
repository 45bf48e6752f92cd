#include "gmrf/cholesky.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace gmrf {

CholeskyFactor::CholeskyFactor(Index n, std::vector<Offset> col_offsets, std::vector<Index> row_indices,
                               std::vector<double> values, std::vector<Index> permutation, bool is_complete)
    : n_(n), col_offsets_(std::move(col_offsets)), row_indices_(std::move(row_indices)),
      values_(std::move(values)), perm_(std::move(permutation)), complete_(is_complete) {
  if (col_offsets_.size() != static_cast<std::size_t>(n) + 1 || perm_.size() != static_cast<std::size_t>(n))
    throw DimensionError("CholeskyFactor: inconsistent sizes");
  for (Index k = 0; k < n_; ++k) {
    const Offset p = col_offsets_[k];
    if (p >= col_offsets_[k + 1] || row_indices_[p] != k || !(values_[p] > 0.0))
      throw std::invalid_argument("CholeskyFactor: column " + std::to_string(k) +
                                  " lacks a positive leading diagonal");
  }
}

SparseMatrix CholeskyFactor::lower_triangle() const {
  // Column storage of L is row storage of Lᵀ.
  std::vector<Index> ci(row_indices_.begin(), row_indices_.end());
  SparseMatrix lt(n_, n_, col_offsets_, std::move(ci), values_, false);
  return lt.transpose();
}

void CholeskyFactor::lower_solve_inplace(std::span<double> x) const {
  for (Index j = 0; j < n_; ++j) {
    const Offset p0 = col_offsets_[j];
    const double xj = x[j] / values_[p0];
    x[j] = xj;
    for (Offset p = p0 + 1; p < col_offsets_[j + 1]; ++p) x[row_indices_[p]] -= values_[p] * xj;
  }
}

void CholeskyFactor::lower_transpose_solve_inplace(std::span<double> x) const {
  for (Index j = n_ - 1; j >= 0; --j) {
    const Offset p0 = col_offsets_[j];
    double s = x[j];
    for (Offset p = p0 + 1; p < col_offsets_[j + 1]; ++p) s -= values_[p] * x[row_indices_[p]];
    x[j] = s / values_[p0];
  }
}

void CholeskyFactor::lower_multiply_inplace(std::span<double> x) const {
  for (Index j = n_ - 1; j >= 0; --j) {
    const Offset p0 = col_offsets_[j];
    const double xj = x[j];
    x[j] = values_[p0] * xj;
    for (Offset p = p0 + 1; p < col_offsets_[j + 1]; ++p) x[row_indices_[p]] += values_[p] * xj;
  }
}

// ---------------------------------------------------------------------------
// Ordering
// ---------------------------------------------------------------------------

namespace {

// Greedy minimum degree. The clique eliminated at each step is exactly the
// off-diagonal part of that column of L, so the fill is known on the fly and
// the search stops (returning empty) once it exceeds `budget`, or once the
// merge work exceeds `work_budget`.
std::vector<Index> bounded_minimum_degree(const SparseMatrix& a, Offset budget, double work_budget) {
  const Index n = a.rows();
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (const Index j : a.row(i).cols)
      if (j != i) adj[i].push_back(j);

  std::set<std::pair<std::size_t, Index>> queue;
  for (Index i = 0; i < n; ++i) queue.insert({adj[i].size(), i});
  std::vector<char> eliminated(static_cast<std::size_t>(n), 0);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<Index> merged;
  Offset fill = 0;
  double work = 0.0;

  while (!queue.empty()) {
    const Index v = queue.begin()->second;
    queue.erase(queue.begin());
    eliminated[v] = 1;
    order.push_back(v);
    const std::vector<Index> clique = std::move(adj[v]);
    adj[v].clear();
    fill += 1 + static_cast<Offset>(clique.size());
    if (fill > budget) return {};
    for (const Index u : clique) work += static_cast<double>(adj[u].size() + clique.size());
    if (work > work_budget) return {};
    for (const Index u : clique) {
      queue.erase({adj[u].size(), u});
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), clique.begin(), clique.end(), std::back_inserter(merged));
      auto& au = adj[u];
      au.clear();
      for (const Index w : merged)
        if (w != u && w != v && !eliminated[w]) au.push_back(w);
      queue.insert({au.size(), u});
    }
  }
  return order;
}

}  // namespace

std::vector<Index> minimum_degree_ordering(const SparseMatrix& a) {
  if (!a.is_square()) throw DimensionError("minimum_degree_ordering: matrix not square");
  return bounded_minimum_degree(a, std::numeric_limits<Offset>::max(), std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Complete factorization (up-looking, elimination-tree driven)
// ---------------------------------------------------------------------------

namespace {

SparseMatrix symmetric_permute(const SparseMatrix& a, std::span<const Index> perm,
                               std::vector<Index>& pinv) {
  const Index n = a.rows();
  pinv.assign(static_cast<std::size_t>(n), -1);
  for (Index k = 0; k < n; ++k) {
    if (perm[k] < 0 || perm[k] >= n || pinv[perm[k]] != -1)
      throw std::invalid_argument("sparse_cholesky: invalid permutation");
    pinv[perm[k]] = k;
  }
  std::vector<Offset> offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> ci(static_cast<std::size_t>(a.nnz()));
  std::vector<double> v(static_cast<std::size_t>(a.nnz()));
  std::vector<std::pair<Index, double>> row;
  for (Index k = 0; k < n; ++k) {
    const auto r = a.row(perm[k]);
    row.clear();
    for (std::size_t p = 0; p < r.cols.size(); ++p) row.emplace_back(pinv[r.cols[p]], r.values[p]);
    std::sort(row.begin(), row.end());
    Offset q = offsets[k];
    for (const auto& [c, x] : row) {
      ci[q] = c;
      v[q++] = x;
    }
    offsets[k + 1] = q;
  }
  return SparseMatrix(n, n, std::move(offsets), std::move(ci), std::move(v), a.is_symmetric());
}

std::vector<Index> elimination_tree(const SparseMatrix& c) {
  const Index n = c.rows();
  std::vector<Index> parent(static_cast<std::size_t>(n), -1);
  std::vector<Index> ancestor(static_cast<std::size_t>(n), -1);
  for (Index k = 0; k < n; ++k) {
    for (Index i : c.row(k).cols) {
      if (i >= k) break;
      while (i != -1 && i < k) {
        const Index next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) parent[i] = k;
        i = next;
      }
    }
  }
  return parent;
}

// Nonzero pattern of row k of L (excluding the diagonal) into stack[top..n).
Index row_reach(const SparseMatrix& c, Index k, std::span<const Index> parent, std::vector<Index>& stack,
                std::vector<Index>& mark) {
  const Index n = c.rows();
  Index top = n;
  mark[k] = k;
  for (Index i : c.row(k).cols) {
    if (i > k) break;
    Index len = 0;
    // Path segments are pushed onto the front of `stack` and then moved to
    // the top end in topological order.
    while (mark[i] != k) {
      stack[len++] = i;
      mark[i] = k;
      i = parent[i];
    }
    while (len > 0) stack[--top] = stack[--len];
  }
  return top;
}

}  // namespace

namespace {

// Column counts of L (diagonal included) under `permutation`.
std::vector<Offset> column_counts(const SparseMatrix& a, std::span<const Index> permutation) {
  const Index n = a.rows();
  std::vector<Index> pinv;
  const SparseMatrix c = symmetric_permute(a, permutation, pinv);
  const auto parent = elimination_tree(c);
  std::vector<Index> stack(static_cast<std::size_t>(n)), mark(static_cast<std::size_t>(n), -1);
  std::vector<Offset> counts(static_cast<std::size_t>(n), 1);
  for (Index k = 0; k < n; ++k) {
    const Index top = row_reach(c, k, parent, stack, mark);
    for (Index t = top; t < n; ++t) ++counts[stack[t]];
  }
  return counts;
}

}  // namespace

Offset symbolic_factor_nnz(const SparseMatrix& a, std::span<const Index> permutation) {
  if (!a.is_square()) throw DimensionError("symbolic_factor_nnz: matrix not square");
  if (permutation.size() != static_cast<std::size_t>(a.rows()))
    throw DimensionError("symbolic_factor_nnz: permutation length");
  const auto counts = column_counts(a, permutation);
  return std::accumulate(counts.begin(), counts.end(), Offset{0});
}

std::vector<Index> fill_reducing_permutation(const SparseMatrix& a, Ordering ordering) {
  if (!a.is_square()) throw DimensionError("fill_reducing_permutation: matrix not square");
  std::vector<Index> natural(static_cast<std::size_t>(a.rows()));
  std::iota(natural.begin(), natural.end(), 0);
  if (ordering == Ordering::natural) return natural;
  if (ordering == Ordering::amd_like) return minimum_degree_ordering(a);
  // Banded slab layouts often beat greedy minimum degree; ties keep natural.
  // The search is also abandoned once it has cost about as much as factoring
  // in natural order would (a merge step costs several flops); small
  // matrices always finish.
  const auto counts = column_counts(a, natural);
  Offset nnz = 0;
  double flops = 0.0;
  for (const Offset c : counts) {
    nnz += c;
    flops += static_cast<double>(c) * static_cast<double>(c);
  }
  auto md = bounded_minimum_degree(a, nnz - 1, std::max(0.25 * flops, 1e7));
  return md.empty() ? natural : md;
}

CholeskyFactor sparse_cholesky(const SparseMatrix& a, std::span<const Index> permutation) {
  if (!a.is_square()) throw DimensionError("sparse_cholesky: matrix not square");
  const Index n = a.rows();
  if (permutation.size() != static_cast<std::size_t>(n)) throw DimensionError("sparse_cholesky: permutation length");
  std::vector<Index> pinv;
  const SparseMatrix c = symmetric_permute(a, permutation, pinv);
  const auto parent = elimination_tree(c);

  std::vector<Index> stack(static_cast<std::size_t>(n)), mark(static_cast<std::size_t>(n), -1);
  std::vector<Offset> counts(static_cast<std::size_t>(n), 1);
  for (Index k = 0; k < n; ++k) {
    const Index top = row_reach(c, k, parent, stack, mark);
    for (Index t = top; t < n; ++t) ++counts[stack[t]];
  }
  std::vector<Offset> lp(static_cast<std::size_t>(n) + 1, 0);
  for (Index k = 0; k < n; ++k) lp[k + 1] = lp[k] + counts[k];
  std::vector<Index> li(static_cast<std::size_t>(lp[n]));
  std::vector<double> lx(static_cast<std::size_t>(lp[n]));
  std::vector<Offset> cursor(lp.begin(), lp.end() - 1);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::fill(mark.begin(), mark.end(), -1);

  for (Index k = 0; k < n; ++k) {
    const Index top = row_reach(c, k, parent, stack, mark);
    const auto row = c.row(k);
    for (std::size_t p = 0; p < row.cols.size() && row.cols[p] <= k; ++p) x[row.cols[p]] = row.values[p];
    double d = x[k];
    x[k] = 0.0;
    for (Index t = top; t < n; ++t) {
      const Index i = stack[t];
      const double lki = x[i] / lx[lp[i]];
      x[i] = 0.0;
      for (Offset p = lp[i] + 1; p < cursor[i]; ++p) x[li[p]] -= lx[p] * lki;
      d -= lki * lki;
      const Offset p = cursor[i]++;
      li[p] = k;
      lx[p] = lki;
    }
    if (!(d > 0.0)) throw NotPositiveDefinite(permutation[k]);
    const Offset p = cursor[k]++;
    li[p] = k;
    lx[p] = std::sqrt(d);
  }
  return CholeskyFactor(n, std::move(lp), std::move(li), std::move(lx),
                        std::vector<Index>(permutation.begin(), permutation.end()), true);
}

CholeskyFactor sparse_cholesky(const SparseMatrix& a, Ordering ordering) {
  if (!a.is_square()) throw DimensionError("sparse_cholesky: matrix not square");
  return sparse_cholesky(a, fill_reducing_permutation(a, ordering));
}

// ---------------------------------------------------------------------------
// Incomplete and diagonal factors
// ---------------------------------------------------------------------------

CholeskyFactor ic0(const SparseMatrix& a) {
  if (!a.is_square()) throw DimensionError("ic0: matrix not square");
  const Index n = a.rows();
  // Row-oriented IC(0): L's rows share the lower pattern of A.
  std::vector<Offset> offsets(static_cast<std::size_t>(n) + 1, 0);
  for (Index i = 0; i < n; ++i) {
    const auto r = a.row(i);
    const auto end = std::upper_bound(r.cols.begin(), r.cols.end(), i);
    if (end == r.cols.begin() || *(end - 1) != i) throw Ic0Breakdown(i);
    offsets[i + 1] = offsets[i] + static_cast<Offset>(end - r.cols.begin());
  }
  std::vector<Index> ci(static_cast<std::size_t>(offsets[n]));
  std::vector<double> v(static_cast<std::size_t>(offsets[n]));
  for (Index i = 0; i < n; ++i) {
    const auto r = a.row(i);
    const Offset base = offsets[i];
    const Offset diag = offsets[i + 1] - 1;
    for (Offset p = base; p <= diag; ++p) {
      ci[p] = r.cols[static_cast<std::size_t>(p - base)];
      v[p] = r.values[static_cast<std::size_t>(p - base)];
    }
    for (Offset p = base; p < diag; ++p) {
      const Index j = ci[p];
      // Sparse dot of rows i and j over columns < j.
      double s = v[p];
      Offset q = base, t = offsets[j];
      const Offset tend = offsets[j + 1] - 1;
      while (q < p && t < tend) {
        if (ci[q] == ci[t]) s -= v[q++] * v[t++];
        else if (ci[q] < ci[t]) ++q;
        else ++t;
      }
      v[p] = s / v[offsets[j + 1] - 1];
    }
    double d = v[diag];
    for (Offset p = base; p < diag; ++p) d -= v[p] * v[p];
    if (!(d > 0.0)) throw Ic0Breakdown(i);
    v[diag] = std::sqrt(d);
  }
  const SparseMatrix lower(n, n, std::move(offsets), std::move(ci), std::move(v), false);
  const SparseMatrix cols = lower.transpose();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  return CholeskyFactor(n, {cols.row_offsets().begin(), cols.row_offsets().end()},
                        {cols.col_indices().begin(), cols.col_indices().end()},
                        {cols.values().begin(), cols.values().end()}, std::move(perm), false);
}

CholeskyFactor jacobi_factor(const SparseMatrix& a) {
  if (!a.is_square()) throw DimensionError("jacobi_factor: matrix not square");
  const Index n = a.rows();
  std::vector<Offset> offsets(static_cast<std::size_t>(n) + 1);
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::vector<double> v(static_cast<std::size_t>(n));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double d = a.at(i, i);
    if (!(d > 0.0)) throw NotPositiveDefinite(i);
    offsets[i] = i;
    rows[i] = i;
    v[i] = std::sqrt(d);
    perm[i] = i;
  }
  offsets[n] = n;
  return CholeskyFactor(n, std::move(offsets), std::move(rows), std::move(v), std::move(perm), false);
}

// ---------------------------------------------------------------------------
// Solves
// ---------------------------------------------------------------------------

std::vector<double> triangular_solve(const CholeskyFactor& f, std::span<const double> b, SolveMode mode) {
  const Index n = f.size();
  if (b.size() != static_cast<std::size_t>(n)) throw DimensionError("triangular_solve: dimension mismatch");
  const auto perm = f.permutation();
  std::vector<double> y(static_cast<std::size_t>(n));
  std::vector<double> x(static_cast<std::size_t>(n));
  switch (mode) {
    case SolveMode::forward:
      for (Index k = 0; k < n; ++k) y[k] = b[perm[k]];
      f.lower_solve_inplace(y);
      return y;
    case SolveMode::backward:
      y.assign(b.begin(), b.end());
      f.lower_transpose_solve_inplace(y);
      for (Index k = 0; k < n; ++k) x[perm[k]] = y[k];
      return x;
    case SolveMode::full:
      for (Index k = 0; k < n; ++k) y[k] = b[perm[k]];
      f.lower_solve_inplace(y);
      f.lower_transpose_solve_inplace(y);
      for (Index k = 0; k < n; ++k) x[perm[k]] = y[k];
      return x;
  }
  return x;
}

std::vector<double> apply_factor(const CholeskyFactor& f, std::span<const double> x) {
  const Index n = f.size();
  if (x.size() != static_cast<std::size_t>(n)) throw DimensionError("apply_factor: dimension mismatch");
  std::vector<double> y(x.begin(), x.end());
  f.lower_multiply_inplace(y);
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto perm = f.permutation();
  for (Index k = 0; k < n; ++k) out[perm[k]] = y[k];
  return out;
}

// ---------------------------------------------------------------------------
// Takahashi recursion
// ---------------------------------------------------------------------------

namespace {

std::vector<double> takahashi_values(const CholeskyFactor& f) {
  if (!f.is_complete()) throw std::invalid_argument("takahashi: incomplete factor rejected");
  const Index n = f.size();
  const auto lp = f.col_offsets();
  const auto li = f.row_indices();
  const auto lx = f.values();
  std::vector<double> z(lx.size(), 0.0);
  // pos[r]: slot of row r in the current column's pattern, −1 elsewhere.
  std::vector<Index> pos(static_cast<std::size_t>(n), -1);
  std::vector<double> acc;

  for (Index j = n - 1; j >= 0; --j) {
    const Offset p0 = lp[j];
    const Index m = static_cast<Index>(lp[j + 1] - p0 - 1);
    const double ljj = lx[p0];
    acc.assign(static_cast<std::size_t>(m), 0.0);
    for (Index a = 0; a < m; ++a) pos[li[p0 + 1 + a]] = a;
    // acc_a = Σ_b l_{J_b,j} Z_{J_a,J_b}. Column J_a holds Z_{r,J_a} for r > J_a
    // and its pattern covers every later row of J, so one walk per column
    // gives both symmetric contributions.
    for (Index a = 0; a < m; ++a) {
      const Index k = li[p0 + 1 + a];
      const double lk = lx[p0 + 1 + a];
      acc[a] += lk * z[lp[k]];
      Index found = 0;
      for (Offset p = lp[k] + 1; p < lp[k + 1]; ++p) {
        const Index b = pos[li[p]];
        if (b < 0) continue;
        acc[b] += lk * z[p];
        acc[a] += lx[p0 + 1 + b] * z[p];
        ++found;
      }
      if (found != m - 1 - a) throw std::logic_error("takahashi: pattern not closed");
    }
    double s = 0.0;
    for (Index a = 0; a < m; ++a) {
      z[p0 + 1 + a] = -acc[a] / ljj;
      s += lx[p0 + 1 + a] * z[p0 + 1 + a];
      pos[li[p0 + 1 + a]] = -1;
    }
    z[p0] = (1.0 / ljj - s) / ljj;
  }
  return z;
}

}  // namespace

SelectedInverse::SelectedInverse(const CholeskyFactor& f, std::vector<double> z)
    : n_(f.size()), col_offsets_(f.col_offsets().begin(), f.col_offsets().end()),
      row_indices_(f.row_indices().begin(), f.row_indices().end()), z_(std::move(z)),
      perm_(f.permutation().begin(), f.permutation().end()),
      inverse_perm_(static_cast<std::size_t>(f.size())) {
  for (Index k = 0; k < n_; ++k) inverse_perm_[perm_[k]] = k;
}

std::optional<double> SelectedInverse::value(Index i, Index j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) throw DimensionError("SelectedInverse::value: index out of range");
  const Index a = inverse_perm_[i];
  const Index b = inverse_perm_[j];
  const Index col = std::min(a, b);
  const Index row = std::max(a, b);
  const auto first = row_indices_.begin() + col_offsets_[col];
  const auto last = row_indices_.begin() + col_offsets_[col + 1];
  const auto it = std::lower_bound(first, last, row);
  if (it == last || *it != row) return std::nullopt;
  return z_[static_cast<std::size_t>(it - row_indices_.begin())];
}

std::vector<double> SelectedInverse::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(n_));
  for (Index k = 0; k < n_; ++k) d[perm_[k]] = z_[col_offsets_[k]];
  return d;
}

SparseMatrix SelectedInverse::to_sparse() const {
  std::vector<Triplet> t;
  t.reserve(2 * z_.size());
  for (Index k = 0; k < n_; ++k) {
    for (Offset p = col_offsets_[k]; p < col_offsets_[k + 1]; ++p) {
      const Index r = perm_[row_indices_[p]];
      const Index c = perm_[k];
      t.push_back({r, c, z_[p]});
      if (r != c) t.push_back({c, r, z_[p]});
    }
  }
  return SparseMatrix::from_triplets(n_, n_, std::move(t), true);
}

SelectedInverse takahashi_selected_inverse(const CholeskyFactor& f) {
  return SelectedInverse(f, takahashi_values(f));
}

std::vector<double> selected_inverse_diagonal(const CholeskyFactor& f) {
  const auto z = takahashi_values(f);
  const auto lp = f.col_offsets();
  const auto perm = f.permutation();
  std::vector<double> d(static_cast<std::size_t>(f.size()));
  for (Index k = 0; k < f.size(); ++k) d[perm[k]] = z[lp[k]];
  return d;
}

}  // namespace gmrf
