#include "gmrf/krylov.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace gmrf {

std::vector<double> LinearOperator::operator()(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dimension)) throw DimensionError("LinearOperator: dimension mismatch");
  std::vector<double> y(x.size());
  apply(x, y);
  return y;
}

LinearOperator make_operator(const SparseMatrix& q) {
  if (!q.is_square()) throw DimensionError("make_operator: matrix not square");
  LinearOperator op{q.rows(), [&q](std::span<const double> x, std::span<double> y) { spmv_into(q, x, y); }};
#ifndef NDEBUG
  if (q.rows() > 0 && symmetry_defect(op) > 1e-10) throw std::invalid_argument("make_operator: operator not symmetric");
#endif
  return op;
}

LinearOperator split_preconditioned(const SparseMatrix& q, const CholeskyFactor& precond) {
  if (!q.is_square() || q.rows() != precond.size())
    throw DimensionError("split_preconditioned: preconditioner size mismatch");
  return {q.rows(), [&q, &precond](std::span<const double> x, std::span<double> y) {
            const auto t = triangular_solve(precond, x, SolveMode::backward);
            std::vector<double> qt(t.size());
            spmv_into(q, t, qt);
            const auto r = triangular_solve(precond, qt, SolveMode::forward);
            std::copy(r.begin(), r.end(), y.begin());
          }};
}

double symmetry_defect(const LinearOperator& op, int trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto x = standard_normal(seed, 2 * static_cast<std::uint64_t>(t), op.dimension);
    const auto y = standard_normal(seed, 2 * static_cast<std::uint64_t>(t) + 1, op.dimension);
    const auto ax = op(x);
    const auto ay = op(y);
    const double scale = norm2(x) * norm2(ay) + norm2(ax) * norm2(y);
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(dot(x, ay) - dot(ax, y)) / scale);
  }
  return worst;
}

CgResult cg_solve(const LinearOperator& op, const CholeskyFactor* precond, std::span<const double> b, double rtol,
                  int maxit) {
  const auto n = static_cast<std::size_t>(op.dimension);
  if (b.size() != n) throw DimensionError("cg_solve: right-hand side size mismatch");
  if (precond && precond->size() != op.dimension) throw DimensionError("cg_solve: preconditioner size mismatch");
  if (!(rtol > 0.0 && rtol < 1.0)) throw std::invalid_argument("cg_solve: rtol must lie in (0, 1)");
  CgResult res;
  res.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    res.report = {0, 0.0, true};
    return res;
  }
  std::vector<double> r(b.begin(), b.end());
  auto precondition = [&](const std::vector<double>& v) {
    return precond ? triangular_solve(*precond, v, SolveMode::full) : v;
  };
  std::vector<double> z = precondition(r);
  std::vector<double> p = z;
  std::vector<double> qp(n);
  double rz = dot(r, z);
  double rnorm = bnorm;
  int it = 0;
  while (it < maxit && rnorm / bnorm > rtol) {
    op.apply(p, qp);
    const double pqp = dot(p, qp);
    if (!(pqp > 0.0)) throw IndefiniteOperator("cg_solve: non-positive curvature pᵀQp");
    const double a = rz / pqp;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += a * p[i];
      r[i] -= a * qp[i];
    }
    ++it;
    rnorm = norm2(r);
    if (rnorm / bnorm <= rtol) break;
    z = precondition(r);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  // Report the true residual, not the recursively updated one.
  std::vector<double> ax(n);
  op.apply(res.x, ax);
  for (std::size_t i = 0; i < n; ++i) ax[i] = b[i] - ax[i];
  res.report.iterations = it;
  res.report.final_residual = norm2(ax) / bnorm;
  res.report.converged = rnorm / bnorm <= rtol;
  return res;
}

namespace {

// Solves T y = β e₁ by LDLᵀ; T must be positive definite.
std::vector<double> tridiagonal_solve_e1(std::span<const double> diag, std::span<const double> off, double beta) {
  const std::size_t m = diag.size();
  std::vector<double> d(m), l(m, 0.0), y(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    d[k] = diag[k];
    if (k > 0) {
      l[k] = off[k - 1] / d[k - 1];
      d[k] -= l[k] * off[k - 1];
    }
    if (!(d[k] > 0.0)) throw IndefiniteOperator("lanczos: tridiagonal matrix is not positive definite");
  }
  y[0] = beta;
  for (std::size_t k = 1; k < m; ++k) y[k] = -l[k] * y[k - 1];
  for (std::size_t k = 0; k < m; ++k) y[k] /= d[k];
  for (std::size_t k = m - 1; k-- > 0;) y[k] -= l[k + 1] * y[k + 1];
  return y;
}

// Coefficients Ũ Λ^{-1/2} Ũᵀ (βe₁) in the Lanczos basis.
std::vector<double> inv_sqrt_coefficients(std::span<const double> diag, std::span<const double> off, double beta) {
  const auto eig = tridiag_eig(diag, off);
  const std::size_t m = diag.size();
  std::vector<double> c(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double lambda = eig.values[j];
    if (!(lambda > 0.0)) throw IndefiniteOperator("apply_inv_sqrt: non-positive Ritz value");
    const double w = beta * eig.first_row[j] / std::sqrt(lambda);
    for (std::size_t i = 0; i < m; ++i) c[i] += eig.vectors(static_cast<Index>(i), static_cast<Index>(j)) * w;
  }
  return c;
}

LanczosDecomposition lanczos_impl(const LinearOperator& op, std::span<const double> b, double rtol, int maxit,
                                  bool stagnation) {
  const auto n = static_cast<std::size_t>(op.dimension);
  if (b.size() != n) throw DimensionError("lanczos: start vector size mismatch");
  if (maxit < 1) throw std::invalid_argument("lanczos: maxit must be >= 1");
  LanczosDecomposition dec;
  dec.beta = norm2(b);
  if (dec.beta == 0.0) throw std::invalid_argument("lanczos: zero start vector");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = b[i] / dec.beta;
  std::vector<double> w(n), h;
  std::vector<double> previous_coeffs;
  double scale = 0.0;
  const int limit = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(maxit), n));
  for (int k = 0; k < limit; ++k) {
    dec.basis.push_back(v);
    op.apply(v, w);
    const double alpha = dot(v, w);
    dec.diag.push_back(alpha);
    // w ← w − V(Vᵀw), twice.
    for (int pass = 0; pass < 2; ++pass) {
      h.assign(dec.basis.size(), 0.0);
      for (std::size_t j = 0; j < dec.basis.size(); ++j) h[j] = dot(dec.basis[j], w);
      for (std::size_t j = 0; j < dec.basis.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) w[i] -= h[j] * dec.basis[j][i];
    }
    const double next = norm2(w);
    scale = std::max(scale, std::abs(alpha) + next + (dec.offdiag.empty() ? 0.0 : dec.offdiag.back()));
    dec.next_beta = next;

    if (next <= 1e-12 * scale) {
      dec.breakdown = true;
      dec.converged = true;
      dec.residual_estimate = 0.0;
      dec.next_beta = 0.0;
      dec.next_vector.clear();
      return dec;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / next;
    dec.next_vector = v;

    const auto y = tridiagonal_solve_e1(dec.diag, dec.offdiag, dec.beta);
    dec.residual_estimate = next * std::abs(y.back()) / dec.beta;
    bool done = dec.residual_estimate <= rtol;
    if (stagnation && !done) {
      auto coeffs = inv_sqrt_coefficients(dec.diag, dec.offdiag, dec.beta);
      if (!previous_coeffs.empty()) {
        double diff = 0.0;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
          const double prev = i < previous_coeffs.size() ? previous_coeffs[i] : 0.0;
          diff += (coeffs[i] - prev) * (coeffs[i] - prev);
        }
        done = std::sqrt(diff) <= rtol * norm2(coeffs);
      }
      previous_coeffs = std::move(coeffs);
    }
    if (done) {
      dec.converged = true;
      return dec;
    }
    if (k + 1 < limit) dec.offdiag.push_back(next);
  }
  return dec;
}

}  // namespace

LanczosDecomposition lanczos(const LinearOperator& op, std::span<const double> b, double rtol, int maxit) {
  return lanczos_impl(op, b, rtol, maxit, false);
}

TridiagonalEigen tridiag_eig(std::span<const double> diag, std::span<const double> offdiag) {
  const auto n = static_cast<Index>(diag.size());
  if (n < 1) throw std::invalid_argument("tridiag_eig: empty matrix");
  if (offdiag.size() + 1 != diag.size()) throw DimensionError("tridiag_eig: off-diagonal length must be m-1");
  std::vector<double> d(diag.begin(), diag.end());
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  std::copy(offdiag.begin(), offdiag.end(), e.begin());
  DenseMatrix z = DenseMatrix::identity(n);
  const double eps = std::numeric_limits<double>::epsilon();

  for (Index l = 0; l < n; ++l) {
    int iter = 0;
    Index m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (++iter > 60) throw std::runtime_error("tridiag_eig: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        Index i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (Index k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d[a] < d[b]; });
  TridiagonalEigen out;
  out.vectors = DenseMatrix(n, n);
  for (Index j = 0; j < n; ++j) {
    out.values.push_back(d[order[j]]);
    for (Index k = 0; k < n; ++k) out.vectors(k, j) = z(k, order[j]);
    out.first_row.push_back(out.vectors(0, j));
  }
  return out;
}

InvSqrtResult apply_inv_sqrt(const LinearOperator& op, std::span<const double> z, const KrylovSettings& settings) {
  InvSqrtResult res;
  const auto n = static_cast<std::size_t>(op.dimension);
  if (z.size() != n) throw DimensionError("apply_inv_sqrt: vector size mismatch");
  if (norm2(z) == 0.0) {
    res.x.assign(n, 0.0);
    res.report = {0, 0.0, true};
    return res;
  }
  const auto dec = lanczos_impl(op, z, settings.rtol, settings.maxit, settings.stagnation_rule);
  const auto c = inv_sqrt_coefficients(dec.diag, dec.offdiag, dec.beta);
  res.x.assign(n, 0.0);
  for (std::size_t j = 0; j < c.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) res.x[i] += c[j] * dec.basis[j][i];
  res.report = {dec.m(), dec.residual_estimate, dec.converged};
  return res;
}

std::vector<double> standard_normal(std::uint64_t seed, std::uint64_t k, Index n) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  std::mt19937_64 gen(seq);
  constexpr double two_pi = 6.283185307179586476925286766559;
  constexpr double unit = 0x1p-53;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; i += 2) {
    const double u1 = static_cast<double>((gen() >> 11) + 1) * unit;  // (0, 1]
    const double u2 = static_cast<double>(gen() >> 11) * unit;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(two_pi * u2);
    if (i + 1 < n) out[i + 1] = r * std::sin(two_pi * u2);
  }
  return out;
}

bool SampleSet::all_converged() const {
  return std::all_of(reports.begin(), reports.end(), [](const SolveReport& r) { return r.converged; });
}

SampleSet sample_gmrf(const SparseMatrix& q, const CholeskyFactor& precond, int K, std::uint64_t seed,
                      const KrylovSettings& settings, int workers) {
  if (K < 1) throw std::invalid_argument("sample_gmrf: K must be >= 1");
  const auto op = split_preconditioned(q, precond);
  SampleSet set;
  set.samples.resize(static_cast<std::size_t>(K));
  set.reports.resize(static_cast<std::size_t>(K));
  std::exception_ptr error;
  int error_k = K;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int k = 0; k < K; ++k) {
    try {
      const auto z = standard_normal(seed, static_cast<std::uint64_t>(k), q.rows());
      auto r = apply_inv_sqrt(op, z, settings);
      set.samples[k] = triangular_solve(precond, r.x, SolveMode::backward);
      set.reports[k] = r.report;
    } catch (...) {
#pragma omp critical(gmrf_sample_error)
      if (k < error_k) {
        error_k = k;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return set;
}

void write_samples_csv(const std::filesystem::path& path, const SampleSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  const std::size_t n = set.samples.empty() ? 0 : set.samples.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < set.samples.size(); ++k) out << (k ? "," : "") << set.samples[k][i];
    out << "\n";
  }
}

}  // namespace gmrf
