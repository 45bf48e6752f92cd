#include "gmrf/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <string>

namespace gmrf::oracle {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_eigen(const SparseMatrix& q) {
  Mat m = Mat::Zero(q.rows(), q.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    const auto r = q.row(i);
    for (std::size_t p = 0; p < r.cols.size(); ++p) m(i, r.cols[p]) = r.values[p];
  }
  return m;
}

DenseMatrix from_eigen(const Mat& m) {
  DenseMatrix d(static_cast<Index>(m.rows()), static_cast<Index>(m.cols()));
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = 0; j < d.cols(); ++j) d(i, j) = m(i, j);
  return d;
}

void check_limit(Index n, Index limit) {
  if (n > limit)
    throw OracleLimitExceeded("dense oracle: dimension " + std::to_string(n) + " exceeds limit " +
                              std::to_string(limit));
}

Mat spd_inverse(const Mat& q) {
  Eigen::LLT<Mat> llt(q);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  const Mat inv = llt.solve(Mat::Identity(q.rows(), q.cols()));
  return 0.5 * (inv + inv.transpose());  // exactly symmetric
}

}  // namespace

Index default_limit() {
  if (const char* env = std::getenv("GMRF_ORACLE_LIMIT")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<Index>(v);
  }
  return 5000;
}

DenseMatrix dense_inverse(const SparseMatrix& q, Index limit) {
  if (!q.is_square()) throw DimensionError("dense_inverse: matrix not square");
  check_limit(q.rows(), limit);
  return from_eigen(spd_inverse(to_eigen(q)));
}

std::vector<double> dense_inverse_diag(const SparseMatrix& q, Index limit) {
  if (!q.is_square()) throw DimensionError("dense_inverse_diag: matrix not square");
  check_limit(q.rows(), limit);
  const Mat inv = spd_inverse(to_eigen(q));
  std::vector<double> d(static_cast<std::size_t>(q.rows()));
  for (Index i = 0; i < q.rows(); ++i) d[i] = inv(i, i);
  return d;
}

OracleResult dense_posterior(const LatentModel& model, Index limit) {
  model.validate();
  const Index nu = model.n_u(), nb = model.n_beta(), no = model.n_obs();
  const Index n = nu + nb;
  check_limit(n, limit);
  Mat a = Mat::Zero(no, n);
  for (Index i = 0; i < no; ++i) {
    const auto r = model.A_u.row(i);
    for (std::size_t p = 0; p < r.cols.size(); ++p) a(i, r.cols[p]) = r.values[p];
    for (Index j = 0; j < nb; ++j) a(i, nu + j) = model.A_beta(i, j);
  }
  Mat q = Mat::Zero(n, n);
  q.topLeftCorner(nu, nu) = to_eigen(model.Q_u);
  if (nb > 0) q.bottomRightCorner(nb, nb) = to_eigen(model.Q_beta);
  q += model.tau_y * a.transpose() * a;
  Vec y(no);
  for (Index i = 0; i < no; ++i) y(i) = model.y[i];
  const Vec rhs = model.tau_y * a.transpose() * y;

  Eigen::LLT<Mat> llt(q);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(-1);
  Mat inv = llt.solve(Mat::Identity(n, n));
  inv = 0.5 * (inv + inv.transpose()).eval();
  const Vec mu = llt.solve(rhs);

  OracleResult r;
  r.dense_inverse = from_eigen(inv);
  r.exact_diag.resize(static_cast<std::size_t>(n));
  r.exact_mu.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    r.exact_diag[i] = inv(i, i);
    r.exact_mu[i] = mu(i);
  }
  return r;
}

std::vector<double> block_tridiagonal_inverse_diag(const SparseMatrix& q, Index block) {
  if (!q.is_square() || block <= 0 || q.rows() % block != 0)
    throw DimensionError("block_tridiagonal_inverse_diag: size must be a multiple of the block size");
  const Index nb = q.rows() / block;
  std::vector<Mat> diag(static_cast<std::size_t>(nb), Mat::Zero(block, block));
  std::vector<Mat> upper(static_cast<std::size_t>(std::max<Index>(nb - 1, 0)), Mat::Zero(block, block));
  for (Index i = 0; i < q.rows(); ++i) {
    const Index bi = i / block;
    const auto r = q.row(i);
    for (std::size_t p = 0; p < r.cols.size(); ++p) {
      const Index j = r.cols[p];
      const Index bj = j / block;
      if (bj == bi) diag[bi](i % block, j % block) = r.values[p];
      else if (bj == bi + 1) upper[bi](i % block, j % block) = r.values[p];
      else if (bj + 1 != bi)
        throw std::invalid_argument("block_tridiagonal_inverse_diag: matrix is not block tridiagonal");
    }
  }
  // Forward sweep: left-connected Green's functions G_t = (D_t − B_{t−1}ᵀ G_{t−1} B_{t−1})⁻¹.
  std::vector<Mat> left(static_cast<std::size_t>(nb));
  for (Index t = 0; t < nb; ++t) {
    Mat s = diag[t];
    if (t > 0) s -= upper[t - 1].transpose() * left[t - 1] * upper[t - 1];
    left[t] = spd_inverse(s);
  }
  // Backward sweep: Σ_t = G_t + G_t B_t Σ_{t+1} B_tᵀ G_t.
  std::vector<double> d(static_cast<std::size_t>(q.rows()));
  Mat sigma = left[nb - 1];
  for (Index t = nb - 1; t >= 0; --t) {
    if (t < nb - 1) {
      const Mat gb = left[t] * upper[t];
      sigma = left[t] + gb * sigma * gb.transpose();
    }
    for (Index k = 0; k < block; ++k) d[static_cast<std::size_t>(t) * block + k] = sigma(k, k);
  }
  return d;
}

double rbmc_rmse_theory(double phi, int K, int l) {
  if (K < 1 || l < 0) throw std::invalid_argument("rbmc_rmse_theory: need K >= 1 and l >= 0");
  return std::pow(phi, 2.0 * l) * std::sqrt(2.0 / K);
}

DenseMatrix empirical_covariance(std::span<const std::vector<double>> samples) {
  if (samples.size() < 2) throw std::invalid_argument("empirical_covariance: need at least 2 samples");
  const auto n = static_cast<Index>(samples.front().size());
  Mat c = Mat::Zero(n, n);
  for (const auto& s : samples) {
    if (static_cast<Index>(s.size()) != n) throw DimensionError("empirical_covariance: ragged samples");
    const Eigen::Map<const Vec> v(s.data(), n);
    c.selfadjointView<Eigen::Lower>().rankUpdate(v);
  }
  c = c.selfadjointView<Eigen::Lower>();
  c /= static_cast<double>(samples.size());
  return from_eigen(c);
}

std::vector<double> correlation_by_hop(const SparseMatrix& q, Index source, Index max_hops, Index limit) {
  const Index n = q.rows();
  check_limit(n, limit);
  if (source < 0 || source >= n) throw DimensionError("correlation_by_hop: source out of range");
  const Mat inv = spd_inverse(to_eigen(q));
  std::vector<Index> dist(static_cast<std::size_t>(n), -1);
  std::deque<Index> frontier{source};
  dist[source] = 0;
  while (!frontier.empty()) {
    const Index v = frontier.front();
    frontier.pop_front();
    for (const Index w : q.row(v).cols)
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        frontier.push_back(w);
      }
  }
  std::vector<double> out(static_cast<std::size_t>(max_hops) + 1, 0.0);
  for (Index v = 0; v < n; ++v) {
    if (dist[v] < 0 || dist[v] > max_hops) continue;
    const double c = std::abs(inv(source, v)) / std::sqrt(inv(source, source) * inv(v, v));
    out[dist[v]] = std::max(out[dist[v]], c);
  }
  return out;
}

}  // namespace gmrf::oracle
