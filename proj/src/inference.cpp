#include "gmrf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gmrf {

namespace {

DenseMatrix solve_columns(QuuSolver& solver, const DenseMatrix& rhs) {
  DenseMatrix w(rhs.rows(), rhs.cols());
  for (Index c = 0; c < rhs.cols(); ++c) {
    const auto x = solver.solve(rhs.column(c));
    for (Index i = 0; i < rhs.rows(); ++i) w(i, c) = x[i];
  }
  return w;
}

}  // namespace

QuuSolver::QuuSolver(const SparseMatrix& quu, const SolverSettings& settings)
    : quu_(quu), settings_(settings), precond_(preconditioner_for(quu, &warnings_)), op_(make_operator(quu_)) {}

std::vector<double> QuuSolver::solve(std::span<const double> b) {
  ++solves_;
  auto res = cg_solve(op_, &precond_, b, settings_.rtol, settings_.maxit);
  reports_.push_back(res.report);
  if (!res.report.converged)
    throw std::runtime_error("Q_uu solve did not converge (relative residual " +
                             std::to_string(res.report.final_residual) + ")");
  return std::move(res.x);
}

PosteriorSummary posterior_mean(const LatentModel& model, const SolverSettings& settings) {
  const PosteriorBlocks blocks = assemble_posterior_blocks(model);
  const Index nu = model.n_u(), nb = model.n_beta();
  QuuSolver solver(blocks.Q_uu, settings);

  // b_u = A_uᵀ Q_y y, b_β = A_βᵀ Q_y y
  std::vector<double> b_u(static_cast<std::size_t>(nu), 0.0);
  std::vector<double> b_beta(static_cast<std::size_t>(nb), 0.0);
  if (model.n_obs() > 0) {
    std::vector<double> qy(model.y.begin(), model.y.end());
    for (auto& v : qy) v *= model.tau_y;
    b_u = spmv(model.A_u.transpose(), qy);
    if (nb > 0) b_beta = multiply_transposed(model.A_beta, qy);
  }

  PosteriorSummary out;
  if (nb == 0) {
    out.mu_u = solver.solve(b_u);
  } else {
    const DenseMatrix w = solve_columns(solver, blocks.Q_ubeta);  // Q_uu⁻¹ Q_uβ, n_β solves
    const auto v = solver.solve(b_u);                             // Q_uu⁻¹ b_u
    DenseMatrix s = blocks.Q_betabeta;
    for (Index a = 0; a < nb; ++a)
      for (Index b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (Index i = 0; i < nu; ++i) acc += blocks.Q_ubeta(i, a) * w(i, b);
        s(a, b) -= acc;
      }
    for (Index a = 0; a < nb; ++a)
      for (Index b = a + 1; b < nb; ++b) s(a, b) = s(b, a) = 0.5 * (s(a, b) + s(b, a));
    DenseMatrix s_factor = s;
    bool singular = false;
    try {
      dense_cholesky_inplace(s_factor);
      // Rank deficiency usually leaves a roundoff-sized positive pivot.
      double scale = 0.0;
      for (Index a = 0; a < nb; ++a) scale = std::max(scale, std::abs(s(a, a)));
      for (Index a = 0; a < nb; ++a) singular = singular || s_factor(a, a) * s_factor(a, a) <= 1e-13 * scale;
    } catch (const NotPositiveDefinite&) {
      singular = true;
    }
    if (singular) throw std::runtime_error("posterior_mean: fixed-effects Schur complement is singular");
    std::vector<double> rhs = b_beta;
    const auto qbv = multiply_transposed(blocks.Q_ubeta, v);
    for (Index a = 0; a < nb; ++a) rhs[a] -= qbv[a];
    out.mu_beta = dense_cholesky_solve(s_factor, rhs);
    const auto qmu = multiply(blocks.Q_ubeta, out.mu_beta);
    std::vector<double> r = b_u;
    for (Index i = 0; i < nu; ++i) r[i] -= qmu[i];
    out.mu_u = solver.solve(r);
    out.S_inv = dense_spd_inverse(s);
  }
  if (nb == 0) out.S_inv = DenseMatrix(0, 0);
  out.reports = solver.reports();
  out.solve_count = solver.solves();
  out.warnings = solver.warnings();
  return out;
}

std::vector<double> marginal_variance(const LatentModel& model, const MarginalResult& diag_quu_inv,
                                      const DenseMatrix& S_inv, const SolverSettings& settings, long* solves) {
  const Index nu = model.n_u(), nb = model.n_beta();
  if (static_cast<Index>(diag_quu_inv.diag_variance.size()) != nu)
    throw DimensionError("marginal_variance: diagonal length does not match n_u");
  if (S_inv.rows() != nb || S_inv.cols() != nb) throw DimensionError("marginal_variance: S_inv must be n_beta x n_beta");
  std::vector<double> var = diag_quu_inv.diag_variance;
  if (solves) *solves = 0;
  if (nb == 0) return var;
  const PosteriorBlocks blocks = assemble_posterior_blocks(model);
  QuuSolver solver(blocks.Q_uu, settings);
  const DenseMatrix w = solve_columns(solver, blocks.Q_ubeta);
  for (Index i = 0; i < nu; ++i) {
    double q = 0.0;
    for (Index a = 0; a < nb; ++a)
      for (Index b = 0; b < nb; ++b) q += w(i, a) * S_inv(a, b) * w(i, b);
    var[i] += q;
  }
  if (solves) *solves = solver.solves();
  return var;
}

double trace_inv_times(const SelectedInverse& selected, const SparseMatrix& dQ) {
  if (dQ.rows() != selected.size() || dQ.cols() != selected.size())
    throw DimensionError("trace_inv_times: dQ size does not match the selected inverse");
  double sum = 0.0;
  std::ostringstream missing;
  long n_missing = 0;
  for (Index i = 0; i < dQ.rows(); ++i) {
    const auto r = dQ.row(i);
    for (std::size_t p = 0; p < r.cols.size(); ++p) {
      const auto z = selected.value(i, r.cols[p]);
      if (!z) {
        if (n_missing < 20) missing << (n_missing ? ", " : "") << "(" << i << "," << r.cols[p] << ")";
        ++n_missing;
        continue;
      }
      sum += *z * r.values[p];
    }
  }
  if (n_missing > 0)
    throw std::invalid_argument("trace_inv_times: " + std::to_string(n_missing) +
                                " entries of dQ outside the selected-inverse pattern: " + missing.str() +
                                (n_missing > 20 ? ", ..." : ""));
  return sum;
}

}  // namespace gmrf
