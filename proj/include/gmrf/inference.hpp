// Posterior mean by eliminating the fixed effects, the fixed-effects variance
// correction and the trace building block tr(Q⁻¹ ∂Q).
#pragma once

#include <vector>

#include "gmrf/cholesky.hpp"
#include "gmrf/estimators.hpp"
#include "gmrf/krylov.hpp"
#include "gmrf/model.hpp"

namespace gmrf {

struct SolverSettings {
  double rtol = 1e-12;
  int maxit = 20000;
};

/// Preconditioned CG on Q_uu with a shared IC(0) (or Jacobi) preconditioner
/// and a counter of solves issued.
class QuuSolver {
 public:
  QuuSolver(const SparseMatrix& quu, const SolverSettings& settings);

  /// Throws std::runtime_error when CG does not converge.
  std::vector<double> solve(std::span<const double> b);
  long solves() const { return solves_; }
  const std::vector<SolveReport>& reports() const { return reports_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  const SparseMatrix& quu_;
  SolverSettings settings_;
  std::vector<std::string> warnings_;
  CholeskyFactor precond_;
  LinearOperator op_;
  long solves_ = 0;
  std::vector<SolveReport> reports_;
};

struct PosteriorSummary {
  std::vector<double> mu_u;
  std::vector<double> mu_beta;
  std::vector<double> var_u;
  DenseMatrix S_inv;  // V(β)
  std::vector<SolveReport> reports;
  long solve_count = 0;
  std::vector<std::string> warnings;
};

/// μ_β = S⁻¹(b_β − Q_βu Q_uu⁻¹ b_u), μ_u = Q_uu⁻¹(b_u − Q_uβ μ_β) with
/// S = Q_ββ − Q_βu Q_uu⁻¹ Q_uβ. Uses n_β + 2 solves with Q_uu (one when
/// n_β = 0). var_u is left empty.
PosteriorSummary posterior_mean(const LatentModel& model, const SolverSettings& settings = {});

/// diag(Q_uu⁻¹) + diag(W S⁻¹ Wᵀ), W = Q_uu⁻¹ Q_uβ from n_β fresh solves.
std::vector<double> marginal_variance(const LatentModel& model, const MarginalResult& diag_quu_inv,
                                      const DenseMatrix& S_inv, const SolverSettings& settings = {},
                                      long* solves = nullptr);

/// Σ_ij (Q⁻¹)_ij (∂Q)_ij over the stored entries of dQ. Throws when an entry of
/// dQ falls outside the selected-inverse pattern.
double trace_inv_times(const SelectedInverse& selected, const SparseMatrix& dQ);

}  // namespace gmrf
