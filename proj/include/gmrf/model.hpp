// Precision-matrix builders (AR(1), lattice SPDE, critical-diffusion space-time)
// and the latent Gaussian model with its posterior block system.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gmrf/sparse.hpp"

namespace gmrf {

/// Regular nx × ny lattice for the Whittle–Matérn SPDE, vertex v = ix + nx·iy.
struct SpatialSpec {
  Index nx = 2;
  Index ny = 2;
  double spacing = 1.0;
  double kappa = 1.0;
  double tau = 1.0;
  int alpha = 2;
  /// Accept a 1 × n grid and treat it as a 1D chain instead of rejecting it.
  bool allow_chain = false;
};

/// Diffusion-based non-separable space-time field. Only the critical
/// diffusion triple (1, 2, 1) has a built-in temporal discretization.
struct SpaceTimeSpec {
  SpatialSpec spatial;
  Index n_t = 2;
  double dt = 1.0;
  double gamma_t = 1.0;
  double gamma_s = 1.0;
  double gamma_e = 1.0;
  int alpha_t = 1;
  int alpha_s = 2;
  int alpha_e = 1;
};

struct TemporalMatrices {
  SparseMatrix mass;       // J_{1,0}: lumped, dt inside and dt/2 at the ends
  SparseMatrix boundary;   // J_{1,1/2}: 1/2 at the two end points
  SparseMatrix stiffness;  // J_{1,1}: second difference / dt, semi-definite
};

struct SpatialFem {
  std::vector<double> mass;  // lumped C
  SparseMatrix stiffness;    // G
};

/// y | u, β ~ N(A_u u + A_β β, τ_y⁻¹ I); u ~ N(0, Q_u⁻¹); β ~ N(0, Q_β⁻¹).
struct LatentModel {
  SparseMatrix Q_u;
  SparseMatrix Q_beta;  // diagonal
  SparseMatrix A_u;
  DenseMatrix A_beta;
  double tau_y = 0.0;
  std::vector<double> y;
  /// Time-major slab layout of u (n_u = slab_size · n_slabs); 0 when unknown.
  Index slab_size = 0;
  Index n_slabs = 0;

  Index n_u() const { return Q_u.rows(); }
  Index n_beta() const { return Q_beta.rows(); }
  Index n_obs() const { return static_cast<Index>(y.size()); }
  /// Throws DimensionError naming the offending block.
  void validate() const;
};

struct PosteriorBlocks {
  SparseMatrix Q_uu;        // Q_u + A_uᵀ Q_y A_u
  DenseMatrix Q_ubeta;      // A_uᵀ Q_y A_β
  DenseMatrix Q_betabeta;   // Q_β + A_βᵀ Q_y A_β
};

SparseMatrix build_ar1_precision(double phi, Index n);

SpatialFem build_spatial_fem(const SpatialSpec& spec);
SparseMatrix build_spatial_precision(const SpatialSpec& spec);

TemporalMatrices build_temporal_matrices(Index n_t, double dt);

/// γ_e² Σ_k γ_t^k J_k ⊗ K_k for user-supplied temporal and spatial terms.
SparseMatrix assemble_kronecker_sum(double gamma_e, double gamma_t, std::span<const SparseMatrix> temporal,
                                    std::span<const SparseMatrix> spatial);
SparseMatrix build_spacetime_precision(const SpaceTimeSpec& spec);

PosteriorBlocks assemble_posterior_blocks(const LatentModel& model);

// Model directory: Q_u.mtx, A_u.mtx, A_beta.csv, y.csv and meta.kv.
void save_model(const LatentModel& model, const std::filesystem::path& dir);
LatentModel load_model(const std::filesystem::path& dir);

// CSV helpers shared with the harness.
std::vector<double> read_vector_csv(const std::filesystem::path& path);
void write_vector_csv(const std::filesystem::path& path, std::span<const double> v);
DenseMatrix read_dense_csv(const std::filesystem::path& path);
void write_dense_csv(const std::filesystem::path& path, const DenseMatrix& m);

}  // namespace gmrf
