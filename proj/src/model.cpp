#include "gmrf/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace gmrf {

namespace fs = std::filesystem;

void LatentModel::validate() const {
  if (!Q_u.is_square()) throw DimensionError("LatentModel: Q_u must be square");
  if (!Q_beta.is_square()) throw DimensionError("LatentModel: Q_beta must be square");
  if (A_u.rows() != n_obs())
    throw DimensionError("LatentModel: A_u has " + std::to_string(A_u.rows()) + " rows but y has " +
                         std::to_string(n_obs()) + " entries");
  if (A_u.cols() != n_u())
    throw DimensionError("LatentModel: A_u has " + std::to_string(A_u.cols()) + " columns but Q_u has size " +
                         std::to_string(n_u()));
  if (n_beta() > 0 && A_beta.rows() != n_obs())
    throw DimensionError("LatentModel: A_beta has " + std::to_string(A_beta.rows()) + " rows but y has " +
                         std::to_string(n_obs()) + " entries");
  if (A_beta.cols() != n_beta())
    throw DimensionError("LatentModel: A_beta has " + std::to_string(A_beta.cols()) +
                         " columns but Q_beta has size " + std::to_string(n_beta()));
  if (tau_y < 0.0) throw std::invalid_argument("LatentModel: tau_y must be nonnegative");
  if (slab_size > 0 && static_cast<std::int64_t>(slab_size) * n_slabs != n_u())
    throw DimensionError("LatentModel: slab_size * n_slabs != n_u");
}

SparseMatrix build_ar1_precision(double phi, Index n) {
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("build_ar1_precision: |phi| must be < 1");
  if (n < 2) throw std::invalid_argument("build_ar1_precision: n must be >= 2");
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    const bool end = (i == 0 || i == n - 1);
    t.push_back({i, i, end ? 1.0 : 1.0 + phi * phi});
    if (i + 1 < n && phi != 0.0) {
      t.push_back({i, i + 1, -phi});
      t.push_back({i + 1, i, -phi});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t), true);
}

SpatialFem build_spatial_fem(const SpatialSpec& spec) {
  if (!(spec.kappa > 0.0) || !(spec.tau > 0.0)) throw std::invalid_argument("SpatialSpec: kappa and tau must be > 0");
  if (spec.alpha < 1) throw std::invalid_argument("SpatialSpec: alpha must be >= 1");
  if (!(spec.spacing > 0.0)) throw std::invalid_argument("SpatialSpec: spacing must be > 0");
  const Index nx = spec.nx, ny = spec.ny;
  const double h = spec.spacing;
  SpatialFem fem;
  std::vector<Triplet> t;
  auto edge = [&t](Index i, Index j, double w) {
    t.push_back({i, i, w});
    t.push_back({j, j, w});
    t.push_back({i, j, -w});
    t.push_back({j, i, -w});
  };

  if (nx < 2 || ny < 2) {
    const Index n = std::max(nx, ny);
    if (!spec.allow_chain || std::min(nx, ny) != 1 || n < 2)
      throw std::invalid_argument("build_spatial_precision: grid must be at least 2x2 (set allow_chain for 1xn)");
    fem.mass.assign(static_cast<std::size_t>(n), h);
    fem.mass.front() = fem.mass.back() = 0.5 * h;
    for (Index i = 0; i + 1 < n; ++i) edge(i, i + 1, 1.0 / h);
    fem.stiffness = SparseMatrix::from_triplets(n, n, std::move(t), true);
    return fem;
  }

  const Index n = nx * ny;
  fem.mass.resize(static_cast<std::size_t>(n));
  for (Index iy = 0; iy < ny; ++iy) {
    const double wy = (iy == 0 || iy == ny - 1) ? 0.5 : 1.0;
    for (Index ix = 0; ix < nx; ++ix) {
      const double wx = (ix == 0 || ix == nx - 1) ? 0.5 : 1.0;
      fem.mass[ix + nx * iy] = h * h * wx * wy;
    }
  }
  // Linear elements on a right-triangle mesh: five-point stencil with edge
  // weight 1 inside and 1/2 along the boundary.
  for (Index iy = 0; iy < ny; ++iy)
    for (Index ix = 0; ix + 1 < nx; ++ix)
      edge(ix + nx * iy, ix + 1 + nx * iy, (iy == 0 || iy == ny - 1) ? 0.5 : 1.0);
  for (Index iy = 0; iy + 1 < ny; ++iy)
    for (Index ix = 0; ix < nx; ++ix)
      edge(ix + nx * iy, ix + nx * (iy + 1), (ix == 0 || ix == nx - 1) ? 0.5 : 1.0);
  fem.stiffness = SparseMatrix::from_triplets(n, n, std::move(t), true);
  return fem;
}

SparseMatrix build_spatial_precision(const SpatialSpec& spec) {
  const SpatialFem fem = build_spatial_fem(spec);
  const auto c = SparseMatrix::diagonal(fem.mass);
  const SparseMatrix m = add(c, fem.stiffness, spec.kappa * spec.kappa, 1.0);
  std::vector<double> cinv(fem.mass.size());
  for (std::size_t i = 0; i < cinv.size(); ++i) cinv[i] = 1.0 / fem.mass[i];
  const SparseMatrix cinv_m = scale_rows(m, cinv);
  SparseMatrix q = m;
  for (int a = 1; a < spec.alpha; ++a) q = multiply(q, cinv_m);
  if (spec.alpha > 2) {
    // Products of three or more factors are symmetric only up to rounding.
    q = add(q, q.transpose(), 0.5, 0.5);
  }
  q = scale(q, spec.tau * spec.tau);
  q.mark_symmetric(0.0);
  return q;
}

TemporalMatrices build_temporal_matrices(Index n_t, double dt) {
  if (n_t < 2) throw std::invalid_argument("build_temporal_matrices: n_t must be >= 2");
  if (!(dt > 0.0)) throw std::invalid_argument("build_temporal_matrices: dt must be > 0");
  std::vector<double> mass(static_cast<std::size_t>(n_t), dt);
  mass.front() = mass.back() = 0.5 * dt;
  std::vector<Triplet> boundary{{0, 0, 0.5}, {n_t - 1, n_t - 1, 0.5}};
  std::vector<Triplet> stiff;
  for (Index i = 0; i + 1 < n_t; ++i) {
    stiff.push_back({i, i, 1.0 / dt});
    stiff.push_back({i + 1, i + 1, 1.0 / dt});
    stiff.push_back({i, i + 1, -1.0 / dt});
    stiff.push_back({i + 1, i, -1.0 / dt});
  }
  return {SparseMatrix::diagonal(mass), SparseMatrix::from_triplets(n_t, n_t, std::move(boundary), true),
          SparseMatrix::from_triplets(n_t, n_t, std::move(stiff), true)};
}

SparseMatrix assemble_kronecker_sum(double gamma_e, double gamma_t, std::span<const SparseMatrix> temporal,
                                    std::span<const SparseMatrix> spatial) {
  if (temporal.empty() || temporal.size() != spatial.size())
    throw DimensionError("assemble_kronecker_sum: need matching, nonempty J and K lists");
  SparseMatrix q = kron(temporal[0], spatial[0]);
  double w = 1.0;
  for (std::size_t k = 1; k < temporal.size(); ++k) {
    w *= gamma_t;
    q = add(q, kron(temporal[k], spatial[k]), 1.0, w);
  }
  q = scale(q, gamma_e * gamma_e);
  q.mark_symmetric(0.0);
  return q;
}

SparseMatrix build_spacetime_precision(const SpaceTimeSpec& spec) {
  if (!(spec.gamma_t > 0.0) || !(spec.gamma_s > 0.0) || !(spec.gamma_e > 0.0))
    throw std::invalid_argument("SpaceTimeSpec: gammas must be > 0");
  if (spec.alpha_t != 1 || spec.alpha_s != 2 || spec.alpha_e != 1)
    throw std::invalid_argument(
        "build_spacetime_precision: only (alpha_t, alpha_s, alpha_e) = (1,2,1) is built in; "
        "supply J/K matrices for other models");
  const TemporalMatrices j = build_temporal_matrices(spec.n_t, spec.dt);
  std::vector<SparseMatrix> k;
  for (const int order : {3, 2, 1}) {
    SpatialSpec s = spec.spatial;
    s.alpha = order;
    s.tau = 1.0;
    s.kappa = spec.gamma_s;
    k.push_back(build_spatial_precision(s));
  }
  const std::vector<SparseMatrix> temporal{j.mass, j.boundary, j.stiffness};
  return assemble_kronecker_sum(spec.gamma_e, spec.gamma_t, temporal, k);
}

PosteriorBlocks assemble_posterior_blocks(const LatentModel& model) {
  model.validate();
  PosteriorBlocks blocks;
  const SparseMatrix at = model.A_u.transpose();
  if (model.n_obs() > 0 && model.tau_y > 0.0) {
    SparseMatrix ata = multiply(at, model.A_u);
    ata.mark_symmetric(0.0);
    blocks.Q_uu = add(model.Q_u, ata, 1.0, model.tau_y);
  } else {
    blocks.Q_uu = model.Q_u;
  }
  blocks.Q_uu.mark_symmetric(0.0);

  const Index n = model.n_u(), p = model.n_beta();
  blocks.Q_ubeta = DenseMatrix(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto r = at.row(i);
    for (std::size_t q = 0; q < r.cols.size(); ++q)
      for (Index c = 0; c < p; ++c) blocks.Q_ubeta(i, c) += model.tau_y * r.values[q] * model.A_beta(r.cols[q], c);
  }
  blocks.Q_betabeta = model.Q_beta.to_dense();
  for (Index a = 0; a < p; ++a)
    for (Index b = 0; b < p; ++b) {
      double s = 0.0;
      for (Index o = 0; o < model.n_obs(); ++o) s += model.A_beta(o, a) * model.A_beta(o, b);
      blocks.Q_betabeta(a, b) += model.tau_y * s;
    }
  return blocks;
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, long line, const std::string& file) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(file + ": malformed number '" + s + "'", line);
  }
  while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
  if (used != s.size()) throw ParseError(file + ": malformed number '" + s + "'", line);
  return v;
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("model block 'meta' missing: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ": expected key=value", lineno);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

std::vector<double> read_vector_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> v;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    v.push_back(parse_double(line, lineno, path.filename().string()));
  }
  return v;
}

void write_vector_csv(const fs::path& path, std::span<const double> v) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (const double x : v) out << x << "\n";
}

DenseMatrix read_dense_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  long lineno = 0;
  Index rows = 0, cols = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (cols < 0) cols = static_cast<Index>(fields.size());
    if (static_cast<Index>(fields.size()) != cols)
      throw ParseError(path.filename().string() + ": expected " + std::to_string(cols) + " columns", lineno);
    for (const auto& f : fields) values.push_back(parse_double(f, lineno, path.filename().string()));
    ++rows;
  }
  return DenseMatrix(rows, std::max<Index>(cols, 0), std::move(values));
}

void write_dense_csv(const fs::path& path, const DenseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

void save_model(const LatentModel& model, const fs::path& dir) {
  model.validate();
  fs::create_directories(dir);
  std::vector<std::string> blocks{"Q_u"};
  write_matrix_market((dir / "Q_u.mtx").string(), model.Q_u);
  if (model.n_obs() > 0) {
    write_matrix_market((dir / "A_u.mtx").string(), model.A_u);
    write_vector_csv(dir / "y.csv", model.y);
    blocks.push_back("A_u");
    blocks.push_back("y");
    if (model.n_beta() > 0) {
      write_dense_csv(dir / "A_beta.csv", model.A_beta);
      blocks.push_back("A_beta");
    }
  }
  std::ofstream meta(dir / "meta.kv");
  meta << std::setprecision(17);
  meta << "v=1\n";
  meta << "n_u=" << model.n_u() << "\n";
  meta << "n_obs=" << model.n_obs() << "\n";
  meta << "n_beta=" << model.n_beta() << "\n";
  meta << "tau_y=" << model.tau_y << "\n";
  meta << "q_beta=";
  const auto qb = model.Q_beta.diagonal();
  for (std::size_t i = 0; i < qb.size(); ++i) meta << (i ? "," : "") << qb[i];
  meta << "\n";
  meta << "slab_size=" << model.slab_size << "\n";
  meta << "n_slabs=" << model.n_slabs << "\n";
  meta << "blocks=";
  for (std::size_t i = 0; i < blocks.size(); ++i) meta << (i ? "," : "") << blocks[i];
  meta << "\n";
}

LatentModel load_model(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("model directory not found: " + dir.string());
  const auto kv = read_kv(dir / "meta.kv");
  auto get = [&](const std::string& key) -> std::string {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("meta.kv: missing key '" + key + "'");
    return it->second;
  };
  auto require = [&](const std::string& block, const std::string& file) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw std::runtime_error("model block '" + block + "' missing: " + p.string());
    return p;
  };
  std::vector<std::string> blocks = split(get("blocks"), ',');
  auto has = [&](const std::string& b) { return std::find(blocks.begin(), blocks.end(), b) != blocks.end(); };

  LatentModel m;
  m.Q_u = read_matrix_market(require("Q_u", "Q_u.mtx").string());
  if (!m.Q_u.is_symmetric()) m.Q_u.mark_symmetric(1e-14);
  m.tau_y = parse_double(get("tau_y"), 0, "meta.kv");
  std::vector<double> qb;
  for (const auto& s : split(get("q_beta"), ',')) qb.push_back(parse_double(s, 0, "meta.kv"));
  m.Q_beta = SparseMatrix::diagonal(qb);
  m.slab_size = static_cast<Index>(std::stol(get("slab_size")));
  m.n_slabs = static_cast<Index>(std::stol(get("n_slabs")));
  if (has("A_u") || has("y")) {
    m.A_u = read_matrix_market(require("A_u", "A_u.mtx").string());
    m.y = read_vector_csv(require("y", "y.csv"));
  } else {
    m.A_u = SparseMatrix::zero(0, m.Q_u.rows());
  }
  if (has("A_beta")) {
    m.A_beta = read_dense_csv(require("A_beta", "A_beta.csv"));
  } else {
    m.A_beta = DenseMatrix(m.n_obs(), 0);
  }
  if (m.n_beta() > 0 && !has("A_beta")) require("A_beta", "A_beta.csv");
  m.validate();
  return m;
}

}  // namespace gmrf
