#include <doctest.h>

#include <sstream>

#include "gmrf/model.hpp"
#include "gmrf/sparse.hpp"
#include "test_support.hpp"

using namespace gmrf;

TEST_CASE("spmv on identity, AR(1) and zero matrices") {
  const std::vector<double> x{1, 2, 3};
  CHECK(spmv(SparseMatrix::identity(3), x) == x);

  const SparseMatrix q = build_ar1_precision(0.95, 3);
  const auto y = spmv(q, std::vector<double>{1, 1, 1});
  CHECK(y[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(0.05).epsilon(1e-12));

  const auto z = spmv(SparseMatrix::zero(4, 4), std::vector<double>{1, -2, 3, 4});
  CHECK(z == std::vector<double>(4, 0.0));

  CHECK_THROWS_AS(spmv(q, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("spmv parallel matches serial reference") {
  std::mt19937_64 rng(3);
  const SparseMatrix a = testing::random_spd(3000, 0.01, rng);
  const auto x = testing::random_vector(3000, rng);
  std::vector<double> ys(3000);
  spmv_serial(a, x, ys);
  CHECK(spmv(a, x) == ys);
}

TEST_CASE("symmetric storage keeps both triangles and bilinear symmetry holds") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const SparseMatrix a = testing::random_spd(40, 0.1, rng);
    REQUIRE(a.is_symmetric());
    for (Index i = 0; i < a.rows(); ++i)
      for (const Index j : a.row(i).cols) CHECK(a.at(i, j) == a.at(j, i));
    const auto x = testing::random_vector(40, rng);
    const auto y = testing::random_vector(40, rng);
    const double lhs = dot(x, spmv(a, y));
    const double rhs = dot(spmv(a, x), y);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
  }
}

TEST_CASE("assembly sums duplicates, drops zeros and validates structure") {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 0, 1.0}, {1, 0, -1.0}});
  CHECK(a.nnz() == 1);
  CHECK(a.at(0, 0) == 3.0);
  CHECK_THROWS(SparseMatrix(2, 2, {0, 2, 2}, {1, 0}, {1.0, 2.0}));  // columns not increasing
  CHECK_THROWS(SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}}, true));  // not symmetric
  CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), DimensionError);
}

TEST_CASE("kron definition, identity and scalar factors") {
  const SparseMatrix b = SparseMatrix::from_triplets(2, 2, {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {1, 1, 4}});
  const SparseMatrix i2 = SparseMatrix::identity(2);
  const DenseMatrix blk = kron(i2, b).to_dense();
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c)
      CHECK(blk(r, c) == ((r / 2 == c / 2) ? b.at(r % 2, c % 2) : 0.0));

  const SparseMatrix two = SparseMatrix::from_triplets(1, 1, {{0, 0, 2.0}});
  const DenseMatrix twob = kron(two, b).to_dense();
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 2; ++c) CHECK(twob(r, c) == 2.0 * b.at(r, c));

  const SparseMatrix a = SparseMatrix::from_triplets(2, 2, {{0, 0, 5}, {0, 1, -1}, {1, 0, 7}, {1, 1, 0.5}});
  const DenseMatrix ab = kron(a, b).to_dense();
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      for (Index k = 0; k < 2; ++k)
        for (Index l = 0; l < 2; ++l) CHECK(ab(i * 2 + k, j * 2 + l) == a.at(i, j) * b.at(k, l));
}

TEST_CASE("kron mixed-product property") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const SparseMatrix a = testing::random_spd(4, 0.5, rng);
    const SparseMatrix b = testing::random_spd(5, 0.5, rng);
    const auto x = testing::random_vector(4, rng);
    const auto y = testing::random_vector(5, rng);
    std::vector<double> xy;
    for (double xi : x)
      for (double yj : y) xy.push_back(xi * yj);
    const auto lhs = spmv(kron(a, b), xy);
    const auto ax = spmv(a, x);
    const auto by = spmv(b, y);
    std::vector<double> rhs;
    for (double u : ax)
      for (double v : by) rhs.push_back(u * v);
    CHECK(testing::rel_norm_error(lhs, rhs) <= 1e-12);
  }
}

TEST_CASE("principal and off-diagonal block extraction on the AR(1) partition") {
  const double phi = 0.95;
  const SparseMatrix q = build_ar1_precision(phi, 99);
  std::vector<Index> all(99);
  std::iota(all.begin(), all.end(), 0);
  const SparseMatrix full = extract_principal_submatrix(q, all);
  CHECK(full.to_dense().values().size() == q.to_dense().values().size());
  CHECK(std::equal(full.values().begin(), full.values().end(), q.values().begin()));

  std::vector<Index> a1(49);
  std::iota(a1.begin(), a1.end(), 0);  // x_1..x_49
  const SparseMatrix qaa = extract_principal_submatrix(q, a1);
  CHECK(qaa.rows() == 49);
  CHECK(qaa.at(0, 0) == 1.0);
  CHECK(qaa.at(48, 48) == doctest::Approx(1 + phi * phi));
  CHECK(qaa.at(47, 48) == -phi);

  const std::vector<Index> s{49};  // x_50
  const SparseMatrix qas = extract_offdiag_block(q, a1, s);
  CHECK(qas.rows() == 49);
  CHECK(qas.cols() == 1);
  CHECK(qas.nnz() == 1);
  CHECK(qas.at(48, 0) == -phi);

  const std::vector<Index> far{10}, other{80};
  CHECK(extract_offdiag_block(q, far, other).nnz() == 0);
  CHECK(extract_offdiag_block(q, {}, s).rows() == 0);
  CHECK(extract_offdiag_block(q, {}, s).cols() == 1);
  CHECK_THROWS(extract_offdiag_block(q, a1, std::vector<Index>{48}));

  const SparseMatrix single = extract_principal_submatrix(q, std::vector<Index>{5});
  CHECK(single.rows() == 1);
  CHECK(single.at(0, 0) == doctest::Approx(1 + phi * phi));
  CHECK_THROWS(extract_principal_submatrix(q, std::vector<Index>{120}));
}

TEST_CASE("MatrixMarket round trip keeps 17 significant digits") {
  std::mt19937_64 rng(8);
  const SparseMatrix a = testing::random_spd(30, 0.2, rng);
  std::stringstream ss;
  write_matrix_market(ss, a);
  CHECK(ss.str().find("symmetric") != std::string::npos);
  const SparseMatrix b = read_matrix_market(ss);
  CHECK(b.is_symmetric());
  REQUIRE(b.nnz() == a.nnz());
  for (Offset p = 0; p < a.nnz(); ++p) CHECK(a.values()[p] == b.values()[p]);

  const SparseMatrix g = SparseMatrix::from_triplets(2, 3, {{0, 2, 1.5}, {1, 0, -2.0}});
  std::stringstream gs;
  write_matrix_market(gs, g);
  const SparseMatrix g2 = read_matrix_market(gs);
  CHECK(g2.rows() == 2);
  CHECK(g2.cols() == 3);
  CHECK(g2.at(0, 2) == 1.5);
}

TEST_CASE("MatrixMarket parse errors carry the line number") {
  std::stringstream bad("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 3.0\n");
  try {
    (void)read_matrix_market(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("dense helpers") {
  std::mt19937_64 rng(2);
  const DenseMatrix a = testing::random_dense_spd(8, 100.0, rng);
  const DenseMatrix inv = dense_spd_inverse(a);
  const DenseMatrix prod = multiply(a, inv);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) CHECK(prod(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));
  DenseMatrix semi(2, 2, {1, -1, -1, 1});
  CHECK_THROWS_AS(dense_cholesky_inplace(semi), NotPositiveDefinite);
}
