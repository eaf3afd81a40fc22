#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <vector>

using namespace sntd;

TEST_CASE("shape basics", "[tensor]") {
  Shape s({3, 4, 2});
  CHECK(s.order() == 3);
  CHECK(s.dim(0) == 3);
  CHECK(s.dim(2) == 2);
  CHECK(s.num_elements() == 24);
  CHECK(s.stride(0) == 1);
  CHECK(s.stride(1) == 3);
  CHECK(s.stride(2) == 12);
  CHECK(s.trailing(0) == 8);
  CHECK(s.trailing(1) == 2);
  CHECK(s.trailing(2) == 1);
  CHECK(s == Shape({3, 4, 2}));
  CHECK(s != Shape({3, 4, 3}));

  CHECK_THROWS_AS(Shape(std::vector<index_t>{}), std::invalid_argument);
  CHECK_THROWS_AS(Shape({2, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Shape({1, 1, 1, 1, 1, 1, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("dense tensor indexing is first-index-fastest", "[tensor]") {
  DenseTensor t{Shape({2, 3, 2})};
  for (index_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  // linear position i0 + 2*i1 + 6*i2
  CHECK(t.at({0, 0, 0}) == 0.0);
  CHECK(t.at({1, 0, 0}) == 1.0);
  CHECK(t.at({0, 1, 0}) == 2.0);
  CHECK(t.at({0, 0, 1}) == 6.0);
  CHECK(t.at({1, 2, 1}) == 11.0);
  CHECK(t.linear_index({1, 2, 1}) == 11);
  CHECK_THROWS_AS(t.linear_index({1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(t.linear_index({1, 3, 0}), std::out_of_range);

  t.as_vector()[3] = -7.0;  // the map aliases storage
  CHECK(t[3] == -7.0);
  CHECK(frob_norm_sq(t) == Catch::Approx(t.as_vector().squaredNorm()));
}

TEST_CASE("matricize matches the fiber index map", "[tensor]") {
  for (std::uint64_t seed : {11u, 12u}) {
    const DenseTensor x = oracle::random_tensor({3, 4, 2}, seed);
    for (int mode = 0; mode < 3; ++mode) {
      const Matrix lib = matricize(x, mode);
      const Matrix ref = oracle::unfold_naive(x, mode);
      REQUIRE(lib.rows() == ref.rows());
      REQUIRE(lib.cols() == ref.cols());
      CHECK((lib - ref).cwiseAbs().maxCoeff() == 0.0);  // pure copies
    }
  }
  const DenseTensor x4 = oracle::random_tensor({2, 3, 2, 2}, 13);
  for (int mode = 0; mode < 4; ++mode)
    CHECK((matricize(x4, mode) - oracle::unfold_naive(x4, mode))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("fold inverts matricize", "[tensor]") {
  const DenseTensor x = oracle::random_tensor({3, 2, 4}, 21);
  for (int mode = 0; mode < 3; ++mode) {
    const DenseTensor back = fold(matricize(x, mode), mode, x.shape());
    REQUIRE(back.shape() == x.shape());
    for (index_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
  }
  CHECK_THROWS_AS(fold(Matrix::Zero(3, 7), 0, Shape({3, 2, 4})),
                  std::invalid_argument);
}

TEST_CASE("ttm matches explicit summation", "[tensor]") {
  const DenseTensor x = oracle::random_tensor({3, 4, 2}, 31, false);
  for (int mode = 0; mode < 3; ++mode) {
    const Matrix a = oracle::random_matrix(5, x.dim(mode), 40 + mode, false);
    const DenseTensor lib = ttm(x, a, mode);
    const DenseTensor ref = oracle::ttm_naive(x, a, mode);
    REQUIRE(lib.shape() == ref.shape());
    for (index_t i = 0; i < lib.size(); ++i)
      CHECK(lib[i] == Catch::Approx(ref[i]).margin(1e-12));
  }
  CHECK_THROWS_AS(ttm(x, Matrix::Zero(5, 99), 1), std::invalid_argument);
}

TEST_CASE("ttm_chain contracts every mode and honors skip", "[tensor]") {
  const DenseTensor c = oracle::random_tensor({2, 3, 2}, 51);
  std::vector<Matrix> mats = {oracle::random_matrix(4, 2, 52),
                              oracle::random_matrix(5, 3, 53),
                              oracle::random_matrix(3, 2, 54)};
  const DenseTensor full = ttm_chain(c, mats);
  const DenseTensor ref = oracle::ttm_chain_naive(c, mats);
  REQUIRE(full.shape() == ref.shape());
  for (index_t i = 0; i < full.size(); ++i)
    CHECK(full[i] == Catch::Approx(ref[i]).margin(1e-12));

  const DenseTensor skip1 = ttm_chain(c, mats, 1);
  DenseTensor ref1 = oracle::ttm_naive(c, mats[0], 0);
  ref1 = oracle::ttm_naive(ref1, mats[2], 2);
  REQUIRE(skip1.shape() == ref1.shape());
  for (index_t i = 0; i < skip1.size(); ++i)
    CHECK(skip1[i] == Catch::Approx(ref1[i]).margin(1e-12));
}

TEST_CASE("vec of a multi-mode product is the kronecker chain times vec",
          "[tensor]") {
  const DenseTensor c = oracle::random_tensor({2, 3, 2}, 61);
  std::vector<Matrix> mats = {oracle::random_matrix(3, 2, 62),
                              oracle::random_matrix(4, 3, 63),
                              oracle::random_matrix(2, 2, 64)};
  const DenseTensor x = ttm_chain(c, mats);
  const Vector lhs = x.as_vector();
  const Vector rhs = oracle::kron_desc(mats) * c.as_vector();
  REQUIRE(lhs.size() == rhs.size());
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("mode-n unfolding of a product factors through the kronecker chain",
          "[tensor]") {
  const DenseTensor c = oracle::random_tensor({2, 2, 3}, 71);
  std::vector<Matrix> mats = {oracle::random_matrix(4, 2, 72),
                              oracle::random_matrix(3, 2, 73),
                              oracle::random_matrix(4, 3, 74)};
  const DenseTensor x = ttm_chain(c, mats);
  for (int n = 0; n < 3; ++n) {
    const Matrix lhs = matricize(x, n);
    const Matrix rhs = mats[static_cast<size_t>(n)] * matricize(c, n) *
                       oracle::kron_desc(mats, n).transpose();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("spectral norm of a kronecker product multiplies", "[tensor]") {
  const Matrix a = oracle::random_matrix(4, 3, 81, false);
  const Matrix b = oracle::random_matrix(3, 2, 82, false);
  const Matrix ga = a.transpose() * a, gb = b.transpose() * b;
  const double lib = spectral_norm_psd(ga) * spectral_norm_psd(gb);
  const double ref = oracle::spectral_norm_svd(oracle::kron(ga, gb));
  CHECK(std::abs(lib - ref) <= 1e-8 * ref);
}

TEST_CASE("power iteration agrees with an svd oracle", "[tensor]") {
  for (index_t n : {1, 2, 5, 9}) {
    const Matrix a = oracle::random_matrix(n + 2, n, 90 + static_cast<unsigned>(n), false);
    const Matrix g = a.transpose() * a;
    const double lib = spectral_norm_psd(g);
    const double ref = oracle::spectral_norm_svd(g);
    CHECK(lib == Catch::Approx(ref).epsilon(1e-7));
  }
  CHECK(spectral_norm_psd(Matrix::Zero(3, 3)) == 0.0);
  const Matrix id = Matrix::Identity(4, 4);
  CHECK(spectral_norm_psd(id) == Catch::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("norm helpers", "[tensor]") {
  DenseTensor t{Shape({2, 2})};
  t[0] = 3.0; t[1] = -4.0; t[2] = 0.0; t[3] = 0.0;
  CHECK(frob_norm_sq(t) == 25.0);
  CHECK(frob_norm(t) == 5.0);
  CHECK(max_abs(t) == 4.0);
  CHECK(norm_l1(t) == 7.0);
  DenseTensor u = t;
  CHECK(inner(t, u) == 25.0);
}
