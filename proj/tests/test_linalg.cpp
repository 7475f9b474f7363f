#include <doctest.h>

#include <complex>
#include <set>

#include "rrmar/errors.hpp"
#include "rrmar/linalg.hpp"
#include "test_support.hpp"

using namespace rrmar;

TEST_CASE("kron: identity, scalar and block cases") {
  CHECK(kron(Mat::Identity(2, 2), Mat::Identity(3, 3)).isApprox(Mat::Identity(6, 6)));

  Rng rng(1);
  const Mat b = standard_normal(rng, 3, 2);
  Mat two(1, 1);
  two << 2.0;
  CHECK((kron(two, b) - 2.0 * b).norm() == 0.0);

  Mat swap(2, 2);
  swap << 0, 1, 1, 0;
  Mat expected = Mat::Zero(4, 4);
  expected.topLeftCorner(2, 2) = swap;
  expected.bottomRightCorner(2, 2) = swap;
  CHECK(kron(Mat::Identity(2, 2), swap) == expected);

  const Mat a = standard_normal(rng, 2, 3);
  const Mat k = kron(a, b);
  REQUIRE(k.rows() == 6);
  REQUIRE(k.cols() == 6);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index r = 0; r < 3; ++r)
        for (Index c = 0; c < 2; ++c) CHECK(k(i * 3 + r, j * 2 + c) == a(i, j) * b(r, c));
}

TEST_CASE("vec stacks columns and satisfies vec(AXB) = (B^T kron A) vec(X)") {
  Mat m(2, 2);
  m << 1, 3, 2, 4;
  CHECK(vec(m) == (Vec(4) << 1, 2, 3, 4).finished());
  const Vec col = (Vec(3) << 5, 6, 7).finished();
  CHECK(vec(Mat(col)) == col);

  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat a = standard_normal(rng, 2, 3);
    const Mat x = standard_normal(rng, 3, 4);
    const Mat b = standard_normal(rng, 4, 5);
    CHECK((vec(a * x * b) - kron(b.transpose(), a) * vec(x)).norm() < 1e-10);
  }
}

TEST_CASE("vecb: explicit 3x4 ordering and permutation equivalence") {
  Mat y(3, 4);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 3; ++i) y(i, j) = static_cast<double>(i + 3 * j);  // entry == vec index
  const Vec b = vecb(y, 2, 2);
  const Vec expected = (Vec(12) << 0, 3, 1, 2, 4, 5, 6, 9, 7, 8, 10, 11).finished();
  CHECK(b == expected);

  // Degenerate partitions: everything falls in Y22, so vecb == vec.
  CHECK(vecb(y, 3, 4) == vec(y));
  CHECK(vecb_permutation(3, 4, 3, 4).matrix() == Mat::Identity(12, 12));

  CHECK_THROWS_AS(vecb(y, 4, 1), DimensionError);
  CHECK_THROWS_AS(vecb_permutation(3, 4, 1, 5), DimensionError);
}

// Brute-force oracle: walk the four blocks in order, each column-major, and record
// which vec index lands in each slot.
static std::vector<Index> brute_force_vecb_targets(Index n1, Index n2, Index r1, Index r2) {
  const Index a = n1 - r1;
  const Index b = n2 - r2;
  struct Block {
    Index r0, r1, c0, c1;
  };
  const Block blocks[4] = {{0, a, 0, b}, {a, n1, 0, b}, {0, a, b, n2}, {a, n1, b, n2}};
  std::vector<Index> target(n1 * n2, -1);
  Index slot = 0;
  for (const auto& blk : blocks)
    for (Index j = blk.c0; j < blk.c1; ++j)
      for (Index i = blk.r0; i < blk.r1; ++i) target[i + n1 * j] = slot++;
  return target;
}

TEST_CASE("vecb_permutation matches block enumeration and is a bijection") {
  const auto p22 = vecb_permutation(2, 2, 1, 1);
  CHECK(p22.target_of == brute_force_vecb_targets(2, 2, 1, 1));
  CHECK(p22.target_of == std::vector<Index>{0, 1, 2, 3});

  Rng rng(3);
  for (Index n1 = 1; n1 <= 5; ++n1)
    for (Index n2 = 1; n2 <= 5; ++n2)
      for (Index r1 = 0; r1 <= n1; ++r1)
        for (Index r2 = 0; r2 <= n2; ++r2) {
          const auto perm = vecb_permutation(n1, n2, r1, r2);
          REQUIRE(perm.is_bijection());
          CHECK(perm.target_of == brute_force_vecb_targets(n1, n2, r1, r2));
          const Mat y = standard_normal(rng, n1, n2);
          CHECK(perm.apply(vec(y)) == vecb(y, r1, r2));
          const auto round = perm.inverse();
          for (Index s = 0; s < perm.size(); ++s) CHECK(round.target_of[perm.target_of[s]] == s);
          CHECK(unvecb(vecb(y, r1, r2), n1, n2, r1, r2) == y);
        }
}

TEST_CASE("null_space_basis") {
  CHECK(null_space_basis(Mat::Identity(4, 4)).cols() == 0);

  Mat ones(2, 1);
  ones << 1, 1;
  const Mat b = null_space_basis(ones);
  REQUIRE(b.cols() == 1);
  CHECK(std::abs(b(0, 0) + b(1, 0)) < 1e-14);
  CHECK(std::abs(std::abs(b(0, 0)) - std::sqrt(0.5)) < 1e-14);

  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Mat m = standard_normal(rng, 4, 2);
    const Mat basis = null_space_basis(m);
    REQUIRE(basis.cols() == 2);
    CHECK((basis.transpose() * m).norm() < 1e-10);
    CHECK((basis.transpose() * basis - Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK((basis.transpose() * m).norm() <= default_rank_tol(m) * m.norm() + 1e-14);
  }

  // Rank-deficient input: width is rows - rank.
  const Mat u = standard_normal(rng, 5, 2);
  const Mat low = u * standard_normal(rng, 2, 4);
  CHECK(null_space_basis(low).cols() == 3);
}

TEST_CASE("kron_null_decomposition: widths, annihilation, orthogonality, spanning") {
  Rng rng(5);
  const Mat u1 = standard_normal(rng, 3, 2);
  const Mat u2 = standard_normal(rng, 4, 3);
  const auto bases = kron_null_decomposition(u1, u2);
  CHECK(bases.column_specific.cols() == 2);
  CHECK(bases.row_specific.cols() == 3);
  CHECK(bases.joint.cols() == 1);

  const auto full = kron_null_decomposition(standard_normal(rng, 3, 3), standard_normal(rng, 4, 4));
  CHECK(full.column_specific.cols() == 0);
  CHECK(full.row_specific.cols() == 0);
  CHECK(full.joint.cols() == 0);

  for (int rep = 0; rep < 30; ++rep) {
    const Index n1 = 1 + rep % 4, n2 = 2 + rep % 3;
    const Index r1 = 1 + rep % n1, r2 = 1 + (rep / 2) % n2;
    const Mat a = standard_normal(rng, n1, r1);
    const Mat b = standard_normal(rng, n2, r2);
    const auto nb = kron_null_decomposition(a, b);
    Mat stacked(n1 * n2, nb.column_specific.cols() + nb.row_specific.cols() + nb.joint.cols());
    stacked << nb.column_specific, nb.row_specific, nb.joint;
    CHECK(stacked.cols() == n1 * n2 - r1 * r2);
    const Mat k = kron(b, a);
    CHECK((stacked.transpose() * k).norm() < 1e-10);
    // SVD oracle on the Kronecker product itself.
    CHECK(numerical_rank(stacked) == n1 * n2 - numerical_rank(k));
    Mat all(n1 * n2, n1 * n2);
    all << column_space_basis(k), stacked;
    CHECK(numerical_rank(all) == n1 * n2);
  }

  Mat deficient(3, 2);
  deficient << 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS(kron_null_decomposition(deficient, standard_normal(rng, 4, 1)), DimensionError);
}

TEST_CASE("spectral_radius") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 0.5;
  d(1, 1) = -0.9;
  CHECK(spectral_radius(d) == doctest::Approx(0.9).epsilon(1e-14));
  Mat nil(2, 2);
  nil << 0, 1, 0, 0;
  CHECK(spectral_radius(nil) == doctest::Approx(0.0));
  CHECK_THROWS_AS(spectral_radius(Mat::Zero(2, 3)), DimensionError);

  // AR(2) polynomial 1 - phi1 z - phi2 z^2: radius = max 1/|root|.
  const double cases[][2] = {{0.5, 0.3}, {0.5, -0.8}, {1.2, -0.5}, {-0.3, 0.1}};
  for (const auto& c : cases) {
    const double phi1 = c[0], phi2 = c[1];
    const std::complex<double> disc = std::sqrt(std::complex<double>(phi1 * phi1 + 4.0 * phi2));
    const std::complex<double> z1 = (-phi1 + disc) / (2.0 * phi2);
    const std::complex<double> z2 = (-phi1 - disc) / (2.0 * phi2);
    const double oracle = std::max(1.0 / std::abs(z1), 1.0 / std::abs(z2));
    Mat comp(2, 2);
    comp << phi1, phi2, 1.0, 0.0;
    CHECK(spectral_radius(comp) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("nearest_psd") {
  Rng rng(9);
  const Mat g = standard_normal(rng, 4, 4);
  const Mat psd = g * g.transpose();
  CHECK((nearest_psd(psd) - psd).cwiseAbs().maxCoeff() < 1e-12);

  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -0.3;
  Mat expected = Mat::Zero(2, 2);
  expected(0, 0) = 1.0 + kPsdJitter;
  expected(1, 1) = kPsdJitter;
  CHECK((nearest_psd(d) - expected).norm() < 1e-15);

  for (int rep = 0; rep < 20; ++rep) {
    const Mat h = standard_normal(rng, 5, 5);
    const Mat s = 0.5 * (h + h.transpose());
    const Mat x = nearest_psd(s);
    Eigen::SelfAdjointEigenSolver<Mat> ex(x);
    CHECK(ex.eigenvalues().minCoeff() > -1e-12);
    // Optimality: X - S is positive semidefinite and complementary to X
    // (up to the diagonal jitter).
    const Mat diff = x - s - kPsdJitter * Mat::Identity(5, 5);
    Eigen::SelfAdjointEigenSolver<Mat> ed(diff);
    CHECK(ed.eigenvalues().minCoeff() > -1e-10);
    CHECK((x * diff).norm() < 1e-9);
    // No random PSD competitor is closer.
    for (int k = 0; k < 20; ++k) {
      const Mat z0 = standard_normal(rng, 5, 5);
      const Mat z = x + 0.1 * z0 * z0.transpose();
      CHECK((s - x).norm() <= (s - z).norm() + 1e-12);
    }
    CHECK((nearest_psd(x) - x).norm() < 1e-10);
  }
}

TEST_CASE("sample_matrix_normal: moments, determinism and degenerate scale") {
  Rng rng(2024);
  const int draws = 100000;
  const Mat mean = Mat::Zero(2, 2);
  Mat acc = Mat::Zero(4, 4);
  for (int i = 0; i < draws; ++i) {
    const Vec v = vec(sample_matrix_normal(rng, mean, Mat::Identity(2, 2), Mat::Identity(2, 2)));
    acc += v * v.transpose();
  }
  acc /= draws;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      const double se = (i == j ? std::sqrt(2.0) : 1.0) / std::sqrt(static_cast<double>(draws));
      CHECK(std::abs(acc(i, j) - (i == j ? 1.0 : 0.0)) < 3.0 * se);
    }

  Mat s1(2, 2), s2(3, 3);
  s1 << 2.0, 0.5, 0.5, 1.0;
  s2 << 1.0, 0.3, 0.0, 0.3, 2.0, -0.4, 0.0, -0.4, 1.5;
  Mat acc2 = Mat::Zero(6, 6);
  Rng rng2(77);
  for (int i = 0; i < draws; ++i) {
    const Vec v = vec(sample_matrix_normal(rng2, Mat::Zero(2, 3), s1, s2));
    acc2 += v * v.transpose();
  }
  acc2 /= draws;
  CHECK((acc2 - kron(s2, s1)).cwiseAbs().maxCoeff() < 0.06);

  Rng a(42), b(42);
  Mat mu(2, 3);
  mu << 1, 2, 3, 4, 5, 6;
  CHECK(sample_matrix_normal(a, mu, s1, s2) == sample_matrix_normal(b, mu, s1, s2));

  Rng c(1);
  const Mat tiny = sample_matrix_normal(c, mu, 1e-20 * s1, 1e-20 * s2);
  CHECK((tiny - mu).norm() < 1e-15);

  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(sample_matrix_normal(c, Mat::Zero(2, 3), bad, s2), NotPositiveDefinite);
}
