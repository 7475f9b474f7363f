#include <doctest.h>

#include "rrmar/errors.hpp"
#include "rrmar/model.hpp"
#include "test_support.hpp"

using namespace rrmar;
using rrmar::testing::random_params;
using rrmar::testing::random_spd;

namespace {

RRMarParams random_reduced(Rng& rng, const Dims& d) {
  RRMarParams rr;
  rr.u1 = standard_normal(rng, d.n1, d.r1);
  rr.u2 = standard_normal(rng, d.n2, d.r2);
  for (int j = 0; j < d.p; ++j) rr.lags.push_back({standard_normal(rng, d.n1, d.r1), standard_normal(rng, d.n2, d.r2)});
  rr.sigma1 = random_spd(rng, d.n1);
  rr.sigma2 = random_spd(rng, d.n2);
  return rr;
}

Dims random_dims(Rng& rng, int max_n) {
  std::uniform_int_distribution<int> n(1, max_n);
  Dims d;
  d.n1 = n(rng);
  d.n2 = n(rng);
  d.r1 = std::uniform_int_distribution<int>(1, d.n1)(rng);
  d.r2 = std::uniform_int_distribution<int>(1, d.n2)(rng);
  d.p = std::uniform_int_distribution<int>(1, 3)(rng);
  return d;
}

}  // namespace

TEST_CASE("Dims::validate") {
  CHECK_NOTHROW(Dims{3, 4, 2, 2, 1}.validate());
  CHECK_THROWS_AS(Dims({3, 4, 0, 2, 1}).validate(), DimensionError);
  CHECK_THROWS_AS(Dims({3, 4, 4, 2, 1}).validate(), DimensionError);
  CHECK_THROWS_AS(Dims({3, 4, 2, 2, 0}).validate(), DimensionError);
}

TEST_CASE("build_omega: 2x2 rank (1,1) closed form") {
  const Dims d{2, 2, 1, 1, 1};
  Mat ds(1, 1), gs(1, 1);
  ds << 0.7;
  gs << -1.3;
  const Mat omega = build_omega(ds, gs, d);
  // vecb == vec here: (Y11, Y21, Y12, Y22).
  Mat expected(4, 4);
  expected << 1, 0.7, -1.3, 0.7 * -1.3,  //
      0, 1, 0, -1.3,                     //
      0, 0, 1, 0.7,                      //
      0, 0, 0, 1;
  CHECK((omega - expected).norm() < 1e-15);

  // Row 1 applied to vec(Y) is delta^T Y gamma.
  Rng rng(1);
  const Mat y = standard_normal(rng, 2, 2);
  PseudoStructParams ps;
  ps.dims = d;
  ps.delta_star = ds;
  ps.gamma_star = gs;
  const double joint = (ps.delta().transpose() * y * ps.gamma())(0, 0);
  CHECK(std::abs((omega * vecb(y, 1, 1))(0) - joint) < 1e-14);
}

TEST_CASE("build_omega: triangular, unit determinant, annihilates in the right blocks") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const Dims d = random_dims(rng, 5);
    const PseudoStructParams ps = random_params(rng, d);
    const Mat omega = build_omega(ps.delta_star, ps.gamma_star, d);
    CHECK(omega.isUpperTriangular(0.0));
    CHECK(omega.diagonal() == Vec::Ones(d.n()));
    CHECK(std::abs(omega.determinant() - 1.0) < 1e-9);

    // The first block rows reproduce the structural residual combinations.
    const Mat y = standard_normal(rng, d.n1, d.n2);
    const Vec z = omega * vecb(y, d.r1, d.r2);
    const Mat delta = ps.delta();
    const Mat gamma = ps.gamma();
    const Index a = d.n1 - d.r1, b = d.n2 - d.r2;
    const Mat joint = delta.transpose() * y * gamma;  // a x b
    const Mat col = (y * gamma).bottomRows(d.r1);     // r1 x b
    const Mat row = (delta.transpose() * y).rightCols(d.r2);  // a x r2
    CHECK((z.head(a * b) - vec(joint)).norm() < 1e-10);
    CHECK((z.segment(a * b, d.r1 * b) - vec(col)).norm() < 1e-10);
    CHECK((z.segment(a * b + d.r1 * b, a * d.r2) - vec(row)).norm() < 1e-10);
    CHECK((z.tail(d.r1 * d.r2) - vec(y.bottomRightCorner(d.r1, d.r2))).norm() == 0.0);
  }
}

TEST_CASE("Omega P A_j == Pi_j and the companions agree") {
  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const Dims d = random_dims(rng, 6);
    const PseudoStructParams ps = random_params(rng, d);
    const Mat omega_p = build_omega(ps.delta_star, ps.gamma_star, d) * vecb_permutation(d.n1, d.n2, d.r1, d.r2).matrix();
    const auto a = coefficient_matrices(ps);
    const auto pi = build_pi(ps.lags, d);
    REQUIRE(a.size() == pi.size());
    for (size_t j = 0; j < a.size(); ++j) {
      const double scale = 1.0 + a[j].cwiseAbs().maxCoeff();
      CHECK((omega_p * a[j] - pi[j]).cwiseAbs().maxCoeff() < 1e-10 * scale);
    }
    const auto sc = structural_companion(ps);
    const Mat comp = companion_matrix(ps);
    CHECK((sc.lhs.lu().solve(sc.rhs) - comp).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + comp.cwiseAbs().maxCoeff()));

    // Annihilation: delta^T U1 = 0, U2^T gamma = 0 after the transposes.
    const RRMarParams rr = pseudo_to_reduced(ps);
    CHECK((ps.delta().transpose() * rr.u1).norm() < 1e-12);
    CHECK((ps.gamma().transpose() * rr.u2).norm() < 1e-12);
    CHECK(free_parameter_count(ps) == static_cast<long>(d.r1) * d.n1 * (1 + d.p) - d.r1 * d.r1 +
                                          static_cast<long>(d.r2) * d.n2 * (1 + d.p) - d.r2 * d.r2);
  }
}

TEST_CASE("rrmar_to_pseudo preserves coefficients and is idempotent") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const Dims d = random_dims(rng, 6);
    const RRMarParams rr = random_reduced(rng, d);
    const PseudoStructParams ps = rrmar_to_pseudo(rr);
    CHECK(ps.dims == d);
    const auto a0 = coefficient_matrices(rr);
    const auto a1 = coefficient_matrices(ps);
    for (size_t j = 0; j < a0.size(); ++j)
      CHECK((a0[j] - a1[j]).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + a0[j].cwiseAbs().maxCoeff()));
    const RRMarParams back = pseudo_to_reduced(ps);
    CHECK(back.u1.bottomRows(d.r1) == Mat::Identity(d.r1, d.r1));
    const PseudoStructParams again = rrmar_to_pseudo(back);
    CHECK((again.delta_star - ps.delta_star).norm() < 1e-12);
    CHECK((again.gamma_star - ps.gamma_star).norm() < 1e-12);
  }
}

TEST_CASE("rrmar_to_pseudo: singular bottom block reports a usable ordering") {
  Rng rng(37);
  const Dims d{4, 3, 2, 1, 1};
  RRMarParams rr = random_reduced(rng, d);
  rr.u1.row(2).setZero();  // bottom 2x2 block now singular
  try {
    rrmar_to_pseudo(rr);
    FAIL("expected NonRotatableError");
  } catch (const NonRotatableError& e) {
    const auto& order = e.suggested_row_order;
    REQUIRE(order.size() == 4u);
    Mat reordered(4, 2);
    for (int i = 0; i < 4; ++i) reordered.row(i) = rr.u1.row(order[static_cast<size_t>(i)]);
    CHECK(std::abs(reordered.bottomRows(2).determinant()) > 1e-8);
    CHECK(e.suggested_col_order == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("companion_matrix layout and stationarity") {
  Mat a1(1, 1), a2(1, 1);
  a1 << 0.5;
  a2 << 0.3;
  const Mat c = companion_matrix({a1, a2});
  Mat expected(2, 2);
  expected << 0.5, 0.3, 1.0, 0.0;
  CHECK(c == expected);

  Rng rng(41);
  PseudoStructParams ps = random_params(rng, Dims{3, 2, 1, 1, 2}, 0.5);
  CHECK(is_stationary(ps));
  for (auto& l : ps.lags) l.u3 *= 100.0;
  CHECK_FALSE(is_stationary(ps));
}

TEST_CASE("canonicalize_lags leaves Pi unchanged") {
  Rng rng(43);
  const Dims d{3, 4, 2, 2, 2};
  PseudoStructParams ps = random_params(rng, d);
  const auto before = build_pi(ps.lags, d);
  const auto canon = canonicalize_lags(ps.lags);
  const auto after = build_pi(canon, d);
  for (size_t j = 0; j < before.size(); ++j) {
    CHECK((before[j] - after[j]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(canon[j].u3(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("structural_residuals: the joint series has no lagged dynamics") {
  Rng rng(47);
  const Dims d{3, 4, 2, 2, 1};
  const PseudoStructParams ps = random_params(rng, d);
  const MatrixSeries s = rrmar::testing::simulate_plain(rng, ps, 30);
  const auto res = structural_residuals(s, ps);
  REQUIRE(res.joint.size() == 30u);
  CHECK(res.row.front().rows() == 1);
  CHECK(res.row.front().cols() == 4);
  CHECK(res.column.front().rows() == 3);
  CHECK(res.column.front().cols() == 2);
  // delta^T A_j = 0 on the row side: delta^T Y_t equals delta^T E_t.
  const RRMarParams rr = pseudo_to_reduced(ps);
  for (Index t = 1; t < s.size(); ++t) {
    const Mat fitted = rr.u1 * rr.lags[0].u3.transpose() * s[t - 1] * rr.lags[0].u4 * rr.u2.transpose();
    CHECK((ps.delta().transpose() * fitted).norm() < 1e-10);
    CHECK((fitted * ps.gamma()).norm() < 1e-10);
  }
  MatrixSeries wrong;
  wrong.obs.push_back(Mat::Zero(2, 2));
  CHECK_THROWS_AS(structural_residuals(wrong, ps), DimensionError);
}

TEST_CASE("PseudoStructParams::validate") {
  Rng rng(53);
  PseudoStructParams ps = random_params(rng, Dims{3, 3, 1, 2, 1});
  CHECK_NOTHROW(ps.validate());
  PseudoStructParams bad = ps;
  bad.sigma1(0, 0) = -5.0;
  CHECK_THROWS_AS(bad.validate(), NotPositiveDefinite);
  bad = ps;
  bad.delta_star(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), NonFiniteError);
  bad = ps;
  bad.lags.push_back(bad.lags.front());
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}
