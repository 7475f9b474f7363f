#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rrmar/estimate.hpp"
#include "test_support.hpp"

using namespace rrmar;
using rrmar::testing::random_params;
using rrmar::testing::simulate_plain;

namespace {

FitConfig small_config(std::uint64_t seed) {
  FitConfig c;
  c.n_starts = 10;
  c.keep = 3;
  c.seed = seed;
  return c;
}

// Dense oracle of the reduced-form likelihood, used to maximize over the raw
// (U1, U2, U3, U4, L1, L2) coordinates without any normalization.
struct RawModel {
  const MatrixSeries& data;
  int n1, n2, r1, r2;

  Index size() const { return n1 * r1 * 2 + n2 * r2 * 2 + n1 * (n1 + 1) / 2 + n2 * (n2 + 1) / 2; }

  RRMarParams decode(const Vec& x) const {
    RRMarParams rr;
    Index k = 0;
    auto take = [&](Index rows, Index cols) {
      Mat m = unvec(x.segment(k, rows * cols), rows, cols);
      k += rows * cols;
      return m;
    };
    rr.u1 = take(n1, r1);
    rr.u2 = take(n2, r2);
    LagFactors l;
    l.u3 = take(n1, r1);
    l.u4 = take(n2, r2);
    rr.lags.push_back(l);
    auto chol = [&](int n) {
      Mat c = Mat::Zero(n, n);
      for (int j = 0; j < n; ++j)
        for (int i = j; i < n; ++i) c(i, j) = x(k++);
      return c;
    };
    const Mat c1 = chol(n1);
    const Mat c2 = chol(n2);
    rr.sigma1 = c1 * c1.transpose();
    rr.sigma2 = c2 * c2.transpose();
    return rr;
  }

  double value(const Vec& x) const {
    const RRMarParams rr = decode(x);
    const Mat a = coefficient_matrices(rr)[0];
    const Mat cov = kron(rr.sigma2, rr.sigma1);
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Mat l = llt.matrixL();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    if (!std::isfinite(logdet)) return -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (Index t = 1; t < data.size(); ++t) {
      const Vec e = vec(data[t]) - a * vec(data[t - 1]);
      total += -0.5 * logdet - 0.5 * e.dot(llt.solve(e));
    }
    return total;
  }
};

}  // namespace

TEST_CASE("normal_quantile") {
  // Oracle: bisection on the erfc-based CDF.
  const auto invert = [](double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-8));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  for (double p : {1e-10, 1e-4, 0.01, 0.02425, 0.1, 0.3, 0.7, 0.9, 0.99, 0.9999}) {
    const double z = normal_quantile(p);
    CHECK(std::abs(z - invert(p)) < 1.2e-8);
    CHECK(normal_quantile(1.0 - p) == doctest::Approx(-z).epsilon(1e-8));
  }
  CHECK(std::isnan(normal_quantile(1.5)));
}

TEST_CASE("FitConfig validation") {
  FitConfig c;
  CHECK_NOTHROW(c.validate());
  c.keep = 101;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FitConfig{};
  c.tol = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_init_mode("rrmar_warm") == InitMode::RrmarWarm);
  CHECK(to_string(InitMode::Mixed) == "mixed");
  CHECK_THROWS_AS(parse_init_mode("warm"), ConfigError);
}

TEST_CASE("vanishing noise: the estimate recovers delta* and gamma*") {
  // Scaling the error covariance alone leaves the signal-to-noise ratio
  // unchanged, so the signal comes from a unit-scale initial state that decays
  // slowly while the errors are 1e-4. Much smaller errors make the information
  // so badly conditioned (about 1 / (sigma^2 T)) that no start can be certified
  // as a maximum within the iteration budget.
  Rng rng(2);
  const Dims d{3, 4, 2, 2, 1};
  const PseudoStructParams truth = random_params(rng, d, 0.95);
  const Mat a = coefficient_matrices(truth)[0];
  MatrixSeries s;
  Vec y = vec(standard_normal(rng, d.n1, d.n2));
  for (int t = 0; t < 60; ++t) {
    s.obs.push_back(unvec(y, d.n1, d.n2));
    y = a * y + 1e-4 * vec(standard_normal(rng, d.n1, d.n2));
  }
  const FitResult f = fit(s, d, small_config(7));
  CHECK((f.params.delta_star - truth.delta_star).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((f.params.gamma_star - truth.gamma_star).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("fit: maximum, acceptance checks, determinism") {
  Rng rng(3);
  const Dims d{3, 4, 2, 2, 1};
  const PseudoStructParams truth = random_params(rng, d, 0.7);
  const MatrixSeries s = simulate_plain(rng, truth, 250);
  const FitResult f = fit(s, d, small_config(11));
  LikelihoodModel model(s, d);
  CHECK(f.loglik >= model.value(pack(truth).values));
  CHECK(f.loglik == doctest::Approx(model.value(f.theta_hat.values)).epsilon(1e-14));
  CHECK(f.diagnostics.grad_norm <= kGradAccept * (1.0 + std::abs(f.loglik)));
  CHECK_FALSE(f.diagnostics.saddle_flag);
  CHECK(f.n_obs == 249);
  CHECK(f.diagnostics.starts.size() == 10u);
  CHECK(std::count_if(f.diagnostics.starts.begin(), f.diagnostics.starts.end(),
                      [](const StartRecord& r) { return r.continued; }) == 3);
  CHECK((f.se_delta.array() > 0.0).all());
  CHECK((f.se_gamma.array() > 0.0).all());
  CHECK(f.cov_structural.rows() == 6);

  // The returned loglik is the best among continued starts.
  for (const auto& r : f.diagnostics.starts)
    if (r.continued) CHECK(r.final_loglik <= f.loglik + 1e-8);

  const FitResult again = fit(s, d, small_config(11));
  CHECK(again.theta_hat.values == f.theta_hat.values);
  CHECK(again.loglik == f.loglik);
  CHECK(again.covariance.cwiseEqual(f.covariance).count() == f.covariance.size());

  FitConfig threaded = small_config(11);
  threaded.threads = 3;
  const FitResult par = fit(s, d, threaded);
  CHECK(par.theta_hat.values == f.theta_hat.values);
}

TEST_CASE("fit: the reduced-form A matches a direct unnormalized maximization") {
  Rng rng(5);
  const Dims d{2, 3, 1, 1, 1};
  const PseudoStructParams truth = random_params(rng, d, 0.7);
  const MatrixSeries s = simulate_plain(rng, truth, 300);
  const FitResult f = fit(s, d, small_config(5));
  const Mat a_fit = coefficient_matrices(f.params)[0];

  RawModel raw{s, d.n1, d.n2, d.r1, d.r2};
  // Start from the fitted point pushed through an arbitrary rotation and perturbed.
  RRMarParams start = pseudo_to_reduced(f.params);
  start.u1 *= 1.7;
  start.lags[0].u3 /= 1.7;
  Vec x0(raw.size());
  Index k = 0;
  auto put = [&](const Mat& m) {
    x0.segment(k, m.size()) = vec(m);
    k += m.size();
  };
  put(start.u1);
  put(start.u2);
  put(start.lags[0].u3);
  put(start.lags[0].u4);
  for (const Mat* sig : {&start.sigma1, &start.sigma2}) {
    const Mat c = Eigen::LLT<Mat>(*sig).matrixL();
    for (Index j = 0; j < c.cols(); ++j)
      for (Index i = j; i < c.rows(); ++i) x0(k++) = c(i, j);
  }
  x0 += 0.02 * standard_normal(rng, x0.size(), 1);

  const Objective obj = [&](const Vec& x, Vec* g) {
    const double v = raw.value(x);
    if (g) {
      g->resize(x.size());
      Vec w = x;
      for (Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x(i)));
        w(i) = x(i) + h;
        const double fp = raw.value(w);
        w(i) = x(i) - h;
        const double fm = raw.value(w);
        w(i) = x(i);
        (*g)(i) = (fp - fm) / (2.0 * h);
      }
    }
    return v;
  };
  QuasiNewtonOptions opt;
  opt.tol = 1e-13;
  opt.max_iters = 5000;
  const auto r = quasi_newton_maximize(obj, x0, opt);
  const Mat a_raw = coefficient_matrices(raw.decode(r.x))[0];
  CHECK(r.value <= f.loglik + 1e-6);
  CHECK((a_raw - a_fit).norm() < 1e-6);
}

TEST_CASE("fit: failures and warnings") {
  Rng rng(9);
  const Dims d{2, 2, 1, 1, 1};
  MatrixSeries zeros;
  for (int t = 0; t < 30; ++t) zeros.obs.push_back(Mat::Zero(2, 2));
  CHECK_THROWS_AS(fit(zeros, d, small_config(1)), EstimationFailed);

  MatrixSeries shortseries = rrmar::testing::random_series(rng, 2, 2, 4);
  try {
    const FitResult f = fit(shortseries, d, small_config(1));
    CHECK_FALSE(f.diagnostics.warnings.empty());
  } catch (const EstimationFailed& e) {
    CHECK_FALSE(e.starts.empty());
  }
  CHECK_THROWS_AS(fit(shortseries, Dims{3, 2, 1, 1, 1}, small_config(1)), DimensionError);
}

TEST_CASE("warm start is close on long samples") {
  Rng rng(13);
  const Dims d{3, 4, 2, 1, 2};
  const PseudoStructParams truth = random_params(rng, d, 0.7);
  const MatrixSeries s = simulate_plain(rng, truth, 3000);
  const PseudoStructParams w = rrmar_warm_start(s, d);
  const auto a_true = coefficient_matrices(truth);
  const auto a_warm = coefficient_matrices(w);
  for (size_t j = 0; j < a_true.size(); ++j) CHECK((a_true[j] - a_warm[j]).norm() < 0.25 * (1.0 + a_true[j].norm()));
  CHECK(w.sigma1(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("confidence intervals") {
  Rng rng(17);
  const Dims d{3, 4, 2, 1, 1};
  const PseudoStructParams truth = random_params(rng, d, 0.7);
  const MatrixSeries s = simulate_plain(rng, truth, 250);
  const FitResult f = fit(s, d, small_config(3));
  const auto ci = confidence_intervals(f, 0.95);
  REQUIRE(ci.size() == 2u + 3u);
  CHECK(ci[0].name == "delta*[0,0]");
  CHECK(ci[2].name == "gamma*[0,0]");
  for (const auto& c : ci) {
    REQUIRE(c.available);
    CHECK(c.upper - c.lower == doctest::Approx(2.0 * 1.959963985 * c.se).epsilon(1e-8));
    CHECK(c.lower < c.estimate);
  }
  const auto narrow = confidence_intervals(f, 0.5);
  CHECK(narrow[0].upper - narrow[0].lower < ci[0].upper - ci[0].lower);
  CHECK_THROWS_AS(confidence_intervals(f, 1.0), ConfigError);
}

TEST_CASE("comovement report: GDP/PROD/IR layout and products") {
  PseudoStructParams ps;
  ps.dims = Dims{3, 4, 2, 1, 1};
  ps.delta_star.resize(2, 1);
  ps.delta_star << -0.323, 0.002;
  ps.gamma_star.resize(1, 3);
  ps.gamma_star << -1.190, -1.305, -1.370;
  Mat cov = Mat::Zero(5, 5);
  const double se[] = {0.037, 0.004, 0.145, 0.161, 0.148};
  for (int i = 0; i < 5; ++i) cov(i, i) = se[i] * se[i];
  const auto rep = comovement_report(ps, cov, {"GDP", "PROD", "IR"}, {"USA", "CAN", "DEU", "FRA"});
  REQUIRE(rep.row_equations.size() == 1u);
  REQUIRE(rep.column_equations.size() == 3u);
  REQUIRE(rep.joint_equations.size() == 3u);

  const auto& joint = rep.joint_equations[0].terms;
  REQUIRE(joint.size() == 6u);
  CHECK(joint[0].label == "GDP.USA");
  CHECK(joint[0].normalized);
  CHECK(joint[4].label == "PROD.FRA");
  CHECK(std::abs(joint[4].coefficient - (-0.323) * (-1.190)) < 1e-15);
  CHECK(joint[4].coefficient == doctest::Approx(0.384).epsilon(1e-3));
  // Independent factors: Var = g^2 Var(d) + d^2 Var(g).
  CHECK(joint[4].se == doctest::Approx(std::sqrt(1.19 * 1.19 * 0.037 * 0.037 + 0.323 * 0.323 * 0.145 * 0.145)));
  CHECK(rep.column_equations[1].terms[1].label == "FRA");
  CHECK(rep.column_equations[1].terms[1].coefficient == -1.305);

  const std::string text = render_report(rep);
  CHECK(text.find("GDP - 0.323 (0.037) PROD + 0.002 (0.004) IR = e1") != std::string::npos);
  CHECK(text.find("USA - 1.190 (0.145) FRA = e1") != std::string::npos);
  CHECK(text.find("+ 0.384 (0.064) PROD.FRA") != std::string::npos);
}

TEST_CASE("comovement report: zero delta* and the delta-method special case") {
  PseudoStructParams ps;
  ps.dims = Dims{2, 3, 1, 1, 1};
  ps.delta_star = Mat::Zero(1, 1);
  ps.gamma_star.resize(1, 2);
  ps.gamma_star << 0.5, -2.0;
  Mat cov = Mat::Zero(3, 3);
  cov(0, 0) = 0.01;
  cov(1, 1) = 0.04;
  cov(2, 2) = 0.09;
  const auto rep = comovement_report(ps, cov);
  for (size_t l = 0; l < rep.joint_equations.size(); ++l) {
    const auto& terms = rep.joint_equations[l].terms;
    // delta* = 0: the joint equation is the column equation on the first row.
    CHECK(terms[1].coefficient == 0.0);
    CHECK(terms[2].coefficient == rep.column_equations[l].terms[1].coefficient);
    CHECK(terms[3].coefficient == 0.0);
    // SE of the product = |gamma| * SE(delta).
    CHECK(terms[3].se == doctest::Approx(std::abs(ps.gamma_star(0, l)) * 0.1));
  }
  CHECK(rep.row_labels[0] == "r1");
  CHECK(rep.col_labels[2] == "c3");
  CHECK_THROWS_AS(comovement_report(ps, cov, {"a"}), DimensionError);
}
