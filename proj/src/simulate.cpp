#include "rrmar/simulate.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace rrmar {

namespace {

double largest_eigenvalue(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

PseudoStructParams scaled(const PseudoStructParams& params, double c) {
  PseudoStructParams out = params;
  for (auto& l : out.lags) l.u3 *= c;
  return out;
}

}  // namespace

void DgpSpec::validate() const {
  dims.validate();
  if (t_len < 1) throw ConfigError("T must be at least 1");
  if (burn_in < 0) throw ConfigError("burn-in must be nonnegative");
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("snr must be positive");
  if (sigma1.size() > 0) {
    if (sigma1.rows() != dims.n1 || sigma1.cols() != dims.n1) throw DimensionError("sigma1 must be N1 x N1");
    cholesky_lower(sigma1, "sigma1");
  }
  if (sigma2.size() > 0) {
    if (sigma2.rows() != dims.n2 || sigma2.cols() != dims.n2) throw DimensionError("sigma2 must be N2 x N2");
    cholesky_lower(sigma2, "sigma2");
  }
}

double signal_to_noise(const PseudoStructParams& params) {
  // The eigenvalues of a Kronecker product are the pairwise products.
  return spectral_radius(companion_matrix(params)) /
         (largest_eigenvalue(params.sigma1) * largest_eigenvalue(params.sigma2));
}

PseudoStructParams rescale_to_snr(const PseudoStructParams& params, double snr, double* scale) {
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("snr must be positive");
  const double noise = largest_eigenvalue(params.sigma1) * largest_eigenvalue(params.sigma2);
  const double target = snr * noise;
  auto radius = [&](double c) { return spectral_radius(companion_matrix(scaled(params, c))); };

  const double r1 = radius(1.0);
  if (!(r1 > 0.0)) throw NumericalError("coefficients are zero; cannot rescale to an SNR");

  // With one lag the radius is linear in c. With more lags it is continuous
  // and 0 at c = 0, so bracket and bisect.
  double c = target / r1;
  if (params.dims.p > 1 || std::abs(radius(c) - target) > 1e-10 * target) {
    double lo = 0.0, hi = c;
    for (int i = 0; i < 200 && radius(hi) < target; ++i) hi *= 2.0;
    if (radius(hi) < target) throw NumericalError("cannot bracket the SNR scale");
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (radius(mid) < target ? lo : hi) = mid;
    }
    c = 0.5 * (lo + hi);
  }
  if (std::abs(radius(c) - target) > 1e-8 * target)
    throw NumericalError("SNR rescaling did not converge (radius not monotone in the scale)");
  if (scale) *scale = c;
  return scaled(params, c);
}

PseudoStructParams draw_dgp(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  const Dims& d = spec.dims;
  constexpr int kMaxDraws = 100;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    PseudoStructParams ps;
    ps.dims = d;
    ps.delta_star = standard_normal(rng, d.r1, d.n1 - d.r1);
    ps.gamma_star = standard_normal(rng, d.r2, d.n2 - d.r2);
    for (int j = 0; j < d.p; ++j) {
      LagFactors l;
      l.u3 = standard_normal(rng, d.n1, d.r1);
      l.u4 = standard_normal(rng, d.n2, d.r2);
      ps.lags.push_back(std::move(l));
    }
    ps.sigma1 = spec.sigma1.size() > 0 ? spec.sigma1 : Mat::Identity(d.n1, d.n1);
    ps.sigma2 = spec.sigma2.size() > 0 ? spec.sigma2 : Mat::Identity(d.n2, d.n2);
    try {
      PseudoStructParams out = rescale_to_snr(ps, spec.snr);
      if (is_stationary(out)) return out;
    } catch (const NumericalError&) {
      // degenerate draw; try again
    }
  }
  throw RejectedDrawError("no stationary parameter draw at SNR " + std::to_string(spec.snr) + " after " +
                          std::to_string(kMaxDraws) + " attempts");
}

MatrixSeries simulate_series(const PseudoStructParams& params, Index t_len, Index burn_in, Rng& rng) {
  params.validate();
  if (t_len < 1) throw ConfigError("T must be at least 1");
  if (burn_in < 0) throw ConfigError("burn-in must be nonnegative");
  const double rho = spectral_radius(companion_matrix(params));
  if (!(rho < 1.0)) throw NonStationaryError("companion spectral radius " + std::to_string(rho) + " is not below 1");

  const RRMarParams rr = pseudo_to_reduced(params);
  const int p = params.dims.p;
  const Index n1 = params.dims.n1, n2 = params.dims.n2;
  // Left and right maps of each lag: U1 U3_j^T and U4_j U2^T.
  std::vector<Mat> left, right;
  for (const auto& l : rr.lags) {
    left.push_back(rr.u1 * l.u3.transpose());
    right.push_back(l.u4 * rr.u2.transpose());
  }
  const Mat c1 = cholesky_lower(params.sigma1, "sigma1");
  const Mat c2 = cholesky_lower(params.sigma2, "sigma2");
  const Mat zero = Mat::Zero(n1, n2);

  const Index total = t_len + burn_in;
  std::vector<Mat> path;
  path.reserve(static_cast<size_t>(total));
  for (Index t = 0; t < total; ++t) {
    Mat y = sample_matrix_normal_chol(rng, zero, c1, c2);
    for (int j = 0; j < p && t - 1 - j >= 0; ++j)
      y.noalias() += left[j] * path[static_cast<size_t>(t - 1 - j)] * right[j];
    path.push_back(std::move(y));
  }
  MatrixSeries out;
  out.obs.assign(path.begin() + burn_in, path.end());
  return out;
}

SimulatedData simulate(const DgpSpec& spec) {
  Rng draw_rng(derive_seed(spec.seed, {0}));
  Rng series_rng(derive_seed(spec.seed, {1}));
  SimulatedData out;
  out.truth = draw_dgp(spec, draw_rng);
  out.series = simulate_series(out.truth, spec.t_len, spec.burn_in, series_rng);
  return out;
}

}  // namespace rrmar
