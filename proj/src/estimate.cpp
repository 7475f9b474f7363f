#include "rrmar/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "rrmar/parallel.hpp"

namespace rrmar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kStartScale = 0.1;
constexpr double kTieTol = 1e-8;
constexpr double kDecrementStop = 1e-10;

// Unregularized Cholesky when possible. A fixed ridge would bias directions
// that are only excited by small noise, which matters when the noise is tiny.
Mat solve_spd(Mat a, const Mat& b) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() == Eigen::Success) {
    Mat x = llt.solve(b);
    if (x.allFinite()) return x;
  }
  const double ridge = 1e-10 * (a.trace() / std::max<Index>(1, a.rows())) + 1e-300;
  a.diagonal().array() += ridge;
  return a.ldlt().solve(b);
}

// Van Loan rearrangement: A (n2 n1 square) ~ kron(B, C), B n2 x n2, C n1 x n1.
void nearest_kronecker(const Mat& a, int n1, int n2, Mat& b, Mat& c) {
  Mat r(n2 * n2, n1 * n1);
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n2; ++i) r.row(i + n2 * j) = vec(a.block(i * n1, j * n1, n1, n1)).transpose();
  Eigen::JacobiSVD<Mat> svd(r, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double s = std::sqrt(svd.singularValues()(0));
  b = unvec(s * svd.matrixU().col(0), n2, n2);
  c = unvec(s * svd.matrixV().col(0), n1, n1);
}

// Rank-r factorization m ~ left * right^T with balanced singular values.
void truncated_factors(const Mat& m, int r, Mat& left, Mat& right) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec s = svd.singularValues().head(r).cwiseSqrt();
  left = svd.matrixU().leftCols(r) * s.asDiagonal();
  right = svd.matrixV().leftCols(r) * s.asDiagonal();
}

// Orthonormalize u (N x r) and push the triangular factor into every lag factor.
void rebalance(Mat& u, std::vector<Mat*> partners) {
  Eigen::HouseholderQR<Mat> qr(u);
  const Mat q = qr.householderQ() * Mat::Identity(u.rows(), u.cols());
  const Mat r = q.transpose() * u;
  u = q;
  for (Mat* m : partners) *m = *m * r.transpose();
}

void flip_flop(const std::vector<Mat>& e, int n1, int n2, Mat& s1, Mat& s2, int iterations = 5) {
  const double count = static_cast<double>(e.size());
  s1 = Mat::Identity(n1, n1);
  s2 = Mat::Identity(n2, n2);
  for (int it = 0; it < iterations; ++it) {
    const Mat w2 = solve_spd(s2, Mat::Identity(n2, n2));
    Mat next1 = Mat::Zero(n1, n1);
    for (const Mat& m : e) next1.noalias() += m * w2 * m.transpose();
    s1 = next1 / (count * n2);
    s1 = 0.5 * (s1 + s1.transpose()) + 1e-10 * (s1.trace() / n1 + 1e-300) * Mat::Identity(n1, n1);
    const Mat w1 = solve_spd(s1, Mat::Identity(n1, n1));
    Mat next2 = Mat::Zero(n2, n2);
    for (const Mat& m : e) next2.noalias() += m.transpose() * w1 * m;
    s2 = next2 / (count * n1);
    s2 = 0.5 * (s2 + s2.transpose()) + 1e-10 * (s2.trace() / n2 + 1e-300) * Mat::Identity(n2, n2);
  }
}

// Gauge choice for reporting: equal Frobenius norms within each lag pair and
// the largest-magnitude entry of U3_j positive.
void balance_lags(PseudoStructParams& ps) {
  for (auto& l : ps.lags) {
    const double n3 = l.u3.norm();
    const double n4 = l.u4.norm();
    if (n3 > 0.0 && n4 > 0.0) {
      const double c = std::sqrt(n4 / n3);
      l.u3 *= c;
      l.u4 /= c;
    }
    Index i = 0, j = 0;
    if (l.u3.size() > 0) {
      l.u3.cwiseAbs().maxCoeff(&i, &j);
      if (l.u3(i, j) < 0.0) {
        l.u3 = -l.u3;
        l.u4 = -l.u4;
      }
    }
  }
}

struct StartState {
  Vec x;
  double value = kNegInf;
  Vec grad;
  int iterations = 0;
  bool converged = false;
  bool gradient_accepted = false;
  std::string message;
};

StartState run_start(const LikelihoodModel& model, const Vec& x0, int max_iters, double tol) {
  const Objective obj = [&model](const Vec& x, Vec* g) { return model.evaluate(x, g); };
  QuasiNewtonOptions opt;
  opt.max_iters = max_iters;
  opt.tol = tol;
  StartState s;
  s.x = x0;
  try {
    const QuasiNewtonResult r = quasi_newton_maximize(obj, x0, opt);
    s.x = r.x;
    s.value = r.value;
    s.grad = r.gradient;
    s.iterations = r.iterations;
    s.converged = r.converged;
    s.message = r.message;
  } catch (const Error& e) {
    s.value = kNegInf;
    s.message = e.what();
  }
  return s;
}

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool gradient_ok(double value, const Vec& grad) {
  return std::isfinite(value) && grad.allFinite() && max_abs(grad) <= kGradAccept * (1.0 + std::abs(value));
}

// Very high signal-to-noise data make the information so badly conditioned
// that BFGS stalls with a large gradient far from the maximum in likelihood
// units. Continue with damped Newton steps on the numerical information until
// the gradient passes the acceptance test.
void polish(const LikelihoodModel& model, StartState& s) {
  constexpr int kMaxRounds = 200;
  const PackingLayout& layout = model.layout();
  for (int it = 0;; ++it) {
    if (!std::isfinite(s.value)) return;
    if (gradient_ok(s.value, s.grad)) {
      s.gradient_accepted = true;
      return;
    }
    // Work on the complement of the gauge directions, where the information
    // is nonsingular however badly it is scaled.
    const Mat q = null_space_basis(gauge_directions(s.x, layout));
    Eigen::SelfAdjointEigenSolver<Mat> es;
    try {
      es.compute(q.transpose() * observed_information(model, s.x).raw * q);
    } catch (const Error&) {
      return;
    }
    if (es.info() != Eigen::Success) return;
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(top > 0.0)) return;
    const Vec c = es.eigenvectors().transpose() * (q.transpose() * s.grad);
    const Vec scale = es.eigenvalues().cwiseAbs().cwiseMax(1e-14 * top).cwiseInverse();
    // Newton decrement: the log-likelihood gain the step predicts. Once it is
    // negligible further steps only chase rounding.
    const double dec = 0.5 * c.dot(scale.asDiagonal() * c);
    if (dec <= kDecrementStop) return;
    if (it == kMaxRounds) return;

    const Vec d = q * (es.eigenvectors() * scale.asDiagonal() * c);
    const double slope = s.grad.dot(d);
    bool moved = false;
    Vec g(s.x.size());
    double step = 1.0;
    for (int k = 0; k < 40 && !moved; ++k, step *= 0.5) {
      const Vec x = s.x + step * d;
      const double v = model.evaluate(x, &g);
      if (std::isfinite(v) && g.allFinite() && v >= s.value + 1e-4 * step * slope) {
        s.x = x;
        s.value = v;
        s.grad = g;
        moved = true;
      }
    }
    if (!moved) return;
    ++s.iterations;
  }
}

std::string format_coef(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

}  // namespace

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::Random:
      return "random";
    case InitMode::RrmarWarm:
      return "rrmar_warm";
    case InitMode::Mixed:
      return "mixed";
  }
  return "mixed";
}

InitMode parse_init_mode(const std::string& text) {
  if (text == "random") return InitMode::Random;
  if (text == "rrmar_warm") return InitMode::RrmarWarm;
  if (text == "mixed") return InitMode::Mixed;
  throw ConfigError("init_mode must be one of random, rrmar_warm, mixed (got '" + text + "')");
}

void FitConfig::validate() const {
  if (n_starts < 1) throw ConfigError("n_starts must be at least 1");
  if (keep < 1 || keep > n_starts) throw ConfigError("keep must satisfy 1 <= keep <= n_starts");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (screen_iters < 1 || max_iters < 1) throw ConfigError("iteration limits must be positive");
}

PseudoStructParams rrmar_warm_start(const MatrixSeries& data, const Dims& dims, int als_sweeps) {
  dims.validate();
  const int n1 = dims.n1, n2 = dims.n2, r1 = dims.r1, r2 = dims.r2, p = dims.p;
  const Index n = dims.n();
  const SufficientStats st(data, p);

  const Mat a_ols = solve_spd(st.sxx, st.syx.transpose()).transpose();  // N x Np

  RRMarParams rr;
  rr.lags.resize(static_cast<size_t>(p));
  std::vector<Mat> bs(static_cast<size_t>(p)), cs(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) nearest_kronecker(a_ols.middleCols(j * n, n), n1, n2, bs[j], cs[j]);
  truncated_factors(cs[0], r1, rr.u1, rr.lags[0].u3);
  truncated_factors(bs[0], r2, rr.u2, rr.lags[0].u4);
  for (int j = 1; j < p; ++j) {
    rr.lags[j].u3 = cs[j].transpose() * rr.u1 * solve_spd(rr.u1.transpose() * rr.u1, Mat::Identity(r1, r1));
    rr.lags[j].u4 = bs[j].transpose() * rr.u2 * solve_spd(rr.u2.transpose() * rr.u2, Mat::Identity(r2, r2));
  }

  const Index t_len = data.size();
  for (int sweep = 0; sweep < als_sweeps; ++sweep) {
    // U1
    {
      Mat num = Mat::Zero(n1, r1), den = Mat::Zero(r1, r1);
      for (Index t = p; t < t_len; ++t) {
        Mat z = Mat::Zero(r1, n2);
        for (int j = 0; j < p; ++j) z += rr.lags[j].u3.transpose() * data[t - 1 - j] * rr.lags[j].u4 * rr.u2.transpose();
        num.noalias() += data[t] * z.transpose();
        den.noalias() += z * z.transpose();
      }
      rr.u1 = solve_spd(den, num.transpose()).transpose();
    }
    // U2
    {
      Mat num = Mat::Zero(n2, r2), den = Mat::Zero(r2, r2);
      for (Index t = p; t < t_len; ++t) {
        Mat w = Mat::Zero(r2, n1);
        for (int j = 0; j < p; ++j)
          w += rr.lags[j].u4.transpose() * data[t - 1 - j].transpose() * rr.lags[j].u3 * rr.u1.transpose();
        num.noalias() += data[t].transpose() * w.transpose();
        den.noalias() += w * w.transpose();
      }
      rr.u2 = solve_spd(den, num.transpose()).transpose();
    }
    // U3 for all lags jointly
    {
      const Index m = static_cast<Index>(p) * r1 * n1;
      Mat xtx = Mat::Zero(m, m);
      Vec xty = Vec::Zero(m);
      Mat x(n, m);
      for (Index t = p; t < t_len; ++t) {
        for (int j = 0; j < p; ++j) {
          const Mat mj = data[t - 1 - j] * rr.lags[j].u4 * rr.u2.transpose();
          x.middleCols(static_cast<Index>(j) * r1 * n1, r1 * n1) = kron(mj.transpose(), rr.u1);
        }
        xtx.noalias() += x.transpose() * x;
        xty.noalias() += x.transpose() * vec(data[t]);
      }
      const Vec beta = solve_spd(xtx, xty);
      for (int j = 0; j < p; ++j)
        rr.lags[j].u3 = unvec(beta.segment(static_cast<Index>(j) * r1 * n1, r1 * n1), r1, n1).transpose();
    }
    // U4 for all lags jointly
    {
      const Index m = static_cast<Index>(p) * n2 * r2;
      Mat xtx = Mat::Zero(m, m);
      Vec xty = Vec::Zero(m);
      Mat x(n, m);
      for (Index t = p; t < t_len; ++t) {
        for (int j = 0; j < p; ++j) {
          const Mat kj = rr.u1 * rr.lags[j].u3.transpose() * data[t - 1 - j];
          x.middleCols(static_cast<Index>(j) * n2 * r2, n2 * r2) = kron(rr.u2, kj);
        }
        xtx.noalias() += x.transpose() * x;
        xty.noalias() += x.transpose() * vec(data[t]);
      }
      const Vec beta = solve_spd(xtx, xty);
      for (int j = 0; j < p; ++j) rr.lags[j].u4 = unvec(beta.segment(static_cast<Index>(j) * n2 * r2, n2 * r2), n2, r2);
    }
    std::vector<Mat*> u3s, u4s;
    for (auto& l : rr.lags) {
      u3s.push_back(&l.u3);
      u4s.push_back(&l.u4);
    }
    rebalance(rr.u1, u3s);
    rebalance(rr.u2, u4s);
  }

  std::vector<Mat> resid;
  resid.reserve(static_cast<size_t>(t_len - p));
  for (Index t = p; t < t_len; ++t) {
    Mat e = data[t];
    for (int j = 0; j < p; ++j)
      e -= rr.u1 * rr.lags[j].u3.transpose() * data[t - 1 - j] * rr.lags[j].u4 * rr.u2.transpose();
    resid.push_back(std::move(e));
  }
  flip_flop(resid, n1, n2, rr.sigma1, rr.sigma2);
  PseudoStructParams ps = rrmar_to_pseudo(rr);
  normalize_covariance_scale(ps);
  return ps;
}

void attach_inference(FitResult& result) {
  const PackingLayout& layout = result.theta_hat.layout;
  const Vec& th = result.theta_hat.values;
  const Mat q = null_space_basis(gauge_directions(th, layout));
  const Mat reduced = q.transpose() * result.info.info * q;
  const Index m = layout.size;

  Eigen::LLT<Mat> llt(reduced);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const Mat inv = llt.solve(Mat::Identity(reduced.rows(), reduced.cols()));
    ok = inv.allFinite() && (inv.diagonal().array() >= 0.0).all();
    if (ok) result.covariance = q * inv * q.transpose();
  }
  if (!ok) {
    Eigen::SelfAdjointEigenSolver<Mat> es(reduced);
    const Vec& ev = es.eigenvalues();
    const double top = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
    const double cut = 1e-10 * top;
    Mat inv = Mat::Zero(reduced.rows(), reduced.cols());
    std::vector<Index> null_cols;
    for (Index k = 0; k < ev.size(); ++k) {
      if (ev(k) > cut)
        inv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / ev(k);
      else
        null_cols.push_back(k);
    }
    result.covariance = q * inv * q.transpose();
    for (Index k : null_cols) {
      const Vec dir = q * es.eigenvectors().col(k);
      for (Index i = 0; i < m; ++i) {
        if (std::abs(dir(i)) > 1e-8) {
          result.covariance.row(i).setConstant(kNaN);
          result.covariance.col(i).setConstant(kNaN);
        }
      }
    }
    result.diagnostics.warnings.push_back("observed information is singular on the identified directions");
  }

  const Dims& d = layout.dims;
  const Index ds = layout.delta_size();
  const Index gs = layout.gamma_size();
  result.cov_structural = result.covariance.topLeftCorner(ds + gs, ds + gs);
  auto se_of = [&](Index i) {
    const double v = result.covariance(i, i);
    return (std::isfinite(v) && v >= 0.0) ? std::sqrt(v) : kNaN;
  };
  const int a = d.n1 - d.r1;
  const int b = d.n2 - d.r2;
  result.se_delta.resize(d.r1, a);
  for (int r = 0; r < d.r1; ++r)
    for (int c = 0; c < a; ++c) result.se_delta(r, c) = se_of(layout.delta + r * a + c);
  result.se_gamma.resize(d.r2, b);
  for (int r = 0; r < d.r2; ++r)
    for (int c = 0; c < b; ++c) result.se_gamma(r, c) = se_of(layout.gamma + r * b + c);
  result.diagnostics.hessian_min_eig = result.info.min_eigenvalue;
  result.diagnostics.saddle_flag = result.info.saddle;
  result.diagnostics.projected = result.info.projected;
}

FitResult fit(const MatrixSeries& data, const Dims& dims, const FitConfig& config,
              const std::vector<Vec>& supplied_starts) {
  config.validate();
  dims.validate();
  data.validate();
  const LikelihoodModel model(data, dims);
  const PackingLayout& layout = model.layout();
  const int k_starts = config.n_starts;

  FitDiagnostics diag;
  if (data.size() <= static_cast<Index>(dims.p) * dims.n())
    diag.warnings.push_back("sample is short: T <= p * N1 * N2");
  {
    const Mat s = model.stats().syy / static_cast<double>(model.stats().n_eff);
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success || s.diagonal().minCoeff() <= 1e-12 * (1.0 + s.diagonal().maxCoeff()))
      diag.warnings.push_back("sample covariance of the data is not positive definite");
  }

  std::optional<Vec> warm;
  if (config.init_mode != InitMode::Random) {
    try {
      const PseudoStructParams ps = rrmar_warm_start(data, dims);
      const Vec w = pack(ps).values;
      if (std::isfinite(model.value(w))) warm = w;
    } catch (const NonRotatableError& e) {
      diag.warnings.push_back(std::string("warm start skipped: ") + e.what());
    } catch (const Error& e) {
      diag.warnings.push_back(std::string("warm start skipped: ") + e.what());
    }
  }

  const int total = k_starts + static_cast<int>(supplied_starts.size());
  std::vector<Vec> x0(static_cast<size_t>(total));
  std::vector<StartRecord> records(static_cast<size_t>(total));
  const int jitter_count = k_starts / 4;
  for (int i = 0; i < k_starts; ++i) {
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(i)}));
    const Vec noise = standard_normal(rng, layout.coefficient_size(), 1);
    StartRecord& rec = records[i];
    rec.id = i;
    const bool use_warm = warm && (config.init_mode == InitMode::RrmarWarm ||
                                   (config.init_mode == InitMode::Mixed && i <= jitter_count));
    Vec x = Vec::Zero(layout.size);
    if (use_warm && i == 0) {
      x = *warm;
      rec.origin = "warm";
    } else if (use_warm) {
      x = *warm;
      x.head(layout.coefficient_size()) += kStartScale * noise;
      rec.origin = "jitter";
    } else {
      x.head(layout.coefficient_size()) = kStartScale * noise;
      rec.origin = "random";
    }
    x0[i] = std::move(x);
  }
  for (size_t s = 0; s < supplied_starts.size(); ++s) {
    const int id = k_starts + static_cast<int>(s);
    if (supplied_starts[s].size() != layout.size) throw DimensionError("supplied start has the wrong length");
    x0[id] = supplied_starts[s];
    records[id].id = id;
    records[id].origin = "supplied";
  }

  // Stage 1: screening.
  std::vector<StartState> screened(static_cast<size_t>(total));
  parallel_for(total, config.threads,
               [&](int i) { screened[i] = run_start(model, x0[i], config.screen_iters, config.tol); });
  for (int i = 0; i < total; ++i) records[i].screen_loglik = screened[i].value;

  // Stage 2: continue the best L random/warm starts and every supplied start.
  std::vector<int> order(static_cast<size_t>(k_starts));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return screened[a].value > screened[b].value; });
  std::vector<int> cont;
  for (int i = 0; i < k_starts && static_cast<int>(cont.size()) < config.keep; ++i)
    if (std::isfinite(screened[order[i]].value)) cont.push_back(order[i]);
  for (int id = k_starts; id < total; ++id)
    if (std::isfinite(screened[id].value)) cont.push_back(id);

  std::vector<StartState> finals(cont.size());
  parallel_for(static_cast<int>(cont.size()), config.threads, [&](int c) {
    const StartState& s = screened[cont[c]];
    finals[c] = s.converged ? s : run_start(model, s.x, config.max_iters, config.tol);
    finals[c].iterations += s.converged ? 0 : s.iterations;
    polish(model, finals[c]);
  });
  for (size_t c = 0; c < cont.size(); ++c) {
    StartRecord& rec = records[cont[c]];
    rec.continued = true;
    rec.final_loglik = finals[c].value;
    rec.grad_norm = finals[c].grad.size() ? max_abs(finals[c].grad) : kNaN;
    rec.iterations = finals[c].iterations;
    rec.converged = finals[c].converged;
    rec.message = finals[c].message;
    if (finals[c].gradient_accepted) ++diag.n_starts_converged;
  }

  // Stage 3: best first, ties broken by gradient norm then start id.
  std::vector<size_t> remaining(cont.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::erase_if(remaining, [&](size_t c) { return !std::isfinite(finals[c].value); });
  std::vector<size_t> ranked;
  while (!remaining.empty()) {
    double top = kNegInf;
    for (size_t c : remaining) top = std::max(top, finals[c].value);
    std::vector<size_t> group, rest;
    for (size_t c : remaining) (finals[c].value >= top - kTieTol ? group : rest).push_back(c);
    std::sort(group.begin(), group.end(), [&](size_t a, size_t b) {
      const double ga = max_abs(finals[a].grad), gb = max_abs(finals[b].grad);
      if (ga != gb) return ga < gb;
      return cont[a] < cont[b];
    });
    ranked.insert(ranked.end(), group.begin(), group.end());
    remaining = std::move(rest);
  }

  for (size_t c : ranked) {
    StartRecord& rec = records[cont[c]];
    if (!finals[c].gradient_accepted) {
      rec.message = "gradient above the acceptance threshold";
      continue;
    }
    PseudoStructParams ps = unpack(finals[c].x, layout);
    balance_lags(ps);
    FitResult result;
    result.theta_hat = pack(ps);
    result.params = unpack(result.theta_hat);
    Vec grad;
    result.loglik = model.evaluate(result.theta_hat.values, &grad);
    result.n_obs = model.stats().n_eff;
    rec.hessian_checked = true;
    try {
      result.info = observed_information(model, result.theta_hat.values);
    } catch (const NumericalError& e) {
      rec.message = e.what();
      continue;
    }
    rec.saddle = result.info.saddle;
    if (result.info.saddle) {
      rec.message = "saddle point";
      continue;
    }
    rec.accepted = true;
    result.diagnostics = std::move(diag);
    result.diagnostics.grad_norm = max_abs(grad);
    result.diagnostics.chosen_start_id = rec.id;
    attach_inference(result);
    result.diagnostics.starts = std::move(records);
    return result;
  }
  throw EstimationFailed("estimation failed: no start reached an acceptable maximum (" +
                             std::to_string(cont.size()) + " continued, " + std::to_string(diag.n_starts_converged) +
                             " with small gradient)",
                         std::move(records));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return kNaN;
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double lo = 0.02425;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - lo) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<ConfidenceInterval> confidence_intervals(const FitResult& fit, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<ConfidenceInterval> out;
  auto add = [&](bool is_delta, const Mat& est, const Mat& se) {
    for (Index r = 0; r < est.rows(); ++r)
      for (Index c = 0; c < est.cols(); ++c) {
        ConfidenceInterval ci;
        ci.is_delta = is_delta;
        ci.row = static_cast<int>(r);
        ci.col = static_cast<int>(c);
        ci.name = std::string(is_delta ? "delta*" : "gamma*") + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
        ci.estimate = est(r, c);
        ci.se = se(r, c);
        ci.available = std::isfinite(ci.se);
        ci.lower = ci.available ? ci.estimate - z * ci.se : kNaN;
        ci.upper = ci.available ? ci.estimate + z * ci.se : kNaN;
        out.push_back(ci);
      }
  };
  add(true, fit.params.delta_star, fit.se_delta);
  add(false, fit.params.gamma_star, fit.se_gamma);
  return out;
}

namespace {

EquationTerm make_term(std::string label, double coef, double var) {
  EquationTerm t;
  t.label = std::move(label);
  t.coefficient = coef;
  t.se = (std::isfinite(var) && var >= 0.0) ? std::sqrt(var) : kNaN;
  if (std::isfinite(t.se) && t.se > 0.0)
    t.p_value = std::erfc(std::abs(coef / t.se) / std::sqrt(2.0));
  else
    t.p_value = kNaN;
  return t;
}

EquationTerm unit_term(std::string label) {
  EquationTerm t;
  t.label = std::move(label);
  t.coefficient = 1.0;
  t.se = 0.0;
  t.p_value = kNaN;
  t.normalized = true;
  return t;
}

std::vector<std::string> default_labels(std::vector<std::string> given, int n, const char* prefix) {
  if (given.empty()) {
    for (int i = 0; i < n; ++i) given.push_back(prefix + std::to_string(i + 1));
  }
  if (static_cast<int>(given.size()) != n) throw DimensionError("label count does not match the dimension");
  return given;
}

}  // namespace

ComovementReport comovement_report(const PseudoStructParams& params, const Mat& cov,
                                   std::vector<std::string> row_labels, std::vector<std::string> col_labels) {
  const Dims& d = params.dims;
  const int a = d.n1 - d.r1;
  const int b = d.n2 - d.r2;
  const Index ds = static_cast<Index>(d.r1) * a;
  const Index gs = static_cast<Index>(d.r2) * b;
  if (cov.rows() != ds + gs || cov.cols() != ds + gs) throw DimensionError("structural covariance has the wrong shape");

  ComovementReport rep;
  rep.row_labels = default_labels(std::move(row_labels), d.n1, "r");
  rep.col_labels = default_labels(std::move(col_labels), d.n2, "c");
  const auto di = [&](int i, int k) { return static_cast<Index>(i) * a + k; };       // delta*(i,k)
  const auto gi = [&](int j, int l) { return ds + static_cast<Index>(j) * b + l; };  // gamma*(j,l)

  for (int k = 0; k < a; ++k) {
    ComovementEquation eq;
    eq.terms.push_back(unit_term(rep.row_labels[k]));
    for (int i = 0; i < d.r1; ++i)
      eq.terms.push_back(make_term(rep.row_labels[a + i], params.delta_star(i, k), cov(di(i, k), di(i, k))));
    rep.row_equations.push_back(std::move(eq));
  }
  for (int l = 0; l < b; ++l) {
    ComovementEquation eq;
    eq.terms.push_back(unit_term(rep.col_labels[l]));
    for (int j = 0; j < d.r2; ++j)
      eq.terms.push_back(make_term(rep.col_labels[b + j], params.gamma_star(j, l), cov(gi(j, l), gi(j, l))));
    rep.column_equations.push_back(std::move(eq));
  }
  for (int l = 0; l < b; ++l) {
    for (int k = 0; k < a; ++k) {
      ComovementEquation eq;
      const auto label = [&](int row, int col) { return rep.row_labels[row] + "." + rep.col_labels[col]; };
      // Column l of gamma: the identity entry first, then the gamma* rows.
      eq.terms.push_back(unit_term(label(k, l)));
      for (int i = 0; i < d.r1; ++i)
        eq.terms.push_back(make_term(label(a + i, l), params.delta_star(i, k), cov(di(i, k), di(i, k))));
      for (int j = 0; j < d.r2; ++j) {
        const double g = params.gamma_star(j, l);
        eq.terms.push_back(make_term(label(k, b + j), g, cov(gi(j, l), gi(j, l))));
        for (int i = 0; i < d.r1; ++i) {
          const double dv = params.delta_star(i, k);
          const double var = g * g * cov(di(i, k), di(i, k)) + dv * dv * cov(gi(j, l), gi(j, l)) +
                             2.0 * dv * g * cov(di(i, k), gi(j, l));
          eq.terms.push_back(make_term(label(a + i, b + j), dv * g, var));
        }
      }
      rep.joint_equations.push_back(std::move(eq));
    }
  }
  return rep;
}

ComovementReport comovement_report(const FitResult& fit, std::vector<std::string> row_labels,
                                   std::vector<std::string> col_labels) {
  return comovement_report(fit.params, fit.cov_structural, std::move(row_labels), std::move(col_labels));
}

std::string render_report(const ComovementReport& report) {
  std::ostringstream os;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  auto equation = [&](const ComovementEquation& eq, int index) {
    std::string line = "  ";
    for (size_t t = 0; t < eq.terms.size(); ++t) {
      const EquationTerm& term = eq.terms[t];
      if (term.normalized) {
        line += (t ? " + " : "") + term.label;
        continue;
      }
      const bool neg = term.coefficient < 0.0 && format_coef(term.coefficient) != "0.000";
      line += neg ? " - " : " + ";
      line += format_coef(std::abs(term.coefficient));
      line += std::isfinite(term.se) ? " (" + format_coef(term.se) + ")" : " (n/a)";
      line += " " + term.label;
    }
    line += " = e" + std::to_string(index + 1) + "\n";
    return line;
  };
  os << "Row-specific co-movements (each column: " << join(report.col_labels) << ")\n";
  for (size_t i = 0; i < report.row_equations.size(); ++i) os << equation(report.row_equations[i], static_cast<int>(i));
  if (report.row_equations.empty()) os << "  none (full row rank)\n";
  os << "Column-specific co-movements (each row: " << join(report.row_labels) << ")\n";
  for (size_t i = 0; i < report.column_equations.size(); ++i)
    os << equation(report.column_equations[i], static_cast<int>(i));
  if (report.column_equations.empty()) os << "  none (full column rank)\n";
  os << "Joint co-movements\n";
  for (size_t i = 0; i < report.joint_equations.size(); ++i)
    os << equation(report.joint_equations[i], static_cast<int>(i));
  if (report.joint_equations.empty()) os << "  none\n";
  return os.str();
}

}  // namespace rrmar
