// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `rrmar_acceptance 1 2 10`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rrmar/cli.hpp"
#include "rrmar/estimate.hpp"
#include "rrmar/io.hpp"
#include "rrmar/likelihood.hpp"
#include "rrmar/linalg.hpp"
#include "rrmar/model.hpp"
#include "rrmar/montecarlo.hpp"
#include "rrmar/simulate.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace rrmar;
using rrmar::testing::random_params;
using rrmar::testing::simulate_plain;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Dense VAR(p) Gaussian log-likelihood on vec(Y_t) without the 2 pi term.
double dense_loglik(const PseudoStructParams& ps, const MatrixSeries& s) {
  const auto a = coefficient_matrices(ps);
  const Mat cov = kron(ps.sigma2, ps.sigma1);
  Eigen::LLT<Mat> llt(cov);
  const Mat l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  double total = 0.0;
  for (Index t = ps.dims.p; t < s.size(); ++t) {
    Vec e = vec(s[t]);
    for (int j = 0; j < ps.dims.p; ++j) e -= a[static_cast<size_t>(j)] * vec(s[t - 1 - j]);
    total += -0.5 * logdet - 0.5 * e.dot(llt.solve(e));
  }
  return total;
}

Mat orthonormal(Rng& rng, Index n, Index r) {
  const Mat g = standard_normal(rng, n, r);
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ() * Mat::Identity(n, r);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Outcome likelihood_oracle() {
  Rng rng(101);
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 20; ++k) {
    const Dims d{3, 4, uniform_int(rng, 1, 3), uniform_int(rng, 1, 4), 1 + k % 2};
    const PseudoStructParams ps = random_params(rng, d);
    const MatrixSeries s = simulate_plain(rng, ps, 50);
    LikelihoodModel model(s, d);
    const double v = model.value(pack(ps).values);
    const double ref = dense_loglik(ps, s);
    worst = std::max(worst, std::abs(v - ref) / (1.0 + std::abs(ref)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 5.0, "max scaled diff " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome kron_null() {
  Rng rng(202);
  double annihilate = 0.0, ortho = 0.0;
  bool widths = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 100; ++k) {
    const int n1 = uniform_int(rng, 2, 6), n2 = uniform_int(rng, 2, 6);
    const int r1 = uniform_int(rng, 1, n1 - 1), r2 = uniform_int(rng, 1, n2 - 1);
    const Mat u1 = orthonormal(rng, n1, r1), u2 = orthonormal(rng, n2, r2);
    const KronNullBases b = kron_null_decomposition(u1, u2);
    const Mat kt = kron(u2, u1).transpose();
    const std::vector<const Mat*> parts{&b.column_specific, &b.row_specific, &b.joint};
    Index total = 0;
    for (const Mat* m : parts) {
      total += m->cols();
      if (m->cols() > 0) annihilate = std::max(annihilate, (kt * *m).cwiseAbs().maxCoeff());
    }
    widths = widths && b.column_specific.cols() == (n2 - r2) * r1 && b.row_specific.cols() == r2 * (n1 - r1) &&
             b.joint.cols() == (n2 - r2) * (n1 - r1) && total == n1 * n2 - r1 * r2;
    for (size_t i = 0; i < parts.size(); ++i)
      for (size_t j = i + 1; j < parts.size(); ++j)
        if (parts[i]->cols() > 0 && parts[j]->cols() > 0)
          ortho = std::max(ortho, (parts[i]->transpose() * *parts[j]).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {annihilate <= 1e-10 && ortho <= 1e-10 && widths && secs < 2.0,
          "annihilation " + fmt("%.1e", annihilate) + ", cross products " + fmt("%.1e", ortho) +
              (widths ? ", widths ok" : ", widths WRONG") + ", " + fmt("%.2f", secs) + " s"};
}

Outcome round_trip() {
  Rng rng(303);
  double worst = 0.0;
  int done = 0;
  for (int k = 0; k < 100; ++k) {
    DgpSpec spec;
    const int n1 = uniform_int(rng, 2, 5), n2 = uniform_int(rng, 2, 5);
    spec.dims = Dims{n1, n2, uniform_int(rng, 1, n1), uniform_int(rng, 1, n2), uniform_int(rng, 1, 2)};
    const PseudoStructParams ps = draw_dgp(spec, rng);
    const auto a = coefficient_matrices(ps);
    // Rotate the reduced form by well-conditioned matrices before mapping back.
    RRMarParams rr = pseudo_to_reduced(ps);
    const Index r1 = rr.u1.cols(), r2 = rr.u2.cols();
    const Mat m1 = Mat::Identity(r1, r1) + 0.3 * standard_normal(rng, r1, r1) / std::sqrt(double(r1));
    const Mat m2 = Mat::Identity(r2, r2) + 0.3 * standard_normal(rng, r2, r2) / std::sqrt(double(r2));
    rr.u1 = rr.u1 * m1;
    rr.u2 = rr.u2 * m2;
    const Mat m1it = m1.inverse().transpose(), m2it = m2.inverse().transpose();
    for (auto& l : rr.lags) {
      l.u3 = l.u3 * m1it;
      l.u4 = l.u4 * m2it;
    }
    const PseudoStructParams back = rrmar_to_pseudo(rr);
    const auto b = coefficient_matrices(back);
    for (size_t j = 0; j < a.size(); ++j) worst = std::max(worst, (a[j] - b[j]).cwiseAbs().maxCoeff());
    ++done;
  }
  return {done == 100 && worst <= 1e-10, std::to_string(done) + " draws, max |dA| " + fmt("%.1e", worst)};
}

Outcome gradient_check() {
  Rng rng(404);
  const Dims d{3, 4, 2, 2, 1};
  const PseudoStructParams truth = random_params(rng, d);
  const MatrixSeries s = simulate_plain(rng, truth, 100);
  LikelihoodModel model(s, d);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const PseudoStructParams at = random_params(rng, d);
    const Vec th = pack(at).values;
    const Vec g = model.gradient(th);
    const Vec fd = grad_loglik_fd(model, th);
    worst = std::max(worst, ((g - fd).cwiseAbs().array() / (1.0 + fd.cwiseAbs().array())).maxCoeff());
  }
  return {worst <= 1e-5, "max relative error " + fmt("%.2e", worst)};
}

const ScenarioResult& arm(const ExperimentResult& r, const std::string& name) {
  for (const auto& s : r.scenarios)
    if (s.scenario.name == name) return s;
  throw std::runtime_error("missing arm " + name);
}

double mean_coverage(const ScenarioResult& s) { return s.coverage.mean(); }

// Shared by criteria 5 and 6.
const ExperimentResult& density_delta_run() {
  static const ExperimentResult res = [] {
    ExperimentSpec spec = default_experiment(Design::DensityDelta, 7);
    spec.replications = 300;
    spec.t_list = {250};
    return run_experiment(spec);
  }();
  return res;
}

Outcome density_bias() {
  const auto& r = density_delta_run();
  const double bc = arm(r, "correct").mean_bias.cwiseAbs().maxCoeff();
  const double bo = arm(r, "over").mean_bias.cwiseAbs().maxCoeff();
  return {bc <= 0.03 && bo <= 0.03, "max |bias| correct " + fmt("%.4f", bc) + ", over " + fmt("%.4f", bo) +
                                        ", runtime " + fmt("%.0f", r.runtime_seconds) + " s"};
}

Outcome density_coverage() {
  const auto& r = density_delta_run();
  const double cc = mean_coverage(arm(r, "correct"));
  const double co = mean_coverage(arm(r, "over"));
  const double cu = mean_coverage(arm(r, "under"));
  const bool ok = cc >= 0.91 && cc <= 0.985 && co >= 0.91 && co <= 0.985 && cu <= cc;
  return {ok, "coverage correct " + fmt("%.3f", cc) + ", over " + fmt("%.3f", co) + ", under " + fmt("%.3f", cu)};
}

const SelectionRow& row(const ExperimentResult& r, Criterion c) {
  for (const auto& s : r.selection)
    if (s.criterion == c) return s;
  throw std::runtime_error("missing criterion row");
}

ExperimentResult table_run(Design d, Dims truth, std::uint64_t seed) {
  ExperimentSpec spec = default_experiment(d, seed);
  spec.truth = truth;
  spec.t_list = {250};
  return run_experiment(spec);
}

Outcome rank_table() {
  const auto low = table_run(Design::RankTable, Dims{3, 4, 1, 1, 1}, 11);
  const auto full = table_run(Design::RankTable, Dims{3, 4, 3, 4, 1}, 12);
  const auto& lb = row(low, Criterion::BIC);
  bool ok = lb.freq_r1 >= 0.82 && lb.freq_r2 >= 0.92;
  std::string detail = "(1,1) BIC " + fmt("%.2f", lb.freq_r1) + "/" + fmt("%.2f", lb.freq_r2);
  for (Criterion c : {Criterion::AIC, Criterion::BIC}) {
    const auto& f = row(full, c);
    ok = ok && f.freq_r1 >= 0.95 && f.freq_r2 >= 0.95;
    detail += ", (3,4) " + to_string(c) + " " + fmt("%.2f", f.freq_r1) + "/" + fmt("%.2f", f.freq_r2);
  }
  return {ok, detail};
}

Outcome rank_lag_table() {
  const auto p1 = table_run(Design::RankLagTable, Dims{3, 4, 1, 1, 1}, 21);
  const auto p2 = table_run(Design::RankLagTable, Dims{3, 4, 1, 1, 2}, 22);
  const double f1 = row(p1, Criterion::BIC).freq_p, f2 = row(p2, Criterion::BIC).freq_p;
  return {f1 >= 0.89 && f2 >= 0.99, "BIC lag frequency p=1 " + fmt("%.2f", f1) + ", p=2 " + fmt("%.2f", f2)};
}

Outcome appendix_coverage() {
  ExperimentSpec spec = default_experiment(Design::Appendix3x6, 9);
  spec.replications = 300;
  spec.t_list = {250};
  const auto r = run_experiment(spec);
  const double cc = mean_coverage(arm(r, "correct")), cu = mean_coverage(arm(r, "under"));
  return {cu >= 0.80 && cu <= cc, "coverage under " + fmt("%.3f", cu) + ", correct " + fmt("%.3f", cc) +
                                      ", runtime " + fmt("%.0f", r.runtime_seconds) + " s"};
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::vector<std::string> full{"rrmar"};
  full.insert(full.end(), args.begin(), args.end());
  const int code = run_cli(full, out, err);
  if (code != kExitOk) std::cerr << err.str();
  return code;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rrmar_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome empirical_format() {
  // Panel generated around fixed reference estimates, with named rows and columns.
  PseudoStructParams ps;
  ps.dims = Dims{3, 4, 2, 1, 1};
  ps.delta_star.resize(2, 1);
  ps.delta_star << -0.323, 0.002;
  ps.gamma_star.resize(1, 3);
  ps.gamma_star << -1.190, -1.305, -1.370;
  ps.sigma1 = Mat::Identity(3, 3);
  ps.sigma2 = Mat::Identity(4, 4);
  Rng rng(116);
  ps.lags = {{standard_normal(rng, 3, 2), standard_normal(rng, 4, 1)}};
  ps = rescale_to_snr(ps, 0.7);
  const MatrixSeries s = simulate_series(ps, 116, 50, rng);

  const std::vector<std::string> rows{"GDP", "PROD", "IR"}, cols{"USA", "CAN", "DEU", "FRA"};
  const fs::path dir = scratch("empirical");
  write_text((dir / "panel.csv").string(), export_long_csv(s, rows, cols));
  const int code = cli({"fit", "--data", (dir / "panel.csv").string(), "--row-order", "GDP,PROD,IR", "--col-order",
                        "USA,CAN,DEU,FRA", "--ranks", "2,1", "--lags", "1", "--seed", "5", "--out", dir.string()});
  if (code != kExitOk) return {false, "fit exited with " + std::to_string(code)};
  const SavedFit saved = fit_from_json(Json::parse(read_text((dir / "fit.json").string())));
  const FitResult& f = saved.fit;

  bool ok = true;
  std::string detail;
  auto within = [&](double est, double se, double truth, const std::string& what) {
    const bool in = std::isfinite(se) && std::abs(est - truth) <= 2.0 * se;
    ok = ok && in;
    detail += what + " " + fmt("%.3f", est) + " (" + fmt("%.3f", se) + ")" + (in ? "" : " OUT") + "; ";
  };
  within(f.params.delta_star(0, 0), f.se_delta(0, 0), -0.323, "delta*[1,1]");
  within(f.params.gamma_star(0, 0), f.se_gamma(0, 0), -1.190, "gamma*[1,1]");
  within(f.params.gamma_star(0, 1), f.se_gamma(0, 1), -1.305, "gamma*[1,2]");
  within(f.params.gamma_star(0, 2), f.se_gamma(0, 2), -1.370, "gamma*[1,3]");

  const ComovementReport rep = comovement_report(f, saved.row_labels, saved.col_labels);
  const auto& joint = rep.joint_equations.at(0).terms;
  const auto it = std::find_if(joint.begin(), joint.end(), [](const EquationTerm& t) { return t.label == "PROD.FRA"; });
  if (it == joint.end()) return {false, detail + "no PROD.FRA term"};
  // First joint equation: PROD enters through delta*[1,1], FRA through gamma*[1,1].
  const double product = f.params.delta_star(0, 0) * f.params.gamma_star(0, 0);
  const bool prod_ok = std::abs(it->coefficient - product) <= 1e-10 && std::isfinite(it->se) && it->se > 0.0;
  ok = ok && prod_ok;
  detail += "PROD.FRA " + fmt("%.3f", it->coefficient) + " (" + fmt("%.3f", it->se) + ")";
  const std::string report = read_text((dir / "report.txt").string());
  ok = ok && report.find("PROD.FRA") != std::string::npos && report.find("GDP") != std::string::npos;
  return {ok, detail};
}

std::vector<std::pair<std::string, std::string>> files_in(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).string(), read_text(e.path().string()));
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  std::vector<std::vector<std::pair<std::string, std::string>>> runs;
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = scratch("determinism_" + std::to_string(k));
    const std::string d = dir.string();
    const std::vector<std::vector<std::string>> cmds{
        {"simulate", "--dims", "3,4", "--ranks", "1,2", "--lags", "1", "--t", "150", "--seed", "3", "--out", d + "/sim"},
        {"fit", "--data", d + "/sim/series.csv", "--ranks", "1,2", "--lags", "1", "--seed", "4", "--out", d + "/fit"},
        {"select", "--data", d + "/sim/series.csv", "--lag-max", "2", "--seed", "4", "--threads", k == 0 ? "1" : "2",
         "--out", d + "/select"},
        {"mc", "--design", "rank_table", "--replications", "3", "--t-list", "60", "--seed", "8", "--out", d + "/mc"}};
    for (const auto& c : cmds)
      if (cli(c) != kExitOk) return {false, "command " + c[0] + " failed"};
    runs.push_back(files_in(dir));
  }
  const bool same = runs[0] == runs[1] && !runs[0].empty();
  return {same, std::to_string(runs[0].size()) + " artifacts, thread counts 1 and 2, " +
                    (same ? "byte identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"likelihood matches dense VAR oracle", likelihood_oracle},
      {"Kronecker null-space decomposition", kron_null},
      {"pseudo-structural / reduced round trip", round_trip},
      {"analytic gradient vs finite differences", gradient_check},
      {"density design: mean bias", density_bias},
      {"density design: coverage", density_coverage},
      {"rank table frequencies", rank_table},
      {"rank-lag table lag frequencies", rank_lag_table},
      {"3x6 design under-specified coverage", appendix_coverage},
      {"empirical output format", empirical_format},
      {"byte-identical reruns", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
