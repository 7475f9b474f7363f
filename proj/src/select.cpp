#include "rrmar/select.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "rrmar/parallel.hpp"

namespace rrmar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MatrixSeries tail(const MatrixSeries& data, Index skip) {
  MatrixSeries out;
  out.obs.assign(data.obs.begin() + skip, data.obs.end());
  return out;
}

// A start for the (r1, r2, p) model that reproduces the coefficients of a
// smaller fit: extra U1/U2 columns are random and the matching U3/U4 columns
// are zero; extra lags get U3 = 0 and a random U4.
std::optional<Vec> embed(const PseudoStructParams& small, int r1, int r2, int p, Rng& rng) {
  const RRMarParams base = pseudo_to_reduced(small);
  for (int attempt = 0; attempt < 10; ++attempt) {
    RRMarParams rr = base;
    const int add1 = r1 - static_cast<int>(rr.u1.cols());
    const int add2 = r2 - static_cast<int>(rr.u2.cols());
    if (add1 > 0) {
      Mat u1(rr.u1.rows(), r1);
      u1 << rr.u1, standard_normal(rng, rr.u1.rows(), add1);
      rr.u1 = u1;
      for (auto& l : rr.lags) {
        Mat u3 = Mat::Zero(l.u3.rows(), r1);
        u3.leftCols(l.u3.cols()) = l.u3;
        l.u3 = u3;
      }
    }
    if (add2 > 0) {
      Mat u2(rr.u2.rows(), r2);
      u2 << rr.u2, standard_normal(rng, rr.u2.rows(), add2);
      rr.u2 = u2;
      for (auto& l : rr.lags) {
        Mat u4 = Mat::Zero(l.u4.rows(), r2);
        u4.leftCols(l.u4.cols()) = l.u4;
        l.u4 = u4;
      }
    }
    while (static_cast<int>(rr.lags.size()) < p)
      rr.lags.push_back(LagFactors{Mat::Zero(rr.u1.rows(), r1), standard_normal(rng, rr.u2.rows(), r2)});
    try {
      PseudoStructParams ps = rrmar_to_pseudo(rr);
      normalize_covariance_scale(ps);
      return pack(ps).values;
    } catch (const NonRotatableError&) {
      // unlucky extra column; draw another
    }
  }
  return std::nullopt;
}

struct Cell {
  GridEntry entry;
  std::optional<FitResult> fit;
};

void record(Cell& cell, FitResult result, Index t_eff, int n1, int n2) {
  GridEntry& e = cell.entry;
  e.loglik = result.loglik;
  e.converged = true;
  e.grad_norm = result.diagnostics.grad_norm;
  e.n_starts_converged = result.diagnostics.n_starts_converged;
  e.aic = information_criterion(e.loglik, e.r1, e.r2, e.p, n1, n2, static_cast<double>(t_eff), Criterion::AIC);
  e.bic = information_criterion(e.loglik, e.r1, e.r2, e.p, n1, n2, static_cast<double>(t_eff), Criterion::BIC);
  e.message.clear();
  cell.fit = std::move(result);
}

}  // namespace

std::string to_string(Criterion c) { return c == Criterion::AIC ? "AIC" : "BIC"; }

Criterion parse_criterion(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (t == "aic") return Criterion::AIC;
  if (t == "bic") return Criterion::BIC;
  throw ConfigError("unknown criterion '" + text + "' (expected aic or bic)");
}

long phi(int r1, int r2, int n1, int n2, int p) {
  if (r1 < 1 || r1 > n1 || r2 < 1 || r2 > n2 || p < 1) throw DimensionError("ranks or lag order out of range");
  const long a = static_cast<long>(r1) * n1 * (1 + p) - static_cast<long>(r1) * r1;
  const long b = static_cast<long>(r2) * n2 * (1 + p) - static_cast<long>(r2) * r2;
  return a + b;
}

double information_criterion(double loglik, int r1, int r2, int p, int n1, int n2, double t, Criterion kind) {
  if (!(t > p)) throw ConfigError("sample size must exceed the lag order");
  const double c = kind == Criterion::AIC ? 2.0 : std::log(t);
  return -2.0 * loglik + c * static_cast<double>(phi(r1, r2, n1, n2, p));
}

const GridEntry& SelectionGrid::best(Criterion c) const {
  const int i = c == Criterion::AIC ? argmin_aic : argmin_bic;
  if (i < 0) throw SelectionFailed("no usable cell in the selection grid");
  return entries[static_cast<size_t>(i)];
}

void update_argmins(SelectionGrid& grid) {
  grid.argmin_aic = grid.argmin_bic = -1;
  auto better = [&](int i, int j, bool aic) {
    const GridEntry& a = grid.entries[static_cast<size_t>(i)];
    const GridEntry& b = grid.entries[static_cast<size_t>(j)];
    const double va = aic ? a.aic : a.bic, vb = aic ? b.aic : b.bic;
    if (va != vb) return va < vb;
    return a.phi < b.phi;
  };
  for (int i = 0; i < static_cast<int>(grid.entries.size()); ++i) {
    if (!grid.entries[static_cast<size_t>(i)].usable()) continue;
    if (grid.argmin_aic < 0 || better(i, grid.argmin_aic, true)) grid.argmin_aic = i;
    if (grid.argmin_bic < 0 || better(i, grid.argmin_bic, false)) grid.argmin_bic = i;
  }
}

SelectionGrid select_ranks(const MatrixSeries& data, int n1, int n2, IntRange r1_range, IntRange r2_range,
                           IntRange lag_range, const SelectConfig& config) {
  data.validate();
  if (data.rows() != n1 || data.cols() != n2) throw DimensionError("data shape does not match N1 x N2");
  if (r1_range.lo < 1 || r1_range.hi > n1 || r1_range.lo > r1_range.hi) throw ConfigError("invalid r1 range");
  if (r2_range.lo < 1 || r2_range.hi > n2 || r2_range.lo > r2_range.hi) throw ConfigError("invalid r2 range");
  if (lag_range.lo < 1 || lag_range.lo > lag_range.hi) throw ConfigError("invalid lag range");
  config.cell_fit.validate();
  if (config.refit_winner) config.final_fit.validate();
  const int p_max = lag_range.hi;
  if (data.size() <= p_max + 1) throw DataError("series too short for the largest lag order");

  SelectionGrid grid;
  grid.n1 = n1;
  grid.n2 = n2;
  grid.t_eff = data.size() - p_max;

  std::vector<Cell> cells;
  for (int p = lag_range.lo; p <= lag_range.hi; ++p)
    for (int r1 = r1_range.lo; r1 <= r1_range.hi; ++r1)
      for (int r2 = r2_range.lo; r2 <= r2_range.hi; ++r2) {
        Cell c;
        c.entry.r1 = r1;
        c.entry.r2 = r2;
        c.entry.p = p;
        c.entry.phi = phi(r1, r2, n1, n2, p);
        c.entry.loglik = c.entry.aic = c.entry.bic = kNaN;
        cells.push_back(std::move(c));
      }

  std::vector<MatrixSeries> samples;
  for (int p = lag_range.lo; p <= lag_range.hi; ++p) samples.push_back(tail(data, p_max - p));
  auto sample_for = [&](int p) -> const MatrixSeries& { return samples[static_cast<size_t>(p - lag_range.lo)]; };
  auto cell_config = [&](const GridEntry& e, std::uint64_t extra) {
    FitConfig fc = config.cell_fit;
    fc.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(e.r1), static_cast<std::uint64_t>(e.r2),
                                        static_cast<std::uint64_t>(e.p), extra});
    fc.threads = 1;
    return fc;
  };

  auto run_cell = [&](Cell& cell, const std::vector<Vec>& starts, std::uint64_t extra) {
    const GridEntry& e = cell.entry;
    const Dims dims{n1, n2, e.r1, e.r2, e.p};
    try {
      FitResult r = fit(sample_for(e.p), dims, cell_config(e, extra), starts);
      if (!cell.entry.converged || r.loglik > cell.entry.loglik) record(cell, std::move(r), grid.t_eff, n1, n2);
    } catch (const EstimationFailed& ex) {
      if (!cell.entry.converged) cell.entry.message = ex.what();
    } catch (const NonRotatableError& ex) {
      if (!cell.entry.converged) cell.entry.message = ex.what();
    }
  };

  parallel_for(static_cast<int>(cells.size()), config.threads, [&](int i) { run_cell(cells[i], {}, 0); });

  // Nesting: a cell must fit at least as well as the cells one rank or one lag
  // below it. Visit in increasing r1 + r2 + p so repaired cells feed the next level.
  auto find = [&](int r1, int r2, int p) -> Cell* {
    for (auto& c : cells)
      if (c.entry.r1 == r1 && c.entry.r2 == r2 && c.entry.p == p) return &c;
    return nullptr;
  };
  std::vector<size_t> order(cells.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const GridEntry &x = cells[a].entry, &y = cells[b].entry;
    return x.r1 + x.r2 + x.p < y.r1 + y.r2 + y.p;
  });
  for (size_t i : order) {
    Cell& cell = cells[i];
    const GridEntry& e = cell.entry;
    std::vector<const Cell*> smaller;
    for (const Cell* s : {find(e.r1 - 1, e.r2, e.p), find(e.r1, e.r2 - 1, e.p), find(e.r1, e.r2, e.p - 1)})
      if (s && s->entry.converged && s->fit) smaller.push_back(s);
    auto violated = [&] {
      for (const Cell* s : smaller)
        if (!cell.entry.converged || s->entry.loglik > cell.entry.loglik + config.nesting_tol) return true;
      return false;
    };
    if (smaller.empty() || !violated()) continue;
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(e.r1), static_cast<std::uint64_t>(e.r2),
                                      static_cast<std::uint64_t>(e.p), 2}));
    std::vector<Vec> starts;
    for (const Cell* s : smaller)
      if (auto x = embed(s->fit->params, e.r1, e.r2, e.p, rng)) starts.push_back(std::move(*x));
    cell.entry.refit_for_nesting = true;
    run_cell(cell, starts, 1);
    if (cell.entry.converged && violated()) {
      cell.entry.nesting_violation = true;
      cell.entry.message = "log-likelihood below a nested smaller model";
    }
  }

  for (auto& c : cells) grid.entries.push_back(c.entry);
  update_argmins(grid);
  if (grid.argmin_bic < 0) throw SelectionFailed("every cell of the selection grid failed");

  if (config.refit_winner) {
    const int w = config.refit_criterion == Criterion::AIC ? grid.argmin_aic : grid.argmin_bic;
    const Cell& cell = cells[static_cast<size_t>(w)];
    const GridEntry& e = cell.entry;
    FitConfig fc = config.final_fit;
    fc.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(e.r1), static_cast<std::uint64_t>(e.r2),
                                        static_cast<std::uint64_t>(e.p), 3});
    fc.threads = config.threads;
    // The cell estimate is supplied as a start, so the refit is never worse.
    grid.winner_fit = fit(sample_for(e.p), Dims{n1, n2, e.r1, e.r2, e.p}, fc, {cell.fit->theta_hat.values});
  }
  return grid;
}

}  // namespace rrmar
