#include "rrmar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "rrmar/format.hpp"

namespace rrmar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// One CSV record; double quotes protect commas and "" is a literal quote.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return v;
}

std::vector<std::string> resolve_order(const std::vector<std::string>& requested, const std::vector<std::string>& seen,
                                       const char* what) {
  if (requested.empty()) return seen;
  std::set<std::string> uniq(requested.begin(), requested.end());
  if (uniq.size() != requested.size()) throw DataError(std::string("duplicate label in the ") + what + " order");
  for (const auto& s : seen)
    if (!uniq.count(s)) throw DataError(std::string(what) + " label '" + s + "' is not in the declared order");
  for (const auto& r : requested)
    if (std::find(seen.begin(), seen.end(), r) == seen.end())
      throw DataError(std::string(what) + " label '" + r + "' does not occur in the data");
  return requested;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_from(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Json labels_or_default(const std::vector<std::string>& labels, const std::string& prefix, int n) {
  return labels.empty() ? default_labels(prefix, n) : labels;
}

// Strict object reader: every key must be consumed.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) pending_.insert(it.key());
  }
  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& at(const std::string& key) {
    pending_.erase(key);
    return j_.at(key);
  }
  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("config: '" + name(key) + "' has the wrong type");
    }
  }
  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    T v{};
    get(key, v);
    out = v;
  }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const {
    if (!pending_.empty()) throw ConfigError("config: unknown key '" + name(*pending_.begin()) + "'");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> pending_;
};

IntRange range_from(Section& s, const std::string& key) {
  std::vector<int> v;
  s.get(key, v);
  if (v.size() != 2 || v[0] > v[1]) throw ConfigError("config: '" + s.name(key) + "' must be [lo, hi]");
  return IntRange{v[0], v[1]};
}

void read_fit(Section& s, FitConfig& fc) {
  s.get("n_starts", fc.n_starts);
  s.get("keep", fc.keep);
  s.get("screen_iters", fc.screen_iters);
  s.get("tol", fc.tol);
  s.get("max_iters", fc.max_iters);
  if (s.has("init_mode")) {
    std::string m;
    s.get("init_mode", m);
    try {
      fc.init_mode = parse_init_mode(m);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
}

void read_dims(Section& s, Dims& d) {
  std::vector<int> dims, ranks;
  s.get("dims", dims);
  s.get("ranks", ranks);
  if (s.has("dims")) {
    if (dims.size() != 2) throw ConfigError("config: '" + s.name("dims") + "' must be [n1, n2]");
    d.n1 = dims[0];
    d.n2 = dims[1];
  }
  if (s.has("ranks")) {
    if (ranks.size() != 2) throw ConfigError("config: '" + s.name("ranks") + "' must be [r1, r2]");
    d.r1 = ranks[0];
    d.r2 = ranks[1];
  }
  s.get("lags", d.p);
}

}  // namespace

std::string to_string(Transform t) {
  switch (t) {
    case Transform::None: return "none";
    case Transform::Diff: return "diff";
    case Transform::LogDiff: return "logdiff";
  }
  return "?";
}

Transform parse_transform(const std::string& text) {
  for (Transform t : {Transform::None, Transform::Diff, Transform::LogDiff})
    if (to_string(t) == text) return t;
  throw ConfigError("unknown transform '" + text + "' (expected none, diff or logdiff)");
}

std::vector<std::string> default_labels(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Dataset ingest(const DatasetSpec& spec) {
  std::ifstream in(spec.path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + spec.path + "'");
  return ingest_stream(in, spec, spec.path);
}

Dataset ingest_stream(std::istream& in, const DatasetSpec& spec, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv(line);
  if (header != std::vector<std::string>{"time", "row", "col", "value"})
    throw DataError(source + ": header must be time,row,col,value");

  std::vector<std::string> times, rows, cols;
  std::unordered_map<std::string, size_t> time_ix, row_ix, col_ix;
  auto intern = [](const std::string& key, std::vector<std::string>& list, std::unordered_map<std::string, size_t>& ix) {
    auto [it, fresh] = ix.emplace(key, list.size());
    if (fresh) list.push_back(key);
    return it->second;
  };
  struct Cell {
    size_t t, r, c;
    double v;
  };
  std::vector<Cell> cells;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) throw DataError(source + ":" + std::to_string(lineno) + ": expected 4 fields");
    const auto v = parse_double(f[3]);
    if (!v) throw DataError(source + ":" + std::to_string(lineno) + ": value '" + f[3] + "' is not a number");
    if (f[0].empty() || f[1].empty() || f[2].empty())
      throw DataError(source + ":" + std::to_string(lineno) + ": empty time, row or col");
    cells.push_back({intern(f[0], times, time_ix), intern(f[1], rows, row_ix), intern(f[2], cols, col_ix), *v});
  }
  if (cells.empty()) throw DataError(source + ": no data rows");

  // Time order: numeric stamps sorted and evenly spaced, others as they appear.
  std::vector<size_t> t_order(times.size());
  for (size_t i = 0; i < t_order.size(); ++i) t_order[i] = i;
  std::vector<double> stamps;
  for (const auto& t : times)
    if (auto d = parse_double(t)) stamps.push_back(*d);
  if (stamps.size() == times.size()) {
    std::sort(t_order.begin(), t_order.end(), [&](size_t a, size_t b) { return stamps[a] < stamps[b]; });
    if (t_order.size() > 2) {
      const double step = stamps[t_order[1]] - stamps[t_order[0]];
      for (size_t i = 2; i < t_order.size(); ++i) {
        const double gap = stamps[t_order[i]] - stamps[t_order[i - 1]];
        if (std::abs(gap - step) > 1e-9 * std::max(1.0, std::abs(step)))
          throw DataError(source + ": ragged time index: step from " + times[t_order[i - 1]] + " to " +
                          times[t_order[i]] + " differs from " + format_number(step));
      }
    }
  }

  const auto row_labels = resolve_order(spec.row_order, rows, "row");
  const auto col_labels = resolve_order(spec.col_order, cols, "col");
  for (const auto& [label, tr] : spec.transforms) {
    (void)tr;
    if (!row_ix.count(label)) throw DataError("transform given for unknown row label '" + label + "'");
  }
  std::vector<size_t> row_pos(rows.size()), col_pos(cols.size()), t_pos(times.size());
  for (size_t i = 0; i < row_labels.size(); ++i) row_pos[row_ix.at(row_labels[i])] = i;
  for (size_t i = 0; i < col_labels.size(); ++i) col_pos[col_ix.at(col_labels[i])] = i;
  for (size_t i = 0; i < t_order.size(); ++i) t_pos[t_order[i]] = i;

  const Index T = static_cast<Index>(times.size()), n1 = static_cast<Index>(rows.size()),
              n2 = static_cast<Index>(cols.size());
  std::vector<Mat> raw(static_cast<size_t>(T), Mat::Constant(n1, n2, kNaN));
  std::vector<std::vector<char>> filled(static_cast<size_t>(T), std::vector<char>(static_cast<size_t>(n1 * n2), 0));
  for (const auto& c : cells) {
    const size_t t = t_pos[c.t];
    const Index r = static_cast<Index>(row_pos[c.r]), k = static_cast<Index>(col_pos[c.c]);
    char& f = filled[t][static_cast<size_t>(r * n2 + k)];
    if (f)
      throw DataError(source + ": duplicate cell (time=" + times[c.t] + ", row=" + rows[c.r] + ", col=" + cols[c.c] +
                      ")");
    f = 1;
    raw[t](r, k) = c.v;
  }
  for (Index t = 0; t < T; ++t)
    for (Index r = 0; r < n1; ++r)
      for (Index k = 0; k < n2; ++k)
        if (!filled[static_cast<size_t>(t)][static_cast<size_t>(r * n2 + k)])
          throw DataError(source + ": missing cell (time=" + times[t_order[static_cast<size_t>(t)]] +
                          ", row=" + row_labels[static_cast<size_t>(r)] + ", col=" + col_labels[static_cast<size_t>(k)] +
                          ")");

  Dataset ds;
  ds.row_labels = row_labels;
  ds.col_labels = col_labels;
  std::vector<Transform> per_row(static_cast<size_t>(n1), Transform::None);
  bool differenced = false;
  for (Index r = 0; r < n1; ++r) {
    auto it = spec.transforms.find(row_labels[static_cast<size_t>(r)]);
    if (it == spec.transforms.end() || it->second == Transform::None) continue;
    per_row[static_cast<size_t>(r)] = it->second;
    differenced = true;
    ds.pipeline.push_back(to_string(it->second) + ":" + row_labels[static_cast<size_t>(r)]);
  }
  // Log levels first so the positivity error names the offending cell.
  for (Index t = 0; t < T; ++t)
    for (Index r = 0; r < n1; ++r) {
      if (per_row[static_cast<size_t>(r)] != Transform::LogDiff) continue;
      for (Index k = 0; k < n2; ++k) {
        double& v = raw[static_cast<size_t>(t)](r, k);
        if (!(v > 0.0))
          throw DataError(source + ": logdiff needs positive values, got " + format_number(v) + " at (time=" +
                          times[t_order[static_cast<size_t>(t)]] + ", row=" + row_labels[static_cast<size_t>(r)] +
                          ", col=" + col_labels[static_cast<size_t>(k)] + ")");
        v = std::log(v);
      }
    }
  const Index start = differenced ? 1 : 0;
  if (T - start < 2) throw DataError(source + ": too few time points");
  for (Index t = start; t < T; ++t) {
    Mat y = raw[static_cast<size_t>(t)];
    for (Index r = 0; r < n1; ++r)
      if (per_row[static_cast<size_t>(r)] != Transform::None) y.row(r) -= raw[static_cast<size_t>(t - 1)].row(r);
    ds.series.obs.push_back(std::move(y));
    ds.times.push_back(times[t_order[static_cast<size_t>(t)]]);
  }
  if (spec.demean) {
    Mat mean = Mat::Zero(n1, n2);
    for (const auto& y : ds.series.obs) mean += y;
    mean /= static_cast<double>(ds.series.size());
    for (auto& y : ds.series.obs) y -= mean;
    ds.pipeline.push_back("demean");
  }
  ds.series.validate();
  return ds;
}

std::string export_long_csv(const MatrixSeries& series, const std::vector<std::string>& row_labels,
                            const std::vector<std::string>& col_labels, const std::vector<std::string>& times) {
  series.validate();
  const int n1 = static_cast<int>(series.rows()), n2 = static_cast<int>(series.cols());
  const auto rl = row_labels.empty() ? default_labels("r", n1) : row_labels;
  const auto cl = col_labels.empty() ? default_labels("c", n2) : col_labels;
  if (static_cast<int>(rl.size()) != n1 || static_cast<int>(cl.size()) != n2) throw DimensionError("label count mismatch");
  if (!times.empty() && static_cast<Index>(times.size()) != series.size()) throw DimensionError("time label count mismatch");
  std::ostringstream os;
  os << "time,row,col,value\n";
  for (Index t = 0; t < series.size(); ++t) {
    const std::string stamp = times.empty() ? std::to_string(t + 1) : csv_field(times[static_cast<size_t>(t)]);
    for (int r = 0; r < n1; ++r)
      for (int k = 0; k < n2; ++k)
        os << stamp << ',' << csv_field(rl[static_cast<size_t>(r)]) << ',' << csv_field(cl[static_cast<size_t>(k)]) << ','
           << format_number(series[t](r, k)) << '\n';
  }
  return os.str();
}

Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const Json& j) {
  if (!j.is_array()) throw DataError("matrix must be an array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!j[static_cast<size_t>(i)].is_array() || static_cast<Index>(j[static_cast<size_t>(i)].size()) != cols)
      throw DataError("matrix rows must have equal length");
    for (Index k = 0; k < cols; ++k) m(i, k) = number_from(j[static_cast<size_t>(i)][static_cast<size_t>(k)]);
  }
  return m;
}

Json params_to_json(const PseudoStructParams& params) {
  const Dims& d = params.dims;
  Json lags = Json::array();
  for (const auto& l : params.lags) lags.push_back({{"u3", matrix_to_json(l.u3)}, {"u4", matrix_to_json(l.u4)}});
  return {{"dims", {d.n1, d.n2}},
          {"ranks", {d.r1, d.r2}},
          {"lags", d.p},
          {"delta_star", matrix_to_json(params.delta_star)},
          {"gamma_star", matrix_to_json(params.gamma_star)},
          {"lag_factors", std::move(lags)},
          {"sigma1", matrix_to_json(params.sigma1)},
          {"sigma2", matrix_to_json(params.sigma2)}};
}

PseudoStructParams params_from_json(const Json& j) {
  try {
    PseudoStructParams ps;
    ps.dims = Dims{j.at("dims")[0].get<int>(), j.at("dims")[1].get<int>(), j.at("ranks")[0].get<int>(),
                   j.at("ranks")[1].get<int>(), j.at("lags").get<int>()};
    // A matrix with zero columns serializes as rows of empty arrays.
    auto block = [](const Json& m, Index rows, Index cols) {
      Mat out = matrix_from_json(m);
      if (out.rows() != rows || out.cols() != cols) {
        if (out.size() == 0 && rows * cols == 0) return Mat(rows, cols);
        throw DataError("parameter block has the wrong shape");
      }
      return out;
    };
    const Dims& d = ps.dims;
    ps.delta_star = block(j.at("delta_star"), d.r1, d.n1 - d.r1);
    ps.gamma_star = block(j.at("gamma_star"), d.r2, d.n2 - d.r2);
    for (const auto& l : j.at("lag_factors"))
      ps.lags.push_back(LagFactors{block(l.at("u3"), d.n1, d.r1), block(l.at("u4"), d.n2, d.r2)});
    ps.sigma1 = block(j.at("sigma1"), d.n1, d.n1);
    ps.sigma2 = block(j.at("sigma2"), d.n2, d.n2);
    ps.validate();
    return ps;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed parameters: ") + e.what());
  }
}

Json fit_to_json(const FitResult& fit, const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels) {
  const Dims& d = fit.params.dims;
  const FitDiagnostics& g = fit.diagnostics;
  Json starts = Json::array();
  for (const auto& s : g.starts)
    starts.push_back({{"id", s.id},
                      {"origin", s.origin},
                      {"screen_loglik", number(s.screen_loglik)},
                      {"continued", s.continued},
                      {"final_loglik", number(s.final_loglik)},
                      {"grad_norm", number(s.grad_norm)},
                      {"iterations", s.iterations},
                      {"converged", s.converged},
                      {"saddle", s.saddle},
                      {"accepted", s.accepted},
                      {"message", s.message}});
  Json theta = Json::array();
  for (Index i = 0; i < fit.theta_hat.values.size(); ++i) theta.push_back(number(fit.theta_hat.values(i)));
  return {{"schema", kSchemaVersion},
          {"kind", "fit"},
          {"row_labels", labels_or_default(row_labels, "r", d.n1)},
          {"col_labels", labels_or_default(col_labels, "c", d.n2)},
          {"loglik", number(fit.loglik)},
          {"n_obs", fit.n_obs},
          {"params", params_to_json(fit.params)},
          {"theta", std::move(theta)},
          {"se_delta", matrix_to_json(fit.se_delta)},
          {"se_gamma", matrix_to_json(fit.se_gamma)},
          {"cov_structural", matrix_to_json(fit.cov_structural)},
          {"covariance", matrix_to_json(fit.covariance)},
          {"diagnostics",
           {{"grad_norm", number(g.grad_norm)},
            {"hessian_min_eig", number(g.hessian_min_eig)},
            {"n_starts_converged", g.n_starts_converged},
            {"chosen_start_id", g.chosen_start_id},
            {"saddle_flag", g.saddle_flag},
            {"projected", g.projected},
            {"warnings", g.warnings},
            {"starts", std::move(starts)}}}};
}

SavedFit fit_from_json(const Json& j) {
  if (!j.is_object() || j.value("schema", "") != kSchemaVersion || j.value("kind", "") != "fit")
    throw DataError("not a v1 fit result");
  try {
    SavedFit out;
    FitResult& f = out.fit;
    f.params = params_from_json(j.at("params"));
    f.theta_hat = pack(f.params);
    f.loglik = number_from(j.at("loglik"));
    f.n_obs = j.at("n_obs").get<Index>();
    f.se_delta = matrix_from_json(j.at("se_delta"));
    f.se_gamma = matrix_from_json(j.at("se_gamma"));
    if (f.se_delta.size() == 0) f.se_delta.resize(f.params.delta_star.rows(), f.params.delta_star.cols());
    if (f.se_gamma.size() == 0) f.se_gamma.resize(f.params.gamma_star.rows(), f.params.gamma_star.cols());
    f.cov_structural = matrix_from_json(j.at("cov_structural"));
    f.covariance = matrix_from_json(j.at("covariance"));
    const Json& g = j.at("diagnostics");
    f.diagnostics.grad_norm = number_from(g.at("grad_norm"));
    f.diagnostics.hessian_min_eig = number_from(g.at("hessian_min_eig"));
    f.diagnostics.n_starts_converged = g.at("n_starts_converged").get<int>();
    f.diagnostics.chosen_start_id = g.at("chosen_start_id").get<int>();
    f.diagnostics.saddle_flag = g.at("saddle_flag").get<bool>();
    f.diagnostics.projected = g.at("projected").get<bool>();
    f.diagnostics.warnings = g.at("warnings").get<std::vector<std::string>>();
    out.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    out.col_labels = j.at("col_labels").get<std::vector<std::string>>();
    return out;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed fit result: ") + e.what());
  }
}

std::string grid_csv(const SelectionGrid& grid) {
  std::ostringstream os;
  os << "r1,r2,p,loglik,phi,aic,bic,converged\n";
  for (const auto& e : grid.entries)
    os << e.r1 << ',' << e.r2 << ',' << e.p << ',' << format_number(e.loglik) << ',' << e.phi << ','
       << format_number(e.aic) << ',' << format_number(e.bic) << ',' << (e.usable() ? 1 : 0) << '\n';
  return os.str();
}

Json grid_to_json(const SelectionGrid& grid) {
  Json entries = Json::array();
  for (const auto& e : grid.entries)
    entries.push_back({{"r1", e.r1},
                       {"r2", e.r2},
                       {"p", e.p},
                       {"loglik", number(e.loglik)},
                       {"phi", e.phi},
                       {"aic", number(e.aic)},
                       {"bic", number(e.bic)},
                       {"converged", e.converged},
                       {"nesting_violation", e.nesting_violation},
                       {"refit_for_nesting", e.refit_for_nesting},
                       {"grad_norm", number(e.grad_norm)},
                       {"n_starts_converged", e.n_starts_converged},
                       {"message", e.message}});
  auto pick = [&](int i) -> Json {
    if (i < 0) return nullptr;
    const GridEntry& e = grid.entries[static_cast<size_t>(i)];
    return {{"r1", e.r1}, {"r2", e.r2}, {"p", e.p}};
  };
  Json out = {{"schema", kSchemaVersion},
              {"kind", "selection"},
              {"n1", grid.n1},
              {"n2", grid.n2},
              {"t_eff", grid.t_eff},
              {"entries", std::move(entries)},
              {"argmin_aic", pick(grid.argmin_aic)},
              {"argmin_bic", pick(grid.argmin_bic)}};
  if (grid.winner_fit) out["winner_fit"] = fit_to_json(*grid.winner_fit);
  return out;
}

std::string render_grid(const SelectionGrid& grid, Criterion criterion) {
  std::vector<const GridEntry*> order;
  for (const auto& e : grid.entries) order.push_back(&e);
  const bool aic = criterion == Criterion::AIC;
  std::stable_sort(order.begin(), order.end(), [&](const GridEntry* a, const GridEntry* b) {
    if (a->usable() != b->usable()) return a->usable();
    const double va = aic ? a->aic : a->bic, vb = aic ? b->aic : b->bic;
    if (va != vb) return va < vb;
    return a->phi < b->phi;
  });
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%4s %3s %3s %3s %16s %5s %16s %16s  %s\n", "rank", "r1", "r2", "p", "loglik", "phi",
                "aic", "bic", "status");
  os << line;
  int rank = 0;
  for (const GridEntry* e : order) {
    const std::string status = !e->converged ? "failed: " + e->message
                               : e->nesting_violation ? "nesting violation"
                                                      : "ok";
    std::snprintf(line, sizeof line, "%4d %3d %3d %3d %16.4f %5ld %16.4f %16.4f  %s\n", ++rank, e->r1, e->r2, e->p,
                  e->loglik, e->phi, e->aic, e->bic, status.c_str());
    os << line;
  }
  return os.str();
}

Json experiment_to_json(const ExperimentResult& result) {
  const ExperimentSpec& s = result.spec;
  Json scen = Json::array();
  for (const auto& sc : s.scenarios) scen.push_back({{"name", sc.name}, {"r1", sc.r1}, {"r2", sc.r2}});
  Json spec = {{"design", to_string(s.design)},
               {"dims", {s.truth.n1, s.truth.n2}},
               {"ranks", {s.truth.r1, s.truth.r2}},
               {"lags", s.truth.p},
               {"scenarios", std::move(scen)},
               {"target", s.target == Target::Delta ? "delta" : "gamma"},
               {"t_list", s.t_list},
               {"replications", s.replications},
               {"seed", s.seed},
               {"snr", s.snr},
               {"burn_in", s.burn_in},
               {"redraw", s.redraw},
               {"ci_level", s.ci_level},
               {"lag_max", s.lag_max},
               {"fixed_r1", s.fixed_r1 ? Json(*s.fixed_r1) : Json(nullptr)}};
  Json arms = Json::array();
  for (const auto& sr : result.scenarios) {
    Json coefs = Json::array();
    for (size_t j = 0; j < sr.labels.size(); ++j) {
      const Index k = static_cast<Index>(j);
      coefs.push_back({{"name", sr.labels[j]},
                       {"coverage", number(sr.coverage(k))},
                       {"coverage_se", number(sr.coverage_se(k))},
                       {"mean_bias", number(sr.mean_bias(k))}});
    }
    arms.push_back({{"scenario", sr.scenario.name},
                    {"r1", sr.scenario.r1},
                    {"r2", sr.scenario.r2},
                    {"t", sr.t},
                    {"n_success", sr.n_success()},
                    {"n_failed", sr.n_failed},
                    {"coefficients", std::move(coefs)}});
  }
  Json rows = Json::array();
  for (const auto& r : result.selection) {
    Json row = {{"criterion", to_string(r.criterion)},
                {"t", r.t},
                {"average_rank", format_pair(r.avg_r1, r.avg_r2)},
                {"std_rank", format_pair(r.std_r1, r.std_r2)},
                {"freq_correct", format_pair(r.freq_r1, r.freq_r2)},
                {"avg_r1", number(r.avg_r1)},
                {"avg_r2", number(r.avg_r2)},
                {"std_r1", number(r.std_r1)},
                {"std_r2", number(r.std_r2)},
                {"freq_r1", number(r.freq_r1)},
                {"freq_r2", number(r.freq_r2)},
                {"freq_joint", number(r.freq_joint)},
                {"n_success", r.n_success},
                {"n_failed", r.n_failed}};
    if (r.has_lag) {
      row["avg_p"] = number(r.avg_p);
      row["std_p"] = number(r.std_p);
      row["freq_p"] = number(r.freq_p);
    }
    rows.push_back(std::move(row));
  }
  return {{"schema", kSchemaVersion},
          {"kind", "experiment"},
          {"spec", std::move(spec)},
          {"scenarios", std::move(arms)},
          {"selection", std::move(rows)}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  Section top(j, "");
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("out", c.out);
  if (top.has("ranks")) {
    std::vector<int> r;
    top.get("ranks", r);
    if (r.size() != 2) throw ConfigError("config: 'ranks' must be [r1, r2]");
    c.ranks = std::array<int, 2>{r[0], r[1]};
  }
  top.get("lags", c.lags);
  top.get("lag_max", c.lag_max);
  top.get("lag_min", c.lag_min);
  if (top.has("r1_range")) c.r1_range = range_from(top, "r1_range");
  if (top.has("r2_range")) c.r2_range = range_from(top, "r2_range");
  if (top.has("criterion")) {
    std::string k;
    top.get("criterion", k);
    c.criterion = parse_criterion(k);
  }
  if (top.has("data")) {
    Section s(top.at("data"), "data");
    s.get("path", c.data.path);
    s.get("row_order", c.data.row_order);
    s.get("col_order", c.data.col_order);
    s.get("demean", c.data.demean);
    if (s.has("transforms")) {
      std::map<std::string, std::string> t;
      s.get("transforms", t);
      for (const auto& [label, name] : t) c.data.transforms[label] = parse_transform(name);
    }
    s.finish();
  }
  if (top.has("fit")) {
    Section s(top.at("fit"), "fit");
    read_fit(s, c.fit);
    s.finish();
  }
  if (top.has("select")) {
    Section s(top.at("select"), "select");
    s.get("cell_starts", c.select.cell_fit.n_starts);
    s.get("cell_keep", c.select.cell_fit.keep);
    s.get("refit_winner", c.select.refit_winner);
    s.get("nesting_tol", c.select.nesting_tol);
    s.finish();
  }
  if (top.has("simulate")) {
    Section s(top.at("simulate"), "simulate");
    read_dims(s, c.simulate.dims);
    s.get("t", c.simulate.t_len);
    s.get("snr", c.simulate.snr);
    s.get("burn_in", c.simulate.burn_in);
    if (s.has("sigma1")) c.simulate.sigma1 = matrix_from_json(s.at("sigma1"));
    if (s.has("sigma2")) c.simulate.sigma2 = matrix_from_json(s.at("sigma2"));
    s.finish();
  }
  if (top.has("experiment")) {
    Section s(top.at("experiment"), "experiment");
    if (s.has("design")) {
      std::string d;
      s.get("design", d);
      c.experiment = default_experiment(parse_design(d));
    }
    ExperimentSpec& e = c.experiment;
    if (s.has("truth")) {
      Section t(s.at("truth"), "experiment.truth");
      read_dims(t, e.truth);
      t.finish();
    }
    if (s.has("scenarios")) {
      e.scenarios.clear();
      for (const auto& item : s.at("scenarios")) {
        Section sc(item, "experiment.scenarios[]");
        Scenario x;
        sc.get("name", x.name);
        sc.get("r1", x.r1);
        sc.get("r2", x.r2);
        sc.finish();
        e.scenarios.push_back(x);
      }
    }
    if (s.has("target")) {
      std::string t;
      s.get("target", t);
      if (t != "delta" && t != "gamma") throw ConfigError("config: 'experiment.target' must be delta or gamma");
      e.target = t == "delta" ? Target::Delta : Target::Gamma;
    }
    s.get("t_list", e.t_list);
    s.get("replications", e.replications);
    s.get("snr", e.snr);
    s.get("burn_in", e.burn_in);
    s.get("redraw", e.redraw);
    s.get("ci_level", e.ci_level);
    s.get("lag_max", e.lag_max);
    s.get("fixed_r1", e.fixed_r1);
    s.get("cell_starts", e.selection.cell_fit.n_starts);
    s.get("cell_keep", e.selection.cell_fit.keep);
    if (s.has("fit")) {
      Section f(s.at("fit"), "experiment.fit");
      read_fit(f, e.fit);
      f.finish();
    }
    s.finish();
  }
  top.finish();
  if (c.threads < 0) throw ConfigError("config: 'threads' must be nonnegative");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace rrmar
