#pragma once

// Data plumbing: long-format CSV panels, JSON artifacts (schema "v1") and the
// strict run configuration shared by the command-line tool.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrmar/estimate.hpp"
#include "rrmar/montecarlo.hpp"
#include "rrmar/select.hpp"
#include "rrmar/simulate.hpp"

namespace rrmar {

using Json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "v1";

enum class Transform { None, Diff, LogDiff };

std::string to_string(Transform t);
Transform parse_transform(const std::string& text);

struct DatasetSpec {
  std::string path;
  /// Row (N1) and column (N2) orderings. Empty means order of first appearance.
  std::vector<std::string> row_order;
  std::vector<std::string> col_order;
  /// Per row label; rows not listed are left untransformed.
  std::map<std::string, Transform> transforms;
  bool demean = true;
};

struct Dataset {
  MatrixSeries series;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::string> times;     ///< after differencing
  std::vector<std::string> pipeline;  ///< applied steps, in order
};

/// Reads a long CSV with header time,row,col,value, pivots it into matrices,
/// differences (any diff/logdiff drops the first period for every series),
/// then demeans each series. Numeric time stamps are sorted and must be evenly
/// spaced; other stamps keep their order of first appearance.
/// Throws DataError naming the offending (time,row,col) on missing or duplicate
/// cells, non-positive values under logdiff, or a ragged time index.
Dataset ingest(const DatasetSpec& spec);
Dataset ingest_stream(std::istream& in, const DatasetSpec& spec, const std::string& source = "<stream>");

/// Long CSV at 17 significant digits. Empty labels default to r1.. / c1..,
/// empty times to 1..T.
std::string export_long_csv(const MatrixSeries& series, const std::vector<std::string>& row_labels = {},
                            const std::vector<std::string>& col_labels = {},
                            const std::vector<std::string>& times = {});

std::vector<std::string> default_labels(const std::string& prefix, int n);

Json matrix_to_json(const Mat& m);  ///< array of rows; NaN as null
Mat matrix_from_json(const Json& j);

Json params_to_json(const PseudoStructParams& params);
PseudoStructParams params_from_json(const Json& j);

Json fit_to_json(const FitResult& fit, const std::vector<std::string>& row_labels = {},
                 const std::vector<std::string>& col_labels = {});

struct SavedFit {
  FitResult fit;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
};
/// Restores what the report needs (estimates, SEs, structural covariance,
/// diagnostics). Throws DataError on a wrong schema.
SavedFit fit_from_json(const Json& j);

/// Columns r1,r2,p,loglik,phi,aic,bic,converged.
std::string grid_csv(const SelectionGrid& grid);
Json grid_to_json(const SelectionGrid& grid);
/// Cells sorted by the criterion, best first.
std::string render_grid(const SelectionGrid& grid, Criterion criterion);

Json experiment_to_json(const ExperimentResult& result);

/// Text files written byte for byte (no newline translation).
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

/// Everything the command-line tool can take from a config file. Every key
/// is optional; unknown keys anywhere are an error.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
  DatasetSpec data;
  std::optional<std::array<int, 2>> ranks;
  std::optional<int> lags;
  std::optional<int> lag_max;
  int lag_min = 1;
  std::optional<IntRange> r1_range;
  std::optional<IntRange> r2_range;
  Criterion criterion = Criterion::BIC;
  FitConfig fit;
  SelectConfig select;
  DgpSpec simulate = [] {
    DgpSpec d;
    d.dims = Dims{3, 4, 1, 1, 1};
    return d;
  }();
  ExperimentSpec experiment = default_experiment(Design::RankTable);
};

/// Throws ConfigError naming the first unknown or ill-typed key.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace rrmar
