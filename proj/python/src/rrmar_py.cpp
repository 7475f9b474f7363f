// Thin bindings: arrays in, JSON text out. The Python package decodes the JSON.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "rrmar/errors.hpp"
#include "rrmar/estimate.hpp"
#include "rrmar/io.hpp"
#include "rrmar/likelihood.hpp"
#include "rrmar/montecarlo.hpp"
#include "rrmar/select.hpp"
#include "rrmar/simulate.hpp"

namespace py = pybind11;
using namespace rrmar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

MatrixSeries to_series(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("data must have shape (T, N1, N2)");
  const auto r = a.unchecked<3>();
  MatrixSeries s;
  for (py::ssize_t t = 0; t < r.shape(0); ++t) {
    Mat m(r.shape(1), r.shape(2));
    for (py::ssize_t i = 0; i < r.shape(1); ++i)
      for (py::ssize_t j = 0; j < r.shape(2); ++j) m(i, j) = r(t, i, j);
    s.obs.push_back(std::move(m));
  }
  s.validate();
  return s;
}

Array from_series(const MatrixSeries& s) {
  Array a({s.size(), s.rows(), s.cols()});
  auto w = a.mutable_unchecked<3>();
  for (Index t = 0; t < s.size(); ++t)
    for (Index i = 0; i < s.rows(); ++i)
      for (Index j = 0; j < s.cols(); ++j) w(t, i, j) = s[t](i, j);
  return a;
}

FitConfig fit_config(int n_starts, int keep, std::uint64_t seed, int threads) {
  FitConfig c;
  c.n_starts = n_starts;
  c.keep = keep;
  c.seed = seed;
  c.threads = threads;
  return c;
}

}  // namespace

PYBIND11_MODULE(_rrmar, m) {
  m.doc() = "Reduced-rank matrix autoregression";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def(
      "simulate",
      [](int n1, int n2, int r1, int r2, int p, Index t, double snr, Index burn_in, std::uint64_t seed) {
        DgpSpec spec;
        spec.dims = Dims{n1, n2, r1, r2, p};
        spec.t_len = t;
        spec.snr = snr;
        spec.burn_in = burn_in;
        spec.seed = seed;
        const SimulatedData d = simulate(spec);
        return py::make_tuple(from_series(d.series), params_to_json(d.truth).dump());
      },
      py::arg("n1"), py::arg("n2"), py::arg("r1"), py::arg("r2"), py::arg("p"), py::arg("t"), py::arg("snr"),
      py::arg("burn_in"), py::arg("seed"));

  m.def(
      "fit",
      [](const Array& data, int r1, int r2, int p, int n_starts, int keep, std::uint64_t seed, int threads,
         std::vector<std::string> rows, std::vector<std::string> cols) {
        const MatrixSeries s = to_series(data);
        const Dims dims{static_cast<int>(s.rows()), static_cast<int>(s.cols()), r1, r2, p};
        FitResult f;
        {
          py::gil_scoped_release nogil;
          f = fit(s, dims, fit_config(n_starts, keep, seed, threads));
        }
        const std::string report = render_report(comovement_report(f, rows, cols));
        return py::make_tuple(fit_to_json(f, rows, cols).dump(), report);
      },
      py::arg("data"), py::arg("r1"), py::arg("r2"), py::arg("p"), py::arg("n_starts"), py::arg("keep"),
      py::arg("seed"), py::arg("threads"), py::arg("row_labels"), py::arg("col_labels"));

  m.def(
      "select",
      [](const Array& data, IntRange r1, IntRange r2, IntRange lags, int cell_starts, int cell_keep,
         const std::string& criterion, bool refit_winner, std::uint64_t seed, int threads) {
        const MatrixSeries s = to_series(data);
        SelectConfig cfg;
        cfg.cell_fit.n_starts = cell_starts;
        cfg.cell_fit.keep = cell_keep;
        cfg.refit_criterion = parse_criterion(criterion);
        cfg.refit_winner = refit_winner;
        cfg.seed = seed;
        cfg.threads = threads;
        py::gil_scoped_release nogil;
        const SelectionGrid g = select_ranks(s, static_cast<int>(s.rows()), static_cast<int>(s.cols()), r1, r2,
                                             lags, cfg);
        return grid_to_json(g).dump();
      },
      py::arg("data"), py::arg("r1_range"), py::arg("r2_range"), py::arg("lag_range"), py::arg("cell_starts"),
      py::arg("cell_keep"), py::arg("criterion"), py::arg("refit_winner"), py::arg("seed"), py::arg("threads"));

  m.def(
      "loglik",
      [](const Array& data, const std::string& params_json) {
        const PseudoStructParams ps = params_from_json(Json::parse(params_json));
        LikelihoodModel model(to_series(data), ps.dims);
        return model.value(pack(ps).values);
      },
      py::arg("data"), py::arg("params_json"));

  m.def("phi", &phi, py::arg("r1"), py::arg("r2"), py::arg("n1"), py::arg("n2"), py::arg("p"));
  m.def(
      "information_criterion",
      [](double ll, int r1, int r2, int p, int n1, int n2, double t, const std::string& kind) {
        return information_criterion(ll, r1, r2, p, n1, n2, t, parse_criterion(kind));
      },
      py::arg("loglik"), py::arg("r1"), py::arg("r2"), py::arg("p"), py::arg("n1"), py::arg("n2"), py::arg("t"),
      py::arg("criterion"));

  m.def(
      "kernel_density",
      [](const std::vector<double>& draws, int grid) {
        const DensityExport d = kernel_density_export(draws, grid);
        return py::make_tuple(d.x, d.density, d.bandwidth, d.degenerate);
      },
      py::arg("draws"), py::arg("grid"));

  m.def(
      "run_experiment",
      [](const std::string& design, int replications, std::vector<Index> t_list, std::uint64_t seed, int threads) {
        ExperimentSpec spec = default_experiment(parse_design(design), seed);
        spec.replications = replications;
        spec.t_list = std::move(t_list);
        spec.threads = threads;
        py::gil_scoped_release nogil;
        return experiment_to_json(run_experiment(spec)).dump();
      },
      py::arg("design"), py::arg("replications"), py::arg("t_list"), py::arg("seed"), py::arg("threads"));

  py::class_<IntRange>(m, "IntRange")
      .def(py::init([](int lo, int hi) { return IntRange{lo, hi}; }), py::arg("lo"), py::arg("hi"))
      .def_readwrite("lo", &IntRange::lo)
      .def_readwrite("hi", &IntRange::hi);
}
