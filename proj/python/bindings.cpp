#include "occuhet/model.hpp"
#include "occuhet/robust.hpp"
#include "occuhet/sim.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <set>

namespace py = pybind11;
using namespace occuhet;

namespace {

std::string fit_counts(const std::string& family, const std::map<int, long>& counts, int visits,
                       const std::string& method, const std::string& mixture) {
  const FrequencyTable freq(counts);
  std::vector<int> y;
  for (const auto& [k, m] : freq.counts())
    for (long j = 0; j < m; ++j) y.push_back(k);
  std::vector<std::string> ids(y.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(i + 1);
  const auto rows = static_cast<Eigen::Index>(y.size());
  const Dataset data(parse_family(family), visits, ids, y, {}, Eigen::MatrixXd(rows, 0));
  ModelSpec spec;
  spec.method = parse_method(method);
  spec.mixture = parse_mixture(mixture);
  return to_json(fit_model(data, spec)).dump();
}

std::string fit_csv(const std::string& path, const std::string& family, const std::string& y,
                    const std::vector<std::string>& visit_columns, int n_visits,
                    const std::string& detection, const std::string& occurrence,
                    const std::string& method, const std::string& mixture, bool ht) {
  ModelSpec spec{detection, occurrence, parse_mixture(mixture), parse_method(method)};
  Schema schema;
  if (!y.empty()) schema.y_column = y;
  schema.visit_columns = visit_columns;
  if (n_visits > 0) schema.visits = n_visits;
  std::set<std::string> covariates;
  for (const auto& text : {detection, occurrence}) {
    const Formula f = Formula::parse(text);
    covariates.insert(f.terms().begin(), f.terms().end());
  }
  schema.covariates.assign(covariates.begin(), covariates.end());
  const Dataset data = load_dataset(path, schema, parse_family(family));
  const FitResult fit = fit_model(data, spec);
  auto doc = to_json(fit);
  if (ht) {
    ModelSpec cl = spec;
    cl.method = Method::cl;
    doc["ht_estimate"] = to_json(ht_psi_bar(data, fit.method == Method::cl ? fit : fit_model(data, cl)));
  }
  return doc.dump();
}

std::string simulate(const std::string& toml_text, int replicates, long long seed, int threads) {
  ScenarioConfig config = parse_config(toml_text);
  if (replicates > 0) config.replicates = replicates;
  if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
  return to_json(run_study(config, threads).summary).dump();
}

}  // namespace

PYBIND11_MODULE(_occuhet, m) {
  m.doc() = "Zero-inflated site-occupancy models";
  m.attr("__version__") = OCCUHET_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("fit_counts", &fit_counts, py::arg("family"), py::arg("counts"), py::arg("visits") = 1,
        py::arg("method") = "ml", py::arg("mixture") = "none");
  m.def("fit_csv", &fit_csv, py::arg("path"), py::arg("family"), py::arg("y") = "",
        py::arg("visit_columns") = std::vector<std::string>{}, py::arg("n_visits") = 0,
        py::arg("detection") = "1", py::arg("occurrence") = "1", py::arg("method") = "ml",
        py::arg("mixture") = "none", py::arg("ht") = false);
  m.def(
      "bias_rho",
      [](double mu, double sigma2, double psi) { return to_json(bias_rho(mu, sigma2, psi)).dump(); },
      py::arg("mu"), py::arg("sigma2"), py::arg("psi") = 1.0);
  m.def(
      "limit_omega",
      [](const std::vector<double>& pi, const std::vector<double>& psi) {
        const auto r = limit_omega(pi, psi);
        return std::make_pair(r.exact, r.approx);
      },
      py::arg("pi"), py::arg("psi"));
  m.def("simulate", &simulate, py::arg("config"), py::arg("replicates") = 0,
        py::arg("seed") = -1, py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
}
