#include "occuhet/fit.hpp"

#include <cmath>

namespace occuhet {

std::string to_string(Method method) { return method == Method::ml ? "ml" : "cl"; }

Method parse_method(const std::string& text) {
  if (text == "ml") return Method::ml;
  if (text == "cl") return Method::cl;
  throw ValidationError("unknown method '" + text + "' (expected ml or cl)");
}

std::string to_string(const MixtureChoice& mixture) {
  switch (mixture.kind) {
    case MixtureKind::none: return "none";
    case MixtureKind::gamma: return "gamma";
    case MixtureKind::beta: return "beta";
    case MixtureKind::finite: return "finite:" + std::to_string(mixture.components);
  }
  return "none";
}

MixtureChoice parse_mixture(const std::string& text) {
  if (text == "none") return {};
  if (text == "gamma") return {MixtureKind::gamma, 1};
  if (text == "beta") return {MixtureKind::beta, 1};
  if (text.rfind("finite:", 0) == 0) {
    int c = 0;
    try {
      std::size_t used = 0;
      c = std::stoi(text.substr(7), &used);
      if (used != text.size() - 7) c = 0;
    } catch (const std::exception&) {
      c = 0;
    }
    if (c < 1) throw ValidationError("finite mixture needs a positive component count");
    return {MixtureKind::finite, c};
  }
  throw ValidationError("unknown mixture '" + text + "' (expected none|gamma|finite:C|beta)");
}

Vector FitResult::standard_errors() const {
  Vector se(vcov.rows());
  for (Eigen::Index i = 0; i < vcov.rows(); ++i)
    se[i] = vcov(i, i) >= 0.0 ? std::sqrt(vcov(i, i)) : std::numeric_limits<double>::quiet_NaN();
  return se;
}

nlohmann::json json_number(double value) {
  if (std::isfinite(value)) return value;
  return nullptr;
}

nlohmann::json to_json(const FitResult& fit) {
  using nlohmann::json;
  json doc;
  doc["family"] = to_string(fit.family);
  doc["method"] = to_string(fit.method);
  doc["model"] = {{"detection", fit.detection_formula},
                  {"occurrence", fit.occurrence_formula},
                  {"mixture", to_string(fit.mixture)},
                  {"visits", fit.visits}};
  doc["n"] = fit.n;
  doc["detected"] = fit.detected;

  const Vector se = fit.standard_errors();
  json params = json::array();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    params.push_back({{"name", fit.names[i]},
                      {"estimate", json_number(fit.estimate[k])},
                      {"se", json_number(se[k])}});
  }
  doc["parameters"] = params;
  json values = json::array();
  for (Eigen::Index i = 0; i < fit.vcov.rows(); ++i)
    for (Eigen::Index j = 0; j < fit.vcov.cols(); ++j) values.push_back(json_number(fit.vcov(i, j)));
  doc["vcov"] = {{"names", fit.names}, {"row_major", values}};

  doc[fit.occurrence_regression ? "psi_bar" : "psi"] = {{"estimate", json_number(fit.psi_hat)},
                                                        {"se", json_number(fit.psi_se)}};
  json derived = json::array();
  for (const auto& d : fit.derived)
    derived.push_back(
        {{"name", d.name}, {"estimate", json_number(d.estimate)}, {"se", json_number(d.se)}});
  doc["derived"] = derived;
  if (!fit.cell_probs.empty()) {
    json cells = json::array();
    for (double p : fit.cell_probs) cells.push_back(json_number(p));
    doc["cell_probs"] = cells;
  }
  doc["loglik"] = json_number(fit.loglik);
  if (fit.method == Method::cl) doc["conditional_loglik"] = json_number(fit.conditional_loglik);
  doc["aic"] = json_number(fit.aic);
  doc["convergence"] = {{"converged", fit.converged},
                        {"iterations", fit.iterations},
                        {"gradient_norm", json_number(fit.gradient_norm)}};
  doc["flags"] = {{"psi_boundary", fit.psi_boundary},
                  {"detection_boundary", fit.detection_boundary},
                  {"notes", fit.notes}};
  return doc;
}

}  // namespace occuhet
