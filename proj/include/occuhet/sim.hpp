#pragma once

#include "occuhet/data.hpp"
#include "occuhet/fit.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace occuhet {

/// Raised when a study produces no usable replicate at all.
class StudyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { a, b, c, zib_a, zib_b, zib_c };

std::string to_string(Scenario scenario);
Scenario parse_scenario(const std::string& text);
bool is_binomial(Scenario scenario);

/// One model applied to every replicate. `ht` adds the Horvitz-Thompson
/// average presence computed from the CL detection stage.
struct FitterSpec {
  std::string label;
  Method method = Method::ml;
  std::string detection = "1";
  std::string occurrence = "1";
  MixtureChoice mixture;
  bool ht = false;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::b;
  int n = 200;
  int replicates = 1000;
  std::uint64_t seed = 1;
  int visits = 3;  // binomial scenarios

  double psi = 0.75;  // constant presence (a, b and their binomial analogues)
  double mu = 1.0;    // a: intensity mean
  double kappa = 1.0; // a: gamma shape; zib-a: beta precision
  double p = 0.5;     // zib-a: mean detection probability
  std::vector<double> theta{1.0, -1.0, 1.0};
  std::vector<double> gamma{1.0, 1.0};
  /// b: "i" draws x1, x2 ~ N(0,1); "ii" draws x1 ~ Bern(0.5), x2 ~ N(0,1).
  std::string covariates = "i";
  /// "redraw" draws covariates per replicate; "fixed" reuses one draw.
  std::string design = "redraw";
  /// Wald intervals for presence estimands on the "natural" or "logit" scale.
  std::string ci_scale = "natural";

  std::vector<FitterSpec> fitters;
  /// Optional kappa (or precision) grid for bias curves.
  std::vector<double> kappa_grid;

  /// Throws ValidationError on invalid combinations.
  void validate() const;
  /// Name of the average-presence estimand: "psi" or "psi_bar".
  std::string presence_estimand() const;
};

ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& toml_text);
nlohmann::json to_json(const ScenarioConfig& config);

/// Default fitters for a scenario when a config lists none.
std::vector<FitterSpec> default_fitters(Scenario scenario);

struct Replicate {
  Dataset data;
  std::vector<double> psi;        // true presence probability per site
  std::vector<double> intensity;  // lambda_i or p_i actually used
  std::vector<int> occupied;
  double psi_bar = 0.0;           // realized mean of psi
};

/// Deterministic in (seed, replicate): covariates and responses come from
/// separate streams, so replicate r does not depend on other replicates.
Replicate generate(const ScenarioConfig& config, int replicate);

struct ReplicateRow {
  int replicate = 0;
  std::string fitter;
  std::string estimand;
  double estimate = 0.0;
  double se = 0.0;
  double truth = 0.0;
  bool converged = false;
  bool boundary = false;

  bool usable() const;
};

struct SummaryRow {
  std::string fitter;
  std::string estimand;
  int replicates = 0;
  int used = 0;
  int nonconverged = 0;
  int boundary = 0;
  double ave = 0.0;
  double sd = 0.0;
  double ase = 0.0;
  double rmse = 0.0;
  double cp = 0.0;  // percent
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  const SummaryRow* find(const std::string& fitter, const std::string& estimand) const;
};

/// AVE/SD/A.SE/RMSE/CP over usable rows, grouped by (fitter, estimand) in
/// first-appearance order.
SummaryTable summarize(const std::vector<ReplicateRow>& rows, const std::string& ci_scale = "natural");

struct StudyResult {
  std::vector<ReplicateRow> rows;
  SummaryTable summary;
};

/// Fits every fitter on every replicate using up to `threads` workers.
/// Output does not depend on the worker count.
StudyResult run_study(const ScenarioConfig& config, int threads = 1);

/// Rows for one replicate (exposed for tests).
std::vector<ReplicateRow> fit_replicate(const ScenarioConfig& config, const Replicate& rep,
                                        int replicate);

struct BiasCurvePoint {
  double kappa = 0.0;
  double log10_kappa = 0.0;
  double empirical_bias_pct = 0.0;
  /// 100 (rho - 1); NaN when no closed form exists (binomial family).
  double asymptotic_bias_pct = 0.0;
  int used = 0;
  int excluded = 0;
};

/// Relative bias of the homogeneous-model presence estimate over a kappa grid
/// for scenario a (gamma shape) or zib-a (beta precision).
std::vector<BiasCurvePoint> bias_curve(const ScenarioConfig& config,
                                       const std::vector<double>& kappas, int threads = 1);

/// `points` values evenly spaced in log10 between lo and hi.
std::vector<double> log_grid(double lo, double hi, int points);

void write_rows_csv(const std::filesystem::path& path, const std::vector<ReplicateRow>& rows);
std::vector<ReplicateRow> read_rows_csv(const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table);
nlohmann::json to_json(const SummaryTable& table);
void write_bias_curve_csv(std::ostream& out, const std::vector<BiasCurvePoint>& curve);

/// %.17g, or NA for non-finite values.
std::string format_number(double value);

}  // namespace occuhet
