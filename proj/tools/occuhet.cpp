// occuhet command-line front end: fit, simulate, bias-curve, replay.

#include "occuhet/cells.hpp"
#include "occuhet/model.hpp"
#include "occuhet/robust.hpp"
#include "occuhet/sim.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace occuhet;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNonConvergence = 3;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buffer[1 << 15];
  while (in) {
    in.read(buffer, sizeof buffer);
    EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> argv;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> input;

  json document() const {
    json doc = {{"subcommand", subcommand},
                {"argv", argv},
                {"config", config},
                {"version", OCCUHET_VERSION},
                {"timestamp", utc_timestamp()}};
    doc["seed"] = seed ? json(*seed) : json(nullptr);
    if (input) {
      doc["input"] = input->string();
      doc["input_sha256"] = sha256_file(*input);
    } else {
      doc["input"] = nullptr;
      doc["input_sha256"] = nullptr;
    }
    return doc;
  }

  void write(const std::optional<fs::path>& path) const {
    if (path) {
      std::ofstream out(*path);
      if (!out) throw ValidationError("cannot write " + path->string());
      out << document().dump(2) << '\n';
    } else {
      std::cerr << document().dump() << '\n';
    }
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ','))
    if (!field.empty()) out.push_back(field);
  return out;
}

void write_text(const std::optional<fs::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path);
  if (!out) throw ValidationError("cannot write " + path->string());
  out << text;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string family = "poisson";
  fs::path data;
  std::string y;
  std::string visits;
  int n_visits = 0;
  std::string site_id;
  std::string intercept_column;
  std::string detection = "1";
  std::string occurrence = "1";
  std::string method = "ml";
  std::string mixture = "none";
  bool ht = false;
  std::optional<fs::path> out;
  std::optional<fs::path> manifest;
};

int run_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  const Family family = parse_family(a.family);
  ModelSpec spec;
  spec.detection = a.detection;
  spec.occurrence = a.occurrence;
  spec.method = parse_method(a.method);
  spec.mixture = parse_mixture(a.mixture);
  const Formula det = Formula::parse(spec.detection);
  const Formula occ = Formula::parse(spec.occurrence);

  Schema schema;
  if (a.y.empty() == a.visits.empty()) throw ValidationError("give exactly one of --y or --visits");
  if (!a.y.empty()) schema.y_column = a.y;
  schema.visit_columns = split_list(a.visits);
  if (a.n_visits > 0) schema.visits = a.n_visits;
  if (!a.site_id.empty()) schema.site_id_column = a.site_id;
  if (!a.intercept_column.empty()) schema.intercept_column = a.intercept_column;
  std::set<std::string> covariates;
  for (const auto& t : det.terms()) covariates.insert(t);
  for (const auto& t : occ.terms()) covariates.insert(t);
  schema.covariates.assign(covariates.begin(), covariates.end());
  const Dataset dataset = load_dataset(a.data, schema, family);

  const FitResult fit = fit_model(dataset, spec);
  json doc = to_json(fit);
  bool converged = fit.converged;

  if (spec.mixture.kind != MixtureKind::none && family == Family::poisson &&
      !fit.detection_boundary && fit.converged) {
    const auto cells = make_cell_model(family, spec.mixture, dataset.visits());
    if (auto moments = cells->mixing_moments(fit.theta()))
      doc["bias_analysis"] = to_json(bias_rho(moments->first, moments->second, fit.psi_hat));
  }
  if (a.ht) {
    if (spec.mixture.kind != MixtureKind::none)
      throw ValidationError("--ht needs a detection model without a mixture");
    FitResult detection_fit = fit;
    if (fit.method != Method::cl) {
      ModelSpec cl = spec;
      cl.method = Method::cl;
      detection_fit = fit_model(dataset, cl);
    }
    doc["ht_estimate"] = to_json(ht_psi_bar(dataset, detection_fit));
    converged = converged && detection_fit.converged;
  }
  write_text(a.out, doc.dump(2) + "\n");

  Manifest manifest{"fit", argv, {}, std::nullopt, a.data};
  manifest.config = {{"family", a.family},      {"detection", a.detection},
                     {"occurrence", a.occurrence}, {"method", a.method},
                     {"mixture", a.mixture},    {"ht", a.ht}};
  auto manifest_path = a.manifest;
  if (!manifest_path && a.out) manifest_path = fs::path(a.out->string() + ".manifest.json");
  manifest.write(manifest_path);
  return converged ? kOk : kNonConvergence;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> n;
  fs::path out = "sim_out";
  int threads = 1;
};

int run_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  ScenarioConfig config;
  if (a.config) {
    config = load_config(*a.config);
    if (!a.scenario.empty() && parse_scenario(a.scenario) != config.scenario)
      throw ValidationError("--scenario " + a.scenario + " does not match the config scenario " +
                            to_string(config.scenario));
  } else {
    if (a.scenario.empty()) throw ValidationError("give --scenario or --config");
    config.scenario = parse_scenario(a.scenario);
    if (config.scenario == Scenario::a) config.psi = 0.5;
    if (config.scenario == Scenario::c || config.scenario == Scenario::zib_c)
      config.theta = {1.0, 0.0, 1.0};
    config.fitters = default_fitters(config.scenario);
  }
  if (a.seed) config.seed = *a.seed;
  if (a.replicates) config.replicates = *a.replicates;
  if (a.n) config.n = *a.n;
  if (a.threads < 1) throw ValidationError("--threads must be at least 1");
  config.validate();

  fs::create_directories(a.out);
  const StudyResult study = run_study(config, a.threads);
  write_rows_csv(a.out / "replicates.csv", study.rows);
  write_summary_csv(a.out / "summary.csv", study.summary);
  {
    json summary = to_json(study.summary);
    summary["scenario"] = to_string(config.scenario);
    summary["presence_estimand"] = config.presence_estimand();
    std::ofstream out(a.out / "summary.json");
    out << summary.dump(2) << '\n';
  }
  Manifest manifest{"simulate", argv, to_json(config), config.seed, a.config};
  manifest.write(a.out / "manifest.json");
  return kOk;
}

// ---------------------------------------------------------------------------

struct BiasCurveArgs {
  std::string scenario = "a";
  std::optional<fs::path> config;
  std::optional<double> mu;
  std::optional<double> psi;
  std::optional<double> p;
  std::optional<int> n;
  std::optional<int> visits;
  std::string kappa_grid;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<fs::path> out;
  std::optional<fs::path> manifest;
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ':')) parts.push_back(field);
  if (parts.size() != 3) throw ValidationError("--kappa-grid expects lo:hi:points");
  try {
    std::size_t used = 0;
    const double lo = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("lo");
    const double hi = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("hi");
    const int points = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("points");
    return log_grid(lo, hi, points);
  } catch (const std::logic_error&) {
    throw ValidationError("--kappa-grid expects lo:hi:points with numbers");
  }
}

int run_bias_curve(const BiasCurveArgs& a, const std::vector<std::string>& argv) {
  ScenarioConfig config;
  if (a.config) {
    config = load_config(*a.config);
  } else {
    config.scenario = parse_scenario(a.scenario);
    config.psi = 0.5;
  }
  if (config.scenario != Scenario::a && config.scenario != Scenario::zib_a)
    throw ValidationError("bias curves need scenario a or zib-a");
  if (a.mu) config.mu = *a.mu;
  if (a.psi) config.psi = *a.psi;
  if (a.p) config.p = *a.p;
  if (a.n) config.n = *a.n;
  if (a.visits) config.visits = *a.visits;
  if (a.replicates) config.replicates = *a.replicates;
  if (a.seed) config.seed = *a.seed;
  if (!a.kappa_grid.empty()) config.kappa_grid = parse_grid(a.kappa_grid);
  if (config.kappa_grid.empty()) throw ValidationError("give --kappa-grid or a config with [grid]");
  config.fitters.clear();
  config.validate();

  const auto curve = bias_curve(config, config.kappa_grid, a.threads);
  std::ostringstream csv;
  write_bias_curve_csv(csv, curve);
  write_text(a.out, csv.str());

  Manifest manifest{"bias-curve", argv, to_json(config), config.seed, a.config};
  auto manifest_path = a.manifest;
  if (!manifest_path && a.out) manifest_path = fs::path(a.out->string() + ".manifest.json");
  manifest.write(manifest_path);
  return kOk;
}

int dispatch(std::vector<std::string> args);

int run_replay(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.contains("argv") || !doc["argv"].is_array())
    throw ValidationError("manifest has no argv");
  const auto argv = doc["argv"].get<std::vector<std::string>>();
  if (argv.empty() || argv.front() == "replay") throw ValidationError("manifest cannot be replayed");
  if (doc.contains("input_sha256") && doc["input_sha256"].is_string() && doc["input"].is_string()) {
    const fs::path input = doc["input"].get<std::string>();
    if (sha256_file(input) != doc["input_sha256"].get<std::string>())
      throw ValidationError("input " + input.string() + " changed since the manifest was written");
  }
  return dispatch(argv);
}

// ---------------------------------------------------------------------------

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Zero-inflated site-occupancy models: fits, robust estimates and simulations",
               "occuhet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(OCCUHET_VERSION));

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a zero-inflated Poisson or binomial model to a CSV");
  fit->add_option("--family", fit_args.family, "poisson | binomial")
      ->check(CLI::IsMember({"poisson", "binomial"}))
      ->capture_default_str();
  fit->add_option("--data", fit_args.data, "Site table (CSV with header)")->required();
  fit->add_option("--y", fit_args.y, "Column with total detections per site");
  fit->add_option("--visits", fit_args.visits, "Comma-separated per-visit columns, summed per site");
  fit->add_option("--n-visits", fit_args.n_visits, "Number of visits T when --y holds binomial totals");
  fit->add_option("--site-id", fit_args.site_id, "Site identifier column");
  fit->add_option("--intercept-column", fit_args.intercept_column,
                  "Existing column of ones to treat as the intercept");
  fit->add_option("--detection", fit_args.detection, "Detection formula, e.g. '1 + x1 + x2'")
      ->capture_default_str();
  fit->add_option("--occurrence", fit_args.occurrence, "Occurrence formula, e.g. '1 + elev'")
      ->capture_default_str();
  fit->add_option("--method", fit_args.method, "ml | cl")
      ->check(CLI::IsMember({"ml", "cl"}))
      ->capture_default_str();
  fit->add_option("--mixture", fit_args.mixture, "none | gamma | finite:C | beta")
      ->capture_default_str();
  fit->add_flag("--ht", fit_args.ht, "Append the Horvitz-Thompson average presence and SE");
  fit->add_option("--out", fit_args.out, "Write the fit JSON here instead of stdout");
  fit->add_option("--manifest", fit_args.manifest,
                  "Run manifest path (default: <out>.manifest.json, or stderr)");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study for a scenario");
  sim->add_option("--scenario", sim_args.scenario, "a | b | c | zib-a | zib-b | zib-c");
  sim->add_option("--config", sim_args.config, "Scenario TOML file")->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_args.seed, "Override the config seed");
  sim->add_option("--replicates", sim_args.replicates, "Override the replicate count");
  sim->add_option("--n", sim_args.n, "Override the number of sites");
  sim->add_option("--out", sim_args.out, "Output directory")->capture_default_str();
  sim->add_option("--threads", sim_args.threads, "Worker threads")->capture_default_str();

  BiasCurveArgs curve_args;
  auto* curve = app.add_subcommand("bias-curve", "Relative bias of the homogeneous presence estimate over kappa");
  curve->add_option("--scenario", curve_args.scenario, "a | zib-a")->capture_default_str();
  curve->add_option("--config", curve_args.config, "Scenario TOML file")->check(CLI::ExistingFile);
  curve->add_option("--mu", curve_args.mu, "Mean detection intensity");
  curve->add_option("--psi", curve_args.psi, "Presence probability");
  curve->add_option("--p", curve_args.p, "Mean detection probability (zib-a)");
  curve->add_option("--n", curve_args.n, "Number of sites");
  curve->add_option("--visits", curve_args.visits, "Number of visits (zib-a)");
  curve->add_option("--kappa-grid", curve_args.kappa_grid, "lo:hi:points, log spaced");
  curve->add_option("--replicates", curve_args.replicates, "Replicates per grid point");
  curve->add_option("--seed", curve_args.seed, "Random seed");
  curve->add_option("--threads", curve_args.threads, "Worker threads")->capture_default_str();
  curve->add_option("--out", curve_args.out, "CSV path (default stdout)");
  curve->add_option("--manifest", curve_args.manifest,
                    "Run manifest path (default: <out>.manifest.json, or stderr)");

  fs::path replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  replay->add_option("manifest", replay_path, "Manifest JSON")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*fit) return run_fit(fit_args, args);
  if (*sim) return run_simulate(sim_args, args);
  if (*curve) return run_bias_curve(curve_args, args);
  return run_replay(replay_path);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const StudyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
