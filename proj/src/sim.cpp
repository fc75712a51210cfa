#include "occuhet/sim.hpp"

#include "occuhet/cells.hpp"
#include "occuhet/model.hpp"
#include "occuhet/robust.hpp"

#include "toml.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/beta_distribution.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace occuhet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint32_t kCovariateStream = 1;
constexpr std::uint32_t kResponseStream = 2;
constexpr std::uint64_t kFixedDesign = ~std::uint64_t{0};

using Engine = boost::random::mt19937_64;

Engine make_engine(std::uint64_t seed, std::uint64_t replicate, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(replicate >> 32), stream};
  return Engine(seq);
}

int draw_poisson(Engine& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return boost::random::poisson_distribution<int, double>(mean)(rng);
}

// Neumaier-compensated sum.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

bool has_covariates(Scenario s) { return s != Scenario::a && s != Scenario::zib_a; }
bool has_presence_covariate(Scenario s) { return s == Scenario::c || s == Scenario::zib_c; }

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& text) {
  if (text == "NA") return kNaN;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw ValidationError("bad number '" + text + "'");
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::a: return "a";
    case Scenario::b: return "b";
    case Scenario::c: return "c";
    case Scenario::zib_a: return "zib-a";
    case Scenario::zib_b: return "zib-b";
    case Scenario::zib_c: return "zib-c";
  }
  return "?";
}

Scenario parse_scenario(const std::string& text) {
  for (Scenario s : {Scenario::a, Scenario::b, Scenario::c, Scenario::zib_a, Scenario::zib_b,
                     Scenario::zib_c})
    if (to_string(s) == text) return s;
  throw ValidationError("unknown scenario '" + text + "' (expected a|b|c|zib-a|zib-b|zib-c)");
}

bool is_binomial(Scenario s) {
  return s == Scenario::zib_a || s == Scenario::zib_b || s == Scenario::zib_c;
}

std::string ScenarioConfig::presence_estimand() const {
  return has_presence_covariate(scenario) ? "psi_bar" : "psi";
}

void ScenarioConfig::validate() const {
  if (n < 1) throw ValidationError("n must be at least 1");
  if (replicates < 2) throw ValidationError("SD undefined: replicates must be at least 2");
  if (is_binomial(scenario) && visits < 2) throw ValidationError("visits must be at least 2");
  if (!(psi > 0.0 && psi <= 1.0)) throw ValidationError("psi must lie in (0, 1]");
  if (!(mu > 0.0)) throw ValidationError("mu must be positive");
  if (!(kappa > 0.0)) throw ValidationError("kappa must be positive");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("p must lie in (0, 1)");
  if (has_covariates(scenario) && theta.size() != 3)
    throw ValidationError("theta needs three entries (intercept, x1, x2)");
  if (has_presence_covariate(scenario) && gamma.size() != 2)
    throw ValidationError("gamma needs two entries (intercept, x1)");
  if (covariates != "i" && covariates != "ii")
    throw ValidationError("covariates must be \"i\" or \"ii\"");
  if (design != "redraw" && design != "fixed")
    throw ValidationError("design must be \"redraw\" or \"fixed\"");
  if (ci_scale != "natural" && ci_scale != "logit")
    throw ValidationError("ci_scale must be \"natural\" or \"logit\"");
  for (double k : kappa_grid)
    if (!(k > 0.0)) throw ValidationError("kappa grid must be strictly positive");
  std::set<std::string> labels;
  for (const auto& f : fitters) {
    if (f.label.empty() || f.label.find_first_of(",\"\n") != std::string::npos)
      throw ValidationError("fitter labels must be nonempty without commas or quotes");
    if (!labels.insert(f.label).second) throw ValidationError("duplicate fitter '" + f.label + "'");
    const Formula det = Formula::parse(f.detection);
    const Formula occ = Formula::parse(f.occurrence);
    if (!has_covariates(scenario) && !(det.intercept_only() && occ.intercept_only()))
      throw ValidationError("scenario " + to_string(scenario) + " has no covariates");
    for (const auto& term : det.terms())
      if (term != "x1" && term != "x2") throw ValidationError("unknown covariate '" + term + "'");
    for (const auto& term : occ.terms())
      if (term != "x1" && term != "x2") throw ValidationError("unknown covariate '" + term + "'");
    if (f.mixture.kind != MixtureKind::none) {
      if (!(det.intercept_only() && occ.intercept_only()))
        throw ValidationError("mixtures apply to intercept-only models");
      if (f.ht) throw ValidationError("the Horvitz-Thompson fitter needs a regression detection model");
      (void)make_cell_model(is_binomial(scenario) ? Family::binomial : Family::poisson, f.mixture,
                            visits);
    }
    if (f.ht && f.method != Method::cl)
      throw ValidationError("the Horvitz-Thompson fitter uses the CL detection stage");
  }
}

std::vector<FitterSpec> default_fitters(Scenario scenario) {
  std::vector<FitterSpec> out;
  auto both = [&](const std::string& name, const std::string& det, const std::string& occ) {
    out.push_back({"ML " + name, Method::ml, det, occ, {}, false});
    out.push_back({"CL " + name, Method::cl, det, occ, {}, false});
  };
  switch (scenario) {
    case Scenario::a:
      both(".", "1", "1");
      out.push_back({"ML gamma", Method::ml, "1", "1", {MixtureKind::gamma, 1}, false});
      break;
    case Scenario::zib_a:
      both(".", "1", "1");
      out.push_back({"ML beta", Method::ml, "1", "1", {MixtureKind::beta, 1}, false});
      break;
    case Scenario::b:
    case Scenario::zib_b:
      both(".", "1", "1");
      both("x1", "1 + x1", "1");
      both("x1+x2", "1 + x1 + x2", "1");
      break;
    case Scenario::c:
    case Scenario::zib_c:
      both(".", "1 + x1 + x2", "1");
      both("x1", "1 + x1 + x2", "1 + x1");
      out.push_back({"CL*", Method::cl, "1 + x1 + x2", "1", {}, true});
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string> kTopKeys{"scenario", "n",      "replicates", "seed",  "visits",
                                     "design",   "ci_scale", "truth",    "grid",  "fitter"};
const std::set<std::string> kTruthKeys{"psi", "mu", "kappa", "p", "precision", "theta", "gamma",
                                       "covariates"};
const std::set<std::string> kGridKeys{"kappa", "lo", "hi", "points"};
const std::set<std::string> kFitterKeys{"label", "method", "detection", "occurrence", "mixture",
                                        "ht"};

void check_keys(const toml::table& table, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, node] : table) {
    (void)node;
    if (!allowed.count(std::string(key.str())))
      throw ValidationError("unknown config key '" + std::string(key.str()) + "' in " + where);
  }
}

template <typename T, typename View>
T required_value(const View& node, const std::string& key) {
  auto v = node.template value<T>();
  if (!v) throw ValidationError("config key '" + key + "' has the wrong type");
  return *v;
}

template <typename T>
void read_optional(const toml::table& table, const std::string& key, T& target) {
  const auto node = table[key];
  if (!node) return;
  target = required_value<T>(node, key);
}

std::vector<double> read_array(const toml::table& table, const std::string& key) {
  const auto* array = table[key].as_array();
  if (!array) throw ValidationError("config key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& element : *array) {
    auto v = element.value<double>();
    if (!v) throw ValidationError("config key '" + key + "' must be an array of numbers");
    out.push_back(*v);
  }
  return out;
}

}  // namespace

ScenarioConfig parse_config(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ValidationError(std::string("config parse error: ") + std::string(e.description()));
  }
  check_keys(root, kTopKeys, "config");
  ScenarioConfig config;
  if (!root["scenario"]) throw ValidationError("config needs a scenario");
  config.scenario = parse_scenario(required_value<std::string>(root["scenario"], "scenario"));
  std::int64_t n = config.n, replicates = config.replicates, visits = config.visits;
  read_optional(root, "n", n);
  read_optional(root, "replicates", replicates);
  read_optional(root, "visits", visits);
  config.n = static_cast<int>(n);
  config.replicates = static_cast<int>(replicates);
  config.visits = static_cast<int>(visits);
  if (root["seed"]) {
    const auto seed = required_value<std::int64_t>(root["seed"], "seed");
    if (seed < 0) throw ValidationError("seed must be nonnegative");
    config.seed = static_cast<std::uint64_t>(seed);
  }
  read_optional(root, "design", config.design);
  read_optional(root, "ci_scale", config.ci_scale);

  if (const auto* truth = root["truth"].as_table()) {
    check_keys(*truth, kTruthKeys, "[truth]");
    read_optional(*truth, "psi", config.psi);
    read_optional(*truth, "mu", config.mu);
    read_optional(*truth, "kappa", config.kappa);
    read_optional(*truth, "precision", config.kappa);
    read_optional(*truth, "p", config.p);
    read_optional(*truth, "covariates", config.covariates);
    if ((*truth)["theta"]) config.theta = read_array(*truth, "theta");
    if ((*truth)["gamma"]) config.gamma = read_array(*truth, "gamma");
  }
  if (const auto* grid = root["grid"].as_table()) {
    check_keys(*grid, kGridKeys, "[grid]");
    if ((*grid)["kappa"]) {
      config.kappa_grid = read_array(*grid, "kappa");
    } else {
      double lo = 0.0, hi = 0.0;
      std::int64_t points = 0;
      read_optional(*grid, "lo", lo);
      read_optional(*grid, "hi", hi);
      read_optional(*grid, "points", points);
      config.kappa_grid = log_grid(lo, hi, static_cast<int>(points));
    }
  }
  if (root["fitter"]) {
    const auto* fitters = root["fitter"].as_array();
    if (!fitters) throw ValidationError("[[fitter]] must be an array of tables");
    for (const auto& node : *fitters) {
      const auto* t = node.as_table();
      if (!t) throw ValidationError("[[fitter]] must be an array of tables");
      check_keys(*t, kFitterKeys, "[[fitter]]");
      FitterSpec f;
      std::string method = "ml", mixture = "none";
      read_optional(*t, "label", f.label);
      read_optional(*t, "method", method);
      read_optional(*t, "detection", f.detection);
      read_optional(*t, "occurrence", f.occurrence);
      read_optional(*t, "mixture", mixture);
      read_optional(*t, "ht", f.ht);
      f.method = parse_method(method);
      f.mixture = parse_mixture(mixture);
      config.fitters.push_back(f);
    }
  }
  if (config.fitters.empty()) config.fitters = default_fitters(config.scenario);
  config.validate();
  return config;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json fitters = nlohmann::json::array();
  for (const auto& f : c.fitters)
    fitters.push_back({{"label", f.label},
                       {"method", to_string(f.method)},
                       {"detection", f.detection},
                       {"occurrence", f.occurrence},
                       {"mixture", to_string(f.mixture)},
                       {"ht", f.ht}});
  return {{"scenario", to_string(c.scenario)},
          {"n", c.n},
          {"replicates", c.replicates},
          {"seed", c.seed},
          {"visits", c.visits},
          {"design", c.design},
          {"ci_scale", c.ci_scale},
          {"truth",
           {{"psi", c.psi},
            {"mu", c.mu},
            {"kappa", c.kappa},
            {"p", c.p},
            {"theta", c.theta},
            {"gamma", c.gamma},
            {"covariates", c.covariates}}},
          {"kappa_grid", c.kappa_grid},
          {"fitters", fitters}};
}

// ---------------------------------------------------------------------------

Replicate generate(const ScenarioConfig& config, int replicate) {
  const auto n = static_cast<std::size_t>(config.n);
  const Family family = is_binomial(config.scenario) ? Family::binomial : Family::poisson;
  const int visits = family == Family::binomial ? config.visits : 1;
  Engine covariate_rng = make_engine(
      config.seed, config.design == "fixed" ? kFixedDesign : static_cast<std::uint64_t>(replicate),
      kCovariateStream);
  Engine rng = make_engine(config.seed, static_cast<std::uint64_t>(replicate), kResponseStream);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  boost::random::bernoulli_distribution<double> coin(0.5);

  std::vector<std::string> names;
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(n), 0);
  if (has_covariates(config.scenario)) {
    names = {"x1", "x2"};
    cov.resize(static_cast<Eigen::Index>(n), 2);
    const bool case_ii = config.covariates == "ii";
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
      if (has_presence_covariate(config.scenario)) {
        cov(i, 0) = normal(covariate_rng);
        cov(i, 1) = coin(covariate_rng) ? 1.0 : 0.0;
      } else {
        cov(i, 0) = case_ii ? (coin(covariate_rng) ? 1.0 : 0.0) : normal(covariate_rng);
        cov(i, 1) = normal(covariate_rng);
      }
    }
  }

  std::vector<double> psi(n, config.psi), intensity(n);
  std::vector<int> occupied(n), y(n);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    ids[i] = "s" + std::to_string(i + 1);
    if (has_presence_covariate(config.scenario))
      psi[i] = logistic(config.gamma[0] + config.gamma[1] * cov(row, 0));
    occupied[i] = boost::random::bernoulli_distribution<double>(psi[i])(rng) ? 1 : 0;
    double eta = 0.0;
    if (has_covariates(config.scenario))
      eta = config.theta[0] + config.theta[1] * cov(row, 0) + config.theta[2] * cov(row, 1);
    int count = 0;
    switch (config.scenario) {
      case Scenario::a: {
        const double lambda = boost::random::gamma_distribution<double>(
            config.kappa, config.mu / config.kappa)(rng);
        intensity[i] = lambda;
        count = draw_poisson(rng, lambda);
        break;
      }
      case Scenario::zib_a: {
        const double prob = boost::random::beta_distribution<double>(
            config.p * config.kappa, (1.0 - config.p) * config.kappa)(rng);
        intensity[i] = prob;
        count = boost::random::binomial_distribution<int, double>(visits, prob)(rng);
        break;
      }
      case Scenario::b:
      case Scenario::c:
        intensity[i] = std::exp(eta);
        count = draw_poisson(rng, intensity[i]);
        break;
      case Scenario::zib_b:
      case Scenario::zib_c:
        intensity[i] = logistic(eta);
        count = boost::random::binomial_distribution<int, double>(visits, intensity[i])(rng);
        break;
    }
    y[i] = occupied[i] ? count : 0;
  }
  double psi_sum = 0.0;
  for (double v : psi) psi_sum += v;
  return Replicate{Dataset(family, visits, std::move(ids), std::move(y), names, cov),
                   std::move(psi), std::move(intensity), std::move(occupied),
                   psi_sum / static_cast<double>(n)};
}

// ---------------------------------------------------------------------------

bool ReplicateRow::usable() const { return converged && !boundary && std::isfinite(estimate); }

namespace {

std::map<std::string, double> truth_map(const ScenarioConfig& c, const Replicate& rep) {
  std::map<std::string, double> truth;
  truth[c.presence_estimand()] = has_presence_covariate(c.scenario) ? rep.psi_bar : c.psi;
  switch (c.scenario) {
    case Scenario::a:
      truth["log_mu"] = std::log(c.mu);
      truth["log_kappa"] = std::log(c.kappa);
      break;
    case Scenario::zib_a:
      truth["logit_mean"] = logit(c.p);
      truth["log_precision"] = std::log(c.kappa);
      break;
    default:
      truth["det:(Intercept)"] = c.theta[0];
      truth["det:x1"] = c.theta[1];
      truth["det:x2"] = c.theta[2];
      if (has_presence_covariate(c.scenario)) {
        truth["occ:(Intercept)"] = c.gamma[0];
        truth["occ:x1"] = c.gamma[1];
      }
  }
  return truth;
}

FitResult run_fitter(const FitterSpec& f, const Dataset& data) {
  return fit_model(data, {f.detection, f.occurrence, f.mixture, f.method});
}

}  // namespace

std::vector<ReplicateRow> fit_replicate(const ScenarioConfig& config, const Replicate& rep,
                                        int replicate) {
  const auto truth = truth_map(config, rep);
  auto truth_of = [&](const std::string& name) {
    auto it = truth.find(name);
    return it == truth.end() ? kNaN : it->second;
  };
  const std::string presence = config.presence_estimand();
  std::vector<ReplicateRow> rows;
  for (const auto& f : config.fitters) {
    try {
      const FitResult fit = run_fitter(f, rep.data);
      const bool boundary = fit.psi_boundary || fit.detection_boundary;
      if (f.ht) {
        const HtEstimate ht = ht_psi_bar(rep.data, fit);
        rows.push_back({replicate, f.label, presence, ht.psi_bar_hat, ht.se, truth_of(presence),
                        fit.converged, ht.boundary || fit.detection_boundary});
        continue;
      }
      const Vector se = fit.standard_errors();
      for (std::size_t j = 0; j < fit.names.size(); ++j) {
        if (fit.names[j] == "psi") continue;
        const auto k = static_cast<Eigen::Index>(j);
        rows.push_back({replicate, f.label, fit.names[j], fit.estimate[k], se[k],
                        truth_of(fit.names[j]), fit.converged, boundary});
      }
      rows.push_back({replicate, f.label, presence, fit.psi_hat, fit.psi_se, truth_of(presence),
                      fit.converged, boundary});
    } catch (const ValidationError&) {
      rows.push_back({replicate, f.label, presence, kNaN, kNaN, truth_of(presence), false, false});
    } catch (const NumericalError&) {
      rows.push_back({replicate, f.label, presence, kNaN, kNaN, truth_of(presence), false, false});
    } catch (const std::invalid_argument&) {
      rows.push_back({replicate, f.label, presence, kNaN, kNaN, truth_of(presence), false, false});
    }
  }
  return rows;
}

const SummaryRow* SummaryTable::find(const std::string& fitter, const std::string& estimand) const {
  for (const auto& r : rows)
    if (r.fitter == fitter && r.estimand == estimand) return &r;
  return nullptr;
}

SummaryTable summarize(const std::vector<ReplicateRow>& rows, const std::string& ci_scale) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ReplicateRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.fitter, r.estimand);
    auto& group = groups[key];
    if (group.empty()) order.push_back(key);
    group.push_back(&r);
  }
  SummaryTable table;
  for (const auto& key : order) {
    const auto& group = groups[key];
    SummaryRow s;
    s.fitter = key.first;
    s.estimand = key.second;
    s.replicates = static_cast<int>(group.size());
    Accumulator sum, se_sum;
    int se_count = 0;
    for (const auto* r : group) {
      if (!r->converged) ++s.nonconverged;
      else if (r->boundary) ++s.boundary;
      if (!r->usable()) continue;
      ++s.used;
      sum.add(r->estimate);
      if (std::isfinite(r->se)) {
        se_sum.add(r->se);
        ++se_count;
      }
    }
    s.ave = s.used > 0 ? sum.value() / s.used : kNaN;
    s.ase = se_count > 0 ? se_sum.value() / se_count : kNaN;
    Accumulator ss, sq_err;
    int covered = 0, cp_count = 0, err_count = 0;
    const bool presence = s.estimand == "psi" || s.estimand == "psi_bar";
    for (const auto* r : group) {
      if (!r->usable()) continue;
      ss.add((r->estimate - s.ave) * (r->estimate - s.ave));
      if (!std::isfinite(r->truth)) continue;
      sq_err.add((r->estimate - r->truth) * (r->estimate - r->truth));
      ++err_count;
      if (!std::isfinite(r->se)) continue;
      ++cp_count;
      if (ci_scale == "logit" && presence && r->estimate > 0.0 && r->estimate < 1.0 &&
          r->truth > 0.0 && r->truth < 1.0) {
        const double half = 1.96 * r->se / (r->estimate * (1.0 - r->estimate));
        if (std::abs(logit(r->estimate) - logit(r->truth)) <= half) ++covered;
      } else if (std::abs(r->estimate - r->truth) <= 1.96 * r->se) {
        ++covered;
      }
    }
    s.sd = s.used > 1 ? std::sqrt(ss.value() / (s.used - 1)) : kNaN;
    s.rmse = err_count > 0 ? std::sqrt(sq_err.value() / err_count) : kNaN;
    s.cp = cp_count > 0 ? 100.0 * covered / cp_count : kNaN;
    table.rows.push_back(s);
  }
  return table;
}

StudyResult run_study(const ScenarioConfig& config, int threads) {
  config.validate();
  const int total = config.replicates;
  std::vector<std::vector<ReplicateRow>> per_replicate(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < total; r = next++) {
      try {
        const Replicate rep = generate(config, r);
        per_replicate[static_cast<std::size_t>(r)] = fit_replicate(config, rep, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const int workers = std::clamp(threads, 1, total);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  StudyResult result;
  for (auto& rows : per_replicate)
    for (auto& row : rows) result.rows.push_back(std::move(row));
  if (std::none_of(result.rows.begin(), result.rows.end(),
                   [](const ReplicateRow& r) { return r.usable(); }))
    throw StudyError("no replicate produced a usable fit");
  result.summary = summarize(result.rows, config.ci_scale);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi))
    throw ValidationError("kappa grid needs 0 < lo <= hi");
  if (points < 1) throw ValidationError("kappa grid needs at least one point");
  if (points == 1) {
    if (lo != hi) throw ValidationError("a one-point kappa grid needs lo == hi");
    return {lo};
  }
  std::vector<double> out;
  const double a = std::log10(lo), b = std::log10(hi);
  for (int j = 0; j < points; ++j)
    out.push_back(std::pow(10.0, a + (b - a) * j / (points - 1)));
  out.back() = hi;
  out.front() = lo;
  return out;
}

std::vector<BiasCurvePoint> bias_curve(const ScenarioConfig& config,
                                       const std::vector<double>& kappas, int threads) {
  if (config.scenario != Scenario::a && config.scenario != Scenario::zib_a)
    throw ValidationError("bias curves need scenario a or zib-a");
  if (kappas.empty()) throw ValidationError("kappa grid is empty");
  std::vector<BiasCurvePoint> curve;
  for (double kappa : kappas) {
    if (!(kappa > 0.0)) throw ValidationError("kappa grid must be strictly positive");
    ScenarioConfig cfg = config;
    cfg.kappa = kappa;
    cfg.fitters = {{"CL .", Method::cl, "1", "1", {}, false}};
    BiasCurvePoint point;
    point.kappa = kappa;
    point.log10_kappa = std::log10(kappa);
    StudyResult study;
    try {
      study = run_study(cfg, threads);
    } catch (const StudyError&) {
      study.summary = summarize({});
    }
    const SummaryRow* row = study.summary.find("CL .", "psi");
    point.used = row ? row->used : 0;
    point.excluded = cfg.replicates - point.used;
    point.empirical_bias_pct = row && row->used > 0 ? 100.0 * (row->ave / cfg.psi - 1.0) : kNaN;
    point.asymptotic_bias_pct =
        cfg.scenario == Scenario::a
            ? bias_rho(cfg.mu, cfg.mu * cfg.mu / kappa, cfg.psi).relative_bias_pct()
            : kNaN;
    curve.push_back(point);
  }
  return curve;
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  if (!std::isfinite(value)) return "NA";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void write_rows_csv(const std::filesystem::path& path, const std::vector<ReplicateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "replicate,fitter,estimand,estimate,se,truth,converged,boundary\n";
  for (const auto& r : rows)
    out << r.replicate << ',' << r.fitter << ',' << r.estimand << ',' << format_number(r.estimate)
        << ',' << format_number(r.se) << ',' << format_number(r.truth) << ','
        << (r.converged ? 1 : 0) << ',' << (r.boundary ? 1 : 0) << '\n';
}

std::vector<ReplicateRow> read_rows_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ReplicateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ValidationError("malformed replicate row: " + line);
    rows.push_back({std::stoi(f[0]), f[1], f[2], parse_number(f[3]), parse_number(f[4]),
                    parse_number(f[5]), f[6] == "1", f[7] == "1"});
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "fitter,estimand,replicates,used,nonconverged,boundary,AVE,SD,A.SE,RMSE,CP\n";
  for (const auto& r : table.rows)
    out << r.fitter << ',' << r.estimand << ',' << r.replicates << ',' << r.used << ','
        << r.nonconverged << ',' << r.boundary << ',' << format_number(r.ave) << ','
        << format_number(r.sd) << ',' << format_number(r.ase) << ',' << format_number(r.rmse)
        << ',' << format_number(r.cp) << '\n';
}

nlohmann::json to_json(const SummaryTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"fitter", r.fitter},
                    {"estimand", r.estimand},
                    {"replicates", r.replicates},
                    {"used", r.used},
                    {"nonconverged", r.nonconverged},
                    {"boundary", r.boundary},
                    {"AVE", json_number(r.ave)},
                    {"SD", json_number(r.sd)},
                    {"A.SE", json_number(r.ase)},
                    {"RMSE", json_number(r.rmse)},
                    {"CP", json_number(r.cp)}});
  return {{"rows", rows}};
}

void write_bias_curve_csv(std::ostream& out, const std::vector<BiasCurvePoint>& curve) {
  out << "kappa,log10_kappa,empirical_bias_pct,asymptotic_bias_pct\n";
  for (const auto& p : curve)
    out << format_number(p.kappa) << ',' << format_number(p.log10_kappa) << ','
        << format_number(p.empirical_bias_pct) << ',' << format_number(p.asymptotic_bias_pct)
        << '\n';
}

}  // namespace occuhet
