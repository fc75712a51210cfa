#include "occuhet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace occuhet {

std::string to_string(Family family) {
  return family == Family::poisson ? "poisson" : "binomial";
}

Family parse_family(const std::string& text) {
  if (text == "poisson") return Family::poisson;
  if (text == "binomial") return Family::binomial;
  throw ValidationError("unknown family '" + text + "' (expected poisson or binomial)");
}

// ---------------------------------------------------------------------------
// FrequencyTable

FrequencyTable::FrequencyTable(std::map<int, long> counts) {
  for (const auto& [k, m] : counts) {
    if (k < 0) throw ValidationError("frequency table key must be nonnegative");
    if (m < 0) throw ValidationError("frequency table count must be nonnegative");
    if (m > 0) counts_[k] = m;
    n_ += m;
  }
}

long FrequencyTable::count(int k) const {
  auto it = counts_.find(k);
  return it == counts_.end() ? 0 : it->second;
}

double FrequencyTable::total_positive() const {
  double total = 0.0;
  for (const auto& [k, m] : counts_) total += static_cast<double>(k) * static_cast<double>(m);
  return total;
}

int FrequencyTable::distinct_positive() const {
  return static_cast<int>(std::count_if(counts_.begin(), counts_.end(),
                                        [](const auto& kv) { return kv.first > 0; }));
}

int FrequencyTable::max_count() const { return counts_.empty() ? 0 : counts_.rbegin()->first; }

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Family family, int visits, std::vector<std::string> site_ids, std::vector<int> y,
                 std::vector<std::string> covariate_names, Eigen::MatrixXd covariates)
    : family_(family),
      visits_(visits),
      site_ids_(std::move(site_ids)),
      y_(std::move(y)),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates)) {
  if (y_.empty()) throw ValidationError("dataset is empty");
  if (visits_ < 1) throw ValidationError("number of visits must be positive");
  if (site_ids_.empty()) {
    site_ids_.reserve(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) site_ids_.push_back(std::to_string(i + 1));
  }
  if (site_ids_.size() != y_.size()) throw ValidationError("site id count does not match rows");
  if (covariates_.cols() != static_cast<Eigen::Index>(covariate_names_.size()))
    throw ValidationError("covariate names do not match covariate columns");
  if (covariates_.cols() > 0 && covariates_.rows() != static_cast<Eigen::Index>(y_.size()))
    throw ValidationError("covariate rows do not match dataset size");
  if (covariates_.cols() == 0) covariates_.resize(static_cast<Eigen::Index>(y_.size()), 0);
  for (std::size_t i = 0; i < y_.size(); ++i) {
    if (y_[i] < 0) throw ValidationError("negative count at site " + site_ids_[i]);
    if (family_ == Family::binomial && y_[i] > visits_)
      throw ValidationError("binomial count exceeds number of visits at site " + site_ids_[i]);
  }
  if (!covariates_.allFinite()) throw ValidationError("missing covariate");
}

bool Dataset::has_column(const std::string& name) const {
  return std::find(covariate_names_.begin(), covariate_names_.end(), name) !=
         covariate_names_.end();
}

Eigen::VectorXd Dataset::column(const std::string& name) const {
  auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end()) throw ValidationError("unknown covariate column '" + name + "'");
  return covariates_.col(std::distance(covariate_names_.begin(), it));
}

SiteRecord Dataset::record(std::size_t i, const Eigen::MatrixXd& detection_design,
                           const Eigen::MatrixXd& occurrence_design) const {
  const auto row = static_cast<Eigen::Index>(i);
  return SiteRecord{site_ids_.at(i), y_.at(i), visits_, detection_design.row(row).transpose(),
                    occurrence_design.row(row).transpose()};
}

FrequencyTable aggregate(const Dataset& dataset) {
  std::map<int, long> counts;
  for (int y : dataset.y()) ++counts[y];
  return FrequencyTable(std::move(counts));
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = cell.data();
  if (*begin == '+') ++begin;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

int parse_count(const std::string& cell, const std::string& column, std::size_t line) {
  const auto value = parse_number(cell);
  const std::string where = " in column '" + column + "' on line " + std::to_string(line);
  if (!value) throw ValidationError("non-numeric count" + where);
  if (*value < 0 || std::floor(*value) != *value || *value > 1e9)
    throw ValidationError("count must be a nonnegative integer" + where);
  return static_cast<int>(*value);
}

}  // namespace

Dataset parse_dataset(const std::string& csv_text, const Schema& schema, Family family) {
  if (schema.y_column.has_value() == !schema.visit_columns.empty())
    throw ValidationError("schema must name either a y column or per-visit columns");

  std::istringstream in(csv_text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw ValidationError("CSV has no header row");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index.emplace(header[j], j);
  auto column_index = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw ValidationError("column '" + name + "' not found in CSV header");
    return it->second;
  };

  std::vector<std::size_t> count_cols;
  if (schema.y_column) {
    count_cols.push_back(column_index(*schema.y_column));
  } else {
    for (const auto& name : schema.visit_columns) count_cols.push_back(column_index(name));
  }
  std::vector<std::string> covariate_names;
  std::vector<std::size_t> covariate_cols;
  for (const auto& name : schema.covariates) {
    if (schema.intercept_column && name == *schema.intercept_column) continue;
    if (std::find(covariate_names.begin(), covariate_names.end(), name) != covariate_names.end())
      continue;
    covariate_names.push_back(name);
    covariate_cols.push_back(column_index(name));
  }
  std::optional<std::size_t> id_col;
  if (schema.site_id_column) id_col = column_index(*schema.site_id_column);
  std::optional<std::size_t> intercept_col;
  if (schema.intercept_column) intercept_col = column_index(*schema.intercept_column);

  int visits = 1;
  if (schema.y_column) {
    visits = schema.visits.value_or(1);
    if (family == Family::binomial && !schema.visits)
      throw ValidationError("binomial data with a presummed y column needs the number of visits");
  } else {
    visits = static_cast<int>(schema.visit_columns.size());
    if (schema.visits && *schema.visits != visits)
      throw ValidationError("number of visits does not match the per-visit columns");
  }

  std::vector<std::string> ids;
  std::vector<int> y;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
    int total = 0;
    for (std::size_t c : count_cols) {
      const int v = parse_count(fields[c], header[c], line_no);
      if (family == Family::binomial && !schema.y_column && v > 1)
        throw ValidationError("presence-absence visit value must be 0 or 1 in column '" +
                              header[c] + "' on line " + std::to_string(line_no));
      total += v;
    }
    std::vector<double> row;
    row.reserve(covariate_cols.size());
    for (std::size_t c : covariate_cols) {
      if (fields[c].empty())
        throw ValidationError("missing covariate in column '" + header[c] + "' on line " +
                              std::to_string(line_no));
      const auto value = parse_number(fields[c]);
      if (!value || !std::isfinite(*value))
        throw ValidationError("non-numeric covariate in column '" + header[c] + "' on line " +
                              std::to_string(line_no));
      row.push_back(*value);
    }
    if (intercept_col) {
      const auto value = parse_number(fields[*intercept_col]);
      if (!value || *value != 1.0)
        throw ValidationError("intercept column must be 1 on line " + std::to_string(line_no));
    }
    ids.push_back(id_col ? fields[*id_col] : std::to_string(y.size() + 1));
    y.push_back(total);
    rows.push_back(std::move(row));
  }
  if (y.empty()) throw ValidationError("CSV has no data rows");

  Eigen::MatrixXd covariates(static_cast<Eigen::Index>(y.size()),
                             static_cast<Eigen::Index>(covariate_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return Dataset(family, visits, std::move(ids), std::move(y), std::move(covariate_names),
                 std::move(covariates));
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema, Family family) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), schema, family);
}

// ---------------------------------------------------------------------------
// Formula

Formula Formula::parse(const std::string& text) {
  std::string body = trim(text);
  if (!body.empty() && body.front() == '~') body = trim(body.substr(1));
  if (body.empty()) throw ValidationError("empty formula");
  Formula formula;
  std::stringstream ss(body);
  std::string token;
  bool saw_intercept = false;
  while (std::getline(ss, token, '+')) {
    token = trim(token);
    if (token.empty()) throw ValidationError("malformed formula '" + text + "'");
    if (token == "1") {
      saw_intercept = true;
      continue;
    }
    if (token == "0" || token == "-1")
      throw ValidationError("formulas without an intercept are not supported");
    const bool valid = std::all_of(token.begin(), token.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '_' || c == '.';
    });
    if (!valid)
      throw ValidationError("formula term '" + token +
                            "' is not a column name (interactions and transforms are not "
                            "supported)");
    if (std::find(formula.terms_.begin(), formula.terms_.end(), token) == formula.terms_.end())
      formula.terms_.push_back(token);
  }
  (void)saw_intercept;
  return formula;
}

std::string Formula::str() const {
  std::string out = "1";
  for (const auto& t : terms_) out += " + " + t;
  return out;
}

std::vector<std::string> Formula::labels() const {
  std::vector<std::string> out{"(Intercept)"};
  out.insert(out.end(), terms_.begin(), terms_.end());
  return out;
}

Eigen::MatrixXd Formula::design(const Dataset& dataset) const {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(terms_.size() + 1));
  x.col(0).setOnes();
  for (std::size_t j = 0; j < terms_.size(); ++j)
    x.col(static_cast<Eigen::Index>(j + 1)) = dataset.column(terms_[j]);
  return x;
}

}  // namespace occuhet
