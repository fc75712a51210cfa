#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace occuhet {

/// Raised for bad input (files, schemas, formulas, parameter ranges).
/// The CLI maps it to exit status 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Family { poisson, binomial };

std::string to_string(Family family);
Family parse_family(const std::string& text);

/// Sufficient statistic for covariate-free models: m_k sites with total k.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  /// Throws ValidationError on negative keys or counts.
  explicit FrequencyTable(std::map<int, long> counts);

  const std::map<int, long>& counts() const { return counts_; }
  long count(int k) const;
  long n() const { return n_; }
  long m_plus() const { return n_ - count(0); }
  long m_zero() const { return count(0); }
  /// Sum of k * m_k over k >= 1.
  double total_positive() const;
  /// Number of distinct k >= 1 with m_k > 0.
  int distinct_positive() const;
  int max_count() const;

 private:
  std::map<int, long> counts_;
  long n_ = 0;
};

/// Site-level view of a dataset row: total detections, visits and the
/// detection/occurrence design rows for a pair of formulas.
struct SiteRecord {
  std::string site_id;
  int y = 0;
  int visits = 1;
  Eigen::VectorXd x;
  Eigen::VectorXd z;
};

/// Validated, immutable site table: totals y_i, common visit count T and
/// named numeric covariate columns.
class Dataset {
 public:
  Dataset(Family family, int visits, std::vector<std::string> site_ids, std::vector<int> y,
          std::vector<std::string> covariate_names, Eigen::MatrixXd covariates);

  Family family() const { return family_; }
  int visits() const { return visits_; }
  std::size_t size() const { return y_.size(); }
  const std::vector<int>& y() const { return y_; }
  const std::vector<std::string>& site_ids() const { return site_ids_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }

  /// Column by name; throws ValidationError if absent.
  Eigen::VectorXd column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  SiteRecord record(std::size_t i, const Eigen::MatrixXd& detection_design,
                    const Eigen::MatrixXd& occurrence_design) const;

 private:
  Family family_;
  int visits_;
  std::vector<std::string> site_ids_;
  std::vector<int> y_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
};

/// Column mapping for CSV ingestion.
struct Schema {
  std::optional<std::string> y_column;
  std::vector<std::string> visit_columns;
  /// Visit count T when only a presummed y column is given (binomial family).
  std::optional<int> visits;
  std::vector<std::string> covariates;
  std::optional<std::string> site_id_column;
  /// A column of ones already present in the file; it is checked and dropped
  /// so the intercept is not duplicated.
  std::optional<std::string> intercept_column;
};

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema, Family family);
Dataset parse_dataset(const std::string& csv_text, const Schema& schema, Family family);

FrequencyTable aggregate(const Dataset& dataset);

/// Minimal linear formula: `1` or `1 + a + b`. The intercept is always present.
class Formula {
 public:
  Formula() = default;
  static Formula parse(const std::string& text);

  const std::vector<std::string>& terms() const { return terms_; }
  bool intercept_only() const { return terms_.empty(); }
  std::string str() const;
  /// Column labels of the design matrix, intercept first.
  std::vector<std::string> labels() const;

  /// n x (1 + terms) design with a leading column of ones.
  Eigen::MatrixXd design(const Dataset& dataset) const;

 private:
  std::vector<std::string> terms_;
};

}  // namespace occuhet
