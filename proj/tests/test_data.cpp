#include "doctest.h"

#include "occuhet/data.hpp"

#include <algorithm>
#include <random>

using namespace occuhet;

namespace {

std::string trout_like_csv() {
  std::string csv = "site,y1,y2,y3,CSA,elev\n";
  const int pattern[4][3] = {{0, 0, 0}, {0, 1, 0}, {1, 0, 1}, {1, 1, 1}};
  const int freq[4] = {45, 11, 17, 4};
  int id = 0;
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < freq[k]; ++j) {
      ++id;
      csv += "s" + std::to_string(id) + "," + std::to_string(pattern[k][0]) + "," +
             std::to_string(pattern[k][1]) + "," + std::to_string(pattern[k][2]) + "," +
             std::to_string(0.5 + 0.01 * id) + "," + std::to_string(2.0 + 0.02 * id) + "\n";
    }
  return csv;
}

}  // namespace

TEST_CASE("per-visit columns are summed") {
  Schema schema;
  schema.visit_columns = {"y1", "y2", "y3"};
  schema.covariates = {"CSA", "elev"};
  schema.site_id_column = "site";
  const Dataset d = parse_dataset(trout_like_csv(), schema, Family::binomial);
  CHECK(d.size() == 77);
  CHECK(d.visits() == 3);
  const FrequencyTable f = aggregate(d);
  CHECK(f.count(0) == 45);
  CHECK(f.count(1) == 11);
  CHECK(f.count(2) == 17);
  CHECK(f.count(3) == 4);
  CHECK(f.n() == 77);
  CHECK(f.m_plus() == 32);
  CHECK(f.total_positive() == doctest::Approx(57.0));
}

TEST_CASE("single y column gives intercept-only designs") {
  Schema schema;
  schema.y_column = "y";
  const Dataset d = parse_dataset("y\n0\n2\n5\n", schema, Family::poisson);
  const Eigen::MatrixXd x = Formula::parse("1").design(d);
  CHECK(x.rows() == 3);
  CHECK(x.cols() == 1);
  CHECK((x.array() == 1.0).all());
  const SiteRecord r = d.record(1, x, x);
  CHECK(r.y == 2);
  CHECK(r.x.size() == 1);
}

TEST_CASE("empty covariate cell is rejected") {
  Schema schema;
  schema.y_column = "y";
  schema.covariates = {"x"};
  CHECK_THROWS_WITH_AS(parse_dataset("y,x\n1,0.5\n0,\n", schema, Family::poisson),
                       doctest::Contains("missing covariate"), ValidationError);
}

TEST_CASE("ingestion errors") {
  Schema schema;
  schema.y_column = "y";
  CHECK_THROWS_AS(parse_dataset("y\n1\nabc\n", schema, Family::poisson), ValidationError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv", schema, Family::poisson), ValidationError);
  schema.visits = 2;
  CHECK_THROWS_AS(parse_dataset("y\n1\n3\n", schema, Family::binomial), ValidationError);
  CHECK_THROWS_AS(parse_dataset("y\n-1\n", schema, Family::poisson), ValidationError);
}

TEST_CASE("existing intercept column is checked and dropped") {
  Schema schema;
  schema.y_column = "y";
  schema.intercept_column = "one";
  schema.covariates = {"x"};
  const Dataset d = parse_dataset("y,one,x\n1,1,0.3\n0,1,0.1\n", schema, Family::poisson);
  CHECK(Formula::parse("1 + x").design(d).cols() == 2);
  CHECK_FALSE(d.has_column("one"));
  CHECK_THROWS_AS(parse_dataset("y,one,x\n1,2,0.3\n", schema, Family::poisson), ValidationError);
}

TEST_CASE("aggregate edge cases") {
  const Dataset zeros(Family::poisson, 1, {"a", "b", "c"}, {0, 0, 0}, {}, Eigen::MatrixXd(3, 0));
  const FrequencyTable f = aggregate(zeros);
  CHECK(f.n() == 3);
  CHECK(f.m_plus() == 0);
  const Dataset one(Family::poisson, 1, {"a"}, {5}, {}, Eigen::MatrixXd(1, 0));
  const FrequencyTable g = aggregate(one);
  CHECK(g.count(5) == 1);
  CHECK(g.n() == 1);
  CHECK(g.m_plus() == 1);
}

TEST_CASE("aggregate is permutation invariant") {
  std::vector<int> y{0, 3, 1, 0, 2, 2, 7, 0, 1};
  std::vector<std::string> ids(y.size(), "s");
  const auto base = aggregate(Dataset(Family::poisson, 1, ids, y, {}, Eigen::MatrixXd(9, 0))).counts();
  std::mt19937 rng(11);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(y.begin(), y.end(), rng);
    CHECK(aggregate(Dataset(Family::poisson, 1, ids, y, {}, Eigen::MatrixXd(9, 0))).counts() == base);
  }
}

TEST_CASE("presummed and per-visit ingestion agree") {
  Schema visits;
  visits.visit_columns = {"y1", "y2", "y3"};
  Schema summed;
  summed.y_column = "y";
  summed.visits = 3;
  const std::string a = "y1,y2,y3\n1,0,1\n0,0,0\n1,1,1\n0,1,0\n";
  const std::string b = "y\n2\n0\n3\n1\n";
  CHECK(aggregate(parse_dataset(a, visits, Family::binomial)).counts() ==
        aggregate(parse_dataset(b, summed, Family::binomial)).counts());
}

TEST_CASE("formula parsing") {
  CHECK(Formula::parse("1").intercept_only());
  const Formula f = Formula::parse("~ 1 + a + b");
  CHECK(f.terms() == std::vector<std::string>{"a", "b"});
  CHECK(f.labels() == std::vector<std::string>{"(Intercept)", "a", "b"});
  CHECK_THROWS_AS(Formula::parse("0 + a"), ValidationError);
  CHECK_THROWS_AS(Formula::parse("1 + log(a)"), ValidationError);
  CHECK_THROWS_AS(Formula::parse(""), ValidationError);
}
