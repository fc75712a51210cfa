#include "doctest.h"

#include "occuhet/sim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace occuhet;

namespace {

ScenarioConfig small(Scenario s, int replicates = 6) {
  ScenarioConfig c;
  c.scenario = s;
  c.replicates = replicates;
  c.n = 150;
  c.seed = 42;
  if (s == Scenario::c || s == Scenario::zib_c) c.theta = {1.0, 0.0, 1.0};
  if (s == Scenario::a) c.psi = 0.5;
  if (s == Scenario::zib_a) {
    c.visits = 5;
    c.p = 0.3;
    c.kappa = 2.0;
    c.psi = 0.5;
  }
  c.fitters = default_fitters(s);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(R"(
scenario = "c"
n = 120
replicates = 7
seed = 3
[truth]
theta = [1.0, 1.0, 1.0]
gamma = [1.0, 1.0]
[[fitter]]
label = "ML ."
method = "ml"
[[fitter]]
label = "CL*"
method = "cl"
detection = "1 + x1 + x2"
ht = true
)");
  CHECK(c.scenario == Scenario::c);
  CHECK(c.n == 120);
  CHECK(c.replicates == 7);
  CHECK(c.seed == 3);
  CHECK(c.theta == std::vector<double>{1.0, 1.0, 1.0});
  REQUIRE(c.fitters.size() == 2);
  CHECK(c.fitters[1].ht);
  CHECK(c.fitters[1].method == Method::cl);
  CHECK(c.presence_estimand() == "psi_bar");

  CHECK_THROWS_AS(parse_config("scenario = \"b\"\nbogus = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("scenario = \"q\"\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("scenario = \"b\"\nn = -3\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("scenario = \"b\"\nreplicates = 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("not toml at all ==="), ValidationError);
  const auto g = parse_config("scenario = \"a\"\n[grid]\nlo = 0.1\nhi = 10\npoints = 3\n");
  REQUIRE(g.kappa_grid.size() == 3);
  CHECK(g.kappa_grid[1] == doctest::Approx(1.0));
}

TEST_CASE("bundled configs load") {
  for (const auto& entry : std::filesystem::directory_iterator(OCCUHET_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()).validate());
  }
}

TEST_CASE("generation is deterministic per replicate") {
  for (Scenario s : {Scenario::a, Scenario::b, Scenario::c, Scenario::zib_a, Scenario::zib_b, Scenario::zib_c}) {
    const auto c = small(s);
    const auto r1 = generate(c, 3);
    const auto r2 = generate(c, 3);
    CHECK(r1.data.y() == r2.data.y());
    CHECK(r1.data.covariates() == r2.data.covariates());
    CHECK(r1.data.size() == 150);
    const auto r4 = generate(c, 4);
    CHECK(r1.data.y() != r4.data.y());
    if (is_binomial(s))
      for (int v : r1.data.y()) CHECK(v <= c.visits);
    for (std::size_t i = 0; i < r1.data.size(); ++i)
      if (!r1.occupied[i]) CHECK(r1.data.y()[i] == 0);
  }
}

TEST_CASE("fixed design reuses covariates") {
  auto c = small(Scenario::c);
  c.design = "fixed";
  CHECK(generate(c, 1).data.covariates() == generate(c, 2).data.covariates());
  CHECK(generate(c, 1).psi_bar == generate(c, 2).psi_bar);
  c.design = "redraw";
  CHECK(generate(c, 1).data.covariates() != generate(c, 2).data.covariates());
}

TEST_CASE("summary statistics") {
  std::vector<ReplicateRow> rows{
      {0, "F", "psi", 0.5, 0.1, 0.6, true, false},
      {1, "F", "psi", 0.7, 0.1, 0.6, true, false},
      {2, "F", "psi", 0.9, 0.1, 0.6, true, false},
      {3, "F", "psi", 5.0, 0.1, 0.6, false, false},
      {4, "F", "psi", 1.2, 0.1, 0.6, true, true},
  };
  const auto t = summarize(rows);
  const auto* s = t.find("F", "psi");
  REQUIRE(s != nullptr);
  CHECK(s->replicates == 5);
  CHECK(s->used == 3);
  CHECK(s->nonconverged == 1);
  CHECK(s->boundary == 1);
  CHECK(s->ave == doctest::Approx(0.7));
  CHECK(s->sd == doctest::Approx(0.2));
  CHECK(s->ase == doctest::Approx(0.1));
  CHECK(s->rmse == doctest::Approx(std::sqrt((0.01 + 0.01 + 0.09) / 3.0)));
  CHECK(s->cp == doctest::Approx(200.0 / 3.0));
  // on the logit scale the interval around 0.9 widens to 1.96 * 0.1 / 0.09 and covers 0.6
  const auto l = summarize(rows, "logit");
  CHECK(l.find("F", "psi")->cp == doctest::Approx(100.0));
  CHECK(t.find("F", "nope") == nullptr);
}

TEST_CASE("studies do not depend on the thread count") {
  for (Scenario s : {Scenario::b, Scenario::c, Scenario::zib_b}) {
    const auto c = small(s, 8);
    const auto one = run_study(c, 1);
    const auto four = run_study(c, 4);
    REQUIRE(one.rows.size() == four.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); ++i) {
      CHECK(format_number(one.rows[i].estimate) == format_number(four.rows[i].estimate));
      CHECK(format_number(one.rows[i].se) == format_number(four.rows[i].se));
    }
  }
}

TEST_CASE("two replicates still summarize") {
  const auto res = run_study(small(Scenario::a, 2), 1);
  const auto* s = res.summary.find("CL .", "psi");
  REQUIRE(s != nullptr);
  CHECK(s->replicates == 2);
}

TEST_CASE("csv output is byte stable and round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "occuhet_test_sim";
  std::filesystem::create_directories(dir);
  const auto c = small(Scenario::b, 4);
  const auto a = run_study(c, 2);
  const auto b = run_study(c, 3);
  write_rows_csv(dir / "a.csv", a.rows);
  write_rows_csv(dir / "b.csv", b.rows);
  write_summary_csv(dir / "sa.csv", a.summary);
  write_summary_csv(dir / "sb.csv", b.summary);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "sa.csv") == slurp(dir / "sb.csv"));
  const auto back = read_rows_csv(dir / "a.csv");
  REQUIRE(back.size() == a.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].fitter == a.rows[i].fitter);
    CHECK(format_number(back[i].estimate) == format_number(a.rows[i].estimate));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("log grid") {
  const auto g = log_grid(0.01, 1000, 6);
  REQUIRE(g.size() == 6);
  CHECK(g.front() == 0.01);
  CHECK(g.back() == 1000.0);
  CHECK(g[2] == doctest::Approx(1.0));
  CHECK(log_grid(5.0, 5.0, 1) == std::vector<double>{5.0});
  CHECK_THROWS_AS(log_grid(0.0, 1.0, 3), ValidationError);
  CHECK_THROWS_AS(log_grid(2.0, 1.0, 3), ValidationError);
  CHECK_THROWS_AS(log_grid(1.0, 2.0, 1), ValidationError);
}

TEST_CASE("bias curve near the homogeneous limit") {
  auto c = small(Scenario::a, 40);
  c.n = 400;
  const auto curve = bias_curve(c, {1e8, 1.0}, 2);
  REQUIRE(curve.size() == 2);
  CHECK(std::abs(curve[0].asymptotic_bias_pct) < 1e-3);
  CHECK(std::abs(curve[0].empirical_bias_pct) < 5.0);
  CHECK(curve[1].asymptotic_bias_pct == doctest::Approx(-41.04).epsilon(1e-3));
  CHECK(curve[1].empirical_bias_pct < -25.0);
  CHECK_THROWS_AS(bias_curve(small(Scenario::b), {1.0}), ValidationError);
}

TEST_CASE("format_number") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(std::nan("")) == "NA");
  CHECK(format_number(1.0 / 3.0) == "0.33333333333333331");
}
