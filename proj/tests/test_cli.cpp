#include "subrq/runner.hpp"
#include "subrq/scenario.hpp"

#include <gtest/gtest.h>

#include <string>

using subrq::DomainError;
using subrq::runner::RunReport;
using subrq::runner::run_scan;
using subrq::runner::run_scenario;
using subrq::scenario::Scenario;
using subrq::scenario::load_scenario;
using subrq::scenario::parse_scenario;

namespace {

std::string bundled(const std::string& name) {
  return std::string(SUBRQ_SCENARIO_DIR) + "/" + name;
}

const char* kMini = R"(
# minimal frame-only scenario
scenario mini
dim 3
seed 11

frame {
  field 1, 0, -q2/2
  field 0, 1, q1/2
  eta q2/2, -q1/2, 1
}

hamiltonian {
  potential 0
}

task regularity {
  q0 0, 0, 0
  control 1, 0.3
  span 1.0
  expect regular
}
)";

}  // namespace

TEST(Scenario, ParsesBundledHeisenberg) {
  Scenario sc = load_scenario(bundled("heisenberg.scn"));
  EXPECT_EQ(sc.name, "heisenberg");
  EXPECT_EQ(sc.dim, 3);
  EXPECT_EQ(sc.seed, 2026u);
  ASSERT_TRUE(sc.frame.has_value());
  ASSERT_TRUE(sc.ham.has_value());
  ASSERT_EQ(sc.tasks.size(), 7u);
  const char* kinds[] = {"flow",     "regularity", "normal-form", "poincare",
                         "lifts",    "mane-check", "formula-verify"};
  for (int i = 0; i < 7; ++i) EXPECT_EQ(sc.tasks[i].value, kinds[i]);
  // identity metric defaulted from the explicit rows
  ASSERT_EQ(sc.metric.size(), 2u);
  subrq::VectorXd q(3);
  q << 0.3, -0.1, 0.2;
  EXPECT_EQ(sc.metric[0][0].eval(q), 1.0);
  EXPECT_EQ(sc.metric[0][1].eval(q), 0.0);
}

TEST(Scenario, ParserRejectsMalformedInput) {
  EXPECT_THROW(parse_scenario("frame {\n field 1\n"), DomainError);
  EXPECT_THROW(parse_scenario("}\n"), DomainError);
  EXPECT_THROW(parse_scenario("task juggle {\n}\n"), DomainError);
  EXPECT_THROW(parse_scenario("dim 3\nframe {\n  field 1, 0, 0\n  field 0, "
                              "1, 0\n}\n"),
               DomainError);  // missing eta
  EXPECT_THROW(parse_scenario("dim 2.5\n"), DomainError);
  // expression referencing a variable beyond dim
  EXPECT_THROW(
      parse_scenario("dim 2\nframe {\n  field 1, q5\n  eta 0, 1\n}\n"),
      DomainError);
  EXPECT_THROW(load_scenario("/nonexistent/file.scn"), DomainError);
}

TEST(Scenario, DefaultsAndStandaloneTasks) {
  Scenario sc = parse_scenario("task formula-verify {\n  dim 3\n}\n");
  EXPECT_EQ(sc.name, "unnamed");
  EXPECT_EQ(sc.seed, 2026u);
  EXPECT_FALSE(sc.frame.has_value());
  ASSERT_EQ(sc.tasks.size(), 1u);
  RunReport rep = run_scenario(sc);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.tasks[0].verdict, "exact");
}

TEST(Runner, BundledHeisenbergAllTasksPass) {
  Scenario sc = load_scenario(bundled("heisenberg.scn"));
  RunReport rep = run_scenario(sc);
  ASSERT_EQ(rep.tasks.size(), 7u);
  for (const auto& t : rep.tasks) EXPECT_TRUE(t.pass) << t.kind << ": " << t.note;
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.tasks[1].verdict, "regular");
  EXPECT_EQ(rep.tasks[2].verdict, "certified");
  EXPECT_EQ(rep.tasks[3].verdict, "degenerate");
  EXPECT_EQ(rep.tasks[4].verdict, "lift_consistent");
}

TEST(Runner, BundledMartinetExpectedVerdicts) {
  Scenario sc = load_scenario(bundled("martinet.scn"));
  RunReport rep = run_scenario(sc);
  ASSERT_EQ(rep.tasks.size(), 4u);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.tasks[0].verdict, "singular_curve");
  EXPECT_EQ(rep.tasks[1].verdict, "regular");
  EXPECT_TRUE(rep.tasks[3].metrics["abnormal_found"].get<bool>());
}

TEST(Runner, ReportJsonDeterministic) {
  Scenario sc = load_scenario(bundled("martinet.scn"));
  const std::string a = run_scenario(sc).to_json().dump(2);
  const std::string b = run_scenario(load_scenario(bundled("martinet.scn")))
                            .to_json()
                            .dump(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"schema\": \"subrq-report/v1\""), std::string::npos);
  const std::string table = run_scenario(sc).to_table();
  EXPECT_NE(table.find("overall: PASS"), std::string::npos);
}

TEST(Runner, ExpectedVerdictMismatchFails) {
  std::string text(kMini);
  text.replace(text.find("expect regular"), 14, "expect singular");
  RunReport rep = run_scenario(parse_scenario(text));
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.tasks[0].pass);
  EXPECT_EQ(rep.tasks[0].verdict, "regular");  // verdict reported faithfully
}

TEST(Runner, TaskErrorsAreRecordedNotThrown) {
  std::string text(kMini);
  text += R"(
task flow {
  q0 0, 0, 0
  p0 1, 0, 0.4
  span 1.0
  drift-tol 1e-18
}
)";
  RunReport rep = run_scenario(parse_scenario(text));
  ASSERT_EQ(rep.tasks.size(), 2u);
  EXPECT_TRUE(rep.tasks[0].pass);
  EXPECT_FALSE(rep.tasks[1].pass);
  EXPECT_EQ(rep.tasks[1].verdict, "error");
  EXPECT_FALSE(rep.tasks[1].note.empty());
  EXPECT_FALSE(rep.pass);
}

TEST(Runner, ScanDeterministicAcrossThreads) {
  auto a = run_scan(2, 3, 30, 1, 5, 0.0, 1);
  auto b = run_scan(2, 3, 30, 1, 5, 0.0, 3);
  EXPECT_EQ(a.spanning, b.spanning);
  EXPECT_EQ(a.failing_seeds, b.failing_seeds);
  EXPECT_EQ(a.smin, b.smin);
  EXPECT_EQ(subrq::runner::scan_to_json(a).dump(),
            subrq::runner::scan_to_json(b).dump());

  auto empty = run_scan(2, 3, 0, 1);
  EXPECT_EQ(empty.samples, 0);
  EXPECT_EQ(empty.pass_rate(), 1.0);
  EXPECT_TRUE(empty.failing_seeds.empty());
  EXPECT_THROW(run_scan(1, 3, 5, 1), DomainError);
}

TEST(Runner, FormulaBatteryPassesForAllTabulatedDims) {
  for (int d = 2; d <= 6; ++d) {
    for (const auto& row : subrq::runner::formula_battery(d)) {
      EXPECT_TRUE(row.pass()) << "d=" << d << " " << row.name
                              << " err=" << row.err;
    }
  }
}
