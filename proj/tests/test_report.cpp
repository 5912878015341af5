#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "genml/report.hpp"

using namespace genml;
using namespace genml::report;

namespace {

// Compares against tests/golden/<name>; GENML_UPDATE_GOLDEN=1 rewrites it.
void expect_golden(const std::string& name, const std::string& text) {
  const std::filesystem::path path = std::filesystem::path(GENML_GOLDEN_DIR) / name;
  if (std::getenv("GENML_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << text;
    return;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden file " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(text, ss.str()) << "golden mismatch: " << name;
}

AggregatedEstimate est(double point, double lower, double upper, double p) {
  AggregatedEstimate e;
  e.point = point;
  e.lower = lower;
  e.upper = upper;
  e.p_adjusted = p;
  e.splits = 50;
  e.used = 50;
  return e;
}

bool contains(const std::string& text, const std::string& needle) { return text.find(needle) != std::string::npos; }

std::vector<BlpRow> table2_morocco() {
  return {{"Profits", est(26.959, -25.386, 77.802, 0.607), est(0.260, 0.104, 0.423, 0.002)},
          {"Consumption", est(-14.078, -36.867, 8.542, 0.424), est(0.146, -0.066, 0.356, 0.383)}};
}

std::vector<GatesRow> table6_morocco() {
  return {{"Profits", est(171.739, 31.203, 302.328, 0.030), est(-57.724, -155.692, 49.026, 0.591),
           est(226.847, 49.537, 409.779, 0.028)},
          {"Consumption", est(10.934, -30.591, 56.462, 0.853), est(-61.296, -124.001, 7.433, 0.162),
           est(76.580, -8.028, 158.341, 0.156)}};
}

}  // namespace

TEST(Report, BlpTableLayout) {
  const std::string text = render_blp(table2_morocco());
  for (const char* cell : {"ATE (b1)", "HET (b2)", "26.959", "0.260", "(-25.386,77.802)", "(0.104,0.423)", "[0.607]", "[0.002]"})
    EXPECT_TRUE(contains(text, cell)) << cell;
  expect_golden("table2_blp.txt", text);
  expect_golden("table2_blp.csv", csv::format(blp_csv(table2_morocco())));
}

TEST(Report, GatesTableLayout) {
  const std::string text = render_gates(table6_morocco());
  for (const char* cell : {"25 % most (g4)", "25 % least (g1)", "Difference (g4 - g1)", "171.739", "-57.724", "226.847",
                           "(49.537,409.779)", "[0.028]"})
    EXPECT_TRUE(contains(text, cell)) << cell;
  expect_golden("table6_gates.txt", text);
  expect_golden("table6_gates.csv", csv::format(gates_csv(table6_morocco())));
}

TEST(Report, LearnerComparisonStarsWinners) {
  std::vector<LearnerRow> rows{{"Elastic Net", 105.035, 8680.990, true, true}, {"Random Forest", 65.109, 4793.797, false, false}};
  const std::string text = render_learners(rows);
  EXPECT_TRUE(contains(text, "105.035*"));
  EXPECT_TRUE(contains(text, "8680.990*"));
  EXPECT_FALSE(contains(text, "65.109*"));
  expect_golden("table8_learners.txt", text);
  expect_golden("table8_learners.csv", csv::format(learner_csv(rows)));
}

TEST(Report, HouseholdAggregateTable) {
  std::vector<std::vector<R2Row>> cols{
      {{"Aggregate level covariates", 0.87}, {"Household level covariates", 0.49}, {"All covariates", 0.94}},
      {{"Aggregate level covariates", 0.67}, {"Household level covariates", 0.81}, {"All covariates", 0.91}}};
  const std::string text = render_r2({"Morocco", "Mongolia"}, cols);
  EXPECT_TRUE(contains(text, "0.87"));
  EXPECT_TRUE(contains(text, "0.94"));
  expect_golden("table9_r2.txt", text);
  expect_golden("table9_r2.csv", csv::format(r2_csv({"Morocco", "Mongolia"}, cols)));
}

TEST(Report, ClanTableHasNoPValueRows) {
  std::vector<ClanRowView> rows{{"age", est(41.2, 40.1, 42.3, 0.01), est(37.5, 36.0, 39.0, 0.02), est(3.7, 1.9, 5.5, 0.004)}};
  const std::string text = render_clan(rows);
  EXPECT_TRUE(contains(text, "41.200"));
  EXPECT_TRUE(contains(text, "(1.900,5.500)"));
  EXPECT_FALSE(contains(text, "[0.004]"));
  expect_golden("clan.txt", text);
}

TEST(Report, DegenerateToken) {
  AggregatedEstimate d;
  d.degenerate = true;
  d.p_adjusted = 1.0;
  EXPECT_EQ(point_cell(d), "degenerate");
  EXPECT_EQ(interval_cell(d), "degenerate");
  EXPECT_EQ(p_cell(d), "1.000");
  EXPECT_EQ(fixed(std::nan("")), "degenerate");
  EXPECT_EQ(fixed(std::numeric_limits<double>::infinity()), "degenerate");
  EXPECT_EQ(fixed(-0.0001), "0.000");
  EXPECT_EQ(r2_cell(std::nullopt), "degenerate");
  auto j = to_json(d);
  EXPECT_EQ(j["point"], "degenerate");
}

TEST(Report, CsvCellsAreNeverEmpty) {
  AggregatedEstimate d;
  d.degenerate = true;
  std::vector<BlpRow> rows{{"Elastic Net", est(1, 0, 2, 0.5), d}};
  for (const auto& table : {blp_csv(rows), gates_csv({{"x", d, est(1, 0, 2, 0.1), d}}),
                            r2_csv({"a"}, {{{"Aggregate level covariates", std::nullopt}}})})
    for (const auto& row : table.rows) {
      ASSERT_EQ(row.size(), table.header.size());
      for (const auto& cell : row) {
        EXPECT_FALSE(cell.empty());
        if (cell != "degenerate" && !std::isalpha(static_cast<unsigned char>(cell[0]))) {
          std::size_t used = 0;
          const double v = std::stod(cell, &used);
          EXPECT_TRUE(std::isfinite(v));
          EXPECT_EQ(used, cell.size());
        }
      }
    }
}

TEST(Report, GridTrimsTrailingSpace) {
  const std::string text = render_grid({{"a", "bb"}, {"ccc", ""}});
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) EXPECT_TRUE(line.empty() || line.back() != ' ');
}
