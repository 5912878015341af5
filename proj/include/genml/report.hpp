#pragma once

// Report rendering: text tables in the familiar three-line layout (point,
// (lower,upper), [p]), CSV tables, and the JSON mirror of a run.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "genml/csv.hpp"
#include "genml/dataset.hpp"
#include "genml/inference.hpp"

namespace genml::report {

using json = nlohmann::ordered_json;

inline constexpr const char* kDegenerate = "degenerate";

inline std::string fixed(double v, int decimals = 3) {
  if (!std::isfinite(v)) return kDegenerate;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.000" reads as a sign error
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline std::string point_cell(const AggregatedEstimate& e, int d = 3) { return e.degenerate ? kDegenerate : fixed(e.point, d); }
inline std::string lower_cell(const AggregatedEstimate& e, int d = 3) { return e.degenerate ? kDegenerate : fixed(e.lower, d); }
inline std::string upper_cell(const AggregatedEstimate& e, int d = 3) { return e.degenerate ? kDegenerate : fixed(e.upper, d); }
inline std::string p_cell(const AggregatedEstimate& e) { return fixed(e.p_adjusted, 3); }
inline std::string interval_cell(const AggregatedEstimate& e, int d = 3) {
  if (e.degenerate) return kDegenerate;
  return "(" + fixed(e.lower, d) + "," + fixed(e.upper, d) + ")";
}
inline std::string bracket_p_cell(const AggregatedEstimate& e) { return "[" + p_cell(e) + "]"; }

// Left-aligned first column, remaining columns right-aligned, two-space gaps.
inline std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (width.size() <= j) width.push_back(0);
      width[j] = std::max(width[j], r[j].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t j = 0; j < r.size(); ++j) {
      const std::string pad(width[j] - r[j].size(), ' ');
      if (j == 0) {
        line += r[j] + pad;
      } else {
        line += "  " + pad + r[j];
      }
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

// Rows shaped like the estimate tables: the point row carries the label, the
// interval and p-value rows below it are unlabeled.
inline void push_estimate_rows(std::vector<std::vector<std::string>>& grid, const std::string& label,
                               const std::vector<AggregatedEstimate>& cols, bool with_p = true) {
  std::vector<std::string> a{label}, b{""}, c{""};
  for (const auto& e : cols) {
    a.push_back(point_cell(e));
    b.push_back(interval_cell(e));
    c.push_back(bracket_p_cell(e));
  }
  grid.push_back(a);
  grid.push_back(b);
  if (with_p) grid.push_back(c);
}

struct BlpRow {
  std::string label;
  AggregatedEstimate ate;
  AggregatedEstimate het;
};

struct GatesRow {
  std::string label;
  AggregatedEstimate most;   // gamma_K
  AggregatedEstimate least;  // gamma_1
  AggregatedEstimate difference;
};

struct ClanRowView {
  std::string covariate;
  AggregatedEstimate most;
  AggregatedEstimate least;
  AggregatedEstimate difference;
};

struct LearnerRow {
  std::string label;
  double lambda = 0.0;
  double lambda_bar = 0.0;
  bool best_blp = false;
  bool best_gates = false;
};

struct R2Row {
  std::string label;
  std::optional<double> value;
};

inline std::string render_blp(const std::vector<BlpRow>& rows) {
  std::vector<std::vector<std::string>> g{{"", "ATE (b1)", "HET (b2)"}};
  for (const auto& r : rows) push_estimate_rows(g, r.label, {r.ate, r.het});
  return render_grid(g);
}

inline std::string render_gates(const std::vector<GatesRow>& rows, int groups = 4) {
  const std::string k = std::to_string(groups);
  std::vector<std::vector<std::string>> g{
      {"", "25 % most (g" + k + ")", "25 % least (g1)", "Difference (g" + k + " - g1)"}};
  for (const auto& r : rows) push_estimate_rows(g, r.label, {r.most, r.least, r.difference});
  return render_grid(g);
}

inline std::string render_clan(const std::vector<ClanRowView>& rows, int groups = 4) {
  const std::string k = std::to_string(groups);
  std::vector<std::vector<std::string>> g{
      {"", "25 % most (d" + k + ")", "25 % least (d1)", "Difference (d" + k + " - d1)"}};
  for (const auto& r : rows) push_estimate_rows(g, r.covariate, {r.most, r.least, r.difference}, false);
  return render_grid(g);
}

inline std::string starred(double v, bool star) { return fixed(v) + (star ? "*" : ""); }

inline std::string render_learners(const std::vector<LearnerRow>& rows) {
  std::vector<std::vector<std::string>> g{{"", "Best BLP", "Best GATES"}, {"", "Lambda", "Lambda-bar"}};
  for (const auto& r : rows) g.push_back({r.label, starred(r.lambda, r.best_blp), starred(r.lambda_bar, r.best_gates)});
  return render_grid(g);
}

inline std::string r2_cell(const std::optional<double>& v) { return v ? fixed(*v, 2) : kDegenerate; }

inline std::string render_r2(const std::vector<std::string>& column_labels, const std::vector<std::vector<R2Row>>& columns) {
  std::vector<std::vector<std::string>> g{{""}};
  for (const auto& c : column_labels) g[0].push_back(c);
  if (!columns.empty())
    for (std::size_t r = 0; r < columns.front().size(); ++r) {
      std::vector<std::string> line{columns.front()[r].label};
      for (const auto& col : columns) line.push_back(r2_cell(col[r].value));
      g.push_back(line);
    }
  return render_grid(g);
}

inline std::string render_balance(const std::vector<BalanceRow>& rows) {
  std::vector<std::vector<std::string>> g{{"", "", "Control group", "", "", "Treatment - Control", ""},
                                          {"", "Total obs.", "Obs.", "Mean", "SD", "Coefficient", "p-value"}};
  for (const auto& r : rows)
    g.push_back({r.covariate, std::to_string(r.total_obs), std::to_string(r.control_obs), fixed(r.control_mean),
                 fixed(r.control_sd), fixed(r.difference.estimate), fixed(r.difference.p_value)});
  return render_grid(g);
}

// Marks the winner of each criterion; an exact tie marks nobody.
inline std::vector<LearnerRow> learner_rows(const AnalysisResult& res) {
  std::vector<LearnerRow> rows;
  for (const auto& la : res.learners) rows.push_back({la.display_name, la.lambda, la.lambda_bar, false, false});
  for (const auto& v : res.verdicts) {
    if (!v.winner) continue;
    for (std::size_t l = 0; l < res.learners.size(); ++l)
      if (res.learners[l].tag == *v.winner) (v.criterion == "BLP" ? rows[l].best_blp : rows[l].best_gates) = true;
  }
  return rows;
}

inline std::vector<BlpRow> blp_rows(const AnalysisResult& res) {
  std::vector<BlpRow> rows;
  for (const auto& la : res.learners) rows.push_back({la.display_name, la.ate, la.het});
  return rows;
}

inline std::vector<GatesRow> gates_rows(const AnalysisResult& res) {
  std::vector<GatesRow> rows;
  for (const auto& la : res.learners) rows.push_back({la.display_name, la.gamma.back(), la.gamma.front(), la.gamma_difference});
  return rows;
}

inline std::vector<ClanRowView> clan_rows(const LearnerAnalysis& la, int count) {
  std::vector<ClanRowView> rows;
  for (const auto& c : la.clan_selected(count)) rows.push_back({c.covariate, c.most, c.least, c.difference});
  return rows;
}

inline std::vector<R2Row> r2_rows(const LearnerAnalysis& la) {
  return {{"Aggregate level covariates", la.r2_aggregate},
          {"Household level covariates", la.r2_household},
          {"All covariates", la.r2_all}};
}

// CSV layouts ----------------------------------------------------------------

inline void append_estimate(std::vector<std::string>& row, const AggregatedEstimate& e) {
  row.push_back(point_cell(e));
  row.push_back(lower_cell(e));
  row.push_back(upper_cell(e));
  row.push_back(p_cell(e));
}

inline void append_estimate_header(std::vector<std::string>& h, const std::string& prefix) {
  for (const char* s : {"", "_lower", "_upper", "_p"}) h.push_back(prefix + s);
}

inline csv::Table blp_csv(const std::vector<BlpRow>& rows) {
  csv::Table t;
  t.header = {"learner"};
  append_estimate_header(t.header, "ate");
  append_estimate_header(t.header, "het");
  for (const auto& r : rows) {
    std::vector<std::string> line{r.label};
    append_estimate(line, r.ate);
    append_estimate(line, r.het);
    t.rows.push_back(line);
  }
  return t;
}

inline csv::Table gates_csv(const std::vector<GatesRow>& rows) {
  csv::Table t;
  t.header = {"learner"};
  append_estimate_header(t.header, "most");
  append_estimate_header(t.header, "least");
  append_estimate_header(t.header, "difference");
  for (const auto& r : rows) {
    std::vector<std::string> line{r.label};
    append_estimate(line, r.most);
    append_estimate(line, r.least);
    append_estimate(line, r.difference);
    t.rows.push_back(line);
  }
  return t;
}

inline csv::Table clan_csv(const std::vector<std::pair<std::string, std::vector<ClanRowView>>>& by_learner) {
  csv::Table t;
  t.header = {"learner", "covariate"};
  append_estimate_header(t.header, "most");
  append_estimate_header(t.header, "least");
  append_estimate_header(t.header, "difference");
  for (const auto& [learner, rows] : by_learner)
    for (const auto& r : rows) {
      std::vector<std::string> line{learner, r.covariate};
      append_estimate(line, r.most);
      append_estimate(line, r.least);
      append_estimate(line, r.difference);
      t.rows.push_back(line);
    }
  return t;
}

inline csv::Table learner_csv(const std::vector<LearnerRow>& rows) {
  csv::Table t;
  t.header = {"learner", "lambda", "lambda_bar"};
  for (const auto& r : rows) t.rows.push_back({r.label, starred(r.lambda, r.best_blp), starred(r.lambda_bar, r.best_gates)});
  return t;
}

inline csv::Table balance_csv(const std::vector<BalanceRow>& rows) {
  csv::Table t;
  t.header = {"covariate", "total_obs", "control_obs", "control_mean", "control_sd", "coefficient", "p_value"};
  for (const auto& r : rows)
    t.rows.push_back({r.covariate, std::to_string(r.total_obs), std::to_string(r.control_obs), fixed(r.control_mean),
                      fixed(r.control_sd), fixed(r.difference.estimate), fixed(r.difference.p_value)});
  return t;
}

inline csv::Table r2_csv(const std::vector<std::string>& column_labels, const std::vector<std::vector<R2Row>>& columns) {
  csv::Table t;
  t.header = {"covariates"};
  for (const auto& c : column_labels) t.header.push_back(c);
  if (!columns.empty())
    for (std::size_t r = 0; r < columns.front().size(); ++r) {
      std::vector<std::string> line{columns.front()[r].label};
      for (const auto& col : columns) line.push_back(r2_cell(col[r].value));
      t.rows.push_back(line);
    }
  return t;
}

// The numbers behind the GATES figure: one row per learner and group, with
// the ATE band repeated on every row.
inline csv::Table gates_plot_csv(const AnalysisResult& res) {
  csv::Table t;
  t.header = {"learner", "group", "point", "lower", "upper", "ate_point", "ate_lower", "ate_upper"};
  for (const auto& la : res.learners)
    for (std::size_t k = 0; k < la.gamma.size(); ++k) {
      const auto& g = la.gamma[k];
      t.rows.push_back({la.tag, "G" + std::to_string(k + 1), point_cell(g), lower_cell(g), upper_cell(g),
                        point_cell(la.ate), lower_cell(la.ate), upper_cell(la.ate)});
    }
  return t;
}

// JSON ----------------------------------------------------------------------

inline json finite_or_token(double v) { return std::isfinite(v) ? json(v) : json(kDegenerate); }

inline json to_json(const AggregatedEstimate& e) {
  json j;
  j["point"] = e.degenerate ? json(kDegenerate) : finite_or_token(e.point);
  j["lower"] = e.degenerate ? json(kDegenerate) : finite_or_token(e.lower);
  j["upper"] = e.degenerate ? json(kDegenerate) : finite_or_token(e.upper);
  j["p_adjusted"] = finite_or_token(e.p_adjusted);
  j["split_level"] = e.split_level;
  j["reported_level"] = e.reported_level;
  j["splits"] = e.splits;
  j["used"] = e.used;
  return j;
}

inline json optional_json(const std::optional<double>& v) { return v ? finite_or_token(*v) : json(kDegenerate); }

inline json learner_json(const LearnerAnalysis& la, std::optional<int> clan_count) {
  json j;
  j["tag"] = la.tag;
  j["name"] = la.display_name;
  j["splits_used"] = la.splits.size();
  j["split_failures"] = json::array();
  for (const auto& f : la.failures) j["split_failures"].push_back({{"split", f.split}, {"message", f.message}});
  j["blp"] = {{"ate", to_json(la.ate)}, {"het", to_json(la.het)}};
  json gates = json::array();
  for (std::size_t k = 0; k < la.gamma.size(); ++k) {
    json g = to_json(la.gamma[k]);
    g["group"] = k + 1;
    gates.push_back(g);
  }
  j["gates"] = {{"groups", gates}, {"difference", to_json(la.gamma_difference)}};
  j["lambda"] = finite_or_token(la.lambda);
  j["lambda_bar"] = finite_or_token(la.lambda_bar);
  if (clan_count) {
    json rows = json::array();
    for (const auto& c : la.clan_selected(*clan_count))
      rows.push_back({{"covariate", c.covariate},
                      {"median_abs_correlation", finite_or_token(c.median_abs_correlation)},
                      {"most", to_json(c.most)},
                      {"least", to_json(c.least)},
                      {"difference", to_json(c.difference)}});
    j["clan"] = rows;
  }
  j["hh_vs_agg"] = {{"aggregate", optional_json(la.r2_aggregate)},
                    {"household", optional_json(la.r2_household)},
                    {"all", optional_json(la.r2_all)}};
  return j;
}

inline json verdicts_json(const AnalysisResult& res) {
  json out = json::array();
  for (const auto& v : res.verdicts) {
    json j;
    j["criterion"] = v.criterion;
    j["winner"] = v.winner ? json(*v.winner) : json(nullptr);
    j["tie"] = v.tie;
    for (const auto& [tag, value] : v.values) j["values"][tag] = finite_or_token(value);
    out.push_back(j);
  }
  return out;
}

inline json balance_json(const std::vector<BalanceRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"covariate", r.covariate},
                   {"total_obs", r.total_obs},
                   {"control_obs", r.control_obs},
                   {"control_mean", finite_or_token(r.control_mean)},
                   {"control_sd", finite_or_token(r.control_sd)},
                   {"coefficient", finite_or_token(r.difference.estimate)},
                   {"se", finite_or_token(r.difference.se)},
                   {"p_value", finite_or_token(r.difference.p_value)}});
  return out;
}

}  // namespace genml::report
