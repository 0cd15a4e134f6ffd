/**
 * @file stats.h
 * @brief Descriptive statistics, one-way ANOVA, Tukey HSD, Turing-test scoring
 *        and the listening-study response table they consume.
 */
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace muspike {

struct Description {
  double mean = 0.0;
  double std = 0.0;  // population
  int n = 0;
};
Description describe(std::span<const double> values);

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  int df_between = 0;
  int df_within = 0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  double ms_within = 0.0;
};
/// Each group needs at least two values (InsufficientData); all-identical data
/// throws DegenerateGroups.
AnovaResult anova_oneway(std::span<const std::vector<double>> groups);

/// Upper tail of the F distribution.
double f_sf(double f, double df1, double df2);

/// CDF of the studentized range for k groups and df degrees of freedom.
double ptukey(double q, int k, double df);
/// CDF of the range of k independent standard normals.
double prange_normal(double w, int k);

struct TukeyResult {
  std::string a;
  std::string b;
  double mean_diff = 0.0;  // mean(b) - mean(a)
  double q = 0.0;
  double p = 1.0;
  bool significant = false;
};
/// All pairs i < j in input order.
std::vector<TukeyResult> tukey_hsd(std::span<const std::vector<double>> groups, std::span<const std::string> labels,
                                   double alpha = 0.05);

// ---------------------------------------------------------------------------
// Turing test

enum class TuringAnswer { Human, AI, Uncertain };
std::string_view turing_answer_code(TuringAnswer a);  // "H", "AI", "U"
std::optional<TuringAnswer> parse_turing_answer(std::string_view s);

struct TuringResponse {
  std::string listener_group;
  std::string source;  // "Human" or a model name
  TuringAnswer answer = TuringAnswer::Uncertain;
};

struct Accuracy {
  int correct = 0;
  int total = 0;
  double value() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct TuringSummary {
  Accuracy overall;
  std::map<std::string, Accuracy> by_group;
  std::map<std::string, Accuracy> by_source;
};
/// Correct iff Human for human pieces or AI for model pieces; Uncertain is wrong.
TuringSummary turing_accuracy(std::span<const TuringResponse> responses);

// ---------------------------------------------------------------------------
// Study response table

inline constexpr std::string_view kHumanSource = "Human";

struct ResponseRow {
  std::string participant_id;
  std::string group;  // N, A or E
  std::string piece_id;
  std::string dataset;
  std::string source;
  std::string question_id;    // Q1..Q14
  std::optional<int> value;   // Likert 1..5; empty on the Q14 row
  std::string turing_answer;  // H, AI or U
  std::string timestamp;
  friend bool operator==(const ResponseRow&, const ResponseRow&) = default;
};

std::string_view response_csv_header();
std::string write_responses_csv(std::span<const ResponseRow> rows);
std::vector<ResponseRow> read_responses_csv(std::string_view text);

struct AnalysisOptions {
  double alpha = 0.05;
  /// Average each participant's ratings per source before testing instead of
  /// pooling every response.
  bool per_participant = false;
};

struct DescriptiveRow {
  std::string group;
  std::string question;
  std::string source;
  Description d;
};

struct TukeyRow {
  std::string group;
  std::string question;
  TukeyResult r;
};

struct AnovaRow {
  std::string group;
  std::string question;
  std::optional<AnovaResult> r;
  std::string error;
};

struct Analysis {
  std::vector<DescriptiveRow> descriptives;
  std::vector<AnovaRow> anova;
  std::vector<TukeyRow> tukey;
  TuringSummary turing;
};

/// Source label used in analysis tables: human pieces become "Reference".
std::string analysis_label(std::string_view source);
/// Per listener group and question: descriptives, ANOVA and Tukey HSD over
/// sources (Reference first, then models in order of first appearance).
Analysis analyze(std::span<const ResponseRow> rows, const AnalysisOptions& opts = {});

std::string write_descriptives_csv(std::span<const DescriptiveRow> rows);
std::string write_anova_csv(std::span<const AnovaRow> rows);
/// group, question, pair, mean difference, q, p, significance.
std::string write_tukey_csv(std::span<const TukeyRow> rows);
std::string write_turing_csv(const TuringSummary& s);

}  // namespace muspike
