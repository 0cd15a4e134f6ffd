/**
 * @file stats_test.cpp
 * @brief ANOVA, Tukey HSD and the studentized range against closed forms and tables.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "muspike/error.h"
#include "muspike/stats.h"

namespace muspike {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

// Inverse of ptukey by bisection.
double qtukey(double p, int k, double df) {
  double lo = 0.0, hi = 20.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ptukey(mid, k, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(Describe, PopulationStd) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto d = describe(v);
  EXPECT_DOUBLE_EQ(d.mean, 2.5);
  EXPECT_DOUBLE_EQ(d.std, std::sqrt(1.25));
  EXPECT_EQ(d.n, 4);
}

TEST(Anova, HandComputed) {
  const std::vector<std::vector<double>> g{{1, 2, 3}, {2, 3, 4}};
  const auto a = anova_oneway(g);
  EXPECT_DOUBLE_EQ(a.f, 1.5);
  EXPECT_EQ(a.df_between, 1);
  EXPECT_EQ(a.df_within, 4);
  // With two groups F = t^2: p = P(|T_4| > sqrt(1.5)).
  boost::math::students_t t(4);
  EXPECT_NEAR(a.p, 2 * boost::math::cdf(boost::math::complement(t, std::sqrt(1.5))), 1e-12);
}

TEST(Anova, PValueMatchesIntegratedDensity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int it = 0; it < 20; ++it) {
    std::vector<std::vector<double>> g(3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 6 + it % 4; ++j) g[i].push_back(u(rng) + i * 0.3);
    }
    const auto a = anova_oneway(g);
    boost::math::fisher_f dist(a.df_between, a.df_within);
    auto pdf = [&](double x) { return boost::math::pdf(dist, x); };
    const double below = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(pdf, 0.0, a.f, 15, 1e-13);
    EXPECT_NEAR(a.p, 1.0 - below, 1e-6);
  }
}

TEST(Anova, Errors) {
  const std::vector<std::vector<double>> same{{2, 2}, {2, 2, 2}};
  EXPECT_EQ(code_of([&] { anova_oneway(same); }), ErrorCode::DegenerateGroups);
  const std::vector<std::vector<double>> tiny{{1}, {2, 3}};
  EXPECT_EQ(code_of([&] { anova_oneway(tiny); }), ErrorCode::InsufficientData);
  const std::vector<std::vector<double>> one{{1, 2}};
  EXPECT_EQ(code_of([&] { anova_oneway(one); }), ErrorCode::InsufficientData);
}

TEST(Anova, ZeroWithinVariance) {
  const std::vector<std::vector<double>> g{{1, 1}, {3, 3}};
  const auto a = anova_oneway(g);
  EXPECT_TRUE(std::isinf(a.f));
  EXPECT_EQ(a.p, 0.0);
}

TEST(Ptukey, TwoGroupsReduceToStudentT) {
  for (double df : {1.0, 2.0, 5.0, 12.0, 40.0, 300.0}) {
    boost::math::students_t t(df);
    for (double q : {0.1, 0.7, 1.7321, 3.0, 5.5, 9.0}) {
      const double expect = 2 * boost::math::cdf(t, q / std::sqrt(2.0)) - 1;
      EXPECT_NEAR(ptukey(q, 2, df), expect, 1e-7) << "df=" << df << " q=" << q;
    }
  }
}

TEST(Ptukey, NormalRangeTwoGroups) {
  // Range of two standard normals is sqrt(2)|Z|.
  for (double w : {0.2, 1.0, 2.5, 4.0}) EXPECT_NEAR(prange_normal(w, 2), std::erf(w / 2.0), 1e-12);
}

TEST(Ptukey, MatchesPublishedCriticalValues) {
  struct Row {
    int k;
    double df, q95;
  };
  // Upper 5% points of the studentized range, three decimals.
  const Row rows[] = {{2, 5, 3.635}, {3, 10, 3.877}, {4, 20, 3.958}, {5, 20, 4.232},
                      {6, 60, 4.163}, {10, 30, 4.824}, {3, 120, 3.356}};
  for (const auto& r : rows) EXPECT_NEAR(qtukey(0.95, r.k, r.df), r.q95, 1.5e-3) << r.k << "," << r.df;
}

TEST(Ptukey, Monotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uq(0.0, 8.0);
  std::uniform_int_distribution<int> uk(2, 8);
  std::uniform_real_distribution<double> udf(2.0, 200.0);
  for (int i = 0; i < 100; ++i) {
    double a = uq(rng), b = uq(rng);
    if (a > b) std::swap(a, b);
    const int k = uk(rng);
    const double df = udf(rng);
    EXPECT_LE(ptukey(a, k, df), ptukey(b, k, df));
  }
  EXPECT_EQ(ptukey(0.0, 3, 10), 0.0);
  EXPECT_EQ(ptukey(INFINITY, 3, 10), 1.0);
}

TEST(Tukey, HandComputed) {
  const std::vector<std::vector<double>> g{{1, 2, 3}, {2, 3, 4}};
  const std::vector<std::string> labels{"A", "B"};
  const auto t = tukey_hsd(g, labels);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].mean_diff, 1.0);
  EXPECT_NEAR(t[0].q, 1.7320508075688772, 1e-12);
  EXPECT_NEAR(t[0].p, anova_oneway(g).p, 1e-7);
  EXPECT_FALSE(t[0].significant);
}

TEST(Tukey, QSquaredIsTwiceF) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int it = 0; it < 50; ++it) {
    std::vector<std::vector<double>> g(2);
    for (int j = 0; j < 3 + it % 5; ++j) g[0].push_back(n(rng));
    for (int j = 0; j < 4 + it % 3; ++j) g[1].push_back(n(rng) + 0.5);
    const std::vector<std::string> labels{"a", "b"};
    const auto t = tukey_hsd(g, labels);
    const double f = anova_oneway(g).f;
    EXPECT_NEAR(t[0].q * t[0].q, 2 * f, 1e-9 * std::max(1.0, 2 * f));
  }
}

TEST(Tukey, PairOrderAndSignificance) {
  std::vector<std::vector<double>> g{{5, 5, 4, 5, 4, 5}, {1, 2, 1, 1, 2, 1}, {1, 1, 2, 1, 2, 2}};
  const std::vector<std::string> labels{"Reference", "S-RNN", "S-CNN"};
  const auto t = tukey_hsd(g, labels);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].a, "Reference");
  EXPECT_EQ(t[0].b, "S-RNN");
  EXPECT_LT(t[0].mean_diff, 0);
  EXPECT_TRUE(t[0].significant);
  EXPECT_EQ(t[2].a, "S-RNN");
  EXPECT_FALSE(t[2].significant);
}

TEST(Turing, UncertainIsIncorrect) {
  const std::vector<TuringResponse> r{{"N", "Human", TuringAnswer::Human},
                                      {"N", "S-RNN", TuringAnswer::AI},
                                      {"A", "S-RNN", TuringAnswer::Uncertain},
                                      {"A", "Human", TuringAnswer::AI}};
  const auto s = turing_accuracy(r);
  EXPECT_EQ(s.overall.correct, 2);
  EXPECT_EQ(s.overall.total, 4);
  EXPECT_DOUBLE_EQ(s.by_group.at("N").value(), 1.0);
  EXPECT_DOUBLE_EQ(s.by_group.at("A").value(), 0.0);
  EXPECT_EQ(s.by_source.at("S-RNN").total, 2);
  EXPECT_EQ(code_of([] { turing_accuracy({}); }), ErrorCode::EmptyResponses);
}

std::vector<ResponseRow> sample_rows() {
  std::vector<ResponseRow> rows;
  std::mt19937_64 rng(9);
  const char* sources[] = {"Human", "S-Transformer", "S-RNN"};
  int pid = 0;
  for (const char* g : {"N", "E"}) {
    for (int p = 0; p < 4; ++p, ++pid) {
      for (int s = 0; s < 3; ++s) {
        for (int rep = 0; rep < 2; ++rep) {
          const std::string piece = "p" + std::to_string(s) + std::to_string(rep);
          for (int q = 1; q <= 13; ++q) {
            const int v = std::clamp(static_cast<int>(4 - s + rng() % 3) - 1, 1, 5);
            rows.push_back({"u" + std::to_string(pid), g, piece, "POP909", sources[s], "Q" + std::to_string(q), v,
                            s == 0 ? "H" : "AI", "2026-01-01T00:00:00Z"});
          }
          rows.push_back({"u" + std::to_string(pid), g, piece, "POP909", sources[s], "Q14", std::nullopt,
                          rep ? "U" : (s == 0 ? "H" : "AI"), "2026-01-01T00:00:00Z"});
        }
      }
    }
  }
  return rows;
}

TEST(Responses, CsvRoundTrip) {
  auto rows = sample_rows();
  rows[0].piece_id = "has,comma \"quoted\"";
  const auto back = read_responses_csv(write_responses_csv(rows));
  EXPECT_EQ(back, rows);
  EXPECT_EQ(code_of([] { read_responses_csv("a,b\n"); }), ErrorCode::InvalidArgument);
}

TEST(Analyze, LayoutAndReferenceLabel) {
  const auto rows = sample_rows();
  const auto a = analyze(rows);
  // 2 groups x 13 questions x 3 pairs.
  EXPECT_EQ(a.tukey.size(), 2u * 13 * 3);
  EXPECT_EQ(a.anova.size(), 2u * 13);
  EXPECT_EQ(a.tukey[0].group, "N");
  EXPECT_EQ(a.tukey[0].question, "Q1");
  EXPECT_EQ(a.tukey[0].r.a, "Reference");
  EXPECT_EQ(a.tukey[0].r.b, "S-Transformer");
  EXPECT_EQ(a.turing.overall.total, 2 * 4 * 3 * 2);
  EXPECT_EQ(a.turing.overall.correct, 2 * 4 * 3);
  const auto csv = write_tukey_csv(a.tukey);
  EXPECT_NE(csv.find("Reference-S-Transformer"), std::string::npos);
}

TEST(Analyze, PerParticipantAveragesFirst) {
  const auto rows = sample_rows();
  const auto pooled = analyze(rows);
  const auto per = analyze(rows, {.per_participant = true});
  EXPECT_EQ(pooled.descriptives[0].d.n, 8);
  EXPECT_EQ(per.descriptives[0].d.n, 4);
  EXPECT_NEAR(pooled.descriptives[0].d.mean, per.descriptives[0].d.mean, 1e-12);
  EXPECT_EQ(code_of([] { analyze({}); }), ErrorCode::EmptyResponses);
}

TEST(Analyze, SyntheticGap) {
  // Reference mean 3.81, S-Transformer mean 2.6787, n = 10000 each.
  std::vector<ResponseRow> rows;
  auto add = [&](const char* src, int value, int count) {
    for (int i = 0; i < count; ++i) {
      rows.push_back({"u" + std::to_string(rows.size()), "N", "x", "POP909", src, "Q1", value, "", ""});
    }
  };
  add("Human", 4, 8100);
  add("Human", 3, 1900);
  add("S-Transformer", 3, 6787);
  add("S-Transformer", 2, 3213);
  const auto a = analyze(rows);
  ASSERT_EQ(a.tukey.size(), 1u);
  EXPECT_NEAR(a.tukey[0].r.mean_diff, -1.1313, 1e-9);
  EXPECT_LT(a.tukey[0].r.p, 0.001);
  EXPECT_TRUE(a.tukey[0].r.significant);
}

}  // namespace
}  // namespace muspike
