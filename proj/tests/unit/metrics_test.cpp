/**
 * @file metrics_test.cpp
 * @brief Objective metrics against analytic anchors and brute-force references.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "metric_oracle.h"
#include "muspike/error.h"
#include "muspike/metrics.h"
#include "test_util.h"

namespace muspike {
namespace {

// 120 BPM 4/4; positions and lengths in 16th cells.
Score cells(std::initializer_list<std::tuple<int, int, int>> notes) {
  Score s;
  for (auto [pitch, on, len] : notes) s.notes.push_back({pitch, on * 0.125, len * 0.125, 80});
  s.normalize();
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

TEST(PitchMetrics, Counts) {
  Score same;
  for (int i = 0; i < 10; ++i) same.notes.push_back({64, i * 0.5, 0.5, 80});
  EXPECT_EQ(pitch_count(same), 1);
  EXPECT_EQ(pitch_range(same), 0);
  EXPECT_EQ(pitch_entropy(same), 0.0);
  Score chromatic;
  for (int p = 60; p < 72; ++p) chromatic.notes.push_back({p, (p - 60) * 0.5, 0.5, 80});
  EXPECT_EQ(pitch_count(chromatic), 12);
  EXPECT_NEAR(pitch_entropy(chromatic), std::log2(12.0), 1e-12);
  EXPECT_NEAR(pitch_class_entropy(chromatic), 3.5850, 5e-5);
  EXPECT_NEAR(pitch_in_scale_rate(chromatic), 7.0 / 12.0, 1e-12);
  EXPECT_EQ(pitch_range(cells({{60, 0, 4}, {72, 4, 4}})), 12);
  EXPECT_EQ(code_of([] { pitch_count(Score{}); }), ErrorCode::EmptyScore);
}

TEST(PitchMetrics, EntropyOfFourPitches) {
  EXPECT_DOUBLE_EQ(pitch_entropy(cells({{60, 0, 1}, {62, 1, 1}, {64, 2, 1}, {65, 3, 1}})), 2.0);
  EXPECT_EQ(pitch_class_entropy(cells({{60, 0, 1}, {72, 1, 1}, {84, 2, 1}})), 0.0);
}

TEST(PitchMetrics, ScaleRate) {
  const Score cmaj = cells({{60, 0, 2}, {62, 2, 2}, {64, 4, 2}, {65, 6, 2}, {67, 8, 2}, {69, 10, 2}, {71, 12, 2}});
  const int scale[] = {0, 2, 4, 5, 7, 9, 11};
  EXPECT_EQ(pitch_in_scale_rate(cmaj, std::span<const int>(scale)), 1.0);
  EXPECT_EQ(pitch_in_scale_rate(cmaj), 1.0);
  EXPECT_EQ(infer_major_tonic(cmaj), 0);
}

TEST(PitchMetrics, IntervalOfWholeToneScale) {
  const auto q = quantize(cells({{60, 0, 2}, {62, 2, 2}, {64, 4, 2}, {66, 6, 2}, {68, 8, 2}, {70, 10, 2}}));
  EXPECT_DOUBLE_EQ(avg_pitch_interval(q), 2.0);
  EXPECT_EQ(code_of([] { avg_pitch_interval(quantize(cells({{60, 0, 4}}))); }), ErrorCode::InsufficientNotes);
}

TEST(PitchMetrics, Polyphony) {
  const auto two = polyphony(quantize(cells({{60, 0, 16}, {64, 0, 16}})));
  EXPECT_EQ(two.average, 2.0);
  EXPECT_EQ(two.rate, 1.0);
  const auto mono = polyphony(quantize(cells({{60, 0, 4}, {62, 4, 4}, {64, 8, 4}})));
  EXPECT_EQ(mono.average, 1.0);
  EXPECT_EQ(mono.rate, 0.0);
}

TEST(RhythmMetrics, Ioi) {
  Score s;
  for (double t : {0.0, 0.5, 1.0, 1.0}) s.notes.push_back({60, t, 0.25, 80});
  EXPECT_DOUBLE_EQ(avg_ioi(s), 0.5);
  EXPECT_EQ(code_of([] { avg_ioi(cells({{60, 0, 4}, {64, 0, 4}})); }), ErrorCode::InsufficientNotes);
}

TEST(RhythmMetrics, NltmAllQuarters) {
  const auto t = nltm(quantize(cells({{60, 0, 4}, {62, 4, 4}, {64, 8, 4}, {65, 12, 4}})));
  const int q = duration_class(1.0);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) EXPECT_EQ(t.matrix[i][j], (i == q && j == q) ? 1.0 : 0.0);
  }
  EXPECT_EQ(t.scalar, 0.0);
}

TEST(RhythmMetrics, NltmAlternating) {
  const auto t = nltm(quantize(cells({{60, 0, 4}, {62, 4, 2}, {64, 6, 4}, {65, 10, 2}, {67, 12, 4}})));
  const int q = duration_class(1.0), e = duration_class(0.5);
  EXPECT_EQ(t.matrix[q][e], 1.0);
  EXPECT_EQ(t.matrix[e][q], 1.0);
  EXPECT_EQ(t.matrix[q][q], 0.0);
  EXPECT_EQ(t.scalar, 0.0);
}

TEST(RhythmMetrics, EmptyBeatRate) {
  EXPECT_EQ(empty_beat_rate(quantize(cells({{60, 0, 4}, {62, 4, 4}, {64, 8, 4}, {65, 12, 4}}))), 0.0);
  EXPECT_EQ(empty_beat_rate(quantize(cells({{60, 0, 8}, {64, 8, 8}}))), 0.5);
}

TEST(RhythmMetrics, GrooveConsistency) {
  EXPECT_DOUBLE_EQ(groove_consistency(quantize(cells({{60, 0, 2}, {62, 6, 2}, {60, 16, 2}, {62, 22, 2}}))), 1.0);
  EXPECT_EQ(groove_consistency(quantize(cells({{60, 0, 2}, {62, 8, 2}, {60, 20, 2}, {62, 28, 2}}))), 0.0);
  EXPECT_EQ(code_of([] { groove_consistency(quantize(cells({{60, 0, 2}}))); }), ErrorCode::InsufficientBars);
  // An empty middle bar leaves no consecutive pair.
  EXPECT_EQ(code_of([] { groove_consistency(quantize(cells({{60, 0, 2}, {60, 32, 2}}))); }),
            ErrorCode::InsufficientBars);
}

const std::vector<CellChord> kCMajor{{0, 0, ChordQuality::Maj}};

TEST(HarmonyMetrics, ConsonanceWindows) {
  EXPECT_DOUBLE_EQ(pitch_consonance_score(quantize(cells({{64, 0, 1}})), kCMajor), 1.0);
  EXPECT_NEAR(pitch_consonance_score(quantize(cells({{65, 0, 1}})), kCMajor), -0.667, 5e-4);
  EXPECT_DOUBLE_EQ(pitch_consonance_score(quantize(cells({{65, 0, 1}})), kCMajor), -2.0 / 3.0);
  EXPECT_EQ(code_of([] { pitch_consonance_score(quantize(cells({{64, 0, 1}})), {}); }), ErrorCode::MissingChords);
}

TEST(HarmonyMetrics, EvaluateReportsMissingChordsWhenInferenceOff) {
  EvalOptions opts;
  opts.infer_chords = false;
  const auto r = evaluate_all(cells({{64, 0, 4}, {60, 4, 4}}), opts);
  EXPECT_FALSE(r[Metric::PCS].has_value());
  EXPECT_EQ(r.errors.at("pcs"), "MissingChords");
}

TEST(HarmonyMetrics, ChordToneRatio) {
  EXPECT_EQ(ctnctr(quantize(cells({{60, 0, 4}, {64, 4, 4}, {67, 8, 4}})), kCMajor), 1.0);
  EXPECT_EQ(ctnctr(quantize(cells({{60, 0, 4}, {62, 4, 4}, {64, 8, 4}})), kCMajor), 1.0);
  EXPECT_EQ(ctnctr(quantize(cells({{60, 0, 4}, {66, 4, 4}})), kCMajor), 0.5);
}

TEST(HarmonyMetrics, InferChords) {
  const auto c = infer_chords(quantize(cells({{60, 0, 4}, {64, 0, 4}, {67, 0, 4}, {62, 32, 4}})), 4);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], (CellChord{0, 0, ChordQuality::Maj}));
  EXPECT_EQ(c[1], (CellChord{16, 0, ChordQuality::Maj}));  // empty bar carries
  EXPECT_EQ(c[2].cell, 32);
}

TEST(Oracle, RandomScoresMatchBruteForce) {
  Rng rng(1234);
  for (int trial = 0; trial < 150; ++trial) {
    const Score s = testing::grid_score(rng);
    const auto q = quantize(s);
    EXPECT_EQ(pitch_count(s), oracle::pc(s));
    EXPECT_EQ(pitch_range(s), oracle::pr(s));
    EXPECT_NEAR(pitch_entropy(s), oracle::pe(s), 1e-9);
    EXPECT_NEAR(pitch_class_entropy(s), oracle::pce(s), 1e-9);
    EXPECT_NEAR(pitch_in_scale_rate(s), oracle::psr(s), 1e-12);
    const auto poly = polyphony(q);
    const auto opoly = oracle::polyphony(s);
    EXPECT_NEAR(poly.average, opoly.first, 1e-12);
    EXPECT_NEAR(poly.rate, opoly.second, 1e-12);
    EXPECT_NEAR(empty_beat_rate(q), oracle::ebr(s), 1e-12);
    if (auto want = oracle::pi(s)) EXPECT_NEAR(avg_pitch_interval(q), *want, 1e-12);
    if (auto want = oracle::ioi(s)) EXPECT_NEAR(avg_ioi(s), *want, 1e-12);
    if (auto want = oracle::gc(s)) EXPECT_NEAR(groove_consistency(q), *want, 1e-9);
    if (auto want = oracle::nltm(s)) {
      const auto got = nltm(q);
      EXPECT_NEAR(got.scalar, want->scalar, 1e-9);
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) EXPECT_NEAR(got.matrix[i][j], want->m[i][j], 1e-12);
      }
    }
    const auto chords = infer_chords(q, 4);
    EXPECT_EQ(chords, oracle::infer_chords(s, 4));
    if (auto want = oracle::pcs(s, chords)) EXPECT_NEAR(pitch_consonance_score(q, chords), *want, 1e-9);
    if (auto want = oracle::ctnctr(s, chords)) EXPECT_NEAR(ctnctr(q, chords), *want, 1e-12);
  }
}

TEST(Properties, TranspositionInvariance) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Score s = testing::grid_score(rng);
    Score t = s;
    const int k = rng.range(1, 12);
    for (auto& n : t.notes) n.pitch += k;
    const auto a = evaluate_all(s), b = evaluate_all(t);
    for (Metric m : {Metric::PR, Metric::PI, Metric::PE, Metric::NLTM, Metric::EBR, Metric::GC, Metric::IOI}) {
      EXPECT_EQ(a[m], b[m]) << metric_name(m);
    }
    EXPECT_EQ(a.nltm, b.nltm);
  }
}

TEST(Properties, TimeScaleCovariance) {
  Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    const Score s = testing::random_score(rng, 30);
    Score slow = s;
    for (auto& n : slow.notes) {
      n.onset *= 2;
      n.duration *= 2;
    }
    for (auto& t : slow.tempo_map) {
      t.time *= 2;
      t.bpm /= 2;
    }
    const auto a = evaluate_all(s), b = evaluate_all(slow);
    ASSERT_TRUE(a[Metric::IOI].has_value() == b[Metric::IOI].has_value());
    if (a[Metric::IOI]) EXPECT_EQ(*b[Metric::IOI], 2 * *a[Metric::IOI]);
    for (Metric m : {Metric::PI, Metric::Polyphony, Metric::PolyphonyRate, Metric::NLTM, Metric::EBR, Metric::GC,
                     Metric::PCS, Metric::CTnCTR}) {
      EXPECT_EQ(a[m], b[m]) << metric_name(m);
    }
  }
}

TEST(Properties, SelfConcatenationKeepsEntropies) {
  Rng rng(79);
  for (int trial = 0; trial < 50; ++trial) {
    const Score s = testing::grid_score(rng);
    Score twice = s;
    const double shift = 8.0;
    for (auto n : s.notes) {
      n.onset += shift;
      twice.notes.push_back(n);
    }
    twice.normalize();
    EXPECT_NEAR(pitch_entropy(twice), pitch_entropy(s), 1e-12);
    EXPECT_NEAR(pitch_class_entropy(twice), pitch_class_entropy(s), 1e-12);
  }
}

TEST(Properties, ReportBounds) {
  Rng rng(80);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = evaluate_all(testing::random_score(rng, 30));
    for (Metric m : {Metric::PE, Metric::PCE}) {
      if (r[m]) EXPECT_GE(*r[m], 0.0);
    }
    for (Metric m : {Metric::PSR, Metric::EBR, Metric::GC, Metric::PolyphonyRate, Metric::CTnCTR}) {
      if (r[m]) {
        EXPECT_GE(*r[m], 0.0);
        EXPECT_LE(*r[m], 1.0 + 1e-12);
      }
    }
    if (r[Metric::PCS]) {
      EXPECT_GE(*r[Metric::PCS], -1.0);
      EXPECT_LE(*r[Metric::PCS], 1.0);
    }
    if (r.nltm) {
      for (const auto& row : *r.nltm) {
        double sum = 0;
        for (double v : row) sum += v;
        if (sum > 0) EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(EvaluateAll, DropsDrums) {
  Score s = cells({{60, 0, 4}, {64, 4, 4}});
  s.notes.push_back({36, 0.0, 0.1, 100, 0, 9});
  s.normalize();
  EXPECT_EQ(*evaluate_all(s)[Metric::PC], 2.0);
}

TEST(EvaluateAll, EmptyScoreRecordsErrors) {
  const auto r = evaluate_all(Score{});
  for (const auto& v : r.values) EXPECT_FALSE(v.has_value());
  EXPECT_EQ(r.errors.at("pc"), "EmptyScore");
}

TEST(Aggregate, MeanAndPopulationStd) {
  const double one[] = {5.0};
  EXPECT_EQ(summarize(one).mean, 5.0);
  EXPECT_EQ(summarize(one).std, 0.0);
  const double two[] = {1.0, 3.0};
  EXPECT_EQ(summarize(two).mean, 2.0);
  EXPECT_EQ(summarize(two).std, 1.0);
  Rng rng(5);
  std::vector<double> many(50);
  for (auto& v : many) v = rng.uniform(-3, 9);
  double m = 0;
  for (double v : many) m += v;
  m /= 50;
  double ss = 0;
  for (double v : many) ss += (v - m) * (v - m);
  EXPECT_NEAR(summarize(many).mean, m, 1e-12);
  EXPECT_NEAR(summarize(many).std, std::sqrt(ss / 50), 1e-12);
}

std::vector<LabeledReport> sample_reports() {
  Rng rng(6);
  std::vector<LabeledReport> out;
  const char* sources[] = {"S-RNN", "Original data"};
  for (int i = 0; i < 12; ++i) {
    out.push_back({"p" + std::to_string(i), i % 3 ? "JSB" : "POP909", sources[i % 2],
                   evaluate_all(testing::grid_score(rng))});
  }
  return out;
}

TEST(Export, ReportCsvRoundTrip) {
  const auto reports = sample_reports();
  const auto back = read_report_csv(write_report_csv(reports));
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].piece, reports[i].piece);
    EXPECT_EQ(back[i].report.values, reports[i].report.values);
    EXPECT_EQ(back[i].report.nltm, reports[i].report.nltm);
  }
}

TEST(Export, AggregateCsvRoundTrip) {
  const auto table = aggregate(sample_reports());
  ASSERT_EQ(table.size(), 4u);
  std::vector<std::string> texts;
  for (auto g : {MetricGroup::Pitch, MetricGroup::Rhythm, MetricGroup::Harmony}) {
    texts.push_back(write_aggregate_csv(table, g));
  }
  EXPECT_EQ(read_aggregate_csv(texts), table);
  EXPECT_EQ(texts[0].substr(0, texts[0].find('\n')),
            "dataset,source,pi_mean,pi_std,pi_n,pr_mean,pr_std,pr_n,pc_mean,pc_std,pc_n,polyphony_rate_mean,"
            "polyphony_rate_std,polyphony_rate_n,pe_mean,pe_std,pe_n,pce_mean,pce_std,pce_n,psr_mean,psr_std,psr_n,"
            "polyphony_mean,polyphony_std,polyphony_n");
}

TEST(Export, HeatmapPgm) {
  Matrix8 m{};
  m[0][0] = 1.0;
  m[1][2] = 0.5;
  const std::string pgm = nltm_pgm(m);
  EXPECT_EQ(pgm.rfind("P2\n", 0), 0u);
  EXPECT_NE(pgm.find("8 8\n255\n255 0 0 0 0 0 0 0\n0 0 128 0"), std::string::npos);
}

}  // namespace
}  // namespace muspike
