/**
 * @file metrics.h
 * @brief Objective metric battery over a single piece, corpus aggregation and
 *        report export.
 *
 * Melody-based metrics (PI, NLTM, PCS, CTnCTR) use one reduction: the highest
 * pitch among the onsets of each grid cell. A melody note sounds from its
 * onset cell until its own end or the next melody onset, whichever is first.
 */
#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muspike/midi.h"

namespace muspike {

inline constexpr int kNumDurationClasses = 8;
using Matrix8 = std::array<std::array<double, kNumDurationClasses>, kNumDurationClasses>;

// Pitch-related
int pitch_count(const Score& score);
int pitch_range(const Score& score);
double pitch_entropy(const Score& score);
double pitch_class_entropy(const Score& score);
/// Fraction of notes whose pitch class is in `scale`; with no scale, the best
/// of the 12 major diatonic sets (ties to the lowest tonic).
double pitch_in_scale_rate(const Score& score, std::optional<std::span<const int>> scale = std::nullopt);
/// Tonic of the major diatonic set chosen by pitch_in_scale_rate.
int infer_major_tonic(const Score& score);
std::array<int, 7> major_scale(int tonic);

/// Highest onset pitch per cell, in cell order.
struct MelodyNote {
  int cell = 0;
  int pitch = 0;
  int end_cell = 0;              // exclusive; clipped at the next melody onset
  double duration_beats = 0.0;   // unquantized, of the source note
};
std::vector<MelodyNote> melody(const QuantizedScore& q);

double avg_pitch_interval(const QuantizedScore& q);

struct Polyphony {
  double average = 0.0;  // mean sounding-pitch count over non-silent cells
  double rate = 0.0;     // fraction of non-silent cells with two or more pitches
};
Polyphony polyphony(const QuantizedScore& q);

// Rhythm-related
/// Mean difference of successive distinct onset times, in seconds.
double avg_ioi(const Score& score);

struct Nltm {
  Matrix8 matrix{};       // row-normalized where a row has support
  double scalar = 0.0;    // mean row entropy (bits) over supported rows
};
Nltm nltm(const QuantizedScore& q);
double empty_beat_rate(const QuantizedScore& q);
double groove_consistency(const QuantizedScore& q);

// Harmony-related
/// Consonance of an interval in semitones (mod 12): +1, 0 or -1.
int interval_consonance(int semitones);
double pitch_consonance_score(const QuantizedScore& q, std::span<const CellChord> chords);
double ctnctr(const QuantizedScore& q, std::span<const CellChord> chords);
/// Best of 72 templates per window by pitch-class overlap; ties to the lowest
/// root, then to quality order. Empty windows carry the previous chord.
std::vector<CellChord> infer_chords(const QuantizedScore& q, int window_beats);

// ---------------------------------------------------------------------------
// Per-piece report

enum class Metric : int {
  PC = 0, PR, PI, PE, PCE, PSR, Polyphony, PolyphonyRate, IOI, NLTM, EBR, GC, PCS, CTnCTR
};
inline constexpr int kNumMetrics = 14;
/// Column names in report order.
std::string_view metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

struct MetricReport {
  std::array<std::optional<double>, kNumMetrics> values{};
  std::optional<Matrix8> nltm;
  /// Error names of metrics that could not be computed, keyed by column.
  std::map<std::string, std::string> errors;

  std::optional<double>& operator[](Metric m) { return values[static_cast<int>(m)]; }
  const std::optional<double>& operator[](Metric m) const { return values[static_cast<int>(m)]; }
};

struct EvalOptions {
  int resolution = 4;
  /// Infer chords when the score carries no annotations.
  bool infer_chords = true;
  /// Inference window in beats; 0 means one bar.
  int chord_window_beats = 0;
  /// Notes on MIDI channel 10 are dropped before evaluation.
  bool drop_drums = true;
};

/// Runs every metric; failures become missing values with the error recorded.
MetricReport evaluate_all(const Score& score, const EvalOptions& opts = {});

// ---------------------------------------------------------------------------
// Aggregation and export

struct LabeledReport {
  std::string piece;
  std::string dataset;
  std::string source;
  MetricReport report;
};

struct AggregateCell {
  double mean = 0.0;
  double std = 0.0;  // population
  int n = 0;
};

struct AggregateRow {
  std::string dataset;
  std::string source;
  std::array<std::optional<AggregateCell>, kNumMetrics> cells{};
  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

using AggregateTable = std::vector<AggregateRow>;

inline bool operator==(const AggregateCell& a, const AggregateCell& b) {
  return a.mean == b.mean && a.std == b.std && a.n == b.n;
}

/// Two-pass mean and population std.
AggregateCell summarize(std::span<const double> values);
/// Groups by (dataset, source) in first-seen order.
AggregateTable aggregate(std::span<const LabeledReport> reports);

/// One row per piece: piece, dataset, source, the 14 scalars, then the 64 NLTM cells.
std::string write_report_csv(std::span<const LabeledReport> reports);
std::vector<LabeledReport> read_report_csv(std::string_view text);

enum class MetricGroup { Pitch, Rhythm, Harmony };
std::span<const Metric> group_metrics(MetricGroup g);
std::string_view group_name(MetricGroup g);
/// dataset, source, then <metric>_mean, <metric>_std, <metric>_n per metric of the group.
std::string write_aggregate_csv(const AggregateTable& table, MetricGroup g);
/// Merges the group tables back into one table.
AggregateTable read_aggregate_csv(std::span<const std::string> group_texts);

/// Mean NLTM over reports that have one, for heatmaps.
Matrix8 mean_nltm(std::span<const LabeledReport> reports);
/// Plain PGM (P2), 8x8, value 0..1 mapped to 0..255 gray levels.
std::string nltm_pgm(const Matrix8& m);
std::string nltm_csv(const Matrix8& m);

}  // namespace muspike
