/**
 * @file midi.h
 * @brief Canonical score model, Standard MIDI File I/O, grid quantization,
 *        excerpt trimming and sine preview rendering.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace muspike {

struct Note {
  int pitch = 60;         // 0..127
  double onset = 0.0;     // seconds
  double duration = 0.5;  // seconds, > 0
  int velocity = 64;      // 1..127
  int track = 0;
  int channel = 0;  // 9 is the GM percussion channel

  friend bool operator==(const Note&, const Note&) = default;
};

struct TempoEvent {
  double time = 0.0;  // seconds
  double bpm = 120.0;

  friend bool operator==(const TempoEvent&, const TempoEvent&) = default;
};

struct TimeSignature {
  int numerator = 4;
  int denominator = 4;

  /// Bar length in quarter-note beats.
  double quarters_per_bar() const { return numerator * 4.0 / denominator; }
  friend bool operator==(const TimeSignature&, const TimeSignature&) = default;
};

enum class ChordQuality : int { Maj = 0, Min, Dim, Aug, Dom7, Other };
inline constexpr int kNumChordQualities = 6;

std::string_view quality_name(ChordQuality q);
ChordQuality parse_quality(std::string_view name);  // throws MalformedSidecar

/// Intervals above the root, in semitones. `Other` is a suspended fourth.
std::span<const int> chord_intervals(ChordQuality q);

/// True when pitch class `pc` is a member of the chord (root, quality).
bool is_chord_tone(int pc, int root, ChordQuality q);

struct ChordAnnotation {
  double onset = 0.0;  // seconds
  int root = 0;        // pitch class 0..11
  ChordQuality quality = ChordQuality::Maj;

  friend bool operator==(const ChordAnnotation&, const ChordAnnotation&) = default;
};

struct Score {
  std::vector<Note> notes;
  std::vector<TempoEvent> tempo_map{TempoEvent{}};
  TimeSignature time_signature{};
  int ticks_per_quarter = 480;
  std::vector<ChordAnnotation> chord_annotations;

  /// Restores the ordering invariants: notes by (onset, pitch, ...), tempo map
  /// strictly increasing and anchored at t=0, chords by onset.
  void normalize();
  double end_time() const;
  friend bool operator==(const Score&, const Score&) = default;
};

/// Position in quarter-note beats of time `seconds` under a piecewise-constant tempo map.
double seconds_to_beats(std::span<const TempoEvent> tempo_map, double seconds);
double beats_to_seconds(std::span<const TempoEvent> tempo_map, double beats);
/// Tempo in effect at `seconds`.
double tempo_at(std::span<const TempoEvent> tempo_map, double seconds);

Score parse_midi(std::span<const std::uint8_t> bytes);
/// Serializes a score as a single-track format-0 file.
std::vector<std::uint8_t> write_midi(const Score& score);

/// Parses `onset<TAB>root_pc<TAB>quality` lines; blank and '#' lines are ignored.
std::vector<ChordAnnotation> parse_chord_sidecar(std::string_view text);
std::string write_chord_sidecar(std::span<const ChordAnnotation> chords);

// ---------------------------------------------------------------------------
// Grid

inline constexpr std::array<int, 6> kAllowedResolutions{1, 2, 4, 8, 12, 16};

struct QuantizedNote {
  int pitch = 0;
  int velocity = 0;
  int onset_cell = 0;
  int length_cells = 1;          // >= 1
  double duration_beats = 0.0;   // unquantized, for duration classes
  int track = 0;

  friend bool operator==(const QuantizedNote&, const QuantizedNote&) = default;
};

struct GridCell {
  std::vector<int> sounding;  // sorted, unique
  std::vector<int> onsets;    // sorted, unique

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct CellChord {
  int cell = 0;
  int root = 0;
  ChordQuality quality = ChordQuality::Maj;

  friend bool operator==(const CellChord&, const CellChord&) = default;
};

struct QuantizedScore {
  int resolution = 4;  // cells per quarter-note beat
  int cells_per_bar = 16;
  TimeSignature time_signature{};
  std::vector<TempoEvent> tempo_map{TempoEvent{}};
  std::vector<GridCell> cells;               // whole bars
  std::vector<std::pair<int, int>> bars;     // [begin, end) cell ranges
  std::vector<QuantizedNote> notes;          // by (onset_cell, pitch)
  std::vector<CellChord> chords;             // by cell

  /// Quantizing a score with no notes is allowed; the result is flagged empty.
  bool empty() const { return notes.empty(); }
  int num_beats() const { return static_cast<int>(cells.size()) / resolution; }
  double cell_to_seconds(int cell) const;
};

/// Cells per bar for a time signature, or throws UnsupportedTimeSignature if the
/// bar does not fall on whole cells.
int cells_per_bar(TimeSignature ts, int resolution);

/// Round-half-up snap of a beat position onto a grid of `resolution` cells per beat.
int snap_to_cell(double beats, int resolution);

QuantizedScore quantize(const Score& score, int resolution = 4);

Score trim(const Score& score, double max_seconds);

// ---------------------------------------------------------------------------
// Audio preview

/// Unnormalized sine mix (one sample per frame) prior to peak normalization.
std::vector<double> synthesize(const Score& score, int sample_rate);
/// RIFF/WAVE PCM16 mono, peak-normalized to -1 dBFS.
std::vector<std::uint8_t> render_wav(const Score& score, int sample_rate);

inline double pitch_to_hz(int pitch) {
  return 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
}

}  // namespace muspike
