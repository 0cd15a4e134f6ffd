/**
 * @file tokenizer.h
 * @brief Seven-field compound-word tokens over a quantized score.
 *
 * A token carries a type plus six attributes. Metric tokens mark every beat
 * from the start of the piece through the beat holding the last onset and carry
 * tempo, chord and the beat's position in the bar. Note tokens carry pitch,
 * duration class, velocity class and their own position in the bar. The
 * sequence ends with a single EOS token.
 *
 * Tokens hold class values (not vocabulary indices); kNone marks an absent
 * field. A Vocab maps class values to dense per-field indices with NONE at 0.
 */
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muspike/midi.h"

namespace muspike {

inline constexpr int kNone = -1;
inline constexpr int kNumFields = 7;

enum class Field : int { Type = 0, Tempo, Chord, BarBeat, Pitch, Duration, Velocity };
enum class TokenType : int { Metric = 0, Note = 1, EOS = 2 };

std::string_view field_name(Field f);

struct CompoundToken {
  int type = kNone;
  int tempo = kNone;
  int chord = kNone;
  int bar_beat = kNone;
  int pitch = kNone;
  int duration = kNone;
  int velocity = kNone;

  int get(Field f) const;
  void set(Field f, int value);
  std::array<int, kNumFields> values() const;
  static CompoundToken from_values(std::span<const int, kNumFields> v);

  static CompoundToken metric(int tempo, int chord, int bar_beat);
  static CompoundToken note(int bar_beat, int pitch, int duration, int velocity);
  static CompoundToken eos();

  friend bool operator==(const CompoundToken&, const CompoundToken&) = default;
};

/// Field-validity per token type: Note carries pitch/duration/velocity and no
/// tempo/chord; Metric carries no pitch/duration/velocity; EOS carries nothing.
bool is_valid_token(const CompoundToken& t);

// Fixed class tables.
inline constexpr std::array<double, 8> kDurationClassBeats{0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};
inline constexpr int kNumTempoClasses = 16;
inline constexpr int kNumVelocityClasses = 8;
inline constexpr int kNumChordClasses = 12 * kNumChordQualities;
inline constexpr int kMaxBarBeats = 16;

/// Nearest duration class; ties go to the shorter class.
int duration_class(double beats);
/// 8 equal-width bins over velocities 1..127.
int velocity_class(int velocity);
int velocity_from_class(int cls);
/// 16 log-spaced bins over 40..240 BPM; out-of-range tempi clamp to the end bins.
int tempo_class(double bpm);
double tempo_from_class(int cls);
int chord_class(int root, ChordQuality q);

class Vocab {
 public:
  static constexpr int kVersion = 1;

  Vocab() = default;
  explicit Vocab(int resolution) : resolution_(resolution) {}

  int resolution() const { return resolution_; }
  /// Number of indices in a field, NONE included.
  int size(Field f) const { return static_cast<int>(values_[static_cast<int>(f)].size()) + 1; }
  std::array<int, kNumFields> sizes() const;

  /// Registers a class value (no-op for kNone or a known value). Keeps tables sorted.
  void add(Field f, int value);
  bool contains(Field f, int value) const;
  /// kNone maps to 0; unknown values throw UnknownIndex.
  int index_of(Field f, int value) const;
  int value_of(Field f, int index) const;
  /// All class values of a field in index order, NONE excluded.
  const std::vector<int>& values(Field f) const { return values_[static_cast<int>(f)]; }

  std::array<int, kNumFields> to_indices(const CompoundToken& t) const;
  CompoundToken from_indices(std::span<const int, kNumFields> idx) const;

  std::string serialize() const;
  static Vocab parse(std::string_view text);

  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  int resolution_ = 4;
  std::array<std::vector<int>, kNumFields> values_;
};

std::vector<CompoundToken> encode(const QuantizedScore& q);
Score decode(std::span<const CompoundToken> tokens, const Vocab& vocab);
Vocab build_vocab(std::span<const QuantizedScore> corpus);
/// Vocabulary covering every value observed in already-encoded sequences.
Vocab build_vocab_from_tokens(std::span<const std::vector<CompoundToken>> sequences, int resolution);

/// One token per line as seven vocabulary indices; '#' lines are comments.
std::string write_token_dump(std::span<const CompoundToken> tokens, const Vocab& vocab);
std::vector<CompoundToken> read_token_dump(std::string_view text, const Vocab& vocab);

}  // namespace muspike
