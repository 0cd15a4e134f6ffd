/**
 * @file test_util.h
 * @brief Random score generators and small helpers shared by the unit tests.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muspike/midi.h"
#include "muspike/rng.h"
#include "muspike/tokenizer.h"

namespace muspike::testing {

/// Notes on a 480-tpq tick grid so MIDI round trips are exact.
inline Score random_score(Rng& rng, int max_notes = 40, bool tempo_changes = true) {
  Score s;
  s.ticks_per_quarter = 480;
  const double bpm0 = rng.range(60, 180);
  s.tempo_map = {TempoEvent{0.0, bpm0}};
  if (tempo_changes && rng.below(2) == 1) {
    const double beats = rng.range(2, 8);
    s.tempo_map.push_back({beats * 60.0 / bpm0, static_cast<double>(rng.range(60, 180))});
  }
  const int n = rng.range(1, max_notes);
  for (int i = 0; i < n; ++i) {
    const int on_tick = rng.range(0, 480 * 16);
    const int len_tick = rng.range(1, 480 * 3);
    Note note;
    note.pitch = rng.range(21, 108);
    note.velocity = rng.range(1, 127);
    note.onset = beats_to_seconds(s.tempo_map, on_tick / 480.0);
    note.duration = beats_to_seconds(s.tempo_map, (on_tick + len_tick) / 480.0) - note.onset;
    s.notes.push_back(note);
  }
  s.normalize();
  return s;
}

/// Grid-aligned 4/4 score at 120 BPM: onsets on 16th cells, lengths in cells.
inline Score grid_score(Rng& rng, int max_notes = 24, int bars = 4) {
  Score s;
  s.tempo_map = {TempoEvent{0.0, 120.0}};
  const int n = rng.range(1, max_notes);
  for (int i = 0; i < n; ++i) {
    Note note;
    note.pitch = rng.range(36, 96);
    note.velocity = rng.range(1, 127);
    const int cell = rng.range(0, bars * 16 - 1);
    const int len = rng.range(1, 8);
    note.onset = cell * 0.125;
    note.duration = len * 0.125;
    s.notes.push_back(note);
  }
  s.normalize();
  return s;
}

/// Eight distinct tokens forming one bar and a half of a melody, repeated.
inline std::vector<CompoundToken> memorization_corpus(int repeats = 8) {
  const std::vector<CompoundToken> pattern{
      CompoundToken::metric(5, kNone, 0), CompoundToken::note(0, 60, 3, 4),  CompoundToken::note(1, 64, 1, 4),
      CompoundToken::metric(5, kNone, 4), CompoundToken::note(4, 67, 3, 5),  CompoundToken::note(6, 72, 1, 3),
      CompoundToken::metric(5, 0, 8),     CompoundToken::note(8, 65, 5, 4),
  };
  std::vector<CompoundToken> out;
  for (int r = 0; r < repeats; ++r) out.insert(out.end(), pattern.begin(), pattern.end());
  return out;
}

inline std::string bytes_to_string(const std::vector<std::uint8_t>& b) { return std::string(b.begin(), b.end()); }

}  // namespace muspike::testing
