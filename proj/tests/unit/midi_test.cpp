/**
 * @file midi_test.cpp
 * @brief SMF parsing and writing, quantization, trimming and WAV rendering.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "muspike/error.h"
#include "muspike/midi.h"
#include "test_util.h"

namespace muspike {
namespace {

using Bytes = std::vector<std::uint8_t>;

Bytes smf(std::uint16_t format, std::uint16_t division, const std::vector<Bytes>& tracks) {
  Bytes out{'M', 'T', 'h', 'd', 0, 0, 0, 6};
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
  };
  u16(format);
  u16(static_cast<std::uint16_t>(tracks.size()));
  u16(division);
  for (const auto& t : tracks) {
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    const auto n = static_cast<std::uint32_t>(t.size());
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(n >> s));
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

TEST(ParseMidi, SingleQuarterAt120) {
  const Bytes track{0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0x90, 60, 100,
                    0x83, 0x60, 0x80, 60, 0,    0x00, 0xFF, 0x2F, 0x00};
  const Score s = parse_midi(smf(0, 480, {track}));
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].pitch, 60);
  EXPECT_DOUBLE_EQ(s.notes[0].onset, 0.0);
  EXPECT_DOUBLE_EQ(s.notes[0].duration, 0.5);
  EXPECT_EQ(s.notes[0].velocity, 100);
}

TEST(ParseMidi, EmptyTrack) {
  const Score s = parse_midi(smf(0, 96, {Bytes{0x00, 0xFF, 0x2F, 0x00}}));
  EXPECT_TRUE(s.notes.empty());
  EXPECT_EQ(s.time_signature, (TimeSignature{4, 4}));
  ASSERT_EQ(s.tempo_map.size(), 1u);
  EXPECT_DOUBLE_EQ(s.tempo_map[0].bpm, 120.0);
}

// Fixture and expected values from tools/delta_oracle.py, which walks the same
// bytes independently of the parser.
TEST(ParseMidi, DeltaTimesAcrossVlqBoundaries) {
  const std::vector<Bytes> tracks{
      {0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x58, 0x04, 0x03, 0x02, 0x18, 0x08, 0x00, 0xFF, 0x2F,
       0x00},
      {0x7F, 0x90, 0x3C, 0x40, 0x81, 0x00, 0x80, 0x3C, 0x00, 0x00, 0x90, 0x3E, 0x50, 0x83, 0x60, 0x3E, 0x00, 0x00,
       0xFF, 0x2F, 0x00},
      {0x81, 0x80, 0x00, 0x91, 0x40, 0x60, 0x60, 0x81, 0x40, 0x00, 0xFF, 0x7F, 0x91, 0x43, 0x22,
       0x8F, 0xFF, 0xFF, 0x7F, 0x43, 0x00, 0x00, 0xFF, 0x2F, 0x00},
  };
  const Score s = parse_midi(smf(1, 96, tracks));
  EXPECT_EQ(s.time_signature, (TimeSignature{3, 4}));
  ASSERT_EQ(s.notes.size(), 4u);
  struct Expect {
    int pitch;
    double onset, duration;
    int velocity, track, channel;
  };
  const Expect want[] = {
      {60, 0.6614583333333334, 0.6666666666666666, 64, 1, 0},
      {62, 1.328125, 2.5, 80, 1, 0},
      {64, 85.33333333333333, 0.5, 96, 2, 1},
      {67, 171.16145833333334, 174762.66145833334, 34, 2, 1},
  };
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(s.notes[i].pitch, want[i].pitch);
    EXPECT_NEAR(s.notes[i].onset, want[i].onset, 1e-9);
    EXPECT_NEAR(s.notes[i].duration, want[i].duration, 1e-6);
    EXPECT_EQ(s.notes[i].velocity, want[i].velocity);
    EXPECT_EQ(s.notes[i].track, want[i].track);
    EXPECT_EQ(s.notes[i].channel, want[i].channel);
  }
}

TEST(ParseMidi, TempoChangeMidTrack) {
  // 1 beat at 120 then 60 BPM; note at beat 2 lands at 0.5 + 1.0 s.
  const Bytes track{0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x60, 0xFF, 0x51, 0x03, 0x0F, 0x42, 0x40,
                    0x60, 0x90, 60,   90,   0x60, 0x80, 60,   0,    0x00, 0xFF, 0x2F, 0x00};
  const Score s = parse_midi(smf(0, 96, {track}));
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_DOUBLE_EQ(s.notes[0].onset, 1.5);
  EXPECT_DOUBLE_EQ(s.notes[0].duration, 1.0);
  ASSERT_EQ(s.tempo_map.size(), 2u);
  EXPECT_DOUBLE_EQ(s.tempo_map[1].time, 0.5);
  EXPECT_DOUBLE_EQ(s.tempo_map[1].bpm, 60.0);
}

TEST(ParseMidi, RepeatedNoteOnTruncatesEarlierNote) {
  const Bytes track{0x00, 0x90, 60, 80, 0x60, 60, 90, 0x60, 60, 0, 0x00, 0xFF, 0x2F, 0x00};
  const Score s = parse_midi(smf(0, 96, {track}));
  ASSERT_EQ(s.notes.size(), 2u);
  EXPECT_DOUBLE_EQ(s.notes[0].duration, 0.5);
  EXPECT_DOUBLE_EQ(s.notes[1].onset, 0.5);
  EXPECT_EQ(s.notes[1].velocity, 90);
}

TEST(ParseMidi, Errors) {
  Bytes good = smf(0, 96, {Bytes{0x00, 0xFF, 0x2F, 0x00}});
  Bytes bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { parse_midi(bad_magic); }), ErrorCode::MalformedHeader);
  Bytes short_len = good;
  short_len[7] = 4;
  EXPECT_EQ(code_of([&] { parse_midi(short_len); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([&] { parse_midi(smf(2, 96, {Bytes{0x00, 0xFF, 0x2F, 0x00}})); }),
            ErrorCode::UnsupportedFormat);
  const Bytes cut{0x00, 0x90, 60};
  EXPECT_EQ(code_of([&] { parse_midi(smf(0, 96, {cut})); }), ErrorCode::TruncatedTrack);
  Bytes missing = good;
  missing.resize(missing.size() - 2);
  EXPECT_EQ(code_of([&] { parse_midi(missing); }), ErrorCode::TruncatedTrack);
}

bool has_same_pitch_overlap(const Score& s) {
  for (std::size_t i = 0; i < s.notes.size(); ++i) {
    for (std::size_t j = i + 1; j < s.notes.size(); ++j) {
      const auto& a = s.notes[i];
      const auto& b = s.notes[j];
      if (a.pitch == b.pitch && b.onset < a.onset + a.duration + 1e-9) return true;
    }
  }
  return false;
}

TEST(WriteMidi, RoundTripWithinOneTick) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 100) {
    Score s = testing::random_score(rng);
    if (has_same_pitch_overlap(s)) continue;
    ++checked;
    const Score back = parse_midi(write_midi(s));
    ASSERT_EQ(back.notes.size(), s.notes.size());
    for (std::size_t i = 0; i < s.notes.size(); ++i) {
      const double tick = 60.0 / tempo_at(s.tempo_map, s.notes[i].onset) / 480.0;
      EXPECT_EQ(back.notes[i].pitch, s.notes[i].pitch);
      EXPECT_EQ(back.notes[i].velocity, s.notes[i].velocity);
      EXPECT_NEAR(back.notes[i].onset, s.notes[i].onset, tick);
    }
  }
}

TEST(WriteMidi, ParseWriteParseIsFixedPoint) {
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    const Score once = parse_midi(write_midi(testing::random_score(rng)));
    const Score twice = parse_midi(write_midi(once));
    ASSERT_EQ(once, twice);
  }
}

TEST(ChordSidecar, RoundTrip) {
  const auto chords = parse_chord_sidecar("# chords\n0\t0\tmaj\n2.5\t9\tmin\n\n4\t7\tdom7\n");
  ASSERT_EQ(chords.size(), 3u);
  EXPECT_EQ(chords[1], (ChordAnnotation{2.5, 9, ChordQuality::Min}));
  EXPECT_EQ(parse_chord_sidecar(write_chord_sidecar(chords)), chords);
  EXPECT_EQ(code_of([] { parse_chord_sidecar("0\t13\tmaj\n"); }), ErrorCode::MalformedSidecar);
  EXPECT_EQ(code_of([] { parse_chord_sidecar("0\t1\tsus2\n"); }), ErrorCode::MalformedSidecar);
}

TEST(Quantize, NearestCell) {
  Score s;
  s.notes.push_back({60, 0.26, 0.2, 80});
  const auto q = quantize(s, 4);
  ASSERT_EQ(q.notes.size(), 1u);
  EXPECT_EQ(q.notes[0].onset_cell, 2);
  EXPECT_DOUBLE_EQ(q.cell_to_seconds(2), 0.25);
}

TEST(Quantize, HalfCellRoundsUp) {
  Score s;
  s.notes.push_back({60, 0.0625, 0.5, 80});  // exactly half a 16th at 120 BPM
  EXPECT_EQ(quantize(s, 4).notes[0].onset_cell, 1);
}

TEST(Quantize, SimultaneousOnsetsShareCell) {
  Score s;
  s.notes.push_back({64, 1.0, 0.5, 80});
  s.notes.push_back({60, 1.0, 0.5, 80});
  s.normalize();
  const auto q = quantize(s);
  EXPECT_EQ(q.notes[0].onset_cell, 8);
  EXPECT_EQ(q.notes[1].onset_cell, 8);
  EXPECT_EQ(q.cells[8].onsets, (std::vector<int>{60, 64}));
  EXPECT_EQ(q.cells[9].sounding, (std::vector<int>{60, 64}));
  EXPECT_TRUE(q.cells[9].onsets.empty());
}

TEST(Quantize, MatchesBruteForceNearestCell) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Score s;
    s.tempo_map = {TempoEvent{0.0, static_cast<double>(rng.range(60, 200))}};
    for (int i = 0; i < 20; ++i) s.notes.push_back({rng.range(40, 90), rng.uniform(0, 20), rng.uniform(0.05, 2), 70});
    s.normalize();
    for (int res : {4, 8}) {
      const auto q = quantize(s, res);
      const double cell_sec = 60.0 / s.tempo_map[0].bpm / res;
      for (std::size_t i = 0; i < s.notes.size(); ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < 2000; ++c) {
          const double d = std::abs(c * cell_sec - s.notes[i].onset);
          if (d < best_d - 1e-12) {
            best_d = d;
            best = c;
          }
        }
        const auto it = std::find_if(q.notes.begin(), q.notes.end(), [&](const QuantizedNote& n) {
          return n.pitch == s.notes[i].pitch && std::abs(n.duration_beats - s.notes[i].duration / (60.0 / s.tempo_map[0].bpm)) < 1e-9;
        });
        ASSERT_NE(it, q.notes.end());
        EXPECT_EQ(it->onset_cell, best);
      }
    }
  }
}

TEST(Quantize, RefinementKeepsOnsetsAdjacent) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Score s = testing::random_score(rng);
    const auto q4 = quantize(s, 4);
    const auto q8 = quantize(s, 8);
    for (std::size_t i = 0; i < q4.notes.size(); ++i) {
      EXPECT_LE(std::abs(q8.notes[i].onset_cell - 2 * q4.notes[i].onset_cell), 1);
    }
  }
}

TEST(Quantize, EmptyScoreIsFlagged) {
  const auto q = quantize(Score{});
  EXPECT_TRUE(q.empty());
  EXPECT_TRUE(q.cells.empty());
}

TEST(Quantize, RejectsUnknownResolution) { EXPECT_THROW(quantize(Score{}, 3), Error); }

TEST(Quantize, BarsFollowTimeSignature) {
  Score s;
  s.time_signature = {3, 4};
  s.notes.push_back({60, 0.0, 1.5, 80});  // three beats at 120 BPM
  const auto q = quantize(s, 4);
  EXPECT_EQ(q.cells_per_bar, 12);
  ASSERT_EQ(q.bars.size(), 1u);
  EXPECT_EQ(q.cells.size(), 12u);
}

TEST(Trim, ClipsAtBoundary) {
  Score s;
  s.notes.push_back({60, 29.5, 2.0, 80});
  s.notes.push_back({62, 31.0, 1.0, 80});
  const Score t = trim(s, 30.0);
  ASSERT_EQ(t.notes.size(), 1u);
  EXPECT_DOUBLE_EQ(t.notes[0].duration, 0.5);
}

TEST(Trim, LongPieceEndsByLimit) {
  Score s;
  for (int i = 0; i < 90; ++i) s.notes.push_back({60 + i % 12, i * 0.5, 0.7, 80});
  const Score t = trim(s, 30.0);
  for (const auto& n : t.notes) EXPECT_LE(n.onset + n.duration, 30.0);
  EXPECT_EQ(trim(t, 30.0), t);
}

TEST(Trim, ShortPieceUnchanged) {
  Score s;
  for (int i = 0; i < 20; ++i) s.notes.push_back({60, i * 0.5, 0.5, 80});
  EXPECT_EQ(trim(s, 30.0), s);
}

TEST(Trim, Idempotent) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Score s = testing::random_score(rng);
    const double t = rng.uniform(0.5, 10.0);
    EXPECT_EQ(trim(trim(s, t), t), trim(s, t));
  }
}

double goertzel_power(const std::vector<double>& x, double freq, double sr) {
  const double w = 2.0 * M_PI * freq / sr;
  const double c = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    const double s0 = v + c * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - c * s1 * s2;
}

TEST(RenderWav, A4PeaksAt440) {
  Score s;
  s.notes.push_back({69, 0.0, 1.0, 100});
  const auto wav = render_wav(s, 44100);
  ASSERT_EQ(wav.size(), 44u + 2u * 44100u);
  std::vector<double> x;
  for (std::size_t i = 44; i < wav.size(); i += 2) {
    x.push_back(static_cast<std::int16_t>(wav[i] | (wav[i + 1] << 8)) / 32768.0);
  }
  // One-hertz bins of a length-44100 transform, searched up to 4 kHz.
  int best = 0;
  double best_p = -1;
  for (int k = 1; k <= 4000; ++k) {
    const double p = goertzel_power(x, k, 44100);
    if (p > best_p) {
      best_p = p;
      best = k;
    }
  }
  EXPECT_LE(std::abs(best - 440), 1);
}

TEST(RenderWav, HeaderAndPeak) {
  Score s;
  s.notes.push_back({60, 0.0, 0.5, 127});
  const auto wav = render_wav(s, 22050);
  const std::size_t samples = 11025;
  ASSERT_EQ(wav.size(), 44 + 2 * samples);
  EXPECT_EQ(std::memcmp(wav.data(), "RIFF", 4), 0);
  EXPECT_EQ(std::memcmp(wav.data() + 8, "WAVEfmt ", 8), 0);
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(wav[at] | (wav[at + 1] << 8) | (wav[at + 2] << 16) | (wav[at + 3] << 24));
  };
  EXPECT_EQ(u32(4), 36 + 2 * samples);
  EXPECT_EQ(u32(24), 22050u);
  EXPECT_EQ(u32(40), 2 * samples);
  int peak = 0;
  for (std::size_t i = 44; i < wav.size(); i += 2) {
    peak = std::max(peak, std::abs(static_cast<int>(static_cast<std::int16_t>(wav[i] | (wav[i + 1] << 8)))));
  }
  EXPECT_EQ(peak, static_cast<int>(std::lround(std::pow(10.0, -1.0 / 20.0) * 32767.0)));
}

TEST(RenderWav, EmptyScoreRejected) {
  EXPECT_EQ(code_of([] { render_wav(Score{}, 44100); }), ErrorCode::EmptyScore);
}

TEST(RenderWav, MixIsSumOfSoloRenders) {
  Score a, b, both;
  a.notes.push_back({60, 0.0, 0.4, 90});
  b.notes.push_back({67, 0.1, 0.3, 50});
  both.notes = {a.notes[0], b.notes[0]};
  const auto sa = synthesize(a, 22050);
  const auto sb = synthesize(b, 22050);
  const auto sab = synthesize(both, 22050);
  ASSERT_EQ(sab.size(), std::max(sa.size(), sb.size()));
  for (std::size_t i = 0; i < sab.size(); ++i) {
    const double expect = (i < sa.size() ? sa[i] : 0.0) + (i < sb.size() ? sb[i] : 0.0);
    ASSERT_NEAR(sab[i], expect, 1e-12);
  }
}

}  // namespace
}  // namespace muspike
