/**
 * @file tokenizer_test.cpp
 * @brief Compound-word encoding, decoding, vocabularies and token dumps.
 */

#include <gtest/gtest.h>

#include <set>

#include "muspike/error.h"
#include "muspike/tokenizer.h"
#include "test_util.h"

namespace muspike {
namespace {

QuantizedScore single_c4(int velocity = 80) {
  Score s;
  s.notes.push_back({60, 0.0, 0.5, velocity});
  return quantize(s);
}

TEST(Encode, SingleQuarterNote) {
  const auto toks = encode(single_c4());
  ASSERT_EQ(toks.size(), 3u);
  EXPECT_EQ(toks[0], CompoundToken::metric(tempo_class(120.0), kNone, 0));
  EXPECT_EQ(toks[1], CompoundToken::note(0, 60, duration_class(1.0), velocity_class(80)));
  EXPECT_EQ(toks[2], CompoundToken::eos());
  EXPECT_EQ(kDurationClassBeats[toks[1].duration], 1.0);
}

TEST(Encode, SimultaneousNotesAscendingPitch) {
  Score s;
  s.notes.push_back({64, 0.0, 0.5, 80});
  s.notes.push_back({60, 0.0, 0.5, 80});
  s.normalize();
  const auto toks = encode(quantize(s));
  EXPECT_EQ(toks[1].pitch, 60);
  EXPECT_EQ(toks[2].pitch, 64);
}

TEST(Encode, EmptyScoreRejected) { EXPECT_THROW(encode(quantize(Score{})), Error); }

TEST(Encode, ChordFromAnnotations) {
  Score s;
  s.notes.push_back({60, 0.0, 1.0, 80});
  s.notes.push_back({62, 0.5, 0.5, 80});
  s.chord_annotations.push_back({0.5, 7, ChordQuality::Dom7});
  const auto toks = encode(quantize(s));
  EXPECT_EQ(toks[0].chord, kNone);
  EXPECT_EQ(toks[2].type, static_cast<int>(TokenType::Metric));
  EXPECT_EQ(toks[2].chord, chord_class(7, ChordQuality::Dom7));
}

TEST(Encode, TokenCountAndValidity) {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto q = quantize(testing::random_score(rng));
    const auto toks = encode(q);
    int last_beat = 0;
    for (const auto& n : q.notes) last_beat = std::max(last_beat, n.onset_cell / q.resolution);
    EXPECT_EQ(toks.size(), q.notes.size() + static_cast<std::size_t>(last_beat + 1) + 1);
    for (const auto& t : toks) ASSERT_TRUE(is_valid_token(t));
  }
}

TEST(Decode, SingleNoteRoundTrip) {
  const auto q = single_c4();
  const auto vocab = build_vocab(std::span(&q, 1));
  const Score s = decode(encode(q), vocab);
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].pitch, 60);
  EXPECT_DOUBLE_EQ(s.notes[0].onset, 0.0);
  // Decoded time runs at the tempo class centre, so compare in beats.
  EXPECT_NEAR(seconds_to_beats(s.tempo_map, s.notes[0].duration), 1.0, 1e-12);
}

TEST(Decode, RoundTripOnToyCorpus) {
  // 16 notes over four bars with every duration class represented.
  Score s;
  const double beat = 0.5;
  const double durs[] = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};
  for (int i = 0; i < 16; ++i) {
    s.notes.push_back({55 + i, i * 0.75 * beat, durs[i % 8] * beat, 10 + i * 7});
  }
  s.normalize();
  const auto q = quantize(s);
  const auto vocab = build_vocab(std::span(&q, 1));
  const auto toks = encode(q);
  const auto back = quantize(decode(toks, vocab));
  ASSERT_EQ(back.notes.size(), q.notes.size());
  for (std::size_t i = 0; i < q.notes.size(); ++i) {
    EXPECT_EQ(back.notes[i].pitch, q.notes[i].pitch);
    EXPECT_EQ(back.notes[i].onset_cell, q.notes[i].onset_cell);
    EXPECT_EQ(duration_class(back.notes[i].duration_beats), duration_class(q.notes[i].duration_beats));
  }
  EXPECT_EQ(encode(back), toks);
}

TEST(Decode, EncodeIsFixedPoint) {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto q = quantize(testing::random_score(rng));
    const auto vocab = build_vocab(std::span(&q, 1));
    const auto toks = encode(q);
    ASSERT_EQ(encode(quantize(decode(toks, vocab))), toks);
  }
}

TEST(Decode, MalformedSequences) {
  const auto q = single_c4();
  const auto vocab = build_vocab(std::span(&q, 1));
  auto toks = encode(q);
  auto code = [&](std::vector<CompoundToken> t) {
    try {
      decode(t, vocab);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code({toks[0], toks[1]}), ErrorCode::MalformedSequence);
  EXPECT_EQ(code({toks[1], toks[0], toks[2]}), ErrorCode::MalformedSequence);
  EXPECT_EQ(code({}), ErrorCode::MalformedSequence);
  auto unknown = toks;
  unknown[1].pitch = 61;
  EXPECT_EQ(code(unknown), ErrorCode::UnknownIndex);
}

TEST(Decode, FuzzIsTotal) {
  Rng rng(31);
  const auto q = quantize(testing::random_score(rng));
  const auto vocab = build_vocab(std::span(&q, 1));
  const auto sizes = vocab.sizes();
  int ok = 0, rejected = 0;
  for (int i = 0; i < 2000; ++i) {
    std::vector<CompoundToken> toks;
    const int n = rng.range(0, 12);
    for (int k = 0; k < n; ++k) {
      std::array<int, kNumFields> idx{};
      for (int f = 0; f < kNumFields; ++f) idx[f] = rng.range(0, sizes[f] - 1);
      toks.push_back(vocab.from_indices(idx));
    }
    if (rng.below(2)) toks.push_back(CompoundToken::eos());
    try {
      decode(toks, vocab);
      ++ok;
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_EQ(ok + rejected, 2000);
}

TEST(Classes, VelocityBinEdges) {
  EXPECT_EQ(velocity_class(1), 0);
  EXPECT_EQ(velocity_class(127), 7);
  for (int v = 1; v <= 127; ++v) EXPECT_EQ(velocity_class(velocity_from_class(velocity_class(v))), velocity_class(v));
}

TEST(Classes, NearestDuration) {
  EXPECT_EQ(kDurationClassBeats[duration_class(1.4)], 1.5);
  // Brute-force nearest over the fixed list, shorter class on ties.
  for (double b = 0.0; b < 6.0; b += 0.01) {
    int best = 0;
    for (int k = 1; k < 8; ++k) {
      if (std::abs(kDurationClassBeats[k] - b) < std::abs(kDurationClassBeats[best] - b)) best = k;
    }
    ASSERT_EQ(duration_class(b), best) << b;
  }
}

TEST(Classes, TempoBinsAreLogSpaced) {
  EXPECT_EQ(tempo_class(40.0), 0);
  EXPECT_EQ(tempo_class(239.9), 15);
  EXPECT_EQ(tempo_class(500.0), 15);
  EXPECT_EQ(tempo_class(10.0), 0);
  for (int k = 0; k < 16; ++k) EXPECT_EQ(tempo_class(tempo_from_class(k)), k);
}

TEST(BuildVocab, OneNoteCorpus) {
  const auto q = single_c4(127);
  const auto v = build_vocab(std::span(&q, 1));
  EXPECT_EQ(v.size(Field::Pitch), 2);
  EXPECT_EQ(v.index_of(Field::Pitch, kNone), 0);
  EXPECT_EQ(v.index_of(Field::Pitch, 60), 1);
  EXPECT_EQ(v.value_of(Field::Velocity, 1), 7);
  EXPECT_TRUE(v.contains(Field::Tempo, tempo_class(120.0)));
  EXPECT_THROW(build_vocab(std::span<const QuantizedScore>{}), Error);
}

TEST(BuildVocab, SerializeRoundTrip) {
  Rng rng(4);
  std::vector<QuantizedScore> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back(quantize(testing::random_score(rng)));
  const auto v = build_vocab(corpus);
  EXPECT_EQ(Vocab::parse(v.serialize()), v);
  EXPECT_THROW(Vocab::parse("version 9\n"), Error);
}

TEST(TokenDump, RoundTrip) {
  Rng rng(6);
  const auto q = quantize(testing::random_score(rng));
  const auto v = build_vocab(std::span(&q, 1));
  const auto toks = encode(q);
  const std::string text = write_token_dump(toks, v);
  EXPECT_EQ(text.rfind("#", 0), 0u);
  EXPECT_EQ(read_token_dump(text, v), toks);
}

}  // namespace
}  // namespace muspike
