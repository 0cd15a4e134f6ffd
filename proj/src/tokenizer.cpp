#include "muspike/tokenizer.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "muspike/error.h"

namespace muspike {

namespace {

constexpr std::array<std::string_view, kNumFields> kFieldNames{
    "type", "tempo", "chord", "bar_beat", "pitch", "duration", "velocity"};

constexpr double kTempoLo = 40.0;
constexpr double kTempoHi = 240.0;

}  // namespace

std::string_view field_name(Field f) { return kFieldNames[static_cast<int>(f)]; }

int CompoundToken::get(Field f) const {
  switch (f) {
    case Field::Type: return type;
    case Field::Tempo: return tempo;
    case Field::Chord: return chord;
    case Field::BarBeat: return bar_beat;
    case Field::Pitch: return pitch;
    case Field::Duration: return duration;
    case Field::Velocity: return velocity;
  }
  return kNone;
}

void CompoundToken::set(Field f, int value) {
  switch (f) {
    case Field::Type: type = value; break;
    case Field::Tempo: tempo = value; break;
    case Field::Chord: chord = value; break;
    case Field::BarBeat: bar_beat = value; break;
    case Field::Pitch: pitch = value; break;
    case Field::Duration: duration = value; break;
    case Field::Velocity: velocity = value; break;
  }
}

std::array<int, kNumFields> CompoundToken::values() const {
  return {type, tempo, chord, bar_beat, pitch, duration, velocity};
}

CompoundToken CompoundToken::from_values(std::span<const int, kNumFields> v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

CompoundToken CompoundToken::metric(int tempo, int chord, int bar_beat) {
  return {static_cast<int>(TokenType::Metric), tempo, chord, bar_beat, kNone, kNone, kNone};
}

CompoundToken CompoundToken::note(int bar_beat, int pitch, int duration, int velocity) {
  return {static_cast<int>(TokenType::Note), kNone, kNone, bar_beat, pitch, duration, velocity};
}

CompoundToken CompoundToken::eos() {
  return {static_cast<int>(TokenType::EOS), kNone, kNone, kNone, kNone, kNone, kNone};
}

bool is_valid_token(const CompoundToken& t) {
  switch (t.type) {
    case static_cast<int>(TokenType::Note):
      return t.pitch != kNone && t.duration != kNone && t.velocity != kNone && t.tempo == kNone &&
             t.chord == kNone;
    case static_cast<int>(TokenType::Metric):
      return t.pitch == kNone && t.duration == kNone && t.velocity == kNone;
    case static_cast<int>(TokenType::EOS):
      return t.tempo == kNone && t.chord == kNone && t.bar_beat == kNone && t.pitch == kNone &&
             t.duration == kNone && t.velocity == kNone;
    default:
      return false;
  }
}

int duration_class(double beats) {
  int best = 0;
  double best_d = std::abs(beats - kDurationClassBeats[0]);
  for (int k = 1; k < static_cast<int>(kDurationClassBeats.size()); ++k) {
    const double d = std::abs(beats - kDurationClassBeats[k]);
    if (d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

int velocity_class(int velocity) {
  const int v = std::clamp(velocity, 1, 127);
  return std::min(kNumVelocityClasses - 1, (v - 1) * kNumVelocityClasses / 127);
}

int velocity_from_class(int cls) {
  const double width = 127.0 / kNumVelocityClasses;
  return std::clamp(static_cast<int>(std::lround(1.0 + (cls + 0.5) * width)), 1, 127);
}

int tempo_class(double bpm) {
  const double x = std::log(bpm / kTempoLo) / std::log(kTempoHi / kTempoLo) * kNumTempoClasses;
  return std::clamp(static_cast<int>(std::floor(x)), 0, kNumTempoClasses - 1);
}

double tempo_from_class(int cls) {
  return kTempoLo * std::pow(kTempoHi / kTempoLo, (cls + 0.5) / kNumTempoClasses);
}

int chord_class(int root, ChordQuality q) { return root * kNumChordQualities + static_cast<int>(q); }

// ---------------------------------------------------------------------------
// Vocab

std::array<int, kNumFields> Vocab::sizes() const {
  std::array<int, kNumFields> s{};
  for (int f = 0; f < kNumFields; ++f) s[f] = size(static_cast<Field>(f));
  return s;
}

void Vocab::add(Field f, int value) {
  if (value == kNone) return;
  auto& v = values_[static_cast<int>(f)];
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) v.insert(it, value);
}

bool Vocab::contains(Field f, int value) const {
  if (value == kNone) return true;
  const auto& v = values_[static_cast<int>(f)];
  return std::binary_search(v.begin(), v.end(), value);
}

int Vocab::index_of(Field f, int value) const {
  if (value == kNone) return 0;
  const auto& v = values_[static_cast<int>(f)];
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) {
    throw Error(ErrorCode::UnknownIndex,
                std::string(field_name(f)) + " value " + std::to_string(value) + " not in vocabulary");
  }
  return static_cast<int>(it - v.begin()) + 1;
}

int Vocab::value_of(Field f, int index) const {
  if (index == 0) return kNone;
  const auto& v = values_[static_cast<int>(f)];
  if (index < 0 || index > static_cast<int>(v.size())) {
    throw Error(ErrorCode::UnknownIndex,
                std::string(field_name(f)) + " index " + std::to_string(index) + " out of range");
  }
  return v[index - 1];
}

std::array<int, kNumFields> Vocab::to_indices(const CompoundToken& t) const {
  std::array<int, kNumFields> idx{};
  for (int f = 0; f < kNumFields; ++f) idx[f] = index_of(static_cast<Field>(f), t.get(static_cast<Field>(f)));
  return idx;
}

CompoundToken Vocab::from_indices(std::span<const int, kNumFields> idx) const {
  CompoundToken t;
  for (int f = 0; f < kNumFields; ++f) t.set(static_cast<Field>(f), value_of(static_cast<Field>(f), idx[f]));
  return t;
}

std::string Vocab::serialize() const {
  std::ostringstream out;
  out << "# muspike vocabulary\n";
  out << "version " << kVersion << "\n";
  out << "resolution " << resolution_ << "\n";
  for (int f = 0; f < kNumFields; ++f) {
    out << kFieldNames[f] << " NONE 0\n";
    const auto& v = values_[f];
    for (std::size_t i = 0; i < v.size(); ++i) out << kFieldNames[f] << ' ' << v[i] << ' ' << i + 1 << '\n';
  }
  return out.str();
}

Vocab Vocab::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool saw_version = false;
  Vocab vocab;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::MalformedVocab, "line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "version") {
      int v = 0;
      if (!(ls >> v)) fail("bad version");
      if (v != kVersion) fail("unsupported vocabulary version " + std::to_string(v));
      saw_version = true;
      continue;
    }
    if (key == "resolution") {
      if (!(ls >> vocab.resolution_) ||
          std::find(kAllowedResolutions.begin(), kAllowedResolutions.end(), vocab.resolution_) ==
              kAllowedResolutions.end()) {
        fail("bad resolution");
      }
      continue;
    }
    auto it = std::find(kFieldNames.begin(), kFieldNames.end(), key);
    if (it == kFieldNames.end()) fail("unknown field '" + key + "'");
    const int f = static_cast<int>(it - kFieldNames.begin());
    std::string value;
    int index = -1;
    if (!(ls >> value >> index)) fail("expected '<field> <value> <index>'");
    if (value == "NONE") {
      if (index != 0) fail("NONE must have index 0");
      continue;
    }
    int v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size()) fail("bad value");
    if (index != static_cast<int>(vocab.values_[f].size()) + 1) fail("indices must be dense and ordered");
    if (!vocab.values_[f].empty() && vocab.values_[f].back() >= v) fail("values must be ascending");
    vocab.values_[f].push_back(v);
  }
  if (!saw_version) throw Error(ErrorCode::MalformedVocab, "missing version line");
  return vocab;
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

void check_bar(const QuantizedScore& q) {
  if (q.cells_per_bar % q.resolution != 0) {
    throw Error(ErrorCode::UnsupportedTimeSignature, "bar is not a whole number of beats");
  }
  if (q.cells_per_bar > kMaxBarBeats * q.resolution) {
    throw Error(ErrorCode::UnsupportedTimeSignature, "bars longer than 16 beats are not supported");
  }
}

}  // namespace

std::vector<CompoundToken> encode(const QuantizedScore& q) {
  if (q.empty()) throw Error(ErrorCode::EmptyScore, "cannot encode a score without notes");
  check_bar(q);
  const int res = q.resolution;
  int last_onset = 0;
  for (const auto& n : q.notes) last_onset = std::max(last_onset, n.onset_cell);
  const int beats = last_onset / res + 1;

  std::vector<CompoundToken> out;
  out.reserve(q.notes.size() + beats + 1);
  std::size_t next_note = 0;
  std::size_t next_chord = 0;
  int chord = kNone;
  for (int k = 0; k < beats; ++k) {
    const int cell = k * res;
    while (next_chord < q.chords.size() && q.chords[next_chord].cell <= cell) {
      chord = chord_class(q.chords[next_chord].root, q.chords[next_chord].quality);
      ++next_chord;
    }
    const double bpm = tempo_at(q.tempo_map, q.cell_to_seconds(cell));
    out.push_back(CompoundToken::metric(tempo_class(bpm), chord, cell % q.cells_per_bar));
    const auto first = static_cast<std::ptrdiff_t>(out.size());
    while (next_note < q.notes.size() && q.notes[next_note].onset_cell < cell + res) {
      const auto& n = q.notes[next_note++];
      out.push_back(CompoundToken::note(n.onset_cell % q.cells_per_bar, n.pitch,
                                        duration_class(n.duration_beats), velocity_class(n.velocity)));
    }
    // Same cell and pitch: shorter, then quieter first, so the order survives a decode.
    std::sort(out.begin() + first, out.end(), [](const CompoundToken& a, const CompoundToken& b) {
      return std::tie(a.bar_beat, a.pitch, a.duration, a.velocity) <
             std::tie(b.bar_beat, b.pitch, b.duration, b.velocity);
    });
  }
  out.push_back(CompoundToken::eos());
  return out;
}

Score decode(std::span<const CompoundToken> tokens, const Vocab& vocab) {
  auto malformed = [](const std::string& why) { throw Error(ErrorCode::MalformedSequence, why); };
  if (tokens.empty()) malformed("empty sequence");
  if (tokens.back().type != static_cast<int>(TokenType::EOS)) malformed("missing EOS");
  if (tokens.front().type != static_cast<int>(TokenType::Metric)) malformed("sequence must start with a Metric token");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (int f = 0; f < kNumFields; ++f) {
      const int v = tokens[i].get(static_cast<Field>(f));
      if (!vocab.contains(static_cast<Field>(f), v)) {
        throw Error(ErrorCode::UnknownIndex, "token " + std::to_string(i) + ": " +
                                                 std::string(field_name(static_cast<Field>(f))) + " value " +
                                                 std::to_string(v) + " not in vocabulary");
      }
    }
    if (!is_valid_token(tokens[i])) malformed("token " + std::to_string(i) + " violates field validity");
    if (tokens[i].type == static_cast<int>(TokenType::EOS) && i + 1 != tokens.size()) {
      malformed("tokens after EOS");
    }
  }

  const int res = vocab.resolution();
  struct BeatTempo {
    int beat;
    double bpm;
  };
  struct PendingNote {
    double onset_beats;
    double duration_beats;
    int pitch;
    int velocity;
  };
  struct PendingChord {
    int beat;
    int cls;
  };
  std::vector<BeatTempo> tempi;
  std::vector<PendingNote> notes;
  std::vector<PendingChord> chords;
  std::vector<int> positions;

  int beat = -1;
  int beat_pos = 0;
  double bpm = 120.0;
  int chord = kNone;
  for (const auto& t : tokens.first(tokens.size() - 1)) {
    if (t.type == static_cast<int>(TokenType::Metric)) {
      if (t.bar_beat == kNone || t.bar_beat % res != 0) malformed("Metric token off the beat grid");
      ++beat;
      beat_pos = t.bar_beat;
      positions.push_back(t.bar_beat);
      if (t.tempo != kNone) bpm = tempo_from_class(t.tempo);
      if (tempi.empty() || tempi.back().bpm != bpm) tempi.push_back({beat, bpm});
      if (t.chord != kNone && t.chord != chord) {
        if (t.chord < 0 || t.chord >= kNumChordClasses) malformed("chord class out of range");
        chord = t.chord;
        chords.push_back({beat, chord});
      }
      continue;
    }
    // Note token.
    if (t.bar_beat == kNone) malformed("Note token without position");
    const int offset = t.bar_beat - beat_pos;
    if (offset < 0 || offset >= res) malformed("Note token outside its beat");
    if (t.pitch < 0 || t.pitch > 127) malformed("pitch out of range");
    if (t.duration < 0 || t.duration >= static_cast<int>(kDurationClassBeats.size())) {
      malformed("duration class out of range");
    }
    if (t.velocity < 0 || t.velocity >= kNumVelocityClasses) malformed("velocity class out of range");
    notes.push_back({beat + static_cast<double>(offset) / res, kDurationClassBeats[t.duration], t.pitch,
                     velocity_from_class(t.velocity)});
  }

  Score score;
  score.tempo_map.clear();
  double sec = 0.0;
  for (std::size_t i = 0; i < tempi.size(); ++i) {
    if (i > 0) sec += (tempi[i].beat - tempi[i - 1].beat) * 60.0 / tempi[i - 1].bpm;
    score.tempo_map.push_back({i == 0 ? 0.0 : sec, tempi[i].bpm});
  }
  for (const auto& n : notes) {
    const double on = beats_to_seconds(score.tempo_map, n.onset_beats);
    const double off = beats_to_seconds(score.tempo_map, n.onset_beats + n.duration_beats);
    score.notes.push_back({n.pitch, on, off - on, n.velocity, 0, 0});
  }
  for (const auto& c : chords) {
    score.chord_annotations.push_back({beats_to_seconds(score.tempo_map, c.beat),
                                       c.cls / kNumChordQualities,
                                       static_cast<ChordQuality>(c.cls % kNumChordQualities)});
  }

  // Bar length from the first position roll-over, else the smallest bar holding every beat.
  int bar_cells = 0;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1]) bar_cells = std::max(bar_cells, positions[i - 1] + res);
  }
  if (bar_cells == 0) {
    const int max_pos = positions.empty() ? 0 : *std::max_element(positions.begin(), positions.end());
    bar_cells = std::max(4 * res, max_pos + res);
  }
  score.time_signature = {bar_cells / res, 4};
  score.normalize();
  return score;
}

Vocab build_vocab_from_tokens(std::span<const std::vector<CompoundToken>> sequences, int resolution) {
  if (sequences.empty()) throw Error(ErrorCode::EmptyCorpus, "no sequences");
  Vocab vocab(resolution);
  for (const auto& seq : sequences) {
    for (const auto& t : seq) {
      for (int f = 0; f < kNumFields; ++f) vocab.add(static_cast<Field>(f), t.get(static_cast<Field>(f)));
    }
  }
  return vocab;
}

Vocab build_vocab(std::span<const QuantizedScore> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus has no scores");
  const int res = corpus.front().resolution;
  std::vector<std::vector<CompoundToken>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& q : corpus) {
    if (q.resolution != res) throw Error(ErrorCode::InvalidArgument, "corpus mixes grid resolutions");
    seqs.push_back(encode(q));
  }
  return build_vocab_from_tokens(seqs, res);
}

// ---------------------------------------------------------------------------
// Token dump

std::string write_token_dump(std::span<const CompoundToken> tokens, const Vocab& vocab) {
  std::ostringstream out;
  out << "# muspike tokens v1\n# type tempo chord bar_beat pitch duration velocity\n";
  for (const auto& t : tokens) {
    const auto idx = vocab.to_indices(t);
    for (int f = 0; f < kNumFields; ++f) out << (f ? " " : "") << idx[f];
    out << '\n';
  }
  return out.str();
}

std::vector<CompoundToken> read_token_dump(std::string_view text, const Vocab& vocab) {
  std::vector<CompoundToken> tokens;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::array<int, kNumFields> idx{};
    for (auto& v : idx) {
      if (!(ls >> v)) {
        throw Error(ErrorCode::MalformedSequence, "line " + std::to_string(lineno) + ": expected 7 indices");
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw Error(ErrorCode::MalformedSequence, "line " + std::to_string(lineno) + ": more than 7 fields");
    }
    tokens.push_back(vocab.from_indices(idx));
  }
  return tokens;
}

}  // namespace muspike
