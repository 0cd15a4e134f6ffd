/**
 * @file midi.cpp
 * @brief SMF reader/writer, tempo-map arithmetic, quantization and trimming.
 */

#include "muspike/midi.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include "muspike/error.h"

namespace muspike {

namespace {

constexpr std::array<int, 3> kMaj{0, 4, 7};
constexpr std::array<int, 3> kMin{0, 3, 7};
constexpr std::array<int, 3> kDim{0, 3, 6};
constexpr std::array<int, 3> kAug{0, 4, 8};
constexpr std::array<int, 4> kDom7{0, 4, 7, 10};
constexpr std::array<int, 3> kSus4{0, 5, 7};

}  // namespace

std::string_view quality_name(ChordQuality q) {
  switch (q) {
    case ChordQuality::Maj: return "maj";
    case ChordQuality::Min: return "min";
    case ChordQuality::Dim: return "dim";
    case ChordQuality::Aug: return "aug";
    case ChordQuality::Dom7: return "dom7";
    case ChordQuality::Other: return "other";
  }
  return "other";
}

ChordQuality parse_quality(std::string_view name) {
  for (int i = 0; i < kNumChordQualities; ++i) {
    auto q = static_cast<ChordQuality>(i);
    if (quality_name(q) == name) return q;
  }
  throw Error(ErrorCode::MalformedSidecar, "unknown chord quality '" + std::string(name) + "'");
}

std::span<const int> chord_intervals(ChordQuality q) {
  switch (q) {
    case ChordQuality::Maj: return kMaj;
    case ChordQuality::Min: return kMin;
    case ChordQuality::Dim: return kDim;
    case ChordQuality::Aug: return kAug;
    case ChordQuality::Dom7: return kDom7;
    case ChordQuality::Other: return kSus4;
  }
  return kMaj;
}

bool is_chord_tone(int pc, int root, ChordQuality q) {
  const int rel = ((pc - root) % 12 + 12) % 12;
  for (int iv : chord_intervals(q)) {
    if (iv == rel) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Score

void Score::normalize() {
  std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
    return std::tie(a.onset, a.pitch, a.track, a.channel, a.duration, a.velocity) <
           std::tie(b.onset, b.pitch, b.track, b.channel, b.duration, b.velocity);
  });
  std::stable_sort(tempo_map.begin(), tempo_map.end(),
                   [](const TempoEvent& a, const TempoEvent& b) { return a.time < b.time; });
  // Later events at the same instant win.
  std::vector<TempoEvent> merged;
  for (const auto& ev : tempo_map) {
    if (!merged.empty() && merged.back().time == ev.time) {
      merged.back() = ev;
    } else {
      merged.push_back(ev);
    }
  }
  if (merged.empty() || merged.front().time > 0.0) {
    merged.insert(merged.begin(), TempoEvent{0.0, 120.0});
  }
  merged.front().time = 0.0;
  tempo_map = std::move(merged);
  std::stable_sort(chord_annotations.begin(), chord_annotations.end(),
                   [](const ChordAnnotation& a, const ChordAnnotation& b) { return a.onset < b.onset; });
}

double Score::end_time() const {
  double end = 0.0;
  for (const auto& n : notes) end = std::max(end, n.onset + n.duration);
  return end;
}

double seconds_to_beats(std::span<const TempoEvent> tempo_map, double seconds) {
  if (tempo_map.empty()) return seconds * 120.0 / 60.0;
  double beats = 0.0;
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    const auto& seg = tempo_map[i];
    const bool last = i + 1 == tempo_map.size();
    if (last || seconds < tempo_map[i + 1].time) {
      return beats + (seconds - seg.time) * seg.bpm / 60.0;
    }
    beats += (tempo_map[i + 1].time - seg.time) * seg.bpm / 60.0;
  }
  return beats;
}

double beats_to_seconds(std::span<const TempoEvent> tempo_map, double beats) {
  if (tempo_map.empty()) return beats * 60.0 / 120.0;
  double seg_beats = 0.0;
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    const auto& seg = tempo_map[i];
    if (i + 1 == tempo_map.size()) {
      return seg.time + (beats - seg_beats) * 60.0 / seg.bpm;
    }
    const double span = (tempo_map[i + 1].time - seg.time) * seg.bpm / 60.0;
    if (beats < seg_beats + span) {
      return seg.time + (beats - seg_beats) * 60.0 / seg.bpm;
    }
    seg_beats += span;
  }
  return 0.0;
}

double tempo_at(std::span<const TempoEvent> tempo_map, double seconds) {
  double bpm = tempo_map.empty() ? 120.0 : tempo_map.front().bpm;
  for (const auto& ev : tempo_map) {
    if (ev.time <= seconds) bpm = ev.bpm;
  }
  return bpm;
}

// ---------------------------------------------------------------------------
// SMF reading

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, ErrorCode on_eof) : data_(data), on_eof_(on_eof) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint8_t peek() {
    need(1);
    return data_[pos_];
  }
  std::uint16_t u16be() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32be() {
    need(4);
    std::uint32_t v = (std::uint32_t{data_[pos_]} << 24) | (std::uint32_t{data_[pos_ + 1]} << 16) |
                      (std::uint32_t{data_[pos_ + 2]} << 8) | std::uint32_t{data_[pos_ + 3]};
    pos_ += 4;
    return v;
  }
  /// Variable-length quantity: 7 bits per byte, high bit = continuation, max 4 bytes.
  std::uint32_t vlq() {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      value = (value << 7) | (b & 0x7Fu);
      if ((b & 0x80u) == 0) return value;
    }
    throw Error(on_eof_, "variable-length quantity longer than 4 bytes");
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(on_eof_, "unexpected end of data");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorCode on_eof_;
};

struct RawTempo {
  std::uint64_t tick;
  int order;
  std::uint32_t us_per_quarter;
};

struct RawNote {
  std::uint64_t start;
  std::uint64_t end;
  int pitch;
  int velocity;
  int track;
  int channel;
};

struct TrackScan {
  std::vector<RawNote> notes;
  std::vector<RawTempo> tempos;
  std::optional<std::pair<std::uint64_t, TimeSignature>> time_signature;
};

void scan_track(std::span<const std::uint8_t> chunk, int track, int order_base, TrackScan& out) {
  ByteReader rd(chunk, ErrorCode::TruncatedTrack);
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  // Open notes keyed by (channel, pitch).
  std::map<std::pair<int, int>, std::pair<std::uint64_t, int>> open;
  int order = order_base;

  auto close = [&](int channel, int pitch, std::uint64_t at) {
    auto it = open.find({channel, pitch});
    if (it == open.end()) return;
    if (at > it->second.first) {
      out.notes.push_back({it->second.first, at, pitch, it->second.second, track, channel});
    }
    open.erase(it);
  };

  while (!rd.done()) {
    tick += rd.vlq();
    std::uint8_t status = rd.peek();
    if (status & 0x80u) {
      rd.u8();
    } else {
      if (running == 0) throw Error(ErrorCode::TruncatedTrack, "data byte without running status");
      status = running;
    }

    if (status == 0xFF) {
      const std::uint8_t type = rd.u8();
      const std::uint32_t len = rd.vlq();
      auto data = rd.bytes(len);
      if (type == 0x2F) break;  // end of track
      if (type == 0x51 && len == 3) {
        const std::uint32_t us = (std::uint32_t{data[0]} << 16) | (std::uint32_t{data[1]} << 8) | data[2];
        if (us > 0) out.tempos.push_back({tick, order++, us});
      } else if (type == 0x58 && len >= 2) {
        if (!out.time_signature || tick < out.time_signature->first) {
          const int den = 1 << std::min<int>(data[1], 6);
          if (data[0] > 0) out.time_signature = {{tick, TimeSignature{data[0], den}}};
        }
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      rd.bytes(rd.vlq());
      running = 0;
      continue;
    }
    if (status >= 0xF0) throw Error(ErrorCode::TruncatedTrack, "unexpected system message in track");

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    if (kind == 0xC0 || kind == 0xD0) {
      rd.u8();
      continue;
    }
    const int d1 = rd.u8() & 0x7F;
    const int d2 = rd.u8() & 0x7F;
    if (kind == 0x90 && d2 > 0) {
      // A repeated note-on truncates the sounding note of the same pitch.
      close(channel, d1, tick);
      open[{channel, d1}] = {tick, d2};
    } else if (kind == 0x80 || kind == 0x90) {
      close(channel, d1, tick);
    }
  }
  // Notes still open at the end of the track end there.
  std::vector<std::pair<int, int>> keys;
  for (const auto& [key, _] : open) keys.push_back(key);
  for (const auto& [ch, p] : keys) close(ch, p, tick);
}

}  // namespace

Score parse_midi(std::span<const std::uint8_t> bytes) {
  ByteReader rd(bytes, ErrorCode::MalformedHeader);
  if (bytes.size() < 14) throw Error(ErrorCode::MalformedHeader, "file shorter than a header chunk");
  auto magic = rd.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), "MThd")) {
    throw Error(ErrorCode::MalformedHeader, "missing MThd magic");
  }
  const std::uint32_t header_len = rd.u32be();
  if (header_len < 6 || header_len > bytes.size() - 8) {
    throw Error(ErrorCode::MalformedHeader, "bad header length " + std::to_string(header_len));
  }
  const std::uint16_t format = rd.u16be();
  const std::uint16_t ntracks = rd.u16be();
  const std::uint16_t division = rd.u16be();
  rd.bytes(header_len - 6);
  if (format > 1) throw Error(ErrorCode::UnsupportedFormat, "SMF format " + std::to_string(format));
  if (division & 0x8000u) throw Error(ErrorCode::UnsupportedFormat, "SMPTE time division");
  if (division == 0) throw Error(ErrorCode::MalformedHeader, "zero ticks per quarter");

  TrackScan scan;
  int track = 0;
  ByteReader chunks(bytes.subspan(rd.pos()), ErrorCode::TruncatedTrack);
  while (track < ntracks) {
    if (chunks.done()) {
      throw Error(ErrorCode::TruncatedTrack,
                  "expected " + std::to_string(ntracks) + " tracks, found " + std::to_string(track));
    }
    if (chunks.remaining() < 8) throw Error(ErrorCode::TruncatedTrack, "truncated chunk header");
    auto id = chunks.bytes(4);
    const std::uint32_t len = chunks.u32be();
    if (len > chunks.remaining()) {
      throw Error(ErrorCode::TruncatedTrack, "track " + std::to_string(track) + " length exceeds file");
    }
    auto body = chunks.bytes(len);
    if (!std::equal(id.begin(), id.end(), "MTrk")) continue;  // unknown chunk
    scan_track(body, track, track * 1'000'000, scan);
    ++track;
  }

  const double tpq = division;
  std::sort(scan.tempos.begin(), scan.tempos.end(), [](const RawTempo& a, const RawTempo& b) {
    return std::tie(a.tick, a.order) < std::tie(b.tick, b.order);
  });
  // Tempo segments in ticks; the last event at a tick wins.
  struct Seg {
    std::uint64_t tick;
    double sec;
    std::uint32_t us;
  };
  std::vector<Seg> segs{{0, 0.0, 500000}};
  for (const auto& t : scan.tempos) {
    const Seg& prev = segs.back();
    const double sec = prev.sec + static_cast<double>(t.tick - prev.tick) * prev.us / (1e6 * tpq);
    if (t.tick == prev.tick) {
      segs.back().us = t.us_per_quarter;
    } else {
      segs.push_back({t.tick, sec, t.us_per_quarter});
    }
  }
  auto to_seconds = [&](std::uint64_t tick) {
    auto it = std::upper_bound(segs.begin(), segs.end(), tick,
                               [](std::uint64_t v, const Seg& s) { return v < s.tick; });
    const Seg& s = *std::prev(it);
    return s.sec + static_cast<double>(tick - s.tick) * s.us / (1e6 * tpq);
  };

  Score score;
  score.ticks_per_quarter = division;
  score.tempo_map.clear();
  for (const auto& s : segs) score.tempo_map.push_back({s.sec, 60e6 / s.us});
  if (scan.time_signature) score.time_signature = scan.time_signature->second;
  for (const auto& n : scan.notes) {
    const double on = to_seconds(n.start);
    const double off = to_seconds(n.end);
    score.notes.push_back({n.pitch, on, off - on, n.velocity, n.track, n.channel});
  }
  score.normalize();
  return score;
}

// ---------------------------------------------------------------------------
// SMF writing

namespace {

void put_u16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

struct OutEvent {
  std::uint64_t tick;
  int rank;  // meta < note-off < note-on at the same tick
  std::uint64_t seq;
  std::vector<std::uint8_t> payload;
};

}  // namespace

std::vector<std::uint8_t> write_midi(const Score& score) {
  const int tpq = score.ticks_per_quarter > 0 ? std::min(score.ticks_per_quarter, 0x7FFF) : 480;
  auto to_tick = [&](double seconds) -> std::uint64_t {
    const double t = seconds_to_beats(score.tempo_map, seconds) * tpq;
    return t <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(t));
  };

  std::vector<OutEvent> events;
  std::uint64_t seq = 0;
  {
    const auto& ts = score.time_signature;
    int dd = 0;
    while ((1 << dd) < ts.denominator && dd < 6) ++dd;
    events.push_back({0, 0, seq++, {0xFF, 0x58, 0x04, static_cast<std::uint8_t>(ts.numerator),
                                    static_cast<std::uint8_t>(dd), 24, 8}});
  }
  for (const auto& t : score.tempo_map) {
    const auto us = static_cast<std::uint32_t>(std::clamp<long long>(std::llround(60e6 / t.bpm), 1, 0xFFFFFF));
    events.push_back({to_tick(t.time), 0, seq++,
                      {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us >> 16),
                       static_cast<std::uint8_t>(us >> 8), static_cast<std::uint8_t>(us)}});
  }
  for (const auto& n : score.notes) {
    const auto ch = static_cast<std::uint8_t>(n.channel & 0x0F);
    const auto pitch = static_cast<std::uint8_t>(std::clamp(n.pitch, 0, 127));
    const auto vel = static_cast<std::uint8_t>(std::clamp(n.velocity, 1, 127));
    const std::uint64_t on = to_tick(n.onset);
    const std::uint64_t off = std::max(on + 1, to_tick(n.onset + n.duration));
    events.push_back({on, 2, seq++, {static_cast<std::uint8_t>(0x90 | ch), pitch, vel}});
    events.push_back({off, 1, seq++, {static_cast<std::uint8_t>(0x80 | ch), pitch, 0}});
  }
  std::sort(events.begin(), events.end(), [](const OutEvent& a, const OutEvent& b) {
    return std::tie(a.tick, a.rank, a.seq) < std::tie(b.tick, b.rank, b.seq);
  });

  std::vector<std::uint8_t> track;
  std::uint64_t last = 0;
  for (const auto& e : events) {
    put_vlq(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.insert(track.end(), e.payload.begin(), e.payload.end());
  }
  put_vlq(track, 0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_u32be(out, 6);
  put_u16be(out, 0);
  put_u16be(out, 1);
  put_u16be(out, static_cast<std::uint16_t>(tpq));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32be(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

// ---------------------------------------------------------------------------
// Chord sidecar

std::vector<ChordAnnotation> parse_chord_sidecar(std::string_view text) {
  std::vector<ChordAnnotation> chords;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::MalformedSidecar, "line " + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() != 3) fail("expected 3 tab-separated fields");
    ChordAnnotation c;
    try {
      std::size_t used = 0;
      c.onset = std::stod(fields[0], &used);
      if (used != fields[0].size()) fail("bad onset");
    } catch (const std::logic_error&) {
      fail("bad onset");
    }
    auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), c.root);
    if (ec != std::errc{} || p != fields[1].data() + fields[1].size()) fail("bad root");
    if (c.onset < 0.0 || !std::isfinite(c.onset)) fail("negative onset");
    if (c.root < 0 || c.root > 11) fail("root pitch class out of range");
    c.quality = parse_quality(fields[2]);
    chords.push_back(c);
  }
  std::stable_sort(chords.begin(), chords.end(),
                   [](const ChordAnnotation& a, const ChordAnnotation& b) { return a.onset < b.onset; });
  return chords;
}

std::string write_chord_sidecar(std::span<const ChordAnnotation> chords) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& c : chords) {
    out << c.onset << '\t' << c.root << '\t' << quality_name(c.quality) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Quantization

int cells_per_bar(TimeSignature ts, int resolution) {
  if (ts.numerator <= 0 || ts.denominator <= 0) {
    throw Error(ErrorCode::UnsupportedTimeSignature, "non-positive time signature");
  }
  const int num = ts.numerator * 4 * resolution;
  if (num % ts.denominator != 0) {
    throw Error(ErrorCode::UnsupportedTimeSignature,
                std::to_string(ts.numerator) + "/" + std::to_string(ts.denominator) +
                    " does not fill whole cells at resolution " + std::to_string(resolution));
  }
  return num / ts.denominator;
}

int snap_to_cell(double beats, int resolution) {
  // Half-way points go to the later cell; the epsilon absorbs tempo-map rounding.
  return static_cast<int>(std::floor(beats * resolution + 0.5 + 1e-9));
}

double QuantizedScore::cell_to_seconds(int cell) const {
  return beats_to_seconds(tempo_map, static_cast<double>(cell) / resolution);
}

QuantizedScore quantize(const Score& score, int resolution) {
  if (std::find(kAllowedResolutions.begin(), kAllowedResolutions.end(), resolution) ==
      kAllowedResolutions.end()) {
    throw Error(ErrorCode::InvalidArgument, "resolution " + std::to_string(resolution) +
                                                " not in {1,2,4,8,12,16}");
  }
  QuantizedScore q;
  q.resolution = resolution;
  q.time_signature = score.time_signature;
  q.cells_per_bar = cells_per_bar(score.time_signature, resolution);
  q.tempo_map = score.tempo_map;
  if (q.tempo_map.empty()) q.tempo_map.push_back(TempoEvent{});

  int last_cell = 0;
  for (const auto& n : score.notes) {
    const double on_beats = seconds_to_beats(q.tempo_map, n.onset);
    const double off_beats = seconds_to_beats(q.tempo_map, n.onset + n.duration);
    QuantizedNote qn;
    qn.pitch = n.pitch;
    qn.velocity = n.velocity;
    qn.track = n.track;
    qn.onset_cell = std::max(0, snap_to_cell(on_beats, resolution));
    qn.length_cells = std::max(1, snap_to_cell(off_beats, resolution) - qn.onset_cell);
    qn.duration_beats = off_beats - on_beats;
    last_cell = std::max(last_cell, qn.onset_cell + qn.length_cells);
    q.notes.push_back(qn);
  }
  std::stable_sort(q.notes.begin(), q.notes.end(), [](const QuantizedNote& a, const QuantizedNote& b) {
    return std::tie(a.onset_cell, a.pitch) < std::tie(b.onset_cell, b.pitch);
  });
  if (q.notes.empty()) return q;

  const int nbars = (last_cell + q.cells_per_bar - 1) / q.cells_per_bar;
  q.cells.resize(static_cast<std::size_t>(nbars) * q.cells_per_bar);
  for (int b = 0; b < nbars; ++b) q.bars.emplace_back(b * q.cells_per_bar, (b + 1) * q.cells_per_bar);
  for (const auto& n : q.notes) {
    q.cells[n.onset_cell].onsets.push_back(n.pitch);
    for (int c = n.onset_cell; c < n.onset_cell + n.length_cells; ++c) q.cells[c].sounding.push_back(n.pitch);
  }
  for (auto& cell : q.cells) {
    for (auto* v : {&cell.sounding, &cell.onsets}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
  }
  for (const auto& c : score.chord_annotations) {
    const int cell = std::max(0, snap_to_cell(seconds_to_beats(q.tempo_map, c.onset), resolution));
    if (!q.chords.empty() && q.chords.back().cell == cell) {
      q.chords.back() = {cell, c.root, c.quality};
    } else {
      q.chords.push_back({cell, c.root, c.quality});
    }
  }
  return q;
}

// ---------------------------------------------------------------------------
// Trimming

Score trim(const Score& score, double max_seconds) {
  if (!(max_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_seconds must be positive");
  Score out = score;
  out.notes.clear();
  for (const auto& n : score.notes) {
    if (n.onset >= max_seconds) continue;
    Note kept = n;
    if (kept.onset + kept.duration > max_seconds) kept.duration = max_seconds - kept.onset;
    out.notes.push_back(kept);
  }
  std::erase_if(out.chord_annotations, [&](const ChordAnnotation& c) { return c.onset >= max_seconds; });
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

std::vector<double> synthesize(const Score& score, int sample_rate) {
  if (sample_rate != 22050 && sample_rate != 44100) {
    throw Error(ErrorCode::InvalidArgument, "sample rate must be 22050 or 44100");
  }
  if (score.notes.empty()) throw Error(ErrorCode::EmptyScore, "nothing to render");
  const double sr = sample_rate;
  std::size_t total = 0;
  for (const auto& n : score.notes) {
    total = std::max<std::size_t>(total, static_cast<std::size_t>(std::llround((n.onset + n.duration) * sr)));
  }
  std::vector<double> mix(total, 0.0);
  const double ramp_max = 0.010 * sr;
  for (const auto& n : score.notes) {
    const auto start = static_cast<std::size_t>(std::llround(n.onset * sr));
    const auto end = std::min(total, static_cast<std::size_t>(std::llround((n.onset + n.duration) * sr)));
    if (end <= start) continue;
    const double len = static_cast<double>(end - start);
    const double ramp = std::min(ramp_max, len / 2.0);
    const double amp = n.velocity / 127.0;
    const double w = 2.0 * M_PI * pitch_to_hz(n.pitch) / sr;
    for (std::size_t i = start; i < end; ++i) {
      const double k = static_cast<double>(i - start);
      const double env = std::min({1.0, k / ramp, (len - k) / ramp});
      mix[i] += amp * env * std::sin(w * k);
    }
  }
  return mix;
}

std::vector<std::uint8_t> render_wav(const Score& score, int sample_rate) {
  const std::vector<double> mix = synthesize(score, sample_rate);
  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  const double target = std::pow(10.0, -1.0 / 20.0);
  const double gain = peak > 0.0 ? target / peak : 0.0;

  const auto data_bytes = static_cast<std::uint32_t>(mix.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  auto put_u32 = [&](std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  auto put_u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto put_tag = [&](const char* tag) { out.insert(out.end(), tag, tag + 4); };

  put_tag("RIFF");
  put_u32(36 + data_bytes);
  put_tag("WAVE");
  put_tag("fmt ");
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sample_rate));
  put_u32(static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  put_tag("data");
  put_u32(data_bytes);
  for (double v : mix) {
    const long s = std::lround(std::clamp(v * gain, -1.0, 1.0) * 32767.0);
    put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  return out;
}

}  // namespace muspike
