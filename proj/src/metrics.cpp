#include "muspike/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "muspike/csv.h"
#include "muspike/error.h"
#include "muspike/tokenizer.h"

namespace muspike {

namespace {

void require_notes(const Score& s) {
  if (s.notes.empty()) throw Error(ErrorCode::EmptyScore, "score has no notes");
}

void require_notes(const QuantizedScore& q) {
  if (q.empty()) throw Error(ErrorCode::EmptyScore, "score has no notes");
}

// Sums over sorted counts so relabelling bins (transposition) gives the same bits.
double entropy_bits(std::span<const double> unsorted) {
  std::vector<double> counts(unsorted.begin(), unsorted.end());
  std::sort(counts.begin(), counts.end());
  double total = 0.0;
  for (double c : counts) total += c;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

constexpr std::array<int, 7> kMajorSteps{0, 2, 4, 5, 7, 9, 11};

// Index of the chord active at `cell`, or -1.
int active_chord(std::span<const CellChord> chords, int cell) {
  int idx = -1;
  for (std::size_t i = 0; i < chords.size() && chords[i].cell <= cell; ++i) idx = static_cast<int>(i);
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pitch

int pitch_count(const Score& score) {
  require_notes(score);
  std::set<int> pitches;
  for (const auto& n : score.notes) pitches.insert(n.pitch);
  return static_cast<int>(pitches.size());
}

int pitch_range(const Score& score) {
  require_notes(score);
  const auto [lo, hi] = std::minmax_element(score.notes.begin(), score.notes.end(),
                                            [](const Note& a, const Note& b) { return a.pitch < b.pitch; });
  return hi->pitch - lo->pitch;
}

double pitch_entropy(const Score& score) {
  require_notes(score);
  std::array<double, 128> counts{};
  for (const auto& n : score.notes) counts[std::clamp(n.pitch, 0, 127)] += 1.0;
  return entropy_bits(counts);
}

double pitch_class_entropy(const Score& score) {
  require_notes(score);
  std::array<double, 12> counts{};
  for (const auto& n : score.notes) counts[((n.pitch % 12) + 12) % 12] += 1.0;
  return entropy_bits(counts);
}

std::array<int, 7> major_scale(int tonic) {
  std::array<int, 7> out{};
  for (int i = 0; i < 7; ++i) out[i] = (tonic + kMajorSteps[i]) % 12;
  return out;
}

namespace {

double in_scale_fraction(const Score& score, std::span<const int> scale) {
  std::array<bool, 12> member{};
  for (int pc : scale) member[((pc % 12) + 12) % 12] = true;
  std::size_t hits = 0;
  for (const auto& n : score.notes) hits += member[n.pitch % 12];
  return static_cast<double>(hits) / static_cast<double>(score.notes.size());
}

}  // namespace

int infer_major_tonic(const Score& score) {
  require_notes(score);
  int best = 0;
  double best_rate = -1.0;
  for (int t = 0; t < 12; ++t) {
    const auto sc = major_scale(t);
    const double r = in_scale_fraction(score, sc);
    if (r > best_rate) {
      best_rate = r;
      best = t;
    }
  }
  return best;
}

double pitch_in_scale_rate(const Score& score, std::optional<std::span<const int>> scale) {
  require_notes(score);
  if (scale) return in_scale_fraction(score, *scale);
  const auto sc = major_scale(infer_major_tonic(score));
  return in_scale_fraction(score, sc);
}

std::vector<MelodyNote> melody(const QuantizedScore& q) {
  std::vector<MelodyNote> out;
  for (const auto& n : q.notes) {
    if (!out.empty() && out.back().cell == n.onset_cell) {
      auto& m = out.back();
      // Highest pitch wins; among equal pitches the longer note.
      if (n.pitch > m.pitch || (n.pitch == m.pitch && n.onset_cell + n.length_cells > m.end_cell)) {
        m = {n.onset_cell, n.pitch, n.onset_cell + n.length_cells, n.duration_beats};
      }
    } else {
      out.push_back({n.onset_cell, n.pitch, n.onset_cell + n.length_cells, n.duration_beats});
    }
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i].end_cell = std::min(out[i].end_cell, out[i + 1].cell);
  return out;
}

double avg_pitch_interval(const QuantizedScore& q) {
  require_notes(q);
  const auto mel = melody(q);
  if (mel.size() < 2) throw Error(ErrorCode::InsufficientNotes, "pitch interval needs two melody notes");
  double sum = 0.0;
  for (std::size_t i = 1; i < mel.size(); ++i) sum += std::abs(mel[i].pitch - mel[i - 1].pitch);
  return sum / static_cast<double>(mel.size() - 1);
}

Polyphony polyphony(const QuantizedScore& q) {
  require_notes(q);
  std::size_t active = 0, poly = 0, voices = 0;
  for (const auto& c : q.cells) {
    if (c.sounding.empty()) continue;
    ++active;
    voices += c.sounding.size();
    if (c.sounding.size() >= 2) ++poly;
  }
  return {static_cast<double>(voices) / static_cast<double>(active),
          static_cast<double>(poly) / static_cast<double>(active)};
}

// ---------------------------------------------------------------------------
// Rhythm

double avg_ioi(const Score& score) {
  require_notes(score);
  std::vector<double> onsets;
  for (const auto& n : score.notes) onsets.push_back(n.onset);
  std::sort(onsets.begin(), onsets.end());
  onsets.erase(std::unique(onsets.begin(), onsets.end()), onsets.end());
  if (onsets.size() < 2) throw Error(ErrorCode::InsufficientNotes, "IOI needs two distinct onsets");
  double sum = 0.0;
  for (std::size_t i = 1; i < onsets.size(); ++i) sum += onsets[i] - onsets[i - 1];
  return sum / static_cast<double>(onsets.size() - 1);
}

Nltm nltm(const QuantizedScore& q) {
  require_notes(q);
  const auto mel = melody(q);
  if (mel.size() < 2) throw Error(ErrorCode::InsufficientNotes, "note length transitions need two melody notes");
  Nltm out;
  for (std::size_t i = 1; i < mel.size(); ++i) {
    out.matrix[duration_class(mel[i - 1].duration_beats)][duration_class(mel[i].duration_beats)] += 1.0;
  }
  int rows = 0;
  double h = 0.0;
  for (auto& row : out.matrix) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total == 0.0) continue;
    h += entropy_bits(row);
    for (double& v : row) v /= total;
    ++rows;
  }
  out.scalar = h / rows;
  return out;
}

double empty_beat_rate(const QuantizedScore& q) {
  require_notes(q);
  const int beats = q.num_beats();
  int empty = 0;
  for (int b = 0; b < beats; ++b) {
    bool any = false;
    for (int c = b * q.resolution; c < (b + 1) * q.resolution && !any; ++c) any = !q.cells[c].onsets.empty();
    empty += !any;
  }
  return static_cast<double>(empty) / beats;
}

double groove_consistency(const QuantizedScore& q) {
  require_notes(q);
  double sum = 0.0;
  int pairs = 0;
  auto count = [&](std::pair<int, int> bar) {
    int n = 0;
    for (int c = bar.first; c < bar.second; ++c) n += !q.cells[c].onsets.empty();
    return n;
  };
  for (std::size_t b = 1; b < q.bars.size(); ++b) {
    const auto prev = q.bars[b - 1];
    const auto cur = q.bars[b];
    const int na = count(prev);
    const int nb = count(cur);
    if (na == 0 || nb == 0) continue;
    int dot = 0;
    for (int k = 0; k < q.cells_per_bar; ++k) {
      dot += !q.cells[prev.first + k].onsets.empty() && !q.cells[cur.first + k].onsets.empty();
    }
    // Binary vectors: |x| = sqrt(count).
    sum += dot / std::sqrt(static_cast<double>(na) * nb);
    ++pairs;
  }
  if (pairs == 0) throw Error(ErrorCode::InsufficientBars, "groove consistency needs two consecutive non-empty bars");
  return sum / pairs;
}

// ---------------------------------------------------------------------------
// Harmony

int interval_consonance(int semitones) {
  switch (((semitones % 12) + 12) % 12) {
    case 0:
    case 3:
    case 4:
    case 7:
    case 8:
    case 9:
      return 1;
    case 5:
      return 0;
    default:
      return -1;
  }
}

double pitch_consonance_score(const QuantizedScore& q, std::span<const CellChord> chords) {
  require_notes(q);
  if (chords.empty()) throw Error(ErrorCode::MissingChords, "no chord annotations");
  const auto mel = melody(q);
  double sum = 0.0;
  int windows = 0;
  for (const auto& m : mel) {
    for (int c = m.cell; c < m.end_cell; ++c) {
      const int ci = active_chord(chords, c);
      if (ci < 0) continue;
      const auto tones = chord_intervals(chords[ci].quality);
      double s = 0.0;
      for (int iv : tones) s += interval_consonance(m.pitch - (chords[ci].root + iv));
      sum += s / static_cast<double>(tones.size());
      ++windows;
    }
  }
  if (windows == 0) throw Error(ErrorCode::InsufficientNotes, "no melody note sounds under a chord");
  return sum / windows;
}

double ctnctr(const QuantizedScore& q, std::span<const CellChord> chords) {
  require_notes(q);
  if (chords.empty()) throw Error(ErrorCode::MissingChords, "no chord annotations");
  const auto mel = melody(q);
  std::vector<int> tone(mel.size(), -1);  // -1 no chord, 0 non-chord, 1 chord tone
  for (std::size_t i = 0; i < mel.size(); ++i) {
    const int ci = active_chord(chords, mel[i].cell);
    if (ci >= 0) tone[i] = is_chord_tone(mel[i].pitch % 12, chords[ci].root, chords[ci].quality) ? 1 : 0;
  }
  int nc = 0, nn = 0, np = 0;
  for (std::size_t i = 0; i < mel.size(); ++i) {
    if (tone[i] == 1) ++nc;
    if (tone[i] != 0) continue;
    ++nn;
    if (i + 1 < mel.size() && tone[i + 1] == 1 && std::abs(mel[i + 1].pitch - mel[i].pitch) <= 2) ++np;
  }
  if (nc + nn == 0) throw Error(ErrorCode::InsufficientNotes, "no melody note sounds under a chord");
  return static_cast<double>(nc + np) / static_cast<double>(nc + nn);
}

std::vector<CellChord> infer_chords(const QuantizedScore& q, int window_beats) {
  if (window_beats <= 0) throw Error(ErrorCode::InvalidArgument, "chord window must be positive");
  std::vector<CellChord> out;
  const int w = window_beats * q.resolution;
  const int n = static_cast<int>(q.cells.size());
  for (int start = 0; start < n; start += w) {
    std::array<bool, 12> present{};
    bool any = false;
    for (int c = start; c < std::min(n, start + w); ++c) {
      for (int p : q.cells[c].sounding) {
        present[p % 12] = true;
        any = true;
      }
    }
    if (!any) {
      if (!out.empty()) out.push_back({start, out.back().root, out.back().quality});
      continue;
    }
    int best = -1, best_root = 0;
    ChordQuality best_q = ChordQuality::Maj;
    for (int root = 0; root < 12; ++root) {
      for (int k = 0; k < kNumChordQualities; ++k) {
        const auto qual = static_cast<ChordQuality>(k);
        int score = 0;
        for (int iv : chord_intervals(qual)) score += present[(root + iv) % 12];
        if (score > best) {
          best = score;
          best_root = root;
          best_q = qual;
        }
      }
    }
    out.push_back({start, best_root, best_q});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

constexpr std::array<std::string_view, kNumMetrics> kMetricNames{
    "pc", "pr", "pi", "pe", "pce", "psr", "polyphony", "polyphony_rate", "ioi", "nltm", "ebr", "gc", "pcs", "ctnctr"};

constexpr std::array<Metric, 8> kPitchMetrics{Metric::PI,  Metric::PR,  Metric::PC, Metric::PolyphonyRate,
                                              Metric::PE,  Metric::PCE, Metric::PSR, Metric::Polyphony};
constexpr std::array<Metric, 4> kRhythmMetrics{Metric::IOI, Metric::NLTM, Metric::EBR, Metric::GC};
constexpr std::array<Metric, 2> kHarmonyMetrics{Metric::CTnCTR, Metric::PCS};

}  // namespace

std::string_view metric_name(Metric m) { return kMetricNames[static_cast<int>(m)]; }

std::optional<Metric> parse_metric(std::string_view name) {
  for (int i = 0; i < kNumMetrics; ++i) {
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  }
  return std::nullopt;
}

MetricReport evaluate_all(const Score& input, const EvalOptions& opts) {
  MetricReport r;
  Score score = input;
  if (opts.drop_drums) std::erase_if(score.notes, [](const Note& n) { return n.channel == 9; });

  auto run = [&](Metric m, auto&& fn) {
    try {
      r[m] = fn();
    } catch (const Error& e) {
      r[m].reset();
      r.errors[std::string(metric_name(m))] = std::string(e.name());
    }
  };
  run(Metric::PC, [&] { return static_cast<double>(pitch_count(score)); });
  run(Metric::PR, [&] { return static_cast<double>(pitch_range(score)); });
  run(Metric::PE, [&] { return pitch_entropy(score); });
  run(Metric::PCE, [&] { return pitch_class_entropy(score); });
  run(Metric::PSR, [&] { return pitch_in_scale_rate(score); });
  run(Metric::IOI, [&] { return avg_ioi(score); });

  std::optional<QuantizedScore> q;
  std::string grid_error;
  try {
    q = quantize(score, opts.resolution);
  } catch (const Error& e) {
    grid_error = e.name();
  }
  const Metric grid_metrics[] = {Metric::PI,  Metric::Polyphony, Metric::PolyphonyRate, Metric::NLTM,
                                 Metric::EBR, Metric::GC,        Metric::PCS,           Metric::CTnCTR};
  if (!q) {
    for (Metric m : grid_metrics) r.errors[std::string(metric_name(m))] = grid_error;
    return r;
  }
  run(Metric::PI, [&] { return avg_pitch_interval(*q); });
  run(Metric::Polyphony, [&] { return polyphony(*q).average; });
  run(Metric::PolyphonyRate, [&] { return polyphony(*q).rate; });
  run(Metric::NLTM, [&] {
    const auto t = nltm(*q);
    r.nltm = t.matrix;
    return t.scalar;
  });
  run(Metric::EBR, [&] { return empty_beat_rate(*q); });
  run(Metric::GC, [&] { return groove_consistency(*q); });

  std::vector<CellChord> chords = q->chords;
  if (chords.empty() && opts.infer_chords && !q->empty()) {
    const int window = opts.chord_window_beats > 0 ? opts.chord_window_beats
                                                    : std::max(1, q->cells_per_bar / q->resolution);
    chords = infer_chords(*q, window);
  }
  run(Metric::PCS, [&] { return pitch_consonance_score(*q, chords); });
  run(Metric::CTnCTR, [&] { return ctnctr(*q, chords); });
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation

AggregateCell summarize(std::span<const double> values) {
  AggregateCell c;
  c.n = static_cast<int>(values.size());
  if (values.empty()) return c;
  double sum = 0.0;
  for (double v : values) sum += v;
  c.mean = sum / c.n;
  double ss = 0.0;
  for (double v : values) ss += (v - c.mean) * (v - c.mean);
  c.std = std::sqrt(ss / c.n);
  return c;
}

AggregateTable aggregate(std::span<const LabeledReport> reports) {
  struct Group {
    std::string dataset, source;
    std::array<std::vector<double>, kNumMetrics> values;
  };
  std::vector<Group> groups;
  for (const auto& lr : reports) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.dataset == lr.dataset && g.source == lr.source; });
    if (it == groups.end()) {
      groups.push_back({lr.dataset, lr.source, {}});
      it = groups.end() - 1;
    }
    for (int m = 0; m < kNumMetrics; ++m) {
      if (lr.report.values[m]) it->values[m].push_back(*lr.report.values[m]);
    }
  }
  AggregateTable table;
  for (const auto& g : groups) {
    AggregateRow row{g.dataset, g.source, {}};
    for (int m = 0; m < kNumMetrics; ++m) {
      if (!g.values[m].empty()) row.cells[m] = summarize(g.values[m]);
    }
    table.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Export

std::string write_report_csv(std::span<const LabeledReport> reports) {
  csv::Row header{"piece", "dataset", "source"};
  for (auto n : kMetricNames) header.emplace_back(n);
  for (int i = 0; i < kNumDurationClasses; ++i) {
    for (int j = 0; j < kNumDurationClasses; ++j) header.push_back("nltm_" + std::to_string(i) + std::to_string(j));
  }
  std::string out = csv::join(header) + "\n";
  for (const auto& lr : reports) {
    csv::Row row{lr.piece, lr.dataset, lr.source};
    for (const auto& v : lr.report.values) row.push_back(csv::format_number(v));
    for (int i = 0; i < kNumDurationClasses; ++i) {
      for (int j = 0; j < kNumDurationClasses; ++j) {
        row.push_back(lr.report.nltm ? csv::format_number((*lr.report.nltm)[i][j]) : "NA");
      }
    }
    out += csv::join(row) + "\n";
  }
  return out;
}

std::vector<LabeledReport> read_report_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  constexpr std::size_t kCols = 3 + kNumMetrics + kNumDurationClasses * kNumDurationClasses;
  if (rows.empty() || rows[0].size() != kCols || rows[0][0] != "piece") {
    throw Error(ErrorCode::InvalidArgument, "not a metric report table");
  }
  std::vector<LabeledReport> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != kCols) throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(r) + " has wrong width");
    LabeledReport lr{row[0], row[1], row[2], {}};
    for (int m = 0; m < kNumMetrics; ++m) lr.report.values[m] = csv::parse_number(row[3 + m]);
    if (row[3 + kNumMetrics] != "NA") {
      Matrix8 mat{};
      for (int i = 0; i < kNumDurationClasses; ++i) {
        for (int j = 0; j < kNumDurationClasses; ++j) {
          mat[i][j] = csv::parse_number(row[3 + kNumMetrics + i * kNumDurationClasses + j]).value_or(0.0);
        }
      }
      lr.report.nltm = mat;
    }
    out.push_back(std::move(lr));
  }
  return out;
}

std::span<const Metric> group_metrics(MetricGroup g) {
  switch (g) {
    case MetricGroup::Pitch:
      return kPitchMetrics;
    case MetricGroup::Rhythm:
      return kRhythmMetrics;
    case MetricGroup::Harmony:
      return kHarmonyMetrics;
  }
  return {};
}

std::string_view group_name(MetricGroup g) {
  switch (g) {
    case MetricGroup::Pitch:
      return "pitch";
    case MetricGroup::Rhythm:
      return "rhythm";
    case MetricGroup::Harmony:
      return "harmony";
  }
  return "";
}

std::string write_aggregate_csv(const AggregateTable& table, MetricGroup g) {
  csv::Row header{"dataset", "source"};
  for (Metric m : group_metrics(g)) {
    const std::string n(metric_name(m));
    header.insert(header.end(), {n + "_mean", n + "_std", n + "_n"});
  }
  std::string out = csv::join(header) + "\n";
  for (const auto& row : table) {
    csv::Row r{row.dataset, row.source};
    for (Metric m : group_metrics(g)) {
      const auto& cell = row.cells[static_cast<int>(m)];
      if (cell) {
        r.insert(r.end(), {csv::format_number(cell->mean), csv::format_number(cell->std), std::to_string(cell->n)});
      } else {
        r.insert(r.end(), {"NA", "NA", "0"});
      }
    }
    out += csv::join(r) + "\n";
  }
  return out;
}

AggregateTable read_aggregate_csv(std::span<const std::string> group_texts) {
  AggregateTable table;
  for (const auto& text : group_texts) {
    const auto rows = csv::parse(text);
    if (rows.empty() || rows[0].size() < 2 || (rows[0].size() - 2) % 3 != 0) {
      throw Error(ErrorCode::InvalidArgument, "not an aggregate table");
    }
    std::vector<Metric> cols;
    for (std::size_t c = 2; c < rows[0].size(); c += 3) {
      const std::string& h = rows[0][c];
      const auto m = h.size() > 5 ? parse_metric(std::string_view(h).substr(0, h.size() - 5)) : std::nullopt;
      if (!m) throw Error(ErrorCode::InvalidArgument, "unknown column " + h);
      cols.push_back(*m);
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() != rows[0].size()) throw Error(ErrorCode::InvalidArgument, "ragged aggregate row");
      auto it = std::find_if(table.begin(), table.end(), [&](const AggregateRow& a) {
        return a.dataset == row[0] && a.source == row[1];
      });
      if (it == table.end()) {
        table.push_back({row[0], row[1], {}});
        it = table.end() - 1;
      }
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto mean = csv::parse_number(row[2 + 3 * k]);
        if (!mean) continue;
        it->cells[static_cast<int>(cols[k])] =
            AggregateCell{*mean, csv::parse_number(row[3 + 3 * k]).value_or(0.0), std::stoi(row[4 + 3 * k])};
      }
    }
  }
  return table;
}

Matrix8 mean_nltm(std::span<const LabeledReport> reports) {
  Matrix8 sum{};
  int n = 0;
  for (const auto& lr : reports) {
    if (!lr.report.nltm) continue;
    ++n;
    for (int i = 0; i < kNumDurationClasses; ++i) {
      for (int j = 0; j < kNumDurationClasses; ++j) sum[i][j] += (*lr.report.nltm)[i][j];
    }
  }
  if (n > 0) {
    for (auto& row : sum) {
      for (double& v : row) v /= n;
    }
  }
  return sum;
}

std::string nltm_pgm(const Matrix8& m) {
  std::ostringstream os;
  os << "P2\n# note length transitions, rows = from class\n"
     << kNumDurationClasses << ' ' << kNumDurationClasses << "\n255\n";
  for (const auto& row : m) {
    for (int j = 0; j < kNumDurationClasses; ++j) {
      if (j) os << ' ';
      os << std::lround(std::clamp(row[j], 0.0, 1.0) * 255.0);
    }
    os << '\n';
  }
  return os.str();
}

std::string nltm_csv(const Matrix8& m) {
  std::string out = "from";
  for (double b : kDurationClassBeats) out += "," + csv::format_number(b);
  out += "\n";
  for (int i = 0; i < kNumDurationClasses; ++i) {
    out += csv::format_number(kDurationClassBeats[i]);
    for (double v : m[i]) out += "," + csv::format_number(v);
    out += "\n";
  }
  return out;
}

}  // namespace muspike
