/**
 * @file study.cpp
 * @brief Study curation, assignment, event log and simulation.
 */
#include "muspike/study.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "muspike/error.h"
#include "muspike/rng.h"

namespace muspike::study {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, std::string_view data, bool sync) {
  const fs::path tmp = p.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      ::close(fd);
      throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    off += static_cast<std::size_t>(n);
  }
  if (sync) ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, p);
}

void write_bytes(const fs::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

int gi(Group g) { return static_cast<int>(g); }

}  // namespace

std::string_view group_code(Group g) {
  switch (g) {
    case Group::Normal: return "N";
    case Group::Amateur: return "A";
    case Group::Expert: return "E";
  }
  return "N";
}

std::optional<Group> parse_group(std::string_view s) {
  std::string l(s);
  for (char& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "n" || l == "normal") return Group::Normal;
  if (l == "a" || l == "amateur") return Group::Amateur;
  if (l == "e" || l == "expert") return Group::Expert;
  return std::nullopt;
}

std::optional<std::string_view> find_forbidden_term(std::string_view payload) {
  for (auto term : kForbiddenTerms) {
    if (payload.find(term) != std::string_view::npos) return term;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<Item> questionnaire_for(Group g) {
  struct Row {
    const char* id;
    const char* text;
    int min_group;  // 0 all, 1 amateur and expert, 2 expert only
  };
  static const Row rows[] = {
      {"Q1", "The music sounds pleasant.", 0},
      {"Q2", "The music sounds natural and fluent.", 0},
      {"Q3", "The music conveys some emotion.", 0},
      {"Q4", "The rhythm is consistent.", 0},
      {"Q5", "The music has a clear structure or repeated segments.", 1},
      {"Q6", "The music shows a recognizable style.", 1},
      {"Q7", "The music exhibits tonal coherence.", 2},
      {"Q8", "The harmonic progression is natural.", 2},
      {"Q9", "The melody exhibits melodic motivation.", 2},
      {"Q10", "The music sounds novel or original.", 0},
      {"Q11", "The music left a strong impression.", 0},
      {"Q12", "The music reminded me of personal experiences.", 0},
      {"Q13", "I like the music.", 0},
  };
  std::vector<Item> out;
  for (const auto& r : rows) {
    if (gi(g) >= r.min_group) out.push_back({r.id, r.text, r.text, false});
  }
  // The table wording names a source label; participants see a neutral one.
  out.push_back({"Q14", "Who composed it (Human / AI / Uncertain)", "Who composed it (a person / AI / Uncertain)", true});
  return out;
}

std::vector<std::pair<std::string, std::string>> turing_options() {
  return {{"H", "A person"}, {"AI", "AI"}, {"U", "Uncertain"}};
}

// ---------------------------------------------------------------------------
// Curation

std::vector<CuratedPiece> curate(std::span<const CatalogEntry> catalog, const CurationOptions& opts) {
  std::vector<std::string> sources(kModels.begin(), kModels.end());
  sources.emplace_back(kHumanSource);
  for (const auto& e : catalog) {
    if (std::find(kDatasets.begin(), kDatasets.end(), e.dataset) == kDatasets.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown dataset '" + e.dataset + "' in " + e.origin);
    }
    if (std::find(sources.begin(), sources.end(), e.source) == sources.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown source '" + e.source + "' in " + e.origin);
    }
  }
  Rng rng(opts.seed);
  std::vector<CuratedPiece> out;
  std::set<std::string> ids;
  for (auto dataset : kDatasets) {
    for (const auto& source : sources) {
      const int need = source == kHumanSource ? opts.human_per_dataset : opts.per_model_cell;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (catalog[i].dataset == dataset && catalog[i].source == source) idx.push_back(i);
      }
      if (static_cast<int>(idx.size()) < need) {
        throw Error(ErrorCode::InsufficientCatalog, "cell (" + std::string(dataset) + ", " + source + ") has " +
                                                        std::to_string(idx.size()) + " pieces, needs " +
                                                        std::to_string(need));
      }
      // Partial Fisher-Yates: the first `need` slots are a uniform sample.
      for (int k = 0; k < need; ++k) {
        std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
      }
      for (int k = 0; k < need; ++k) {
        const auto& e = catalog[idx[k]];
        std::string id;
        do {
          char buf[16];
          std::snprintf(buf, sizeof buf, "pc%08llx", static_cast<unsigned long long>(rng.next() & 0xffffffffULL));
          id = buf;
        } while (!ids.insert(id).second);
        CuratedPiece cp;
        cp.score = trim(e.score, opts.max_seconds);
        cp.piece = {id, std::string(dataset), source, e.origin, std::min(cp.score.end_time(), opts.max_seconds), true};
        out.push_back(std::move(cp));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const CuratedPiece& a, const CuratedPiece& b) { return a.piece.id < b.piece.id; });
  return out;
}

std::vector<CatalogEntry> synthetic_catalog(std::uint64_t seed, int per_model_cell, int human_per_dataset,
                                            double seconds) {
  Rng rng(seed);
  std::vector<CatalogEntry> out;
  auto make = [&](const std::string& dataset, const std::string& source, int k) {
    CatalogEntry e;
    e.origin = "synthetic:" + dataset + "/" + source + "/" + std::to_string(k);
    e.dataset = dataset;
    e.source = source;
    for (double t = 0.0; t < seconds; t += 0.25 * rng.range(1, 4)) {
      e.score.notes.push_back({rng.range(48, 84), t, 0.25 * rng.range(1, 6), rng.range(40, 110)});
    }
    e.score.normalize();
    out.push_back(std::move(e));
  };
  for (auto d : kDatasets) {
    for (auto m : kModels) {
      for (int k = 0; k < per_model_cell; ++k) make(std::string(d), std::string(m), k);
    }
    for (int k = 0; k < human_per_dataset; ++k) make(std::string(d), std::string(kHumanSource), k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization helpers

namespace {

json config_to_json(const StudyConfig& c) {
  return json{{"min_total", c.quota.min_total},
              {"min_group", c.quota.min_group},
              {"lease_seconds", c.lease_seconds},
              {"cohort", c.cohort},
              {"workload_cap", c.workload_cap},
              {"seed", c.seed},
              {"snapshot_every", c.snapshot_every},
              {"sync_writes", c.sync_writes}};
}

StudyConfig config_from_json(const json& j) {
  StudyConfig c;
  c.quota.min_total = j.at("min_total").get<int>();
  c.quota.min_group = j.at("min_group").get<std::array<int, kNumGroups>>();
  c.lease_seconds = j.at("lease_seconds").get<std::int64_t>();
  c.cohort = j.at("cohort").get<std::array<int, kNumGroups>>();
  c.workload_cap = j.at("workload_cap").get<std::array<int, kNumGroups>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.snapshot_every = j.at("snapshot_every").get<int>();
  c.sync_writes = j.at("sync_writes").get<bool>();
  return c;
}

json piece_to_json(const Piece& p) {
  return json{{"id", p.id},         {"dataset", p.dataset},   {"source", p.source},
              {"origin", p.origin}, {"duration", p.duration}, {"blinded", p.blinded}};
}

Piece piece_from_json(const json& j) {
  return Piece{j.at("id").get<std::string>(),     j.at("dataset").get<std::string>(),
               j.at("source").get<std::string>(), j.at("origin").get<std::string>(),
               j.at("duration").get<double>(),    j.at("blinded").get<bool>()};
}

}  // namespace

// ---------------------------------------------------------------------------
// State

struct Study::State {
  std::uint64_t seq = 0;
  std::vector<Participant> participants;
  std::map<std::string, std::size_t> participant_index;
  std::vector<std::vector<char>> rated;  // [participant][piece], derived
  std::vector<PieceCounts> counts;
  std::set<std::pair<std::string, std::string>> issued;
  std::vector<Response> responses;
  int expired = 0;

  explicit State(std::size_t pieces) : counts(pieces) {}

  json to_json(const std::vector<Piece>& pieces) const {
    json ps = json::array();
    for (const auto& p : participants) {
      json cur = nullptr;
      if (p.current) {
        cur = json{{"piece", p.current->piece_id},
                   {"issued_at", p.current->issued_at},
                   {"lease_until", p.current->lease_until}};
      }
      ps.push_back(json{{"id", p.id},
                        {"group", group_code(p.group)},
                        {"registered_at", p.registered_at},
                        {"completed", p.completed},
                        {"current", cur},
                        {"last_dataset", p.last_dataset}});
    }
    json cs = json::array();
    for (std::size_t i = 0; i < counts.size(); ++i) {
      cs.push_back(json{{"piece", pieces[i].id}, {"rated", counts[i].rated}, {"leased", counts[i].leased}});
    }
    json iss = json::array();
    for (const auto& [p, q] : issued) iss.push_back(json::array({p, q}));
    json rs = json::array();
    for (const auto& r : responses) {
      rs.push_back(json{{"participant", r.participant_id},
                        {"piece", r.piece_id},
                        {"likert", r.likert},
                        {"turing", turing_answer_code(r.turing)},
                        {"t", r.timestamp}});
    }
    return json{{"seq", seq}, {"participants", ps}, {"counts", cs}, {"issued", iss}, {"responses", rs},
                {"expired", expired}};
  }

  static std::unique_ptr<State> from_json(const json& j, const std::vector<Piece>& pieces,
                                          const std::map<std::string, std::size_t>& piece_index) {
    auto s = std::make_unique<State>(pieces.size());
    s->seq = j.at("seq").get<std::uint64_t>();
    s->expired = j.at("expired").get<int>();
    for (const auto& pj : j.at("participants")) {
      Participant p;
      p.id = pj.at("id").get<std::string>();
      p.group = parse_group(pj.at("group").get<std::string>()).value();
      p.registered_at = pj.at("registered_at").get<std::int64_t>();
      p.completed = pj.at("completed").get<std::vector<std::string>>();
      if (!pj.at("current").is_null()) {
        const auto& c = pj.at("current");
        p.current = Assignment{c.at("piece").get<std::string>(), c.at("issued_at").get<std::int64_t>(),
                               c.at("lease_until").get<std::int64_t>()};
      }
      p.last_dataset = pj.at("last_dataset").get<std::string>();
      std::vector<char> flags(pieces.size(), 0);
      for (const auto& id : p.completed) flags.at(piece_index.at(id)) = 1;
      s->participant_index[p.id] = s->participants.size();
      s->participants.push_back(std::move(p));
      s->rated.push_back(std::move(flags));
    }
    const auto& cs = j.at("counts");
    if (cs.size() != pieces.size()) throw Error(ErrorCode::CorruptLog, "snapshot piece count mismatch");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      s->counts[i].rated = cs[i].at("rated").get<std::array<int, kNumGroups>>();
      s->counts[i].leased = cs[i].at("leased").get<std::array<int, kNumGroups>>();
    }
    for (const auto& pr : j.at("issued")) s->issued.insert({pr.at(0).get<std::string>(), pr.at(1).get<std::string>()});
    for (const auto& rj : j.at("responses")) {
      Response r;
      r.participant_id = rj.at("participant").get<std::string>();
      r.piece_id = rj.at("piece").get<std::string>();
      r.likert = rj.at("likert").get<std::map<std::string, int>>();
      r.turing = parse_turing_answer(rj.at("turing").get<std::string>()).value();
      r.timestamp = rj.at("t").get<std::int64_t>();
      s->responses.push_back(std::move(r));
    }
    return s;
  }
};

namespace {

// Folds one event into the state. Events are trusted once logged; structural
// problems mean the log is corrupt.
void fold(Study::State* s, const json& e, const std::vector<Piece>& pieces,
          const std::map<std::string, std::size_t>& piece_index) {
  if (e.at("v").get<int>() != kSchemaVersion) throw Error(ErrorCode::CorruptLog, "unsupported event schema");
  const auto seq = e.at("seq").get<std::uint64_t>();
  if (seq != s->seq + 1) throw Error(ErrorCode::CorruptLog, "event sequence gap at " + std::to_string(seq));
  const auto type = e.at("type").get<std::string>();
  const auto t = e.at("t").get<std::int64_t>();
  const auto pid = e.at("participant").get<std::string>();
  if (type == "registered") {
    Participant p;
    p.id = pid;
    const auto g = parse_group(e.at("group").get<std::string>());
    if (!g) throw Error(ErrorCode::CorruptLog, "bad group");
    p.group = *g;
    p.registered_at = t;
    s->participant_index[pid] = s->participants.size();
    s->participants.push_back(std::move(p));
    s->rated.emplace_back(s->counts.size(), 0);
  } else {
    const auto pit = s->participant_index.find(pid);
    if (pit == s->participant_index.end()) throw Error(ErrorCode::CorruptLog, "event for unknown participant " + pid);
    Participant& p = s->participants[pit->second];
    const auto piece_id = e.at("piece").get<std::string>();
    const auto qit = piece_index.find(piece_id);
    if (qit == piece_index.end()) throw Error(ErrorCode::CorruptLog, "event for unknown piece " + piece_id);
    PieceCounts& c = s->counts[qit->second];
    const int g = gi(p.group);
    if (type == "assigned") {
      if (p.current) throw Error(ErrorCode::CorruptLog, "assignment while another is outstanding");
      p.current = Assignment{piece_id, t, e.at("lease_until").get<std::int64_t>()};
      p.last_dataset = pieces[qit->second].dataset;
      c.leased[g]++;
      s->issued.insert({pid, piece_id});
    } else if (type == "leased") {
      if (!p.current || p.current->piece_id != piece_id) throw Error(ErrorCode::CorruptLog, "lease renewal mismatch");
      p.current->lease_until = e.at("lease_until").get<std::int64_t>();
    } else if (type == "expired") {
      if (!p.current || p.current->piece_id != piece_id) throw Error(ErrorCode::CorruptLog, "expiry mismatch");
      p.current.reset();
      c.leased[g]--;
      s->expired++;
    } else if (type == "responded") {
      Response r;
      r.participant_id = pid;
      r.piece_id = piece_id;
      r.likert = e.at("likert").get<std::map<std::string, int>>();
      const auto a = parse_turing_answer(e.at("turing").get<std::string>());
      if (!a) throw Error(ErrorCode::CorruptLog, "bad Turing answer");
      r.turing = *a;
      r.timestamp = t;
      if (p.current && p.current->piece_id == piece_id) {
        p.current.reset();
        c.leased[g]--;
      }
      c.rated[g]++;
      p.completed.push_back(piece_id);
      s->rated[pit->second][qit->second] = 1;
      s->responses.push_back(std::move(r));
    } else {
      throw Error(ErrorCode::CorruptLog, "unknown event type " + type);
    }
  }
  s->seq = seq;
}

struct Loaded {
  StudyConfig config;
  std::vector<Piece> pieces;
  std::map<std::string, std::size_t> index;
};

Loaded load_study_json(const fs::path& dir) {
  Loaded l;
  try {
    const json j = json::parse(read_file(dir / "study.json"));
    if (j.at("v").get<int>() != kSchemaVersion) throw Error(ErrorCode::CorruptLog, "unsupported study schema");
    l.config = config_from_json(j.at("config"));
    for (const auto& pj : j.at("pieces")) l.pieces.push_back(piece_from_json(pj));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptLog, std::string("study.json: ") + e.what());
  }
  for (std::size_t i = 0; i < l.pieces.size(); ++i) l.index[l.pieces[i].id] = i;
  return l;
}

// Complete lines of the log; `torn_at` receives the offset of an unterminated tail.
std::vector<std::string> log_lines(const std::string& text, std::size_t* valid_bytes) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;
    if (nl > start) out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (valid_bytes) *valid_bytes = start;
  return out;
}

json parse_event(const std::string& line, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptLog, "unreadable event on line " + std::to_string(lineno));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::int64_t system_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string format_timestamp(std::int64_t seconds) {
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Study::Study(fs::path dir, Clock clock) : dir_(std::move(dir)), clock_(std::move(clock)) {}

Study::~Study() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void Study::create(const fs::path& dir, std::span<const CuratedPiece> pieces, const StudyConfig& config,
                   int sample_rate) {
  if (pieces.empty()) throw Error(ErrorCode::InsufficientCatalog, "no pieces to study");
  if (fs::exists(dir / "study.json")) throw Error(ErrorCode::IoError, "a study already exists in " + dir.string());
  fs::create_directories(dir / "pieces");
  if (sample_rate > 0) fs::create_directories(dir / "audio");
  json pj = json::array();
  for (const auto& cp : pieces) {
    pj.push_back(piece_to_json(cp.piece));
    write_bytes(dir / "pieces" / (cp.piece.id + ".mid"), write_midi(cp.score));
    if (sample_rate > 0) write_bytes(dir / "audio" / (cp.piece.id + ".wav"), render_wav(cp.score, sample_rate));
  }
  const json j{{"v", kSchemaVersion}, {"config", config_to_json(config)}, {"sample_rate", sample_rate}, {"pieces", pj}};
  write_file_atomic(dir / "study.json", j.dump(1), true);
  std::ofstream(dir / "events.jsonl", std::ios::app).close();
}

std::unique_ptr<Study> Study::open(const fs::path& dir, Clock clock) {
  std::unique_ptr<Study> s(new Study(dir, std::move(clock)));
  Loaded l = load_study_json(dir);
  s->config_ = l.config;
  s->pieces_ = std::move(l.pieces);
  s->piece_index_ = std::move(l.index);
  s->state_ = std::make_unique<State>(s->pieces_.size());
  if (fs::exists(dir / "snapshot.json")) {
    try {
      const json j = json::parse(read_file(dir / "snapshot.json"));
      s->state_ = State::from_json(j.at("state"), s->pieces_, s->piece_index_);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptLog, std::string("snapshot: ") + e.what());
    }
  }
  const fs::path log = dir / "events.jsonl";
  const std::string text = fs::exists(log) ? read_file(log) : std::string();
  std::size_t valid = 0;
  const auto lines = log_lines(text, &valid);
  if (valid < text.size()) fs::resize_file(log, valid);  // torn tail from an interrupted append
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json e = parse_event(lines[i], i + 1);
    try {
      if (e.at("seq").get<std::uint64_t>() <= s->state_->seq) continue;
      fold(s->state_.get(), e, s->pieces_, s->piece_index_);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::CorruptLog, "line " + std::to_string(i + 1) + ": " + ex.what());
    }
  }
  s->log_fd_ = ::open(log.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (s->log_fd_ < 0) throw Error(ErrorCode::IoError, "cannot open " + log.string());
  return s;
}

std::string replay_state_dump(const fs::path& dir) {
  Loaded l = load_study_json(dir);
  Study::State s(l.pieces.size());
  const auto lines = log_lines(read_file(dir / "events.jsonl"), nullptr);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      fold(&s, parse_event(lines[i], i + 1), l.pieces, l.index);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::CorruptLog, "line " + std::to_string(i + 1) + ": " + ex.what());
    }
  }
  return s.to_json(l.pieces).dump();
}

void Study::append(std::string line) {
  const json e = json::parse(line);
  line += '\n';
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(log_fd_, line.data() + off, line.size() - off);
    if (n < 0) throw Error(ErrorCode::IoError, "event log append failed");
    off += static_cast<std::size_t>(n);
  }
  if (config_.sync_writes) ::fsync(log_fd_);
  fold(state_.get(), e, pieces_, piece_index_);
  maybe_snapshot();
}

void Study::maybe_snapshot() {
  if (config_.snapshot_every > 0 && state_->seq % static_cast<std::uint64_t>(config_.snapshot_every) == 0) {
    write_snapshot_locked();
  }
}

void Study::write_snapshot_locked() {
  snapshotting_ = true;
  try {
    const json j{{"v", kSchemaVersion}, {"state", state_->to_json(pieces_)}};
    write_file_atomic(dir_ / "snapshot.json", j.dump(), config_.sync_writes);
  } catch (...) {
    snapshotting_ = false;
    throw;
  }
  snapshotting_ = false;
}

void Study::snapshot() {
  std::lock_guard lock(mu_);
  write_snapshot_locked();
}

int Study::workload_cap(Group g) const {
  const int explicit_cap = config_.workload_cap[gi(g)];
  if (explicit_cap > 0) return explicit_cap;
  const int size = std::max(1, config_.cohort[gi(g)]);
  const long slots = static_cast<long>(pieces_.size()) * config_.quota.min_group[gi(g)];
  return static_cast<int>((slots + size - 1) / size);
}

std::string Study::register_participant(Group g) {
  std::lock_guard lock(mu_);
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", state_->participants.size() + 1);
  const json e{{"v", kSchemaVersion}, {"seq", state_->seq + 1}, {"type", "registered"},
               {"t", clock_()},       {"participant", buf},       {"group", group_code(g)}};
  append(e.dump());
  return buf;
}

void Study::expire_locked(std::int64_t now) {
  // Participant order keeps the emitted sequence deterministic.
  for (const auto& p : state_->participants) {
    if (!p.current || p.current->lease_until > now) continue;
    const json e{{"v", kSchemaVersion}, {"seq", state_->seq + 1}, {"type", "expired"},
                 {"t", now},            {"participant", p.id},      {"piece", p.current->piece_id}};
    append(e.dump());
  }
}

void Study::expire_leases() {
  std::lock_guard lock(mu_);
  expire_locked(clock_());
}

NextResult Study::next_assignment(const std::string& participant_id) {
  std::lock_guard lock(mu_);
  const auto it = state_->participant_index.find(participant_id);
  if (it == state_->participant_index.end()) throw Error(ErrorCode::UnknownParticipant, participant_id);
  const std::int64_t now = clock_();
  expire_locked(now);
  const std::size_t pi = it->second;
  const Participant& p = state_->participants[pi];
  if (p.current) {
    // Resuming refreshes the lease on the outstanding piece.
    const json e{{"v", kSchemaVersion}, {"seq", state_->seq + 1},   {"type", "leased"},
                 {"t", now},            {"participant", p.id},       {"piece", p.current->piece_id},
                 {"lease_until", now + config_.lease_seconds}};
    append(e.dump());
    return *state_->participants[pi].current;
  }
  const int g = gi(p.group);
  if (static_cast<int>(p.completed.size()) >= workload_cap(p.group)) return Done{};

  const std::uint64_t salt = splitmix64(config_.seed ^ fnv1a(p.id));
  std::optional<std::size_t> best;
  std::tuple<int, int, int, std::uint64_t> best_key{};
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (state_->rated[pi][i]) continue;
    const PieceCounts& c = state_->counts[i];
    const int group_deficit = config_.quota.min_group[g] - c.rated[g] - c.leased[g];
    if (group_deficit <= 0) continue;
    const int leased = c.leased[0] + c.leased[1] + c.leased[2];
    const int total_deficit = std::max(0, config_.quota.min_total - c.total() - leased);
    const int varied = pieces_[i].dataset != p.last_dataset;
    // Larger is better on every component; the seeded rank shuffles equals.
    const std::tuple<int, int, int, std::uint64_t> key{group_deficit, total_deficit, varied,
                                                       ~splitmix64(salt ^ (i * 0x9e3779b97f4a7c15ULL))};
    if (!best || key > best_key) {
      best = i;
      best_key = key;
    }
  }
  if (!best) return Done{};
  const json e{{"v", kSchemaVersion}, {"seq", state_->seq + 1},   {"type", "assigned"},
               {"t", now},            {"participant", p.id},       {"piece", pieces_[*best].id},
               {"lease_until", now + config_.lease_seconds}};
  append(e.dump());
  return *state_->participants[pi].current;
}

void Study::record_response(const Response& r) {
  std::lock_guard lock(mu_);
  const auto it = state_->participant_index.find(r.participant_id);
  if (it == state_->participant_index.end()) throw Error(ErrorCode::UnknownParticipant, r.participant_id);
  const auto qit = piece_index_.find(r.piece_id);
  if (qit == piece_index_.end()) throw Error(ErrorCode::UnknownPiece, r.piece_id);
  const Participant& p = state_->participants[it->second];
  if (state_->rated[it->second][qit->second]) {
    throw Error(ErrorCode::DuplicateResponse, r.participant_id + " already rated " + r.piece_id);
  }
  if (!state_->issued.count({r.participant_id, r.piece_id})) {
    throw Error(ErrorCode::UnissuedAssignment, r.piece_id + " was never assigned to " + r.participant_id);
  }
  std::set<std::string> expected;
  for (const auto& item : questionnaire_for(p.group)) {
    if (!item.turing) expected.insert(item.id);
  }
  if (r.likert.size() != expected.size()) {
    throw Error(ErrorCode::InvalidResponse, "expected " + std::to_string(expected.size()) + " ratings, got " +
                                                std::to_string(r.likert.size()));
  }
  for (const auto& [q, v] : r.likert) {
    if (!expected.count(q)) throw Error(ErrorCode::InvalidResponse, "item " + q + " is not asked of this group");
    if (v < 1 || v > 5) throw Error(ErrorCode::InvalidResponse, "rating for " + q + " outside 1..5");
  }
  const json e{{"v", kSchemaVersion},
               {"seq", state_->seq + 1},
               {"type", "responded"},
               {"t", clock_()},
               {"participant", r.participant_id},
               {"piece", r.piece_id},
               {"likert", r.likert},
               {"turing", turing_answer_code(r.turing)}};
  append(e.dump());
}

std::optional<Piece> Study::piece(const std::string& id) const {
  const auto it = piece_index_.find(id);
  if (it == piece_index_.end()) return std::nullopt;
  return pieces_[it->second];
}

std::optional<Participant> Study::participant(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = state_->participant_index.find(id);
  if (it == state_->participant_index.end()) return std::nullopt;
  return state_->participants[it->second];
}

std::vector<Participant> Study::participants() const {
  std::lock_guard lock(mu_);
  return state_->participants;
}

PieceCounts Study::counts(const std::string& piece_id) const {
  std::lock_guard lock(mu_);
  const auto it = piece_index_.find(piece_id);
  if (it == piece_index_.end()) throw Error(ErrorCode::UnknownPiece, piece_id);
  return state_->counts[it->second];
}

std::vector<Response> Study::responses() const {
  std::lock_guard lock(mu_);
  return state_->responses;
}

Progress Study::progress(const std::string& participant_id) const {
  std::lock_guard lock(mu_);
  const auto it = state_->participant_index.find(participant_id);
  if (it == state_->participant_index.end()) throw Error(ErrorCode::UnknownParticipant, participant_id);
  const auto& p = state_->participants[it->second];
  return {static_cast<int>(p.completed.size()), workload_cap(p.group)};
}

StudySummary Study::summary() const {
  std::lock_guard lock(mu_);
  StudySummary s;
  long need = 0, have = 0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto& c = state_->counts[i];
    PieceProgress pp{pieces_[i].id, c.rated, c.total(), c.total() >= config_.quota.min_total};
    for (int g = 0; g < kNumGroups; ++g) {
      pp.satisfied = pp.satisfied && c.rated[g] >= config_.quota.min_group[g];
      need += config_.quota.min_group[g];
      have += std::min(c.rated[g], config_.quota.min_group[g]);
    }
    s.satisfied_pieces += pp.satisfied;
    s.pieces.push_back(pp);
  }
  s.responses = static_cast<int>(state_->responses.size());
  for (const auto& p : state_->participants) {
    s.participants[p.id] = {static_cast<int>(p.completed.size()), workload_cap(p.group)};
  }
  s.completion = need ? static_cast<double>(have) / need : 1.0;
  return s;
}

bool Study::quotas_met() const {
  const auto s = summary();
  return s.satisfied_pieces == static_cast<int>(s.pieces.size());
}

std::uint64_t Study::events_applied() const {
  std::lock_guard lock(mu_);
  return state_->seq;
}

std::string Study::state_dump() const {
  std::lock_guard lock(mu_);
  return state_->to_json(pieces_).dump();
}

fs::path Study::audio_path(const std::string& piece_id) const { return dir_ / "audio" / (piece_id + ".wav"); }

std::vector<ResponseRow> Study::export_rows() const {
  std::lock_guard lock(mu_);
  std::vector<ResponseRow> out;
  for (const auto& r : state_->responses) {
    const auto& p = state_->participants[state_->participant_index.at(r.participant_id)];
    const auto& piece = pieces_[piece_index_.at(r.piece_id)];
    const std::string ts = format_timestamp(r.timestamp);
    const std::string turing(turing_answer_code(r.turing));
    for (const auto& item : questionnaire_for(p.group)) {
      ResponseRow row{p.id, std::string(group_code(p.group)), piece.id, piece.dataset, piece.source, item.id,
                      std::nullopt, turing, ts};
      if (!item.turing) row.value = r.likert.at(item.id);
      out.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

std::string SimulationReport::text() const {
  std::ostringstream o;
  o << "participants: " << participants << "\n"
    << "responses: " << responses << "\n"
    << "expired leases: " << expired_leases << "\n"
    << "min ratings per piece: total " << min_total << ", N " << min_group[0] << ", A " << min_group[1] << ", E "
    << min_group[2] << "\n"
    << "mean workload: N " << mean_workload[0] << ", A " << mean_workload[1] << ", E " << mean_workload[2] << "\n";
  if (crashed) {
    o << "crash: " << responses_before_crash << " accepted before, " << responses_after_restart
      << " recovered after restart\n";
  }
  o << "log replay matches state: " << (replay_matches ? "yes" : "no") << "\n"
    << "quotas met: " << (quotas_met ? "yes" : "no") << "\n";
  return o.str();
}

namespace {

int weighted(Rng& rng, std::initializer_list<double> w) {
  double u = rng.uniform01();
  int i = 0;
  for (double x : w) {
    if (u < x) return i;
    u -= x;
    ++i;
  }
  return i - 1;
}

Response simulated_answer(Rng& rng, const Piece& piece, Group g, const std::string& pid) {
  Response r;
  r.participant_id = pid;
  r.piece_id = piece.id;
  const bool human = piece.source == kHumanSource;
  for (const auto& item : questionnaire_for(g)) {
    if (item.turing) continue;
    r.likert[item.id] = 1 + (human ? weighted(rng, {0.05, 0.15, 0.25, 0.35, 0.20})
                                   : weighted(rng, {0.40, 0.30, 0.17, 0.09, 0.04}));
  }
  const int t = human ? weighted(rng, {0.60, 0.25, 0.15}) : weighted(rng, {0.20, 0.70, 0.10});
  r.turing = t == 0 ? TuringAnswer::Human : (t == 1 ? TuringAnswer::AI : TuringAnswer::Uncertain);
  return r;
}

}  // namespace

SimulationReport simulate(const fs::path& dir, const SimulationOptions& opts) {
  auto now = std::make_shared<std::int64_t>(opts.start_time);
  Clock clock = [now] { return *now; };
  auto study = Study::open(dir, clock);
  Rng rng(opts.seed);
  // Resuming a study that already has participants: continue them first and
  // keep the clock moving forward.
  const auto existing = study->participants();
  for (const auto& r : study->responses()) *now = std::max(*now, r.timestamp + 1);

  std::vector<Group> order;
  for (int g = 0; g < kNumGroups; ++g) order.insert(order.end(), opts.cohort[g], static_cast<Group>(g));
  rng.shuffle(order);

  long expected = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    expected += static_cast<long>(study->pieces().size()) * study->config().quota.min_group[g];
  }
  const long crash_after = opts.crash_at >= 0.0 ? static_cast<long>(std::floor(opts.crash_at * expected)) : -1;

  SimulationReport rep;
  rep.participants = static_cast<int>(order.size());
  int accepted = static_cast<int>(study->responses().size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Group g = i < existing.size() ? existing[i].group : order[i];
    const std::string pid = i < existing.size() ? existing[i].id : study->register_participant(g);
    while (true) {
      auto next = study->next_assignment(pid);
      if (std::holds_alternative<Done>(next)) break;
      auto a = std::get<Assignment>(next);
      if (!rep.crashed && crash_after >= 0 && accepted >= crash_after) {
        // Drop the study mid-assignment with a half-written event, as a kill would.
        rep.crashed = true;
        rep.responses_before_crash = accepted;
        study.reset();
        std::ofstream(dir / "events.jsonl", std::ios::app) << "{\"v\":1,\"seq\":";
        study = Study::open(dir, clock);
        rep.responses_after_restart = static_cast<int>(study->responses().size());
        next = study->next_assignment(pid);
        if (std::holds_alternative<Done>(next)) break;
        a = std::get<Assignment>(next);
      }
      if (opts.abandon_rate > 0 && rng.uniform01() < opts.abandon_rate) {
        *now += study->config().lease_seconds + 1;
        continue;
      }
      *now += opts.seconds_per_piece;
      Response r = simulated_answer(rng, *study->piece(a.piece_id), g, pid);
      study->record_response(r);
      ++accepted;
      if (opts.on_accepted) opts.on_accepted(pid, a.piece_id);
    }
  }

  const auto summary = study->summary();
  rep.responses = summary.responses;
  rep.quotas_met = summary.satisfied_pieces == static_cast<int>(summary.pieces.size());
  rep.min_total = std::numeric_limits<int>::max();
  rep.min_group = {rep.min_total, rep.min_total, rep.min_total};
  for (const auto& pp : summary.pieces) {
    rep.min_total = std::min(rep.min_total, pp.total);
    for (int g = 0; g < kNumGroups; ++g) rep.min_group[g] = std::min(rep.min_group[g], pp.rated[g]);
  }
  std::array<int, kNumGroups> members{0, 0, 0};
  for (const auto& p : study->participants()) {
    members[gi(p.group)]++;
    rep.mean_workload[gi(p.group)] += static_cast<double>(p.completed.size());
  }
  for (int g = 0; g < kNumGroups; ++g) {
    if (members[g]) rep.mean_workload[g] /= members[g];
  }
  const auto dump = study->state_dump();
  rep.expired_leases = static_cast<int>(json::parse(dump).at("expired").get<int>());
  rep.replay_matches = dump == replay_state_dump(dir);
  return rep;
}

}  // namespace muspike::study
