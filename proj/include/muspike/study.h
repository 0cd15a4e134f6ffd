/**
 * @file study.h
 * @brief Blind listening study: curation, questionnaires, quota-driven
 *        assignment with leases, an append-only event log and export.
 *
 * A study lives in a directory:
 *   study.json      configuration and the curated catalog (unblinded, admin side)
 *   events.jsonl    append-only log, one event per line; state = fold(log)
 *   snapshot.json   periodic fold of the log prefix, written via rename
 *   pieces/ audio/  trimmed MIDI and pre-rendered WAV per piece
 */
#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "muspike/midi.h"
#include "muspike/stats.h"

namespace muspike::study {

enum class Group { Normal = 0, Amateur = 1, Expert = 2 };
inline constexpr int kNumGroups = 3;
std::string_view group_code(Group g);  // N, A, E
/// Accepts codes and full names, case-insensitive.
std::optional<Group> parse_group(std::string_view s);

inline constexpr std::array<std::string_view, 5> kModels{"S-Transformer", "S-LSTM", "S-RNN", "S-GAN", "S-CNN"};
inline constexpr std::array<std::string_view, 5> kDatasets{"JSB", "POP909", "Lakh", "EMOPIA", "XMIDI"};
/// Strings that must never reach a participant.
inline constexpr std::array<std::string_view, 7> kForbiddenTerms{"S-Transformer", "S-LSTM", "S-RNN", "S-GAN",
                                                                 "S-CNN",         "Human",  "Original"};
/// First forbidden term found in `payload`, if any (case-sensitive byte scan).
std::optional<std::string_view> find_forbidden_term(std::string_view payload);

// ---------------------------------------------------------------------------
// Questionnaire

struct Item {
  std::string id;         // Q1..Q14
  std::string text;       // as in the study design table
  std::string wire_text;  // what participants see; differs only where `text` names a source
  bool turing = false;    // Q14; every other item is a 1..5 Likert scale
};
/// Normal: Q1-Q4, Q10-Q13, Q14 (9). Amateur adds Q5-Q6 (11). Expert adds Q7-Q9 (14).
std::vector<Item> questionnaire_for(Group g);
/// Turing options shown to participants, as (code, label).
std::vector<std::pair<std::string, std::string>> turing_options();

// ---------------------------------------------------------------------------
// Curation

struct CatalogEntry {
  std::string origin;  // file path or synthetic tag
  std::string dataset;
  std::string source;  // "Human" or a model name
  Score score;
};

struct CurationOptions {
  int per_model_cell = 30;
  int human_per_dataset = 12;
  double max_seconds = 30.0;
  std::uint64_t seed = 1;
};

struct Piece {
  std::string id;  // blinded
  std::string dataset;
  std::string source;
  std::string origin;
  double duration = 0.0;
  bool blinded = true;
  friend bool operator==(const Piece&, const Piece&) = default;
};

struct CuratedPiece {
  Piece piece;
  Score score;  // trimmed
};

/// Seeded uniform selection per (dataset, source) cell over kDatasets x
/// (kModels + Human), trimmed to max_seconds. Throws InsufficientCatalog naming
/// the first short cell.
std::vector<CuratedPiece> curate(std::span<const CatalogEntry> catalog, const CurationOptions& opts = {});

/// Random short scores for every cell, `seconds` long before trimming.
std::vector<CatalogEntry> synthetic_catalog(std::uint64_t seed, int per_model_cell = 32, int human_per_dataset = 14,
                                            double seconds = 45.0);

// ---------------------------------------------------------------------------
// Study state

struct Quota {
  int min_total = 24;
  std::array<int, kNumGroups> min_group{16, 4, 4};
  friend bool operator==(const Quota&, const Quota&) = default;
};

struct StudyConfig {
  Quota quota;
  std::int64_t lease_seconds = 30 * 60;
  /// Expected participants per group; sets the default workload cap.
  std::array<int, kNumGroups> cohort{48, 15, 13};
  /// Explicit per-group caps; 0 means ceil(pieces * min_group / cohort).
  std::array<int, kNumGroups> workload_cap{0, 0, 0};
  std::uint64_t seed = 1;
  /// Events between snapshots; 0 disables periodic snapshots.
  int snapshot_every = 1000;
  /// fsync the log after each append (process crashes only need write()).
  bool sync_writes = true;
  friend bool operator==(const StudyConfig&, const StudyConfig&) = default;
};

struct Assignment {
  std::string piece_id;
  std::int64_t issued_at = 0;
  std::int64_t lease_until = 0;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct Participant {
  std::string id;
  Group group = Group::Normal;
  std::int64_t registered_at = 0;
  std::vector<std::string> completed;  // in response order
  std::optional<Assignment> current;   // issued and unanswered
  std::string last_dataset;
  friend bool operator==(const Participant&, const Participant&) = default;
};

struct PieceCounts {
  std::array<int, kNumGroups> rated{0, 0, 0};
  std::array<int, kNumGroups> leased{0, 0, 0};
  int total() const { return rated[0] + rated[1] + rated[2]; }
  friend bool operator==(const PieceCounts&, const PieceCounts&) = default;
};

struct Response {
  std::string participant_id;
  std::string piece_id;
  std::map<std::string, int> likert;  // item id -> 1..5
  TuringAnswer turing = TuringAnswer::Uncertain;
  std::int64_t timestamp = 0;
  friend bool operator==(const Response&, const Response&) = default;
};

struct Done {};
using NextResult = std::variant<Assignment, Done>;

struct Progress {
  int completed = 0;
  int cap = 0;
};

struct PieceProgress {
  std::string piece_id;
  std::array<int, kNumGroups> rated{0, 0, 0};
  int total = 0;
  bool satisfied = false;
};

struct StudySummary {
  std::vector<PieceProgress> pieces;
  int satisfied_pieces = 0;
  int responses = 0;
  std::map<std::string, Progress> participants;
  double completion = 0.0;  // share of required ratings delivered, capped per piece
};

using Clock = std::function<std::int64_t()>;
/// Wall-clock seconds since the epoch.
std::int64_t system_clock_seconds();

class Study {
 public:
  /// Writes a fresh study directory. `sample_rate` 0 skips audio rendering.
  static void create(const std::filesystem::path& dir, std::span<const CuratedPiece> pieces, const StudyConfig& config,
                     int sample_rate = 22050);
  /// Loads snapshot plus log tail. A torn final line (no newline) is dropped;
  /// any other unreadable line throws CorruptLog.
  static std::unique_ptr<Study> open(const std::filesystem::path& dir, Clock clock = system_clock_seconds);

  ~Study();
  Study(const Study&) = delete;
  Study& operator=(const Study&) = delete;

  std::string register_participant(Group g);
  /// Resume point: the outstanding assignment if any, otherwise a new one.
  NextResult next_assignment(const std::string& participant_id);
  void record_response(const Response& r);
  /// Returns leases that ran out to the pool.
  void expire_leases();
  void snapshot();

  const StudyConfig& config() const { return config_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  std::optional<Piece> piece(const std::string& id) const;
  std::optional<Participant> participant(const std::string& id) const;
  std::vector<Participant> participants() const;
  PieceCounts counts(const std::string& piece_id) const;
  std::vector<Response> responses() const;
  Progress progress(const std::string& participant_id) const;
  int workload_cap(Group g) const;
  StudySummary summary() const;
  bool quotas_met() const;
  std::uint64_t events_applied() const;
  bool snapshot_in_progress() const { return snapshotting_.load(); }

  /// Canonical serialization of the folded state; equal dumps mean equal state.
  std::string state_dump() const;
  std::vector<ResponseRow> export_rows() const;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path audio_path(const std::string& piece_id) const;

 /// Folded event state; opaque outside the implementation.
  struct State;

 private:
  explicit Study(std::filesystem::path dir, Clock clock);
  void append(std::string line);
  void maybe_snapshot();
  void expire_locked(std::int64_t now);
  void write_snapshot_locked();

  std::filesystem::path dir_;
  Clock clock_;
  StudyConfig config_;
  std::vector<Piece> pieces_;
  std::map<std::string, std::size_t> piece_index_;
  std::unique_ptr<State> state_;
  int log_fd_ = -1;
  std::atomic<bool> snapshotting_{false};
  mutable std::mutex mu_;
};

/// Fold of an event log from empty; used to check that replay reproduces state.
std::string replay_state_dump(const std::filesystem::path& dir);

/// ISO 8601 UTC, e.g. 2026-01-01T00:00:00Z.
std::string format_timestamp(std::int64_t seconds);

// ---------------------------------------------------------------------------
// Simulation

struct SimulationOptions {
  std::array<int, kNumGroups> cohort{48, 15, 13};
  std::uint64_t seed = 1;
  /// Fraction of expected responses after which the study object is dropped
  /// without shutdown and reopened from disk; negative disables.
  double crash_at = -1.0;
  /// Chance that a participant walks away from an assignment and only returns
  /// after the lease expired.
  double abandon_rate = 0.01;
  std::int64_t start_time = 1767225600;  // 2026-01-01T00:00:00Z
  std::int64_t seconds_per_piece = 40;
  /// Called after each accepted response with (participant, piece).
  std::function<void(const std::string&, const std::string&)> on_accepted;
};

struct SimulationReport {
  int participants = 0;
  int responses = 0;
  int expired_leases = 0;
  bool crashed = false;
  int responses_before_crash = 0;
  int responses_after_restart = 0;  // recovered count right after reopening
  bool quotas_met = false;
  int min_total = 0;
  std::array<int, kNumGroups> min_group{0, 0, 0};
  std::array<double, kNumGroups> mean_workload{0, 0, 0};
  bool replay_matches = false;
  std::string text() const;
};

/// Runs scripted participants one after another against the study in `dir`
/// until each is told Done. Participants already in the study (a run that was
/// killed) are continued before new ones are registered.
SimulationReport simulate(const std::filesystem::path& dir, const SimulationOptions& opts);

}  // namespace muspike::study
