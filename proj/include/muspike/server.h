/**
 * @file server.h
 * @brief HTTP front end of a study: participant sessions, audio, responses and
 *        admin views.
 *
 * Endpoints (JSON unless noted):
 *   POST /participants      admin   {"group":"N"}            -> {"participant_id","token"}
 *   GET  /session/next      bearer                           -> {"piece_id","questionnaire","progress"} | {"done":true,"progress"}
 *   GET  /audio/{piece_id}  bearer                           -> audio/wav
 *   POST /responses         bearer  {"piece_id","answers":{"Q1":3,..},"turing":"H|AI|U"} -> {"accepted":true,"progress"}
 *   GET  /admin/progress    admin                            -> quota table
 *   GET  /admin/export      admin                            -> text/csv
 * Bearer tokens go in `Authorization: Bearer <token>`, the admin key in `X-Admin-Key`.
 */
#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "muspike/study.h"

namespace muspike::api {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Admin key stored in `<study>/admin.key`, created on first use.
std::string load_or_create_admin_key(const std::filesystem::path& study_dir);
/// 128 random bits as 32 hex digits.
std::string random_token();

class Service {
 public:
  /// Loads the session table from `<study>/sessions.jsonl`.
  Service(study::Study& study, std::string admin_key);

  Reply handle(const Request& req);

  /// Called with every reply to a participant-facing endpoint.
  void set_recorder(std::function<void(const Request&, const Reply&)> rec) { recorder_ = std::move(rec); }

 private:
  Reply route(const Request& req);
  Reply create_participant(const Request& req);
  Reply next(const std::string& pid);
  Reply audio(const std::string& pid, const std::string& piece_id);
  Reply respond(const std::string& pid, const Request& req);
  Reply admin_progress();
  Reply admin_export();
  std::optional<std::string> participant_for(const Request& req);
  bool is_admin(const Request& req) const;

  study::Study& study_;
  std::string admin_key_;
  std::map<std::string, std::string> sessions_;  // token -> participant
  std::mutex sessions_mu_;
  std::mutex audio_mu_;
  std::function<void(const Request&, const Reply&)> recorder_;
};

/// Runs `Service` over HTTP/1.1.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// "host:port" split; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace muspike::api
