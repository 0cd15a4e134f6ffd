/**
 * @file server.cpp
 * @brief Study HTTP service.
 */
#include "muspike/server.h"

#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "muspike/error.h"

namespace muspike::api {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Reply json_reply(int status, const json& j) { return Reply{status, "application/json", j.dump()}; }

Reply error_reply(int status, std::string_view name, const std::string& detail) {
  return json_reply(status, json{{"error", name}, {"detail", detail}});
}

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownPiece: return 404;
    case ErrorCode::UnknownParticipant: return 401;
    case ErrorCode::DuplicateResponse:
    case ErrorCode::UnissuedAssignment: return 409;
    case ErrorCode::InvalidResponse:
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json progress_json(const study::Progress& p) { return json{{"completed", p.completed}, {"total", p.cap}}; }

}  // namespace

std::string random_token() {
  std::random_device rd;
  char buf[33];
  for (int i = 0; i < 4; ++i) std::snprintf(buf + 8 * i, 9, "%08x", static_cast<unsigned>(rd()));
  return std::string(buf, 32);
}

std::string load_or_create_admin_key(const fs::path& study_dir) {
  const fs::path p = study_dir / "admin.key";
  if (fs::exists(p)) {
    std::string key = read_file(p);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    if (!key.empty()) return key;
  }
  const std::string key = random_token();
  std::ofstream(p) << key << "\n";
  fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write);
  return key;
}

Service::Service(study::Study& study, std::string admin_key) : study_(study), admin_key_(std::move(admin_key)) {
  const fs::path p = study_.dir() / "sessions.jsonl";
  if (!fs::exists(p)) return;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      sessions_[j.at("token").get<std::string>()] = j.at("participant").get<std::string>();
    } catch (const json::exception&) {
      // A torn final line from a crash; the token was never handed out.
    }
  }
}

bool Service::is_admin(const Request& req) const {
  const auto it = req.headers.find("x-admin-key");
  return it != req.headers.end() && !admin_key_.empty() && it->second == admin_key_;
}

std::optional<std::string> Service::participant_for(const Request& req) {
  const auto it = req.headers.find("authorization");
  if (it == req.headers.end()) return std::nullopt;
  constexpr std::string_view prefix = "Bearer ";
  if (it->second.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  const std::string token = it->second.substr(prefix.size());
  std::lock_guard lock(sessions_mu_);
  const auto s = sessions_.find(token);
  if (s == sessions_.end()) return std::nullopt;
  return s->second;
}

Reply Service::handle(const Request& req) {
  Reply r;
  try {
    r = route(req);
  } catch (const Error& e) {
    r = error_reply(status_for(e.code()), e.name(), e.what());
  } catch (const std::exception& e) {
    r = error_reply(500, "InternalError", e.what());
  }
  if (recorder_ && req.path.rfind("/admin", 0) != 0) recorder_(req, r);
  return r;
}

Reply Service::route(const Request& req) {
  const bool mutating = req.method == "POST" || req.path == "/session/next";
  if (mutating && study_.snapshot_in_progress()) {
    Reply r = error_reply(503, "Unavailable", "snapshot in progress");
    return r;
  }
  if (req.method == "POST" && req.path == "/participants") return create_participant(req);
  if (req.method == "GET" && req.path.rfind("/admin/", 0) == 0) {
    if (!is_admin(req)) return error_reply(401, "Unauthorized", "admin key required");
    if (req.path == "/admin/progress") return admin_progress();
    if (req.path == "/admin/export") return admin_export();
    return error_reply(404, "NotFound", req.path);
  }
  const bool known = (req.method == "GET" && (req.path == "/session/next" || req.path.rfind("/audio/", 0) == 0)) ||
                     (req.method == "POST" && req.path == "/responses");
  if (!known) return error_reply(404, "NotFound", req.path);
  const auto pid = participant_for(req);
  if (!pid) return error_reply(401, "Unauthorized", "missing or unknown session token");
  if (req.path == "/session/next") return next(*pid);
  if (req.path == "/responses") return respond(*pid, req);
  return audio(*pid, req.path.substr(std::string_view("/audio/").size()));
}

Reply Service::create_participant(const Request& req) {
  if (!is_admin(req)) return error_reply(401, "Unauthorized", "participants are provisioned by the admin");
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return error_reply(400, "InvalidArgument", "body is not JSON");
  }
  const auto g = body.is_object() && body.contains("group") && body["group"].is_string()
                     ? study::parse_group(body["group"].get<std::string>())
                     : std::nullopt;
  if (!g) return error_reply(400, "InvalidArgument", "group must be N, A or E");
  const std::string pid = study_.register_participant(*g);
  const std::string token = random_token();
  {
    std::lock_guard lock(sessions_mu_);
    std::ofstream(study_.dir() / "sessions.jsonl", std::ios::app)
        << json{{"token", token}, {"participant", pid}}.dump() << "\n"
        << std::flush;
    sessions_[token] = pid;
  }
  return json_reply(201, json{{"participant_id", pid}, {"token", token}});
}

Reply Service::next(const std::string& pid) {
  const auto res = study_.next_assignment(pid);
  const auto prog = progress_json(study_.progress(pid));
  if (std::holds_alternative<study::Done>(res)) return json_reply(200, json{{"done", true}, {"progress", prog}});
  const auto& a = std::get<study::Assignment>(res);
  json items = json::array();
  for (const auto& item : study::questionnaire_for(study_.participant(pid)->group)) {
    if (item.turing) {
      json opts = json::array();
      for (const auto& [code, label] : study::turing_options()) opts.push_back(json{{"value", code}, {"label", label}});
      items.push_back(json{{"id", item.id}, {"text", item.wire_text}, {"type", "choice"}, {"options", opts}});
    } else {
      items.push_back(json{{"id", item.id}, {"text", item.wire_text}, {"type", "likert"}, {"min", 1}, {"max", 5}});
    }
  }
  return json_reply(200, json{{"piece_id", a.piece_id},
                              {"audio", "/audio/" + a.piece_id},
                              {"lease_until", a.lease_until},
                              {"questionnaire", items},
                              {"progress", prog}});
}

Reply Service::audio(const std::string& pid, const std::string& piece_id) {
  const auto piece = study_.piece(piece_id);
  if (!piece) return error_reply(404, "UnknownPiece", piece_id);
  const auto p = study_.participant(pid);
  const bool mine = (p->current && p->current->piece_id == piece_id) ||
                    std::find(p->completed.begin(), p->completed.end(), piece_id) != p->completed.end();
  if (!mine) return error_reply(403, "Forbidden", "piece is not assigned to this session");
  const fs::path path = study_.audio_path(piece_id);
  {
    std::lock_guard lock(audio_mu_);
    if (!fs::exists(path)) {
      // Studies created without audio render on first request and keep the file.
      const std::string midi = read_file(study_.dir() / "pieces" / (piece_id + ".mid"));
      const Score s = parse_midi(std::span(reinterpret_cast<const std::uint8_t*>(midi.data()), midi.size()));
      const auto wav = render_wav(s, 22050);
      fs::create_directories(path.parent_path());
      std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(wav.data()),
                                                  static_cast<std::streamsize>(wav.size()));
    }
  }
  return Reply{200, "audio/wav", read_file(path)};
}

Reply Service::respond(const std::string& pid, const Request& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return error_reply(400, "InvalidResponse", "body is not JSON");
  }
  study::Response r;
  r.participant_id = pid;
  try {
    r.piece_id = body.at("piece_id").get<std::string>();
    r.likert = body.at("answers").get<std::map<std::string, int>>();
    const auto t = parse_turing_answer(body.at("turing").get<std::string>());
    if (!t) return error_reply(400, "InvalidResponse", "turing must be H, AI or U");
    r.turing = *t;
  } catch (const json::exception&) {
    return error_reply(400, "InvalidResponse", "expected piece_id, answers and turing");
  }
  study_.record_response(r);
  return json_reply(200, json{{"accepted", true}, {"progress", progress_json(study_.progress(pid))}});
}

Reply Service::admin_progress() {
  const auto s = study_.summary();
  json pieces = json::array();
  for (const auto& p : s.pieces) {
    pieces.push_back(json{{"piece_id", p.piece_id},
                          {"total", p.total},
                          {"N", p.rated[0]},
                          {"A", p.rated[1]},
                          {"E", p.rated[2]},
                          {"satisfied", p.satisfied}});
  }
  json parts = json::array();
  for (const auto& [id, pr] : s.participants) {
    parts.push_back(json{{"participant_id", id}, {"completed", pr.completed}, {"total", pr.cap}});
  }
  const auto& q = study_.config().quota;
  return json_reply(200, json{{"quota", {{"total", q.min_total}, {"N", q.min_group[0]}, {"A", q.min_group[1]},
                                         {"E", q.min_group[2]}}},
                              {"pieces", pieces},
                              {"participants", parts},
                              {"satisfied_pieces", s.satisfied_pieces},
                              {"responses", s.responses},
                              {"completion", s.completion}});
}

Reply Service::admin_export() {
  return Reply{200, "text/csv", write_responses_csv(study_.export_rows())};
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
    Request req;
    req.method = hreq.method;
    req.path = hreq.path;
    req.body = hreq.body;
    for (const auto& [k, v] : hreq.headers) {
      std::string key = k;
      for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      req.headers[key] = v;
    }
    const Reply rep = impl_->service.handle(req);
    hres.status = rep.status;
    if (rep.status == 503) hres.set_header("Retry-After", "1");
    hres.set_content(rep.body, rep.content_type);
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  port_ = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

bool HttpServer::listen(const std::string& host, int port) {
  port_ = port;
  return impl_->server.listen(host, port);
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = "127.0.0.1";
  std::string port = addr;
  if (colon != std::string::npos) {
    host = addr.substr(0, colon);
    port = addr.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    return {host.empty() ? "127.0.0.1" : host, p};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad address '" + addr + "'");
  }
}

}  // namespace muspike::api
