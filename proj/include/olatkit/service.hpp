#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "olatkit/olat_stack.hpp"

namespace olat::service {

struct ServiceConfig {
  std::size_t cache_budget = std::size_t{2} << 30;  // decoded OLAT bytes per session
  std::size_t max_env_bytes = std::size_t{64} << 20;
  std::string cors_origin = "*";
  std::filesystem::path static_dir;  // optional UI bundle served at /
};

struct Request {
  std::string method;  // GET, POST, OPTIONS
  std::string path;    // e.g. /api/sessions/a/lights
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Session registry plus the /api routes. handle() is transport-independent;
// listen() puts it behind an HTTP server.
class Service {
 public:
  explicit Service(ServiceConfig cfg = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Registers a loaded stack; the id defaults to its session metadata, then
  // to "s<n>". Throws ValidationError on a duplicate id.
  std::string add_session(OlatStack stack, std::string id = {});
  // Loads a manifest with a fresh cache of cfg.cache_budget bytes.
  std::string load_session(const std::filesystem::path& manifest);

  std::vector<std::string> session_ids() const;
  const ServiceConfig& config() const { return cfg_; }

  Response handle(const Request& req) const;

  // Binds and serves until stop(). port 0 picks a free port, reported by
  // bound_port() once bind() has returned.
  void bind(const std::string& host, int port);
  int bound_port() const;
  void listen();  // blocking
  void stop();

 private:
  struct Impl;
  ServiceConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace olat::service
