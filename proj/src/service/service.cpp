#include "olatkit/service.hpp"

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <optional>
#include <shared_mutex>

#include "olatkit/codec.hpp"
#include "olatkit/error.hpp"
#include "olatkit/json_io.hpp"
#include "olatkit/relight.hpp"

namespace olat::service {
namespace {

using nlohmann::json;

// Thrown inside handlers; mapped to a status with a structured body.
struct HttpError {
  int status;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(int status, std::string kind, std::string message) {
  throw HttpError{status, std::move(kind), std::move(message)};
}

Response json_response(const json& j, int status = 200) { return Response{status, "application/json", j.dump()}; }

Response error_response(int status, const std::string& kind, const std::string& message) {
  return json_response(json{{"error", {{"status", status}, {"kind", kind}, {"message", message}}}}, status);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = path.find('/', i);
    if (j == std::string::npos) j = path.size();
    if (j > i) parts.push_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

double number_field(const json& body, const char* key, double fallback) {
  if (!body.contains(key)) return fallback;
  const json& v = body.at(key);
  if (!v.is_number()) fail(422, "validation", std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(422, "validation", std::string("'") + key + "' must be finite");
  return d;
}

double query_number(const std::map<std::string, std::string>& q, const char* key, double fallback) {
  auto it = q.find(key);
  if (it == q.end()) return fallback;
  const std::string& s = it->second;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(422, "validation", std::string("query parameter '") + key + "' is not a number");
  }
  return v;
}

ToneMapParams tone_params(double exposure, double gamma) {
  if (!(gamma > 0.0)) fail(422, "validation", "gamma must be positive");
  return ToneMapParams{exposure, gamma};
}

bool wants_hdr(const Request& req) {
  auto it = req.query.find("format");
  if (it == req.query.end() || it->second == "png") return false;
  if (it->second == "hdr") return true;
  fail(422, "validation", "format must be 'png' or 'hdr'");
}

Response image_response(const HdrImage& img, const ToneMapParams& tp, bool hdr) {
  if (hdr) {
    const Bytes b = encode_hdr(img);
    return Response{200, "image/vnd.radiance", std::string(b.begin(), b.end())};
  }
  const Bytes b = encode_png(img, tp);
  return Response{200, "image/png", std::string(b.begin(), b.end())};
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::format: return "format";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::domain: return "domain";
    case ErrorKind::validation: return "validation";
    case ErrorKind::contract: return "contract";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
  }
  return "internal";
}

}  // namespace

struct Service::Impl {
  struct Session {
    std::string id;
    OlatStack stack;
    mutable std::mutex env_mutex;
    std::map<std::string, std::shared_ptr<const EnvMap>> envs;
    std::size_t next_env = 0;
  };

  mutable std::shared_mutex mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::size_t next_session = 0;
  httplib::Server server;
  std::atomic<int> port{0};

  std::shared_ptr<Session> session(const std::string& id) const {
    std::shared_lock lock(mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) fail(404, "not_found", "unknown session '" + id + "'");
    return it->second;
  }

  static std::shared_ptr<const EnvMap> env(const Session& s, const std::string& id) {
    std::lock_guard lock(s.env_mutex);
    auto it = s.envs.find(id);
    if (it == s.envs.end()) fail(404, "not_found", "unknown env '" + id + "' in session '" + s.id + "'");
    return it->second;
  }

  static json parse_body(const Request& req) {
    try {
      json j = json::parse(req.body);
      if (!j.is_object()) fail(422, "validation", "request body must be a JSON object");
      return j;
    } catch (const json::parse_error& e) {
      fail(422, "validation", std::string("malformed JSON: ") + e.what());
    }
  }

  static WeightVector weights_from_env_request(const Session& s, const json& body) {
    if (!body.contains("env_id") || !body.at("env_id").is_string()) {
      fail(422, "validation", "'env_id' (string) is required");
    }
    const double rotation = number_field(body, "rotation", 0.0);
    const auto e = env(s, body.at("env_id").get<std::string>());
    return env_to_weights(*e, s.stack.rig(), rotation);
  }

  static WeightVector weights_from_request(const Session& s, const json& body) {
    if (body.contains("weights")) {
      const json& w = body.at("weights");
      if (w.is_object()) return weights_from_json(w, s.stack.rig());
      if (!w.is_array()) fail(422, "validation", "'weights' must be an array of [r, g, b] or an object keyed by label");
      WeightVector out;
      for (const json& entry : w) {
        if (!entry.is_array() || entry.size() != 3) fail(422, "validation", "every weight must be [r, g, b]");
        std::array<double, 3> rgb{};
        for (std::size_t c = 0; c < 3; ++c) {
          if (!entry[c].is_number()) fail(422, "validation", "weights must be numbers");
          rgb[c] = entry[c].get<double>();
          if (!std::isfinite(rgb[c])) fail(422, "validation", "weights must be finite");
        }
        out.weights.push_back(rgb);
      }
      validate(out, s.stack.rig());
      return out;
    }
    if (body.contains("env_id")) return weights_from_env_request(s, body);
    fail(422, "validation", "request needs 'weights' or 'env_id'");
  }

  Response list_sessions() const {
    json out = json::array();
    std::shared_lock lock(mutex);
    for (const auto& [id, s] : sessions) {
      out.push_back({{"id", id},
                     {"subject", s->stack.metadata().subject},
                     {"lights", s->stack.size()},
                     {"resolution", {s->stack.width(), s->stack.height()}}});
    }
    return json_response(out);
  }

  static Response lights(const Session& s) {
    json out = json::array();
    const LightRig& rig = s.stack.rig();
    for (std::size_t i = 0; i < rig.size(); ++i) {
      const Vec3& d = rig.directions[i];
      out.push_back({{"index", i}, {"label", rig.labels[i]}, {"direction", {d.x, d.y, d.z}}});
    }
    return json_response(out);
  }

  Response add_env(Session& s, const Request& req, std::size_t cap) const {
    if (req.body.size() > cap) {
      fail(413, "too_large", "env upload of " + std::to_string(req.body.size()) + " bytes exceeds the " +
                                 std::to_string(cap) + "-byte limit");
    }
    EnvMap e;
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(req.body.data());
    e.image = decode_hdr(std::span<const std::uint8_t>(bytes, req.body.size()));
    validate(e);
    std::lock_guard lock(s.env_mutex);
    const std::string id = "env" + std::to_string(s.next_env++);
    const std::size_t w = e.image.width, h = e.image.height;
    s.envs.emplace(id, std::make_shared<const EnvMap>(std::move(e)));
    return json_response(json{{"env_id", id}, {"width", w}, {"height", h}}, 201);
  }

  static Response weights(const Session& s, const Request& req) {
    const json body = parse_body(req);
    const WeightVector w = weights_from_env_request(s, body);
    json arr = json::array();
    for (const auto& rgb : w.weights) arr.push_back({rgb[0], rgb[1], rgb[2]});
    return json_response(json{{"weights", arr}});
  }

  static Response relight(const Session& s, const Request& req) {
    const json body = parse_body(req);
    WeightVector w = weights_from_request(s, body);
    if (body.contains("max_lights") && !body.at("max_lights").is_null()) {
      const json& k = body.at("max_lights");
      if (!k.is_number_integer() || k.get<long long>() < 1) {
        fail(422, "validation", "'max_lights' must be a positive integer");
      }
      w = truncate_top_k(w, static_cast<std::size_t>(k.get<long long>()));
    }
    const ToneMapParams tp = tone_params(number_field(body, "exposure", 0.0), number_field(body, "gamma", 2.2));
    const bool hdr = wants_hdr(req);
    return image_response(combine(s.stack, w), tp, hdr);
  }

  static Response olat(const Session& s, const std::string& index, const Request& req) {
    std::size_t k = 0;
    const auto res = std::from_chars(index.data(), index.data() + index.size(), k);
    if (res.ec != std::errc() || res.ptr != index.data() + index.size()) {
      fail(422, "validation", "light index '" + index + "' is not a non-negative integer");
    }
    if (k >= s.stack.size()) fail(404, "not_found", "light index " + index + " out of range");
    const ToneMapParams tp = tone_params(query_number(req.query, "exposure", 0.0), query_number(req.query, "gamma", 2.2));
    const bool hdr = wants_hdr(req);
    return image_response(*s.stack.image(k), tp, hdr);
  }
};

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {}

Service::~Service() { stop(); }

std::string Service::add_session(OlatStack stack, std::string id) {
  std::unique_lock lock(impl_->mutex);
  if (id.empty()) id = stack.metadata().session;
  if (id.empty()) {
    do {
      id = "s" + std::to_string(impl_->next_session++);
    } while (impl_->sessions.count(id) != 0);
  }
  if (id.find('/') != std::string::npos) throw ValidationError("session id '" + id + "' contains '/'");
  if (impl_->sessions.count(id) != 0) throw ValidationError("duplicate session id '" + id + "'");
  auto s = std::make_shared<Impl::Session>();
  s->id = id;
  s->stack = std::move(stack);
  impl_->sessions.emplace(id, std::move(s));
  return id;
}

std::string Service::load_session(const std::filesystem::path& manifest) {
  return add_session(load_manifest(manifest, std::make_shared<ImageCache>(cfg_.cache_budget)));
}

std::vector<std::string> Service::session_ids() const {
  std::shared_lock lock(impl_->mutex);
  std::vector<std::string> ids;
  for (const auto& [id, s] : impl_->sessions) ids.push_back(id);
  return ids;
}

Response Service::handle(const Request& req) const {
  try {
    const auto parts = split_path(req.path);
    if (parts.empty() || parts[0] != "api") fail(404, "not_found", "no route for " + req.path);
    if (req.method == "OPTIONS") return Response{204, "text/plain", ""};
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";
    if (parts.size() == 2 && parts[1] == "sessions") {
      if (get) return impl_->list_sessions();
    } else if (parts.size() >= 3 && parts[1] == "sessions") {
      const auto s = impl_->session(parts[2]);
      if (parts.size() == 4 && parts[3] == "lights" && get) return Impl::lights(*s);
      if (parts.size() == 4 && parts[3] == "envs" && post) return impl_->add_env(*s, req, cfg_.max_env_bytes);
      if (parts.size() == 4 && parts[3] == "weights" && post) return Impl::weights(*s, req);
      if (parts.size() == 4 && parts[3] == "relight" && post) return Impl::relight(*s, req);
      if (parts.size() == 5 && parts[3] == "olat" && get) return Impl::olat(*s, parts[4], req);
    }
    fail(404, "not_found", "no route for " + req.method + " " + req.path);
  } catch (const HttpError& e) {
    return error_response(e.status, e.kind, e.message);
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::format:
      case ErrorKind::truncation:
      case ErrorKind::unsupported:
      case ErrorKind::domain:
      case ErrorKind::validation:
      case ErrorKind::contract:
        return error_response(422, kind_name(e.kind()), e.what());
      default:
        return error_response(500, kind_name(e.kind()), e.what());
    }
  } catch (const json::exception& e) {
    return error_response(422, "validation", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

void Service::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  srv.set_payload_max_length(std::max<std::size_t>(cfg_.max_env_bytes * 2, std::size_t{1} << 20));
  srv.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  auto forward = [this](const httplib::Request& in, httplib::Response& out) {
    Request req{in.method, in.path, {}, in.body};
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    const Response r = handle(req);
    out.status = r.status;
    out.set_content(r.body, r.content_type);
  };
  srv.Get(R"(/api(/.*)?)", forward);
  srv.Post(R"(/api(/.*)?)", forward);
  srv.Options(R"(/api(/.*)?)", forward);
  if (!cfg_.static_dir.empty() && !srv.set_mount_point("/", cfg_.static_dir.string())) {
    throw IoError("cannot serve static files from '" + cfg_.static_dir.string() + "'");
  }
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    impl_->port = p;
  } else {
    if (!srv.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    impl_->port = port;
  }
}

int Service::bound_port() const { return impl_->port; }

void Service::listen() {
  if (!impl_->server.listen_after_bind()) throw IoError("server stopped with an error");
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace olat::service
