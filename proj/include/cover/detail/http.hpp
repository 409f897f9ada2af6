#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>

#include "cover/errors.hpp"

namespace cover::detail {

struct HttpTarget {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // e.g. /v1
};

inline HttpTarget parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must include a scheme: " + url);
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("endpoint scheme must be http or https: " + url);
  }
  const std::size_t host_start = scheme_end + 3;
  std::size_t path_start = url.find('/', host_start);
  if (path_start == std::string::npos) path_start = url.size();
  if (path_start == host_start) {
    throw ConfigError("endpoint has no host: " + url);
  }
  HttpTarget t;
  t.origin = url.substr(0, path_start);
  t.path_prefix = url.substr(path_start);
  while (!t.path_prefix.empty() && t.path_prefix.back() == '/') t.path_prefix.pop_back();
  return t;
}

struct HttpOptions {
  std::string bearer_token;
  double timeout_s = 60.0;
};

// POSTs a JSON body; returns (status, body). Throws BackendError on
// transport-level failure (connect, TLS, timeout).
inline std::pair<int, std::string> post_json(const HttpTarget& target, const std::string& path,
                                             const std::string& body, const HttpOptions& options) {
  httplib::Client client(target.origin);
  const auto seconds = static_cast<time_t>(options.timeout_s);
  const auto micros = static_cast<time_t>((options.timeout_s - static_cast<double>(seconds)) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  httplib::Headers headers;
  if (!options.bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + options.bearer_token);
  }
  auto res = client.Post(target.path_prefix + path, headers, body, "application/json");
  if (!res) {
    throw BackendError("transport failure posting to " + target.origin + target.path_prefix +
                           path + ": " + httplib::to_string(res.error()),
                       1);
  }
  return {res->status, res->body};
}

inline bool transient_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

inline void backoff_sleep(double base_ms, int attempt) {
  const double ms = base_ms * std::pow(2.0, attempt);
  std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long long>(ms * 1000.0)));
}

// Reads the secret named by `env_name`. Secrets never appear inline in
// configuration; only the variable name is configured.
inline std::string bearer_from_env(const std::string& env_name) {
  if (env_name.empty()) return "";
  const char* value = std::getenv(env_name.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("environment variable " + env_name +
                      " is named in the configuration but is not set");
  }
  return value;
}

}  // namespace cover::detail
