#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cover {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration: file schema violations, unknown keys,
// dimension mismatches, invalid hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A backend or provider could not produce a response after exhausting its
// retry budget. `failed_attempts` counts the transport failures observed;
// `tweet_ids` is filled in by the query layer when the failing request is
// tied to specific tweets.
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& message, int failed_attempts = 1)
      : Error(message), failed_attempts(failed_attempts) {}

  int failed_attempts;
  std::vector<std::string> tweet_ids;
};

// The transport succeeded but the payload does not match the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace cover
