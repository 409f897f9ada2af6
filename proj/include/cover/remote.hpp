#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cover/detail/http.hpp"
#include "cover/errors.hpp"
#include "cover/llm_backend.hpp"
#include "cover/slm.hpp"

namespace cover {

struct RemoteOptions {
  std::string endpoint;   // e.g. https://api.openai.com/v1
  std::string model;
  std::string token_env;  // name of the env var holding the bearer token
  int max_retries = 3;
  double backoff_base_ms = 1000.0;
  double timeout_s = 60.0;
};

namespace detail {

inline std::string body_snippet(const std::string& body) {
  constexpr std::size_t limit = 200;
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

// Shared retry loop: retries transport failures and transient HTTP statuses
// with exponential backoff, gives up with BackendError carrying the attempt
// count, and surfaces permanent HTTP errors as ProtocolError.
inline std::pair<nlohmann::json, int> post_with_retries(const HttpTarget& target,
                                                        const std::string& path,
                                                        const std::string& body,
                                                        const HttpOptions& options,
                                                        const RemoteOptions& remote) {
  int failures = 0;
  for (int attempt = 0;; ++attempt) {
    std::string response_body;
    int status = 0;
    try {
      std::tie(status, response_body) = post_json(target, path, body, options);
    } catch (const BackendError& e) {
      ++failures;
      if (attempt >= remote.max_retries) {
        throw BackendError(std::string(e.what()) + " (after " + std::to_string(failures) +
                               " failed attempts)",
                           failures);
      }
      backoff_sleep(remote.backoff_base_ms, attempt);
      continue;
    }
    if (transient_status(status)) {
      ++failures;
      if (attempt >= remote.max_retries) {
        throw BackendError("HTTP " + std::to_string(status) + " from " + target.origin + path +
                               " (after " + std::to_string(failures) + " failed attempts): " +
                               body_snippet(response_body),
                           failures);
      }
      backoff_sleep(remote.backoff_base_ms, attempt);
      continue;
    }
    if (status != 200) {
      throw ProtocolError("HTTP " + std::to_string(status) + " from " + target.origin + path +
                          ": " + body_snippet(response_body));
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(response_body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
    }
    return {std::move(parsed), failures};
  }
}

}  // namespace detail

// OpenAI-compatible /chat/completions client.
class RemoteChatBackend : public ChatBackend {
 public:
  explicit RemoteChatBackend(RemoteOptions options)
      : options_(std::move(options)),
        target_(detail::parse_endpoint(options_.endpoint)),
        bearer_(detail::bearer_from_env(options_.token_env)) {
    if (options_.model.empty()) throw ConfigError("remote chat backend requires a model name");
    if (options_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  }

  std::string id() const override { return "remote:" + options_.endpoint + ":" + options_.model; }
  std::string model() const override { return options_.model; }

  CompletionResult complete(const std::string& prompt, double temperature,
                            std::optional<long long> seed) override {
    nlohmann::json body{
        {"model", options_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", temperature},
    };
    if (seed.has_value()) body["seed"] = *seed;

    detail::HttpOptions http{bearer_, options_.timeout_s};
    auto [response, failures] =
        detail::post_with_retries(target_, "/chat/completions", body.dump(), http, options_);

    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty()) {
      throw ProtocolError("chat response has no choices: " + detail::body_snippet(response.dump()));
    }
    const nlohmann::json& message = response["choices"][0];
    if (!message.contains("message") || !message["message"].contains("content") ||
        !message["message"]["content"].is_string()) {
      throw ProtocolError("chat response choice has no message content");
    }
    return {message["message"]["content"].get<std::string>(), false, failures};
  }

 private:
  RemoteOptions options_;
  detail::HttpTarget target_;
  std::string bearer_;
};

// OpenAI-compatible /embeddings client. Returns one vector per input, in
// input order, all of equal dimension.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteOptions options)
      : options_(std::move(options)),
        target_(detail::parse_endpoint(options_.endpoint)),
        bearer_(detail::bearer_from_env(options_.token_env)) {
    if (options_.model.empty()) throw ConfigError("remote embedding provider requires a model name");
    if (options_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  }

  std::string id() const override { return "remote:" + options_.endpoint + ":" + options_.model; }

  EmbeddingVector embed(const std::string& text) override { return embed_batch({text})[0]; }

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override {
    if (texts.empty()) return {};
    nlohmann::json body{{"model", options_.model}, {"input", texts}};
    detail::HttpOptions http{bearer_, options_.timeout_s};
    auto [response, failures] =
        detail::post_with_retries(target_, "/embeddings", body.dump(), http, options_);
    (void)failures;

    if (!response.contains("data") || !response["data"].is_array()) {
      throw ProtocolError("embeddings response has no data array");
    }
    const nlohmann::json& data = response["data"];
    if (data.size() != texts.size()) {
      throw ProtocolError("embeddings response has " + std::to_string(data.size()) +
                          " vectors for " + std::to_string(texts.size()) + " inputs");
    }
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const nlohmann::json& item = data[i];
      if (!item.contains("embedding") || !item["embedding"].is_array()) {
        throw ProtocolError("embeddings response item has no embedding array");
      }
      std::size_t slot = i;
      if (item.contains("index")) {
        if (!item["index"].is_number_integer()) {
          throw ProtocolError("embeddings response index is not an integer");
        }
        const long long idx = item["index"].get<long long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= texts.size()) {
          throw ProtocolError("embeddings response index " + std::to_string(idx) +
                              " is out of range");
        }
        slot = static_cast<std::size_t>(idx);
      }
      if (filled[slot]) {
        throw ProtocolError("embeddings response repeats index " + std::to_string(slot));
      }
      EmbeddingVector v;
      v.values.reserve(item["embedding"].size());
      for (const auto& x : item["embedding"]) {
        if (!x.is_number()) throw ProtocolError("embedding entry is not a number");
        const double value = x.get<double>();
        if (!std::isfinite(value)) throw ProtocolError("embedding entry is not finite");
        v.values.push_back(value);
      }
      if (v.values.empty()) throw ProtocolError("embeddings response contains an empty vector");
      out[slot] = std::move(v);
      filled[slot] = true;
    }
    const std::size_t dim = out[0].size();
    for (const EmbeddingVector& v : out) {
      if (v.size() != dim) {
        throw ProtocolError("embeddings response mixes dimensions " + std::to_string(dim) +
                            " and " + std::to_string(v.size()));
      }
    }
    return out;
  }

 private:
  RemoteOptions options_;
  detail::HttpTarget target_;
  std::string bearer_;
};

}  // namespace cover
