#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cover/core.hpp"
#include "cover/detail/digest.hpp"
#include "cover/detail/text.hpp"
#include "cover/errors.hpp"
#include "cover/prompt.hpp"

namespace cover {

struct CompletionResult {
  std::string text;
  bool cached = false;
  int transport_failures = 0;  // retried-away failures preceding this success
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  virtual std::string id() const = 0;
  virtual std::string model() const = 0;
  virtual CompletionResult complete(const std::string& prompt, double temperature,
                                    std::optional<long long> seed) = 0;
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// Content address of a completion request. Identical requests to the same
// backend and model always map to the same digest.
inline std::string completion_digest(const std::string& backend_id, const std::string& model,
                                     const std::string& prompt, double temperature,
                                     std::optional<long long> seed) {
  const std::string key = detail::canonical_key(
      {backend_id, model, prompt, detail::format_double(temperature),
       seed.has_value() ? std::to_string(*seed) : std::string("-")});
  return detail::sha256_hex(key);
}

struct QueryLogEntry {
  std::string backend_id;
  std::string model;
  int round = 0;
  int batch_size = 0;
  std::vector<std::string> tweet_ids;
  bool ok = true;
  bool cached = false;
  bool escalation = false;
  double latency_ms = 0.0;
  std::string prompt_digest;
};

// Append-only, thread-safe record of every completion attempt.
class QueryLog {
 public:
  void append(QueryLogEntry entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.push_back(std::move(entry));
  }

  std::vector<QueryLogEntry> snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::vector<QueryLogEntry> entries_;
};

// Billable queries: successful attempts that were not served from cache.
inline long long count_queries(const QueryLog& log, bool include_escalation = true) {
  long long n = 0;
  for (const QueryLogEntry& e : log.snapshot()) {
    if (!e.ok || e.cached) continue;
    if (e.escalation && !include_escalation) continue;
    ++n;
  }
  return n;
}

struct QueryContext {
  int round = 0;
  int batch_size = 0;
  std::vector<std::string> tweet_ids;
  bool escalation = false;
};

struct LoggedCompletion {
  std::string text;
  bool cached = false;
};

// Single choke point for issuing a completion: validates inputs, delegates
// to the backend, and logs one entry per attempt (failed attempts first,
// then the successful one). On exhaustion the BackendError is annotated
// with the affected tweet ids and rethrown. The returned cached flag lets
// callers attribute per-tweet query cost.
inline LoggedCompletion complete_logged(ChatBackend& backend, QueryLog& log,
                                        const QueryContext& context, const std::string& prompt,
                                        double temperature, std::optional<long long> seed) {
  if (prompt.empty()) throw std::invalid_argument("completion prompt must be non-empty");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");

  QueryLogEntry base;
  base.backend_id = backend.id();
  base.model = backend.model();
  base.round = context.round;
  base.batch_size = context.batch_size;
  base.tweet_ids = context.tweet_ids;
  base.escalation = context.escalation;
  base.prompt_digest = completion_digest(backend.id(), backend.model(), prompt, temperature, seed);

  const auto started = std::chrono::steady_clock::now();
  CompletionResult result;
  try {
    result = backend.complete(prompt, temperature, seed);
  } catch (BackendError& e) {
    for (int i = 0; i < e.failed_attempts; ++i) {
      QueryLogEntry failed = base;
      failed.ok = false;
      log.append(failed);
    }
    e.tweet_ids = context.tweet_ids;
    throw;
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;

  for (int i = 0; i < result.transport_failures; ++i) {
    QueryLogEntry failed = base;
    failed.ok = false;
    log.append(failed);
  }
  QueryLogEntry entry = base;
  entry.ok = true;
  entry.cached = result.cached;
  entry.latency_ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(elapsed).count();
  log.append(entry);
  return {result.text, result.cached};
}

inline std::string complete(ChatBackend& backend, QueryLog& log, const QueryContext& context,
                            const std::string& prompt, double temperature,
                            std::optional<long long> seed) {
  return complete_logged(backend, log, context, prompt, temperature, seed).text;
}

// Write-through disk cache keyed by completion digest: one file per digest,
// holding the raw completion bytes. Thread safe; concurrent misses on the
// same key may both hit the backend, last write wins with identical bytes.
class DiskCachedChatBackend : public ChatBackend {
 public:
  DiskCachedChatBackend(ChatBackend& inner, std::filesystem::path directory)
      : inner_(inner), dir_(std::move(directory)) {
    std::filesystem::create_directories(dir_);
  }

  DiskCachedChatBackend(std::unique_ptr<ChatBackend> inner, std::filesystem::path directory)
      : owned_(std::move(inner)), inner_(*owned_), dir_(std::move(directory)) {
    std::filesystem::create_directories(dir_);
  }

  std::string id() const override { return inner_.id(); }
  std::string model() const override { return inner_.model(); }

  CompletionResult complete(const std::string& prompt, double temperature,
                            std::optional<long long> seed) override {
    const std::string digest = completion_digest(inner_.id(), inner_.model(), prompt, temperature, seed);
    const std::filesystem::path file = dir_ / (digest + ".txt");
    {
      std::lock_guard<std::mutex> lock(mutex_);
      std::ifstream in(file, std::ios::binary);
      if (in) {
        std::ostringstream buf;
        buf << in.rdbuf();
        return {buf.str(), true, 0};
      }
    }
    CompletionResult result = inner_.complete(prompt, temperature, seed);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const std::filesystem::path tmp = dir_ / (digest + ".tmp");
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write cache file " + tmp.string());
      out << result.text;
      out.close();
      std::filesystem::rename(tmp, file);
    }
    return result;
  }

 private:
  std::unique_ptr<ChatBackend> owned_;
  ChatBackend& inner_;
  std::filesystem::path dir_;
  std::mutex mutex_;
};

// Offline mode: serves exclusively from an existing cache directory. A miss
// is a backend failure, so a cold cache aborts the run instead of silently
// reaching the network.
class CacheOnlyChatBackend : public ChatBackend {
 public:
  CacheOnlyChatBackend(std::string id, std::string model, std::filesystem::path directory)
      : id_(std::move(id)), model_(std::move(model)), dir_(std::move(directory)) {}

  std::string id() const override { return id_; }
  std::string model() const override { return model_; }

  CompletionResult complete(const std::string& prompt, double temperature,
                            std::optional<long long> seed) override {
    const std::string digest = completion_digest(id_, model_, prompt, temperature, seed);
    const std::filesystem::path file = dir_ / (digest + ".txt");
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      throw BackendError("offline cache miss for digest " + digest + " under " + dir_.string(), 1);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return {buf.str(), true, 0};
  }

 private:
  std::string id_;
  std::string model_;
  std::filesystem::path dir_;
};

// Keyword-rule mock: parses the numbered pairs out of the prompt, matches
// each text against substring rules, and emits a schema-conformant response.
// Pure function of (prompt) so runs are reproducible and cacheable.
struct MockRule {
  std::string contains;  // empty = match anything (used for the default)
  StanceLabel label = StanceLabel::None;
  std::optional<std::array<double, kLabelCount>> probs;
  std::string explanation;
};

struct MockScript {
  std::vector<MockRule> rules;
  MockRule fallback{"", StanceLabel::None, std::nullopt, "No stance signal found."};

  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
};

class ScriptedMockBackend : public ChatBackend {
 public:
  ScriptedMockBackend(std::string id, MockScript script, std::string model = "scripted-mock")
      : id_(std::move(id)), model_(std::move(model)), script_(std::move(script)) {}

  std::string id() const override { return id_; }
  std::string model() const override { return model_; }

  CompletionResult complete(const std::string& prompt, double /*temperature*/,
                            std::optional<long long> /*seed*/) override {
    const std::vector<PromptPair> pairs = parse_prompt_pairs(prompt);
    if (pairs.empty()) {
      throw ProtocolError("scripted mock found no text/target pairs in the prompt");
    }
    nlohmann::json results = nlohmann::json::array();
    for (const PromptPair& p : pairs) {
      const MockRule& rule = match(p.text);
      std::array<double, kLabelCount> probs{};
      if (rule.probs.has_value()) {
        probs = *rule.probs;
      } else {
        probs = {0.05, 0.05, 0.05};
        probs[label_index(rule.label)] = 0.9;
      }
      std::string explanation = detail::replace_all(rule.explanation, "{target}", p.target);
      results.push_back({{"text_id", p.index},
                         {"explanation", explanation},
                         {"favor_probability", probs[0]},
                         {"against_probability", probs[1]},
                         {"neutral_probability", probs[2]}});
    }
    nlohmann::json body{{"results", results}};
    return {body.dump(), false, 0};
  }

 private:
  const MockRule& match(const std::string& text) const {
    for (const MockRule& r : script_.rules) {
      if (!r.contains.empty() && text.find(r.contains) != std::string::npos) return r;
    }
    return script_.fallback;
  }

  std::string id_;
  std::string model_;
  MockScript script_;
};

inline MockRule mock_rule_from_json(const nlohmann::json& j, bool is_fallback) {
  if (!j.is_object()) throw ConfigError("mock rule must be an object");
  MockRule rule;
  for (const auto& [key, value] : j.items()) {
    if (key == "contains") {
      rule.contains = value.get<std::string>();
    } else if (key == "label") {
      const auto parsed = parse_label(value.get<std::string>());
      if (!parsed) throw ConfigError("mock rule has unknown label: " + value.dump());
      rule.label = *parsed;
    } else if (key == "probs") {
      if (!value.is_array() || value.size() != kLabelCount) {
        throw ConfigError("mock rule probs must be an array of 3 numbers");
      }
      std::array<double, kLabelCount> p{};
      for (std::size_t i = 0; i < kLabelCount; ++i) p[i] = value[i].get<double>();
      rule.probs = p;
    } else if (key == "explanation") {
      rule.explanation = value.get<std::string>();
    } else {
      throw ConfigError("unknown key in mock rule: " + key);
    }
  }
  if (!is_fallback && rule.contains.empty()) {
    throw ConfigError("mock rule requires a non-empty \"contains\" pattern");
  }
  if (rule.explanation.empty()) {
    throw ConfigError("mock rule requires an \"explanation\"");
  }
  return rule;
}

inline MockScript MockScript::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("mock script must be a JSON object");
  MockScript script;
  for (const auto& [key, value] : j.items()) {
    if (key == "rules") {
      if (!value.is_array()) throw ConfigError("mock script \"rules\" must be an array");
      for (const auto& r : value) script.rules.push_back(mock_rule_from_json(r, false));
    } else if (key == "default") {
      script.fallback = mock_rule_from_json(value, true);
    } else {
      throw ConfigError("unknown key in mock script: " + key);
    }
  }
  return script;
}

inline MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock script " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace cover
