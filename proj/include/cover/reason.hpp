#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cover/core.hpp"
#include "cover/errors.hpp"
#include "cover/llm_backend.hpp"
#include "cover/prompt.hpp"

namespace cover {

struct BatchItem {
  std::string tweet_id;
  std::string text;
  std::string target;
};

struct Batch {
  std::vector<BatchItem> items;
  int round = 1;
  int capacity = 1;  // configured batch size for this round

  void validate() const {
    if (capacity < 1) throw std::invalid_argument("batch capacity must be >= 1");
    if (items.empty()) throw std::invalid_argument("batch must contain at least one item");
    if (items.size() > static_cast<std::size_t>(capacity)) {
      throw std::invalid_argument("batch holds " + std::to_string(items.size()) +
                                  " items, capacity is " + std::to_string(capacity));
    }
    std::unordered_set<std::string> seen;
    for (const BatchItem& item : items) {
      if (item.tweet_id.empty()) throw std::invalid_argument("batch item has an empty tweet id");
      if (item.text.empty()) throw std::invalid_argument("batch item has empty text");
      if (!seen.insert(item.tweet_id).second) {
        throw std::invalid_argument("batch repeats tweet id " + item.tweet_id);
      }
    }
  }
};

inline std::string build_batch_prompt(const Batch& batch,
                                      std::string_view instruction_header = kDefaultInstructionHeader) {
  batch.validate();
  std::vector<PromptPair> pairs;
  pairs.reserve(batch.items.size());
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    pairs.push_back({static_cast<int>(i) + 1, batch.items[i].text, batch.items[i].target});
  }
  return render_prompt(instruction_header, pairs);
}

struct ReasonedOutput {
  std::string tweet_id;
  int text_id = 0;
  std::string explanation;
  std::array<double, kLabelCount> raw_scores{};  // (favor, against, none) as returned
  StanceDistribution dist;                       // uniform when parse_ok is false
  bool parse_ok = false;
  bool degenerate_scores = false;  // all-zero scores renormalized to uniform
};

namespace detail {

// First balanced {...} span, skipping code fences and leading prose. String
// literals (with escapes) are honored while counting braces.
inline std::optional<std::string> extract_json_object(std::string_view raw) {
  const std::size_t start = raw.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return std::string(raw.substr(start, i - start + 1));
    }
  }
  return std::nullopt;
}

// Drops commas that directly precede a closing bracket, a common LLM slip.
inline std::string strip_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out.push_back(c);
      continue;
    }
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && is_space(s[j])) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

inline std::optional<long long> coerce_text_id(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    const long long i = static_cast<long long>(d);
    if (static_cast<double>(i) == d) return i;
    return std::nullopt;
  }
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    if (s.empty()) return std::nullopt;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
    }
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Parses a raw completion against the batch it answers. Never throws on
// malformed content: unusable entries leave their slot with parse_ok=false
// and a uniform placeholder distribution.
inline std::vector<ReasonedOutput> parse_batch_response(const std::string& raw_text,
                                                        const Batch& batch) {
  batch.validate();
  std::vector<ReasonedOutput> out(batch.items.size());
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    out[i].tweet_id = batch.items[i].tweet_id;
    out[i].text_id = static_cast<int>(i) + 1;
  }

  const std::optional<std::string> span = detail::extract_json_object(raw_text);
  if (!span.has_value()) return out;

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(*span);
  } catch (const nlohmann::json::exception&) {
    try {
      parsed = nlohmann::json::parse(detail::strip_trailing_commas(*span));
    } catch (const nlohmann::json::exception&) {
      return out;
    }
  }
  if (!parsed.is_object() || !parsed.contains("results") || !parsed["results"].is_array()) {
    return out;
  }

  for (const nlohmann::json& entry : parsed["results"]) {
    if (!entry.is_object()) continue;
    if (!entry.contains("text_id")) continue;
    const std::optional<long long> id = detail::coerce_text_id(entry["text_id"]);
    if (!id.has_value() || *id < 1 || *id > static_cast<long long>(batch.items.size())) continue;
    ReasonedOutput& slot = out[static_cast<std::size_t>(*id - 1)];
    if (slot.parse_ok) continue;  // first entry for a text_id wins

    if (!entry.contains("explanation") || !entry["explanation"].is_string()) continue;
    const std::string explanation = entry["explanation"].get<std::string>();
    if (explanation.empty()) continue;

    std::array<double, kLabelCount> scores{};
    bool scores_ok = true;
    const std::array<const char*, kLabelCount> keys = {"favor_probability", "against_probability",
                                                       "neutral_probability"};
    for (std::size_t k = 0; k < kLabelCount; ++k) {
      if (!entry.contains(keys[k]) || !entry[keys[k]].is_number()) {
        scores_ok = false;
        break;
      }
      const double v = entry[keys[k]].get<double>();
      if (!std::isfinite(v) || v < 0.0) {
        scores_ok = false;
        break;
      }
      scores[k] = v;
    }
    if (!scores_ok) continue;

    bool degenerate = false;
    slot.dist = renormalize(scores[0], scores[1], scores[2], &degenerate);
    slot.raw_scores = scores;
    slot.explanation = explanation;
    slot.degenerate_scores = degenerate;
    slot.parse_ok = true;
  }
  return out;
}

struct BatchReasoningResult {
  std::vector<ReasonedOutput> outputs;  // aligned with batch.items
  bool served_from_cache = false;
  std::string raw_response;
};

// One reasoning call for one batch: render, query (logged), parse.
inline BatchReasoningResult reason_batch(ChatBackend& backend, QueryLog& log, const Batch& batch,
                                         double temperature, std::optional<long long> seed = {},
                                         bool escalation = false,
                                         std::string_view instruction_header = kDefaultInstructionHeader) {
  const std::string prompt = build_batch_prompt(batch, instruction_header);
  QueryContext context;
  context.round = batch.round;
  context.batch_size = static_cast<int>(batch.items.size());
  context.escalation = escalation;
  for (const BatchItem& item : batch.items) context.tweet_ids.push_back(item.tweet_id);

  const LoggedCompletion completion =
      complete_logged(backend, log, context, prompt, temperature, seed);
  BatchReasoningResult result;
  result.outputs = parse_batch_response(completion.text, batch);
  result.served_from_cache = completion.cached;
  result.raw_response = completion.text;
  return result;
}

}  // namespace cover
