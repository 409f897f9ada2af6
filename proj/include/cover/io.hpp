#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cover/core.hpp"
#include "cover/detail/digest.hpp"
#include "cover/errors.hpp"
#include "cover/llm_backend.hpp"
#include "cover/pipeline.hpp"
#include "cover/reconstruct.hpp"
#include "cover/train.hpp"

namespace cover {

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string() + " for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  return out;
}

inline nlohmann::json parse_jsonl_line(const std::string& line, const std::filesystem::path& path,
                                       std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                      " is not valid JSON: " + e.what());
  }
}

inline std::string require_string(const nlohmann::json& j, const char* key,
                                  const std::filesystem::path& path, std::size_t line_no) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ConfigError(path.string() + ":" + std::to_string(line_no) + " needs a string \"" +
                      key + "\" field");
  }
  return j[key].get<std::string>();
}

// Walks a JSONL file, calling fn(parsed object, line number) per non-empty line.
template <class Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    fn(parse_jsonl_line(line, path, line_no), line_no);
  }
}

}  // namespace detail

// Dataset lines: {"id", "text", "target", "label"?}. Unknown fields are
// tolerated (real datasets carry extras); ids must be unique; labels must
// come from the closed set.
inline std::vector<Tweet> load_dataset(const std::filesystem::path& path) {
  std::vector<Tweet> tweets;
  std::unordered_set<std::string> ids;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
    Tweet t;
    t.id = detail::require_string(j, "id", path, line_no);
    t.raw_text = detail::require_string(j, "text", path, line_no);
    t.target = detail::require_string(j, "target", path, line_no);
    if (t.id.empty() || detail::trim(t.raw_text).empty() || detail::trim(t.target).empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        " has an empty id, text, or target");
    }
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_string()) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          " label must be a string");
      }
      const auto parsed = parse_label(j["label"].get<std::string>());
      if (!parsed.has_value()) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + " has unknown label \"" +
                          j["label"].get<std::string>() + "\"");
      }
      t.gold = parsed;
    }
    if (!ids.insert(t.id).second) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + " repeats id " + t.id);
    }
    tweets.push_back(std::move(t));
  });
  if (tweets.empty()) throw ConfigError(path.string() + " contains no records");
  return tweets;
}

// Knowledge base lines: {"entity", "description"}; normalized entities must
// be unique.
inline std::vector<KnowledgeEntry> load_knowledge_base(const std::filesystem::path& path) {
  std::vector<KnowledgeEntry> entries;
  std::unordered_set<std::string> normalized;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
    KnowledgeEntry e;
    e.entity = detail::require_string(j, "entity", path, line_no);
    e.description = detail::require_string(j, "description", path, line_no);
    const std::string norm = detail::normalize_text(e.entity);
    if (norm.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + " has an empty entity");
    }
    if (!normalized.insert(norm).second) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        " repeats entity \"" + e.entity + "\" (normalized match)");
    }
    entries.push_back(std::move(e));
  });
  return entries;
}

inline nlohmann::json to_json(const StanceDistribution& p) {
  return nlohmann::json::array({p.favor(), p.against(), p.none()});
}

inline StanceDistribution stance_distribution_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kLabelCount) {
    throw ConfigError("stance distribution must be an array of 3 numbers");
  }
  return StanceDistribution(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json to_json(const PredictionRecord& r) {
  return nlohmann::json{
      {"tweet_id", r.tweet_id},
      {"round", r.round},
      {"escalation", r.escalation},
      {"parse_ok", r.parse_ok},
      {"llm_dist", to_json(r.llm_dist)},
      {"slm_dist", to_json(r.slm_dist)},
      {"explanation", r.explanation},
      {"se_explanation", r.se_explanation},
      {"se_tweet", r.se_tweet},
      {"similarity", r.similarity},
      {"verdict", to_string(r.verdict)},
  };
}

inline PredictionRecord prediction_record_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  try {
    r.tweet_id = j.at("tweet_id").get<std::string>();
    r.round = j.at("round").get<int>();
    r.escalation = j.value("escalation", false);
    r.parse_ok = j.at("parse_ok").get<bool>();
    r.llm_dist = stance_distribution_from_json(j.at("llm_dist"));
    r.slm_dist = stance_distribution_from_json(j.at("slm_dist"));
    r.explanation = j.at("explanation").get<std::string>();
    r.se_explanation = j.at("se_explanation").get<double>();
    r.se_tweet = j.at("se_tweet").get<double>();
    r.similarity = j.at("similarity").get<double>();
    const auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!verdict.has_value()) {
      throw ConfigError("unknown verdict \"" + j.at("verdict").get<std::string>() + "\"");
    }
    r.verdict = *verdict;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prediction record: ") + e.what());
  }
  return r;
}

inline void write_trace(const std::filesystem::path& path,
                        const std::vector<PredictionRecord>& trace) {
  std::ofstream out = detail::open_output(path);
  for (const PredictionRecord& r : trace) out << to_json(r).dump() << "\n";
}

inline std::vector<PredictionRecord> load_trace(const std::filesystem::path& path) {
  std::vector<PredictionRecord> trace;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
    try {
      trace.push_back(prediction_record_from_json(j));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return trace;
}

inline void write_query_log(const std::filesystem::path& path, const QueryLog& log) {
  std::ofstream out = detail::open_output(path);
  for (const QueryLogEntry& e : log.snapshot()) {
    out << nlohmann::json{{"backend_id", e.backend_id},
                          {"model", e.model},
                          {"round", e.round},
                          {"batch_size", e.batch_size},
                          {"tweet_ids", e.tweet_ids},
                          {"ok", e.ok},
                          {"cached", e.cached},
                          {"escalation", e.escalation},
                          {"latency_ms", e.latency_ms},
                          {"prompt_digest", e.prompt_digest}}
               .dump()
        << "\n";
  }
}

// Run report: one {"type":"result"} line per finalized tweet in dataset
// order, then a single {"type":"summary"} line with the run-level metrics.
inline void write_run_report(const std::filesystem::path& path, const RunOutcome& outcome) {
  std::ofstream out = detail::open_output(path);
  const RunReport& report = outcome.report;
  for (const TweetResult& r : report.results) {
    nlohmann::json line{{"type", "result"},
                        {"id", r.tweet_id},
                        {"label", to_string(r.label)},
                        {"source", to_string(r.source)},
                        {"query_share", r.query_share}};
    if (!r.diagnostic.empty()) line["diagnostic"] = r.diagnostic;
    out << line.dump() << "\n";
  }
  nlohmann::json summary{{"type", "summary"},
                         {"dataset_size", report.dataset_size},
                         {"finalized", report.results.size()},
                         {"kind", to_string(report.kind)},
                         {"labeled_count", report.labeled_count},
                         {"q_avg", report.q_avg},
                         {"billable_queries", report.billable_queries},
                         {"billable_escalation_queries", report.billable_escalation_queries},
                         {"records_total", report.records_total},
                         {"parse_failures", report.parse_failures},
                         {"finalized_valid", report.finalized_valid},
                         {"finalized_aggregated", report.finalized_aggregated},
                         {"finalized_escalated", report.finalized_escalated},
                         {"aborted", outcome.aborted}};
  if (report.f_avg.has_value()) summary["f_avg"] = *report.f_avg;
  if (!outcome.abort_reason.empty()) summary["abort_reason"] = outcome.abort_reason;
  out << summary.dump() << "\n";
}

inline void write_reconstruction_dump(const std::filesystem::path& path,
                                      const std::vector<ReconstructedTweet>& reconstructions) {
  std::ofstream out = detail::open_output(path);
  for (const ReconstructedTweet& r : reconstructions) {
    nlohmann::json knowledge = nlohmann::json::array();
    for (const KnowledgeEntry& k : r.attached_knowledge) {
      knowledge.push_back({{"entity", k.entity}, {"description", k.description}});
    }
    nlohmann::json sentences = nlohmann::json::array();
    for (const SentenceTrace& s : r.provenance) {
      sentences.push_back({{"text", s.text}, {"knowledge", s.knowledge}, {"kept", s.kept}});
    }
    out << nlohmann::json{{"id", r.tweet_id},
                          {"final_text", r.final_text},
                          {"se_initial", r.se_initial},
                          {"se_tweet", r.se_tweet},
                          {"truncated", r.truncated},
                          {"attached_knowledge", knowledge},
                          {"sentences", sentences}}
               .dump()
        << "\n";
  }
}

namespace detail {

inline std::string head_digest(const ClassifierHead& head) {
  std::vector<std::string> fields;
  fields.push_back(std::to_string(head.dim));
  fields.push_back(head.provider_id);
  for (double w : head.weights) fields.push_back(format_double(w));
  for (double b : head.bias) fields.push_back(format_double(b));
  return sha256_hex(canonical_key(fields));
}

}  // namespace detail

// Head file: single JSON object with dimensions, row-major weights, bias,
// the provider the head was trained against, and a content digest that
// load_head re-verifies.
inline void save_head(const std::filesystem::path& path, const ClassifierHead& head) {
  if (head.weights.size() != kLabelCount * head.dim) {
    throw ConfigError("refusing to save a head whose weights do not match its dimension");
  }
  nlohmann::json j{{"dim", head.dim},
                   {"weights", head.weights},
                   {"bias", head.bias},
                   {"provider_id", head.provider_id},
                   {"digest", detail::head_digest(head)}};
  std::ofstream out = detail::open_output(path);
  out << j.dump(2) << "\n";
}

inline ClassifierHead load_head(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("head file " + path.string() + " is not valid JSON: " + e.what());
  }
  ClassifierHead head;
  try {
    head.dim = j.at("dim").get<std::size_t>();
    head.weights = j.at("weights").get<std::vector<double>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    if (bias.size() != kLabelCount) throw ConfigError("head bias must have 3 entries");
    for (std::size_t i = 0; i < kLabelCount; ++i) head.bias[i] = bias[i];
    head.provider_id = j.at("provider_id").get<std::string>();
    const std::string digest = j.at("digest").get<std::string>();
    if (head.weights.size() != kLabelCount * head.dim) {
      throw ConfigError("head file " + path.string() + " weights do not match dimension");
    }
    if (digest != detail::head_digest(head)) {
      throw ConfigError("head file " + path.string() + " failed its digest check");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("head file " + path.string() + " is malformed: " + e.what());
  }
  return head;
}

inline void write_train_report(const std::filesystem::path& path, const TrainResult& result,
                               std::size_t records_used,
                               const std::vector<std::string>& diagnostics) {
  std::ofstream out = detail::open_output(path);
  for (const EpochStats& s : result.epochs) {
    out << nlohmann::json{{"type", "epoch"},
                          {"epoch", s.epoch},
                          {"train_loss", s.train_loss},
                          {"train_ce", s.train_ce},
                          {"train_contrastive", s.train_contrastive},
                          {"holdout_ce", s.holdout_ce},
                          {"holdout_accuracy", s.holdout_accuracy}}
               .dump()
        << "\n";
  }
  nlohmann::json summary{{"type", "summary"},
                         {"best_epoch", result.best_epoch},
                         {"best_metric", result.best_metric},
                         {"records", records_used},
                         {"train_count", result.train_count},
                         {"holdout_count", result.holdout_count}};
  if (!diagnostics.empty()) summary["diagnostics"] = diagnostics;
  out << summary.dump() << "\n";
}

// Reads (id, label) pairs from any JSONL file that carries them — run
// reports qualify directly (summary lines lack an id and are skipped).
inline std::vector<std::pair<std::string, StanceLabel>> load_labels(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, StanceLabel>> out;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
    if (!j.is_object() || !j.contains("id") || !j.contains("label")) return;
    if (!j["id"].is_string() || !j["label"].is_string()) return;
    const std::string id = j["id"].get<std::string>();
    const auto label = parse_label(j["label"].get<std::string>());
    if (!label.has_value()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + " has unknown label \"" +
                        j["label"].get<std::string>() + "\"");
    }
    if (!seen.insert(id).second) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + " repeats id " + id);
    }
    out.emplace_back(id, *label);
  });
  return out;
}

// Run directories are timestamp+seed named and never reused; a suffix
// disambiguates same-second runs.
inline std::filesystem::path make_run_dir(const std::filesystem::path& output_dir,
                                          std::uint64_t seed, std::string timestamp) {
  std::filesystem::create_directories(output_dir);
  const std::string base = "run-" + timestamp + "-seed" + std::to_string(seed);
  std::filesystem::path dir = output_dir / base;
  for (int suffix = 2; std::filesystem::exists(dir); ++suffix) {
    dir = output_dir / (base + "-" + std::to_string(suffix));
  }
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cover
