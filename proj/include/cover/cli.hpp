#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI/CLI.hpp>

#include "cover/config.hpp"
#include "cover/core.hpp"
#include "cover/errors.hpp"
#include "cover/eval.hpp"
#include "cover/io.hpp"
#include "cover/llm_backend.hpp"
#include "cover/pipeline.hpp"
#include "cover/reconstruct.hpp"
#include "cover/remote.hpp"
#include "cover/slm.hpp"
#include "cover/train.hpp"

namespace cover {

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
  return buf;
}

inline std::string resolve_path(const std::filesystem::path& base, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return p.string();
  return (base / p).lexically_normal().string();
}

inline std::string format_metric(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << value;
  return out.str();
}

}  // namespace detail

struct CliOverrides {
  std::optional<long long> seed;
  std::string mock_script;  // forces both backends onto this rule file
  bool offline = false;
};

// Resolves every path in the config against the config file's directory so
// fixture configs work from any working directory.
inline Config load_cli_config(const std::string& config_path, const CliOverrides& overrides) {
  if (config_path.empty()) throw ConfigError("--config is required");
  Config config = load_config(config_path);
  const auto base = std::filesystem::path(config_path).parent_path();
  config.main_backend.script = detail::resolve_path(base, config.main_backend.script);
  config.escalation_backend.script = detail::resolve_path(base, config.escalation_backend.script);
  config.paths.kb = detail::resolve_path(base, config.paths.kb);
  config.paths.cache_dir = detail::resolve_path(base, config.paths.cache_dir);
  config.paths.output_dir = detail::resolve_path(base, config.paths.output_dir);
  config.paths.head = detail::resolve_path(base, config.paths.head);
  if (!overrides.mock_script.empty()) {
    const auto script = std::filesystem::absolute(overrides.mock_script).lexically_normal().string();
    config.main_backend.kind = "mock";
    config.main_backend.script = script;
    config.escalation_backend.kind = "mock";
    config.escalation_backend.script = script;
  }
  if (overrides.seed.has_value()) {
    config.pipeline.seed = static_cast<std::uint64_t>(*overrides.seed);
    config.train.seed = static_cast<std::uint64_t>(*overrides.seed);
  }
  config.validate();
  return config;
}

inline std::unique_ptr<ChatBackend> make_backend(const BackendSection& section,
                                                 const std::string& name,
                                                 const std::string& cache_dir, bool offline) {
  std::string backend_id;
  std::string model;
  if (section.kind == "mock") {
    backend_id = "mock:" + name;
    model = "scripted-mock";
  } else {
    const auto target = detail::parse_endpoint(section.endpoint);
    backend_id = "remote:" + target.origin + target.path_prefix + ":" + section.model;
    model = section.model;
  }
  if (offline) {
    if (cache_dir.empty()) {
      throw ConfigError("--offline requires paths.cache_dir so responses can be replayed");
    }
    return std::make_unique<CacheOnlyChatBackend>(backend_id, model, cache_dir);
  }
  std::unique_ptr<ChatBackend> inner;
  if (section.kind == "mock") {
    inner = std::make_unique<ScriptedMockBackend>(backend_id, MockScript::load(section.script));
  } else {
    RemoteOptions options;
    options.endpoint = section.endpoint;
    options.model = section.model;
    options.token_env = section.token_env;
    options.max_retries = section.max_retries;
    options.backoff_base_ms = section.backoff_base_ms;
    options.timeout_s = section.timeout_s;
    inner = std::make_unique<RemoteChatBackend>(options);
  }
  if (!cache_dir.empty()) {
    return std::make_unique<DiskCachedChatBackend>(std::move(inner), cache_dir);
  }
  return inner;
}

inline std::shared_ptr<EmbeddingProvider> make_provider(const ProviderSection& section,
                                                        bool offline) {
  std::shared_ptr<EmbeddingProvider> inner;
  if (section.kind == "fixture") {
    inner = std::make_shared<FixtureEmbeddingProvider>(section.dim, section.seed);
  } else {
    if (offline) {
      throw ConfigError("--offline requires fixture embedding providers; responses for remote "
                        "embeddings are not cached on disk");
    }
    RemoteOptions options;
    options.endpoint = section.endpoint;
    options.model = section.model;
    options.token_env = section.token_env;
    options.max_retries = section.max_retries;
    options.backoff_base_ms = section.backoff_base_ms;
    options.timeout_s = section.timeout_s;
    inner = std::make_shared<RemoteEmbeddingProvider>(options);
  }
  return std::make_shared<CachingEmbeddingProvider>(std::move(inner));
}

// With no trained head configured, fixture providers fall back to the
// axis-aligned head (exact for marker fixtures). Remote embedding spaces
// have no meaningful default, so they require paths.head.
inline ClassifierHead make_head(const Config& config, const EmbeddingProvider& verify_provider,
                                const ProviderSection& verify_section) {
  if (!config.paths.head.empty()) {
    ClassifierHead head = load_head(config.paths.head);
    if (head.provider_id != verify_provider.id()) {
      throw ConfigError("head " + config.paths.head + " was trained against provider \"" +
                        head.provider_id + "\" but the configured verify provider is \"" +
                        verify_provider.id() + "\"");
    }
    return head;
  }
  if (verify_section.kind != "fixture") {
    throw ConfigError("paths.head must point at a trained head when the verify provider is remote");
  }
  ClassifierHead head = fixture_head(verify_section.dim);
  head.provider_id = verify_provider.id();
  return head;
}

struct RuntimeParts {
  std::unique_ptr<ChatBackend> main_backend;
  std::unique_ptr<ChatBackend> escalation_backend;
  std::shared_ptr<EmbeddingProvider> estimate_provider;
  std::shared_ptr<EmbeddingProvider> verify_provider;
  ClassifierHead head;
};

inline RuntimeParts make_runtime(const Config& config, const CliOverrides& overrides) {
  RuntimeParts parts;
  parts.main_backend =
      make_backend(config.main_backend, "main", config.paths.cache_dir, overrides.offline);
  parts.escalation_backend = make_backend(config.escalation_backend, "escalation",
                                          config.paths.cache_dir, overrides.offline);
  parts.estimate_provider = make_provider(config.provider, overrides.offline);
  const ProviderSection& verify_section =
      config.verify_provider.has_value() ? *config.verify_provider : config.provider;
  if (config.verify_provider.has_value()) {
    parts.verify_provider = make_provider(verify_section, overrides.offline);
  } else {
    parts.verify_provider = parts.estimate_provider;
  }
  parts.head = make_head(config, *parts.verify_provider, verify_section);
  return parts;
}

inline std::vector<KnowledgeEntry> load_kb_if_configured(const Config& config) {
  if (config.paths.kb.empty()) return {};
  return load_knowledge_base(config.paths.kb);
}

inline int cmd_run(const Config& config, const CliOverrides& overrides,
                   const std::string& dataset_path, std::ostream& out, std::ostream& err) {
  const auto dataset = load_dataset(dataset_path);
  const auto kb = load_kb_if_configured(config);
  RuntimeParts parts = make_runtime(config, overrides);
  QueryLog log;
  const RunOutcome outcome =
      run_pipeline(dataset, kb, config.pipeline, *parts.main_backend, *parts.escalation_backend,
                   *parts.estimate_provider, *parts.verify_provider, parts.head, log,
                   config.eval.kind);
  const auto run_dir = make_run_dir(config.paths.output_dir, config.pipeline.seed,
                                    detail::utc_timestamp());
  write_trace(run_dir / "trace.jsonl", outcome.trace);
  write_query_log(run_dir / "query_log.jsonl", log);
  write_run_report(run_dir / "run_report.jsonl", outcome);
  write_reconstruction_dump(run_dir / "reconstructions.jsonl", outcome.reconstructions);
  if (outcome.report.f_avg.has_value()) {
    out << "F_AVG " << detail::format_metric(*outcome.report.f_avg) << "\n";
  }
  out << "Q_AVG " << detail::format_metric(outcome.report.q_avg) << "\n";
  out << "finalized " << outcome.report.results.size() << "/" << outcome.report.dataset_size
      << "\n";
  out << "artifacts " << run_dir.string() << "\n";
  if (outcome.aborted) {
    err << "run aborted: " << outcome.abort_reason << "\n";
    return 3;
  }
  return 0;
}

inline int cmd_train(const Config& config, const CliOverrides& overrides,
                     const std::string& trace_path, const std::string& dataset_path,
                     std::ostream& out, std::ostream& err) {
  const auto dataset = load_dataset(dataset_path);
  const auto trace = load_trace(trace_path);
  const ProviderSection& verify_section =
      config.verify_provider.has_value() ? *config.verify_provider : config.provider;
  auto provider = make_provider(verify_section, overrides.offline);
  std::vector<std::string> diagnostics;
  const auto records = collect_training_records(trace, dataset, *provider, &diagnostics);
  for (const auto& line : diagnostics) err << line << "\n";
  if (records.empty()) {
    err << "no correct reasoning records in " << trace_path << "; nothing to train on\n";
    return 4;
  }
  const TrainResult result = train_head(records, config.train, provider->id());
  const auto run_dir = make_run_dir(config.paths.output_dir, config.train.seed,
                                    detail::utc_timestamp());
  const auto head_path = config.paths.head.empty()
                             ? (run_dir / "head.json").string()
                             : config.paths.head;
  save_head(head_path, result.head);
  write_train_report(run_dir / "train_report.jsonl", result, records.size(), diagnostics);
  const EpochStats& best = result.epochs.at(result.best_epoch - 1);
  out << "records " << result.train_count + result.holdout_count << " (train "
      << result.train_count << ", holdout " << result.holdout_count << ")\n";
  out << "best epoch " << result.best_epoch << "\n";
  if (result.holdout_count > 0) {
    out << "holdout CE " << detail::format_metric(best.holdout_ce) << "\n";
    out << "holdout accuracy " << detail::format_metric(best.holdout_accuracy) << "\n";
  } else {
    out << "train loss " << detail::format_metric(best.train_loss) << "\n";
  }
  out << "head " << head_path << "\n";
  out << "artifacts " << run_dir.string() << "\n";
  return 0;
}

inline int cmd_eval(const Config& config, const std::string& predictions_path,
                    const std::string& golds_path, const std::optional<DatasetKind>& kind_flag,
                    std::ostream& out) {
  const auto prediction_pairs = load_labels(predictions_path);
  const auto golds = load_labels(golds_path);
  if (prediction_pairs.size() != golds.size()) {
    throw ConfigError("prediction and gold files disagree on size (" +
                      std::to_string(prediction_pairs.size()) + " vs " +
                      std::to_string(golds.size()) + ")");
  }
  std::unordered_map<std::string, StanceLabel> predictions(prediction_pairs.begin(),
                                                           prediction_pairs.end());
  std::vector<StanceLabel> pred_labels;
  std::vector<StanceLabel> gold_labels;
  pred_labels.reserve(golds.size());
  gold_labels.reserve(golds.size());
  for (const auto& [id, gold] : golds) {
    const auto it = predictions.find(id);
    if (it == predictions.end()) {
      throw ConfigError("no prediction for id \"" + id + "\"");
    }
    pred_labels.push_back(it->second);
    gold_labels.push_back(gold);
  }
  const DatasetKind kind = kind_flag.value_or(config.eval.kind);
  const F1Report report = f1_report(pred_labels, gold_labels, kind);
  out << std::left << std::setw(10) << "class" << std::right << std::setw(12) << "precision"
      << std::setw(12) << "recall" << std::setw(12) << "f1" << "\n";
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    const ClassF1& c = report.per_class[i];
    out << std::left << std::setw(10) << to_string(kAllLabels[i]) << std::right << std::setw(12)
        << detail::format_metric(c.precision) << std::setw(12) << detail::format_metric(c.recall)
        << std::setw(12) << detail::format_metric(c.f1) << "\n";
  }
  out << std::left << std::setw(10) << "F_AVG" << std::right << std::setw(36)
      << detail::format_metric(report.f_avg) << "\n";
  nlohmann::json summary{{"kind", to_string(report.kind)},
                         {"count", report.count},
                         {"f_avg", report.f_avg}};
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    const ClassF1& c = report.per_class[i];
    classes.push_back({{"label", to_string(kAllLabels[i])},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1}});
  }
  summary["per_class"] = classes;
  out << summary.dump() << "\n";
  return 0;
}

inline int cmd_reconstruct(const Config& config, const CliOverrides& overrides,
                           const std::string& dataset_path, std::ostream& out) {
  const auto dataset = load_dataset(dataset_path);
  const auto kb = load_kb_if_configured(config);
  auto provider = make_provider(config.provider, overrides.offline);
  StanceEstimator estimator{provider.get(), config.pipeline.stance_template};
  std::vector<ReconstructedTweet> dump;
  dump.reserve(dataset.size());
  for (const auto& tweet : dataset) {
    dump.push_back(reconstruct_tweet(tweet, kb, estimator, config.pipeline.length_cap));
  }
  const auto run_dir = make_run_dir(config.paths.output_dir, config.pipeline.seed,
                                    detail::utc_timestamp());
  write_reconstruction_dump(run_dir / "reconstructions.jsonl", dump);
  for (const auto& rec : dump) {
    std::size_t kept = 0;
    for (const auto& s : rec.provenance) {
      if (s.kept) ++kept;
    }
    out << rec.tweet_id << " kept " << kept << "/" << rec.provenance.size() << " sentences, SE "
        << detail::format_metric(rec.se_initial) << " -> " << detail::format_metric(rec.se_tweet);
    if (!rec.attached_knowledge.empty()) {
      out << ", knowledge " << rec.attached_knowledge.size();
    }
    if (rec.truncated) out << ", truncated";
    out << "\n";
  }
  out << "artifacts " << run_dir.string() << "\n";
  return 0;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"stance detection via small/large model consistency verification"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  CliOverrides overrides;
  std::optional<long long> seed_flag;
  app.add_option("--config", config_path, "config file (JSON)");
  app.add_option("--seed", seed_flag, "override pipeline and train seeds");
  app.add_option("--mock", overrides.mock_script,
                 "force both backends onto this scripted rule file");
  app.add_flag("--offline", overrides.offline, "serve responses from cache only; miss is an error");

  auto* run = app.add_subcommand("run", "run the detection pipeline over a dataset");
  std::string run_dataset;
  run->add_option("dataset", run_dataset, "tweets JSONL")->required();

  auto* train = app.add_subcommand("train", "train a classifier head from a run trace");
  std::string train_trace;
  std::string train_dataset;
  train->add_option("trace", train_trace, "trace JSONL from a previous run")->required();
  train->add_option("dataset", train_dataset, "tweets JSONL with gold labels")->required();

  auto* eval = app.add_subcommand("eval", "score predictions against gold labels");
  std::string eval_predictions;
  std::string eval_golds;
  std::string eval_kind;
  eval->add_option("predictions", eval_predictions, "JSONL with id and label fields")->required();
  eval->add_option("golds", eval_golds, "JSONL with id and label fields")->required();
  eval->add_option("--kind", eval_kind, "two_class or three_class (default: config)");

  auto* reconstruct = app.add_subcommand("reconstruct", "dry-run context reconstruction only");
  std::string reconstruct_dataset;
  reconstruct->add_option("dataset", reconstruct_dataset, "tweets JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }
  overrides.seed = seed_flag;

  try {
    const Config config = load_cli_config(config_path, overrides);
    if (run->parsed()) return cmd_run(config, overrides, run_dataset, out, err);
    if (train->parsed()) return cmd_train(config, overrides, train_trace, train_dataset, out, err);
    if (eval->parsed()) {
      std::optional<DatasetKind> kind_flag;
      if (!eval_kind.empty()) {
        kind_flag = parse_dataset_kind(eval_kind);
        if (!kind_flag.has_value()) {
          throw ConfigError("--kind must be two_class or three_class");
        }
      }
      return cmd_eval(config, eval_predictions, eval_golds, kind_flag, out);
    }
    if (reconstruct->parsed()) return cmd_reconstruct(config, overrides, reconstruct_dataset, out);
    err << "no command given\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return 3;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace cover
