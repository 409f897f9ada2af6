#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cover/errors.hpp"
#include "cover/eval.hpp"
#include "cover/pipeline.hpp"
#include "cover/train.hpp"

namespace cover {

struct BackendSection {
  std::string kind = "remote";  // "remote" or "mock"
  std::string endpoint = "https://api.openai.com/v1";
  std::string model;
  std::string token_env = "OPENAI_API_KEY";
  std::string script;  // mock rule file, only for kind "mock"
  int max_retries = 3;
  double backoff_base_ms = 1000.0;
  double timeout_s = 60.0;
};

struct ProviderSection {
  std::string kind = "fixture";  // "remote" or "fixture"
  std::string endpoint = "https://api.openai.com/v1";
  std::string model;
  std::string token_env = "OPENAI_API_KEY";
  std::size_t dim = 64;       // fixture only
  std::uint64_t seed = 0;     // fixture only
  int max_retries = 3;
  double backoff_base_ms = 1000.0;
  double timeout_s = 60.0;
};

struct EvalSection {
  DatasetKind kind = DatasetKind::TwoClassAvg;
};

struct PathsSection {
  std::string kb;
  std::string cache_dir;
  std::string output_dir = "out";
  std::string head;
};

struct Config {
  BackendSection main_backend;
  BackendSection escalation_backend;
  ProviderSection provider;                  // stance estimator embeddings
  std::optional<ProviderSection> verify_provider;  // defaults to `provider`
  PipelineConfig pipeline;
  TrainConfig train;
  EvalSection eval;
  PathsSection paths;

  void validate() const {
    pipeline.validate();
    train.validate();
    const auto check_backend = [](const BackendSection& b, const char* name) {
      if (b.kind != "remote" && b.kind != "mock") {
        throw ConfigError(std::string("backends.") + name + ".kind must be remote or mock");
      }
      if (b.kind == "remote" && b.model.empty()) {
        throw ConfigError(std::string("backends.") + name + ".model must be set");
      }
      if (b.kind == "mock" && b.script.empty()) {
        throw ConfigError(std::string("backends.") + name + ".script must name a rule file");
      }
      if (b.max_retries < 0) {
        throw ConfigError(std::string("backends.") + name + ".max_retries must be >= 0");
      }
    };
    check_backend(main_backend, "main");
    check_backend(escalation_backend, "escalation");
    const auto check_provider = [](const ProviderSection& p, const char* name) {
      if (p.kind != "remote" && p.kind != "fixture") {
        throw ConfigError(std::string("providers.") + name + ".kind must be remote or fixture");
      }
      if (p.kind == "remote" && p.model.empty()) {
        throw ConfigError(std::string("providers.") + name + ".model must be set");
      }
      if (p.kind == "fixture" && p.dim < 4) {
        throw ConfigError(std::string("providers.") + name + ".dim must be >= 4");
      }
    };
    check_provider(provider, "main");
    if (verify_provider.has_value()) check_provider(*verify_provider, "verify");
  }
};

namespace detail {

template <class Fn>
void walk_object(const nlohmann::json& j, const std::string& where, Fn&& fn) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!fn(key, value)) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <class T>
T get_as(const nlohmann::json& v, const std::string& where) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + " has the wrong type");
  }
}

inline BackendSection backend_from_json(const nlohmann::json& j, const std::string& where,
                                        BackendSection base) {
  walk_object(j, where, [&](const std::string& key, const nlohmann::json& v) {
    if (key == "kind") {
      base.kind = get_as<std::string>(v, where + ".kind");
    } else if (key == "endpoint") {
      base.endpoint = get_as<std::string>(v, where + ".endpoint");
    } else if (key == "model") {
      base.model = get_as<std::string>(v, where + ".model");
    } else if (key == "token_env") {
      base.token_env = get_as<std::string>(v, where + ".token_env");
    } else if (key == "script") {
      base.script = get_as<std::string>(v, where + ".script");
    } else if (key == "max_retries") {
      base.max_retries = get_as<int>(v, where + ".max_retries");
    } else if (key == "backoff_base_ms") {
      base.backoff_base_ms = get_as<double>(v, where + ".backoff_base_ms");
    } else if (key == "timeout_s") {
      base.timeout_s = get_as<double>(v, where + ".timeout_s");
    } else {
      return false;
    }
    return true;
  });
  return base;
}

inline ProviderSection provider_from_json(const nlohmann::json& j, const std::string& where,
                                          ProviderSection base) {
  walk_object(j, where, [&](const std::string& key, const nlohmann::json& v) {
    if (key == "kind") {
      base.kind = get_as<std::string>(v, where + ".kind");
    } else if (key == "endpoint") {
      base.endpoint = get_as<std::string>(v, where + ".endpoint");
    } else if (key == "model") {
      base.model = get_as<std::string>(v, where + ".model");
    } else if (key == "token_env") {
      base.token_env = get_as<std::string>(v, where + ".token_env");
    } else if (key == "dim") {
      base.dim = get_as<std::size_t>(v, where + ".dim");
    } else if (key == "seed") {
      base.seed = get_as<std::uint64_t>(v, where + ".seed");
    } else if (key == "max_retries") {
      base.max_retries = get_as<int>(v, where + ".max_retries");
    } else if (key == "backoff_base_ms") {
      base.backoff_base_ms = get_as<double>(v, where + ".backoff_base_ms");
    } else if (key == "timeout_s") {
      base.timeout_s = get_as<double>(v, where + ".timeout_s");
    } else {
      return false;
    }
    return true;
  });
  return base;
}

}  // namespace detail

inline Config default_config() {
  Config config;
  config.main_backend.model = "gpt-4o-mini";
  config.escalation_backend.model = "gpt-4o";
  return config;
}

// Strict parse: unknown keys anywhere are rejected; anything absent keeps
// its default (the hyperparameters default to the reference values).
inline Config config_from_json(const nlohmann::json& root) {
  Config config = default_config();
  detail::walk_object(root, "config", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "backends") {
      detail::walk_object(v, "backends", [&](const std::string& bk, const nlohmann::json& bv) {
        if (bk == "main") {
          config.main_backend = detail::backend_from_json(bv, "backends.main", config.main_backend);
        } else if (bk == "escalation") {
          config.escalation_backend =
              detail::backend_from_json(bv, "backends.escalation", config.escalation_backend);
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "providers") {
      detail::walk_object(v, "providers", [&](const std::string& pk, const nlohmann::json& pv) {
        if (pk == "main") {
          config.provider = detail::provider_from_json(pv, "providers.main", config.provider);
        } else if (pk == "verify") {
          config.verify_provider =
              detail::provider_from_json(pv, "providers.verify", ProviderSection{});
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "pipeline") {
      detail::walk_object(v, "pipeline", [&](const std::string& pk, const nlohmann::json& pv) {
        if (pk == "rounds") {
          config.pipeline.rounds = detail::get_as<int>(pv, "pipeline.rounds");
        } else if (pk == "batch_sizes") {
          config.pipeline.batch_sizes =
              detail::get_as<std::vector<int>>(pv, "pipeline.batch_sizes");
        } else if (pk == "delta") {
          config.pipeline.delta = detail::get_as<double>(pv, "pipeline.delta");
        } else if (pk == "temperature") {
          config.pipeline.temperature = detail::get_as<double>(pv, "pipeline.temperature");
        } else if (pk == "seed") {
          config.pipeline.seed = detail::get_as<std::uint64_t>(pv, "pipeline.seed");
        } else if (pk == "length_cap") {
          config.pipeline.length_cap = detail::get_as<int>(pv, "pipeline.length_cap");
        } else if (pk == "reconstruct_each_round") {
          config.pipeline.reconstruct_each_round =
              detail::get_as<bool>(pv, "pipeline.reconstruct_each_round");
        } else if (pk == "in_flight") {
          config.pipeline.in_flight = detail::get_as<int>(pv, "pipeline.in_flight");
        } else if (pk == "count_escalation_queries") {
          config.pipeline.count_escalation_queries =
              detail::get_as<bool>(pv, "pipeline.count_escalation_queries");
        } else if (pk == "instruction_header") {
          config.pipeline.instruction_header =
              detail::get_as<std::string>(pv, "pipeline.instruction_header");
        } else if (pk == "stance_template") {
          config.pipeline.stance_template =
              detail::get_as<std::string>(pv, "pipeline.stance_template");
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "train") {
      detail::walk_object(v, "train", [&](const std::string& tk, const nlohmann::json& tv) {
        if (tk == "lambda") {
          config.train.lambda = detail::get_as<double>(tv, "train.lambda");
        } else if (tk == "tau_s") {
          config.train.tau_s = detail::get_as<double>(tv, "train.tau_s");
        } else if (tk == "minibatch") {
          config.train.minibatch = detail::get_as<int>(tv, "train.minibatch");
        } else if (tk == "lr") {
          config.train.learning_rate = detail::get_as<double>(tv, "train.lr");
        } else if (tk == "epochs") {
          config.train.epochs = detail::get_as<int>(tv, "train.epochs");
        } else if (tk == "holdout_fraction") {
          config.train.holdout_fraction = detail::get_as<double>(tv, "train.holdout_fraction");
        } else if (tk == "seed") {
          config.train.seed = detail::get_as<std::uint64_t>(tv, "train.seed");
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "eval") {
      detail::walk_object(v, "eval", [&](const std::string& ek, const nlohmann::json& ev) {
        if (ek == "dataset_kind") {
          const auto kind = parse_dataset_kind(detail::get_as<std::string>(ev, "eval.dataset_kind"));
          if (!kind.has_value()) {
            throw ConfigError("eval.dataset_kind must be two_class or three_class");
          }
          config.eval.kind = *kind;
          return true;
        }
        return false;
      });
    } else if (key == "paths") {
      detail::walk_object(v, "paths", [&](const std::string& pk, const nlohmann::json& pv) {
        if (pk == "kb") {
          config.paths.kb = detail::get_as<std::string>(pv, "paths.kb");
        } else if (pk == "cache_dir") {
          config.paths.cache_dir = detail::get_as<std::string>(pv, "paths.cache_dir");
        } else if (pk == "output_dir") {
          config.paths.output_dir = detail::get_as<std::string>(pv, "paths.output_dir");
        } else if (pk == "head") {
          config.paths.head = detail::get_as<std::string>(pv, "paths.head");
        } else {
          return false;
        }
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  config.validate();
  return config;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace cover
