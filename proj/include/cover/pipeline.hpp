#pragma once

#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cover/core.hpp"
#include "cover/detail/rng.hpp"
#include "cover/errors.hpp"
#include "cover/eval.hpp"
#include "cover/llm_backend.hpp"
#include "cover/prompt.hpp"
#include "cover/reason.hpp"
#include "cover/reconstruct.hpp"
#include "cover/slm.hpp"
#include "cover/verify.hpp"

namespace cover {

struct PipelineConfig {
  int rounds = 3;
  std::vector<int> batch_sizes{8, 4, 1};
  double delta = 0.9;
  double temperature = 0.1;
  std::uint64_t seed = 0;
  int length_cap = 512;
  bool reconstruct_each_round = false;
  int in_flight = 1;
  bool count_escalation_queries = true;
  std::string instruction_header{kDefaultInstructionHeader};
  std::string stance_template{kDefaultStanceTemplate};

  void validate() const {
    if (rounds < 1) throw ConfigError("pipeline needs at least one round");
    if (batch_sizes.size() != static_cast<std::size_t>(rounds)) {
      throw ConfigError("batch_sizes lists " + std::to_string(batch_sizes.size()) +
                        " sizes for " + std::to_string(rounds) + " rounds");
    }
    for (int b : batch_sizes) {
      if (b < 1) throw ConfigError("batch sizes must be >= 1");
    }
    if (!(delta > 0.0) || delta > 1.0) throw ConfigError("delta must lie in (0, 1]");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    if (length_cap < 0) throw ConfigError("length_cap must be >= 0 (0 disables)");
    if (in_flight < 1) throw ConfigError("in_flight must be >= 1");
    if (instruction_header.empty()) throw ConfigError("instruction_header must be non-empty");
  }
};

enum class FinalSource { Valid = 0, Aggregated = 1, Escalated = 2 };

inline const char* to_string(FinalSource source) {
  switch (source) {
    case FinalSource::Valid:
      return "valid";
    case FinalSource::Aggregated:
      return "aggregated";
    case FinalSource::Escalated:
      return "escalated";
  }
  throw std::invalid_argument("unknown final source value");
}

inline std::optional<FinalSource> parse_final_source(std::string_view text) {
  const std::string s = detail::to_lower(detail::trim(text));
  if (s == "valid") return FinalSource::Valid;
  if (s == "aggregated") return FinalSource::Aggregated;
  if (s == "escalated") return FinalSource::Escalated;
  return std::nullopt;
}

struct FinalizeResult {
  StanceLabel label = StanceLabel::None;
  FinalSource source = FinalSource::Escalated;
};

// Decision order: the earliest Valid round wins outright; otherwise the
// Referable rounds are aggregated by consistency weight; otherwise the
// escalation answer (or None when even that is absent).
inline FinalizeResult finalize_from_history(const std::vector<PredictionRecord>& history,
                                            const std::optional<StanceDistribution>& escalation_dist) {
  for (const PredictionRecord& r : history) {
    if (!r.escalation && r.verdict == Verdict::Valid) {
      return {r.llm_dist.argmax(), FinalSource::Valid};
    }
  }
  std::vector<PredictionRecord> referable;
  for (const PredictionRecord& r : history) {
    if (!r.escalation && r.verdict == Verdict::Referable) referable.push_back(r);
  }
  if (!referable.empty()) {
    return {aggregate(referable).argmax(), FinalSource::Aggregated};
  }
  if (escalation_dist.has_value()) {
    return {escalation_dist->argmax(), FinalSource::Escalated};
  }
  return {StanceLabel::None, FinalSource::Escalated};
}

struct TweetResult {
  std::string tweet_id;
  StanceLabel label = StanceLabel::None;
  FinalSource source = FinalSource::Valid;
  double query_share = 0.0;  // sum of 1/B_r over billed rounds, +1 if escalation billed
  std::string diagnostic;
};

struct RunReport {
  std::vector<TweetResult> results;  // dataset order; only finalized tweets
  std::size_t dataset_size = 0;
  DatasetKind kind = DatasetKind::TwoClassAvg;
  std::optional<double> f_avg;  // over finalized tweets with gold labels
  std::size_t labeled_count = 0;
  double q_avg = 0.0;
  long long billable_queries = 0;
  long long billable_escalation_queries = 0;
  std::size_t records_total = 0;
  std::size_t parse_failures = 0;
  std::size_t finalized_valid = 0;
  std::size_t finalized_aggregated = 0;
  std::size_t finalized_escalated = 0;
};

struct RunOutcome {
  RunReport report;
  std::vector<PredictionRecord> trace;
  std::vector<ReconstructedTweet> reconstructions;  // dataset order, when computed
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

struct TweetState {
  const Tweet* tweet = nullptr;
  std::optional<ReconstructedTweet> recon;
  std::vector<PredictionRecord> history;
  bool finalized = false;
  StanceLabel label = StanceLabel::None;
  FinalSource source = FinalSource::Valid;
  std::string diagnostic;
  double query_share = 0.0;
};

struct BatchWork {
  std::vector<std::size_t> indices;
  BatchReasoningResult reasoning;
  std::vector<PredictionRecord> records;
};

}  // namespace detail

// Full multi-round run over a dataset. Backend exhaustion mid-round stops
// the run and returns what finished so far with aborted=true; escalation
// failures degrade to a None label for just that tweet.
inline RunOutcome run_pipeline(const std::vector<Tweet>& dataset,
                               const std::vector<KnowledgeEntry>& knowledge_base,
                               const PipelineConfig& config, ChatBackend& main_backend,
                               ChatBackend& escalation_backend,
                               EmbeddingProvider& estimate_provider,
                               EmbeddingProvider& verify_provider, const ClassifierHead& head,
                               QueryLog& log, DatasetKind kind = DatasetKind::TwoClassAvg) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("cannot run on an empty dataset");
  {
    std::unordered_set<std::string> ids;
    for (const Tweet& t : dataset) {
      if (t.id.empty()) throw ConfigError("dataset contains a tweet with an empty id");
      if (!ids.insert(t.id).second) throw ConfigError("dataset repeats tweet id " + t.id);
    }
  }

  const StanceEstimator estimator{&estimate_provider, config.stance_template};
  const VerificationConfig verification{config.delta};

  std::vector<detail::TweetState> states(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) states[i].tweet = &dataset[i];

  RunOutcome outcome;

  const auto ensure_recon = [&](detail::TweetState& state) {
    if (!state.recon.has_value() || config.reconstruct_each_round) {
      try {
        state.recon =
            reconstruct_tweet(*state.tweet, knowledge_base, estimator, config.length_cap);
      } catch (const BackendError& e) {
        BackendError annotated(std::string(e.what()) + " (while reconstructing tweet " +
                                   state.tweet->id + ")",
                               e.failed_attempts);
        annotated.tweet_ids = {state.tweet->id};
        throw annotated;
      }
    }
  };

  const auto finalize_state = [&](detail::TweetState& state, StanceLabel label,
                                  FinalSource source) {
    state.finalized = true;
    state.label = label;
    state.source = source;
  };

  try {
    for (int round = 1; round <= config.rounds; ++round) {
      const int capacity = config.batch_sizes[static_cast<std::size_t>(round - 1)];
      std::vector<std::size_t> pending;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (!states[i].finalized) pending.push_back(i);
      }
      if (pending.empty()) break;
      detail::seeded_shuffle(pending, config.seed, static_cast<std::uint64_t>(round));

      std::vector<std::vector<std::size_t>> batches;
      for (std::size_t start = 0; start < pending.size(); start += static_cast<std::size_t>(capacity)) {
        const std::size_t end = std::min(pending.size(), start + static_cast<std::size_t>(capacity));
        batches.emplace_back(pending.begin() + static_cast<std::ptrdiff_t>(start),
                             pending.begin() + static_cast<std::ptrdiff_t>(end));
      }

      const std::optional<long long> round_seed =
          static_cast<long long>(config.seed) + round;

      const auto process_batch = [&](const std::vector<std::size_t>& indices) -> detail::BatchWork {
        detail::BatchWork work;
        work.indices = indices;
        Batch batch;
        batch.round = round;
        batch.capacity = capacity;
        for (std::size_t idx : indices) {
          ensure_recon(states[idx]);
          batch.items.push_back(
              {states[idx].tweet->id, states[idx].recon->final_text, states[idx].tweet->target});
        }
        work.reasoning = reason_batch(main_backend, log, batch, config.temperature, round_seed,
                                      false, config.instruction_header);
        for (std::size_t k = 0; k < indices.size(); ++k) {
          const detail::TweetState& state = states[indices[k]];
          const ReasonedOutput& out = work.reasoning.outputs[k];
          work.records.push_back(verify_prediction(
              state.tweet->id, round, state.tweet->target, state.recon->se_tweet, out.dist,
              out.explanation, out.parse_ok, head, verify_provider, verification, false));
        }
        return work;
      };

      std::vector<detail::BatchWork> works(batches.size());
      if (config.in_flight <= 1 || batches.size() <= 1) {
        for (std::size_t k = 0; k < batches.size(); ++k) works[k] = process_batch(batches[k]);
      } else {
        for (std::size_t start = 0; start < batches.size();
             start += static_cast<std::size_t>(config.in_flight)) {
          const std::size_t end =
              std::min(batches.size(), start + static_cast<std::size_t>(config.in_flight));
          std::vector<std::future<detail::BatchWork>> wave;
          for (std::size_t k = start; k < end; ++k) {
            wave.push_back(std::async(std::launch::async, process_batch, std::cref(batches[k])));
          }
          for (std::size_t k = start; k < end; ++k) works[k] = wave[k - start].get();
        }
      }

      for (detail::BatchWork& work : works) {
        if (!work.reasoning.served_from_cache) {
          for (std::size_t idx : work.indices) {
            states[idx].query_share += 1.0 / static_cast<double>(capacity);
          }
        }
        for (std::size_t k = 0; k < work.indices.size(); ++k) {
          detail::TweetState& state = states[work.indices[k]];
          state.history.push_back(work.records[k]);
          outcome.trace.push_back(work.records[k]);
          if (work.records[k].verdict == Verdict::Valid) {
            const FinalizeResult fin = finalize_from_history(state.history, std::nullopt);
            finalize_state(state, fin.label, fin.source);
          }
        }
      }
    }

    const std::optional<long long> escalation_seed =
        static_cast<long long>(config.seed) + config.rounds + 1;
    for (std::size_t i = 0; i < states.size(); ++i) {
      detail::TweetState& state = states[i];
      if (state.finalized) continue;

      bool has_referable = false;
      for (const PredictionRecord& r : state.history) {
        if (r.verdict == Verdict::Referable) has_referable = true;
      }
      if (has_referable) {
        const FinalizeResult fin = finalize_from_history(state.history, std::nullopt);
        finalize_state(state, fin.label, fin.source);
        continue;
      }

      try {
        ensure_recon(state);
        Batch batch;
        batch.round = config.rounds + 1;
        batch.capacity = 1;
        batch.items.push_back({state.tweet->id, state.recon->final_text, state.tweet->target});
        const BatchReasoningResult escalated =
            reason_batch(escalation_backend, log, batch, config.temperature, escalation_seed,
                         true, config.instruction_header);
        if (!escalated.served_from_cache) state.query_share += 1.0;
        const ReasonedOutput& out = escalated.outputs[0];
        const PredictionRecord record = verify_prediction(
            state.tweet->id, config.rounds + 1, state.tweet->target, state.recon->se_tweet,
            out.dist, out.explanation, out.parse_ok, head, verify_provider, verification, true);
        state.history.push_back(record);
        outcome.trace.push_back(record);
        if (out.parse_ok) {
          finalize_state(state, out.dist.argmax(), FinalSource::Escalated);
        } else {
          state.diagnostic = "escalation response was unparseable, defaulting to none";
          finalize_state(state, StanceLabel::None, FinalSource::Escalated);
        }
      } catch (const BackendError& e) {
        state.diagnostic = std::string("escalation backend failed: ") + e.what();
        finalize_state(state, StanceLabel::None, FinalSource::Escalated);
      } catch (const ProtocolError& e) {
        state.diagnostic = std::string("escalation protocol failure: ") + e.what();
        finalize_state(state, StanceLabel::None, FinalSource::Escalated);
      }
    }
  } catch (const BackendError& e) {
    outcome.aborted = true;
    outcome.abort_reason = std::string("backend exhausted: ") + e.what();
  } catch (const ProtocolError& e) {
    outcome.aborted = true;
    outcome.abort_reason = std::string("protocol failure: ") + e.what();
  }

  RunReport& report = outcome.report;
  report.dataset_size = dataset.size();
  report.kind = kind;
  std::vector<StanceLabel> predictions;
  std::vector<StanceLabel> golds;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const detail::TweetState& state = states[i];
    if (state.recon.has_value()) outcome.reconstructions.push_back(*state.recon);
    if (!state.finalized) continue;
    TweetResult result;
    result.tweet_id = state.tweet->id;
    result.label = state.label;
    result.source = state.source;
    result.query_share = state.query_share;
    result.diagnostic = state.diagnostic;
    report.results.push_back(std::move(result));
    switch (state.source) {
      case FinalSource::Valid:
        ++report.finalized_valid;
        break;
      case FinalSource::Aggregated:
        ++report.finalized_aggregated;
        break;
      case FinalSource::Escalated:
        ++report.finalized_escalated;
        break;
    }
    if (state.tweet->gold.has_value()) {
      predictions.push_back(state.label);
      golds.push_back(*state.tweet->gold);
    }
  }
  report.labeled_count = predictions.size();
  if (!predictions.empty()) {
    report.f_avg = f_avg(predictions, golds, kind);
  }
  report.records_total = outcome.trace.size();
  for (const PredictionRecord& r : outcome.trace) {
    if (!r.parse_ok) ++report.parse_failures;
  }
  report.billable_queries = count_queries(log, true);
  report.billable_escalation_queries = report.billable_queries - count_queries(log, false);
  report.q_avg = q_avg(log, dataset.size(), config.count_escalation_queries);
  return outcome;
}

}  // namespace cover
