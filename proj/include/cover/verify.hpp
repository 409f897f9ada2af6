#pragma once

#include <string>
#include <vector>

#include "cover/core.hpp"
#include "cover/errors.hpp"
#include "cover/slm.hpp"

namespace cover {

struct VerificationConfig {
  double delta = 0.9;  // similarity threshold separating Valid from Referable

  void validate() const {
    if (!(delta > 0.0) || delta > 1.0) {
      throw ConfigError("verification delta must lie in (0, 1], got " + std::to_string(delta));
    }
  }
};

// Verdict rules, in order:
//   Invalid    when the explanation is *less* decisive than the tweet itself
//              (SE_e > SE_x): reasoning that added uncertainty is discarded.
//   Valid      when SE_e <= SE_x and the verifier's reading of the
//              explanation agrees with the LLM (sim >= delta).
//   Referable  when SE_e <= SE_x but agreement is below delta: kept, to be
//              aggregated with later rounds.
inline Verdict assign_verdict(double se_explanation, double se_tweet, double similarity,
                              const VerificationConfig& config) {
  config.validate();
  constexpr double slack = 1e-9;
  if (!(se_explanation >= -slack) || !(se_explanation <= kMaxStanceEntropy + slack)) {
    throw std::invalid_argument("explanation entropy out of range: " +
                                std::to_string(se_explanation));
  }
  if (!(se_tweet >= -slack) || !(se_tweet <= kMaxStanceEntropy + slack)) {
    throw std::invalid_argument("tweet entropy out of range: " + std::to_string(se_tweet));
  }
  if (!(similarity >= -1.0 - slack && similarity <= 1.0 + slack)) {
    throw std::invalid_argument("similarity out of range: " + std::to_string(similarity));
  }
  if (se_explanation > se_tweet) return Verdict::Invalid;
  if (similarity >= config.delta) return Verdict::Valid;
  return Verdict::Referable;
}

// Builds the full verification record for one reasoning output. A failed
// parse never reaches the verifier: it is recorded directly as Invalid with
// placeholder SLM fields.
inline PredictionRecord verify_prediction(const std::string& tweet_id, int round,
                                          const std::string& target, double se_tweet,
                                          const StanceDistribution& llm_dist,
                                          const std::string& explanation, bool parse_ok,
                                          const ClassifierHead& head, EmbeddingProvider& provider,
                                          const VerificationConfig& config,
                                          bool escalation = false) {
  config.validate();
  PredictionRecord record;
  record.tweet_id = tweet_id;
  record.round = round;
  record.llm_dist = llm_dist;
  record.explanation = explanation;
  record.se_tweet = se_tweet;
  record.parse_ok = parse_ok;
  record.escalation = escalation;

  if (!parse_ok) {
    record.slm_dist = StanceDistribution::uniform();
    record.se_explanation = kMaxStanceEntropy;
    record.similarity = 0.0;
    record.verdict = Verdict::Invalid;
    return record;
  }

  record.slm_dist = classify_explanation(explanation, target, head, provider);
  record.se_explanation = stance_entropy(record.slm_dist);
  record.similarity = cosine_similarity(llm_dist, record.slm_dist);
  record.verdict = assign_verdict(record.se_explanation, record.se_tweet, record.similarity, config);
  return record;
}

// Consistency-weighted aggregation over one tweet's Referable rounds: each
// round's LLM distribution weighs in proportionally to how much the
// verifier agreed with it. All-zero weights degrade to uniform.
inline StanceDistribution aggregate(const std::vector<PredictionRecord>& records,
                                    bool* degenerate = nullptr) {
  if (records.empty()) {
    throw std::invalid_argument("cannot aggregate an empty record set");
  }
  const std::string& tweet_id = records.front().tweet_id;
  double favor = 0.0, against = 0.0, none = 0.0;
  for (const PredictionRecord& r : records) {
    if (r.tweet_id != tweet_id) {
      throw std::invalid_argument("aggregate saw records for tweets " + tweet_id + " and " +
                                  r.tweet_id);
    }
    if (r.verdict != Verdict::Referable) {
      throw std::invalid_argument("aggregate expects only Referable records, tweet " + tweet_id +
                                  " round " + std::to_string(r.round) + " is " +
                                  to_string(r.verdict));
    }
    if (r.similarity < 0.0) {
      throw std::invalid_argument("aggregation weight is negative for tweet " + tweet_id);
    }
    favor += r.similarity * r.llm_dist.favor();
    against += r.similarity * r.llm_dist.against();
    none += r.similarity * r.llm_dist.none();
  }
  return renormalize(favor, against, none, degenerate);
}

}  // namespace cover
