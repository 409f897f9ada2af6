#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cover/core.hpp"
#include "cover/detail/rng.hpp"
#include "cover/errors.hpp"
#include "cover/slm.hpp"

namespace cover {

struct TrainingRecord {
  std::string tweet_id;
  int round = 0;
  EmbeddingVector embedding;  // of "explanation [SEP] target"
  StanceLabel label = StanceLabel::None;
};

struct TrainConfig {
  double lambda = 0.1;       // weight of the contrastive term
  double tau_s = 0.05;       // contrastive temperature
  int minibatch = 32;
  double learning_rate = 0.1;
  int epochs = 50;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(tau_s > 0.0)) throw ConfigError("tau_s must be > 0");
    if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (holdout_fraction < 0.0 || holdout_fraction > 0.5) {
      throw ConfigError("holdout_fraction must lie in [0, 0.5]");
    }
  }
};

// Mean cross-entropy of the head's softmax against the gold labels.
inline double ce_loss(const ClassifierHead& head, const std::vector<TrainingRecord>& batch) {
  if (batch.empty()) throw std::invalid_argument("ce_loss needs a non-empty batch");
  double total = 0.0;
  for (const TrainingRecord& r : batch) {
    const StanceDistribution p = softmax3(head.logits(r.embedding));
    const double prob = p.at(r.label);
    total += -std::log(prob > 1e-12 ? prob : 1e-12);
  }
  return total / static_cast<double>(batch.size());
}

namespace detail {

inline double logsumexp(const std::vector<double>& xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

// Supervised contrastive loss over frozen embeddings: each sample is pulled
// toward same-label samples and away from the rest, cosine-scaled by 1/tau.
// Samples without any same-label partner contribute zero. Note the head
// parameters do not appear here, so the term shapes the loss surface
// reporting but adds no gradient to the head.
inline double contrastive_loss(const std::vector<EmbeddingVector>& embeddings,
                               const std::vector<StanceLabel>& labels, double tau) {
  if (embeddings.size() != labels.size()) {
    throw std::invalid_argument("contrastive_loss embeddings and labels differ in length");
  }
  if (embeddings.size() < 2) {
    throw std::invalid_argument("contrastive_loss needs at least two samples");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive temperature must be > 0");
  const std::size_t n = embeddings.size();

  std::vector<std::vector<double>> sims(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = cosine_similarity(embeddings[i], embeddings[j]) / tau;
      sims[i][j] = s;
      sims[j][i] = s;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> positives;
    std::vector<double> all_others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      all_others.push_back(sims[i][j]);
      if (labels[j] == labels[i]) positives.push_back(sims[i][j]);
    }
    if (positives.empty()) continue;
    total += detail::logsumexp(positives) - detail::logsumexp(all_others);
  }
  return -total / static_cast<double>(n);
}

struct HeadGradients {
  std::vector<double> weights;  // 3 * dim, row-major
  std::array<double, kLabelCount> bias{};
};

// Mean cross-entropy gradient: dLogits = softmax - onehot, averaged over
// the batch. The contrastive term is constant in the head parameters, so
// this is the complete gradient of the training loss.
inline HeadGradients loss_gradient(const ClassifierHead& head,
                                   const std::vector<TrainingRecord>& batch) {
  if (batch.empty()) throw std::invalid_argument("loss_gradient needs a non-empty batch");
  HeadGradients g;
  g.weights.assign(kLabelCount * head.dim, 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainingRecord& r : batch) {
    const StanceDistribution p = softmax3(head.logits(r.embedding));
    for (std::size_t row = 0; row < kLabelCount; ++row) {
      const double delta =
          (p.at(row) - (row == label_index(r.label) ? 1.0 : 0.0)) * inv;
      g.bias[row] += delta;
      double* grow = g.weights.data() + row * head.dim;
      for (std::size_t j = 0; j < head.dim; ++j) grow[j] += delta * r.embedding[j];
    }
  }
  return g;
}

// Central-difference check of loss_gradient against the full training loss
// (CE + lambda * contrastive). Returns the worst relative error across all
// parameters.
inline double gradient_check(const ClassifierHead& head, const std::vector<TrainingRecord>& batch,
                             const TrainConfig& config, double step = 1e-5) {
  config.validate();
  if (batch.empty()) throw std::invalid_argument("gradient_check needs a non-empty batch");

  std::vector<EmbeddingVector> embeddings;
  std::vector<StanceLabel> labels;
  for (const TrainingRecord& r : batch) {
    embeddings.push_back(r.embedding);
    labels.push_back(r.label);
  }
  const bool with_contrastive = config.lambda > 0.0 && batch.size() >= 2;
  const auto loss_at = [&](const ClassifierHead& h) {
    double loss = ce_loss(h, batch);
    if (with_contrastive) {
      loss += config.lambda * contrastive_loss(embeddings, labels, config.tau_s);
    }
    return loss;
  };

  const HeadGradients analytic = loss_gradient(head, batch);
  const auto rel_error = [](double a, double n) {
    const double denom = std::max(std::abs(a) + std::abs(n), 1e-3);
    return std::abs(a - n) / denom;
  };

  double worst = 0.0;
  ClassifierHead probe = head;
  for (std::size_t i = 0; i < probe.weights.size(); ++i) {
    const double saved = probe.weights[i];
    probe.weights[i] = saved + step;
    const double up = loss_at(probe);
    probe.weights[i] = saved - step;
    const double down = loss_at(probe);
    probe.weights[i] = saved;
    worst = std::max(worst, rel_error(analytic.weights[i], (up - down) / (2.0 * step)));
  }
  for (std::size_t r = 0; r < kLabelCount; ++r) {
    const double saved = probe.bias[r];
    probe.bias[r] = saved + step;
    const double up = loss_at(probe);
    probe.bias[r] = saved - step;
    const double down = loss_at(probe);
    probe.bias[r] = saved;
    worst = std::max(worst, rel_error(analytic.bias[r], (up - down) / (2.0 * step)));
  }
  return worst;
}

// Harvests training material from a verification trace: one record per
// (tweet, round) whose reasoning parsed and whose LLM argmax agrees with
// the tweet's gold label. The embedding input mirrors classify_explanation.
inline std::vector<TrainingRecord> collect_training_records(
    const std::vector<PredictionRecord>& trace, const std::vector<Tweet>& dataset,
    EmbeddingProvider& provider, std::vector<std::string>* diagnostics = nullptr) {
  const auto diag = [&](const std::string& message) {
    if (diagnostics != nullptr) diagnostics->push_back(message);
  };
  std::unordered_map<std::string, const Tweet*> by_id;
  for (const Tweet& t : dataset) by_id.emplace(t.id, &t);

  std::set<std::pair<std::string, int>> seen;
  std::vector<TrainingRecord> records;
  std::vector<std::string> texts;
  for (const PredictionRecord& r : trace) {
    if (!r.parse_ok) continue;
    const auto it = by_id.find(r.tweet_id);
    if (it == by_id.end()) {
      diag("trace references unknown tweet id " + r.tweet_id + ", skipped");
      continue;
    }
    const Tweet& tweet = *it->second;
    if (!tweet.gold.has_value()) {
      diag("tweet " + r.tweet_id + " has no gold label, skipped");
      continue;
    }
    if (r.llm_dist.argmax() != *tweet.gold) continue;
    if (!seen.insert({r.tweet_id, r.round}).second) continue;

    TrainingRecord record;
    record.tweet_id = r.tweet_id;
    record.round = r.round;
    record.label = *tweet.gold;
    records.push_back(std::move(record));
    texts.push_back(classifier_input(r.explanation, tweet.target));
  }
  if (!records.empty()) {
    std::vector<EmbeddingVector> embeddings = provider.embed_batch(texts);
    if (embeddings.size() != records.size()) {
      throw ProtocolError("embedding provider returned " + std::to_string(embeddings.size()) +
                          " vectors for " + std::to_string(records.size()) + " inputs");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].embedding = std::move(embeddings[i]);
    }
  }
  return records;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;         // ce + lambda * contrastive, minibatch mean
  double train_ce = 0.0;
  double train_contrastive = 0.0;  // unweighted contrastive term
  double holdout_ce = 0.0;
  double holdout_accuracy = 0.0;
};

struct TrainResult {
  ClassifierHead head;  // parameters from the best epoch
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_metric = 0.0;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
};

// Minibatch gradient descent on the linear head over frozen embeddings.
// Deterministic given (records, config): shuffles are seeded and the head
// starts at zero. Keeps the epoch with the lowest holdout CE (earliest on
// ties); with no holdout, the lowest training loss.
inline TrainResult train_head(const std::vector<TrainingRecord>& records,
                              const TrainConfig& config, std::string provider_id) {
  config.validate();
  if (records.size() < 2) {
    throw ConfigError("training needs at least 2 records, got " + std::to_string(records.size()));
  }
  {
    std::set<StanceLabel> distinct;
    for (const TrainingRecord& r : records) distinct.insert(r.label);
    if (distinct.size() < 2) {
      throw ConfigError("training needs records from at least 2 distinct labels");
    }
  }
  const std::size_t dim = records[0].embedding.size();
  if (dim == 0) throw ConfigError("training records have empty embeddings");
  for (const TrainingRecord& r : records) {
    if (r.embedding.size() != dim) {
      throw ConfigError("training records mix embedding dimensions " + std::to_string(dim) +
                        " and " + std::to_string(r.embedding.size()));
    }
  }

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  detail::seeded_shuffle(order, config.seed, 0x5eedull);

  std::size_t holdout_n = 0;
  if (config.holdout_fraction > 0.0) {
    holdout_n = static_cast<std::size_t>(
        std::floor(config.holdout_fraction * static_cast<double>(records.size()) + 0.5));
    holdout_n = std::max<std::size_t>(1, std::min(holdout_n, records.size() - 1));
  }
  std::vector<TrainingRecord> holdout;
  std::vector<std::size_t> train_indices;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k < holdout_n) {
      holdout.push_back(records[order[k]]);
    } else {
      train_indices.push_back(order[k]);
    }
  }

  ClassifierHead head;
  head.dim = dim;
  head.weights.assign(kLabelCount * dim, 0.0);
  head.provider_id = std::move(provider_id);

  TrainResult result;
  result.train_count = train_indices.size();
  result.holdout_count = holdout.size();
  result.head = head;
  bool have_best = false;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_indices;
    detail::seeded_shuffle(epoch_order, config.seed, 0x9a7cull + static_cast<std::uint64_t>(epoch));

    double sum_ce = 0.0;
    double sum_contrastive = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < epoch_order.size();
         start += static_cast<std::size_t>(config.minibatch)) {
      const std::size_t end = std::min(epoch_order.size(),
                                       start + static_cast<std::size_t>(config.minibatch));
      std::vector<TrainingRecord> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(records[epoch_order[k]]);

      const double ce = ce_loss(head, batch);
      double contrastive = 0.0;
      if (config.lambda > 0.0 && batch.size() >= 2) {
        std::vector<EmbeddingVector> embeddings;
        std::vector<StanceLabel> labels;
        for (const TrainingRecord& r : batch) {
          embeddings.push_back(r.embedding);
          labels.push_back(r.label);
        }
        contrastive = contrastive_loss(embeddings, labels, config.tau_s);
      }
      sum_ce += ce * static_cast<double>(batch.size());
      sum_contrastive += contrastive * static_cast<double>(batch.size());
      counted += batch.size();

      const HeadGradients g = loss_gradient(head, batch);
      for (std::size_t i = 0; i < head.weights.size(); ++i) {
        head.weights[i] -= config.learning_rate * g.weights[i];
      }
      for (std::size_t r = 0; r < kLabelCount; ++r) {
        head.bias[r] -= config.learning_rate * g.bias[r];
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_ce = sum_ce / static_cast<double>(counted);
    stats.train_contrastive = sum_contrastive / static_cast<double>(counted);
    stats.train_loss = stats.train_ce + config.lambda * stats.train_contrastive;
    if (!holdout.empty()) {
      stats.holdout_ce = ce_loss(head, holdout);
      std::size_t correct = 0;
      for (const TrainingRecord& r : holdout) {
        if (softmax3(head.logits(r.embedding)).argmax() == r.label) ++correct;
      }
      stats.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(holdout.size());
    }
    result.epochs.push_back(stats);

    const double metric = holdout.empty() ? stats.train_loss : stats.holdout_ce;
    if (!have_best || metric < result.best_metric) {
      have_best = true;
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.head = head;
    }
  }
  return result;
}

}  // namespace cover
