#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cover/core.hpp"
#include "cover/detail/rng.hpp"
#include "cover/detail/text.hpp"
#include "cover/errors.hpp"

namespace cover {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  // Stable identity, recorded in artifacts so a persisted head can refuse to
  // run against embeddings it was not trained on.
  virtual std::string id() const = 0;

  virtual EmbeddingVector embed(const std::string& text) = 0;

  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed(t));
    return out;
  }
};

inline constexpr std::string_view kDefaultStanceTemplate =
    R"(My stance toward {target} is "{stance}".)";

inline std::string stance_phrase(const std::string& target, StanceLabel label,
                                 std::string_view phrase_template = kDefaultStanceTemplate) {
  if (detail::trim(target).empty()) {
    throw std::invalid_argument("stance phrase requires a non-empty target");
  }
  std::string out(phrase_template);
  out = detail::replace_all(std::move(out), "{target}", target);
  out = detail::replace_all(std::move(out), "{stance}", to_string(label));
  return out;
}

// Softmax over the cosine similarities between the text embedding and the
// three stance-phrase embeddings.
inline StanceDistribution estimate_distribution(
    const std::string& text, const std::string& target, EmbeddingProvider& provider,
    std::string_view phrase_template = kDefaultStanceTemplate) {
  if (text.empty()) throw std::invalid_argument("cannot estimate a stance for empty text");
  const std::vector<std::string> inputs = {
      text,
      stance_phrase(target, StanceLabel::Favor, phrase_template),
      stance_phrase(target, StanceLabel::Against, phrase_template),
      stance_phrase(target, StanceLabel::None, phrase_template),
  };
  const std::vector<EmbeddingVector> embs = provider.embed_batch(inputs);
  if (embs.size() != inputs.size()) {
    throw ProtocolError("embedding provider returned " + std::to_string(embs.size()) +
                        " vectors for " + std::to_string(inputs.size()) + " inputs");
  }
  std::array<double, kLabelCount> sims{};
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    sims[i] = cosine_similarity(embs[0], embs[i + 1]);
  }
  return softmax3(sims);
}

// Bound (provider, template) pair usable wherever a stance estimator
// callable is expected.
struct StanceEstimator {
  EmbeddingProvider* provider = nullptr;
  std::string phrase_template{kDefaultStanceTemplate};

  StanceDistribution operator()(const std::string& text, const std::string& target) const {
    if (provider == nullptr) throw std::invalid_argument("stance estimator has no provider");
    return estimate_distribution(text, target, *provider, phrase_template);
  }
};

// Linear softmax head over frozen embeddings: logits = W h + b with one row
// per label in (favor, against, none) order.
struct ClassifierHead {
  std::size_t dim = 0;
  std::vector<double> weights;  // row-major, 3 * dim
  std::array<double, kLabelCount> bias{};
  std::string provider_id;

  std::array<double, kLabelCount> logits(const EmbeddingVector& h) const {
    if (h.size() != dim) {
      throw ConfigError("classifier head expects dimension " + std::to_string(dim) +
                        ", got embedding of dimension " + std::to_string(h.size()));
    }
    if (weights.size() != kLabelCount * dim) {
      throw ConfigError("classifier head weight matrix has wrong size");
    }
    std::array<double, kLabelCount> out = bias;
    for (std::size_t r = 0; r < kLabelCount; ++r) {
      const double* row = weights.data() + r * dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += row[j] * h[j];
      out[r] += acc;
    }
    return out;
  }
};

inline constexpr std::string_view kExplanationTargetSeparator = " [SEP] ";

inline std::string classifier_input(const std::string& explanation, const std::string& target) {
  std::string out = explanation;
  out += kExplanationTargetSeparator;
  out += target;
  return out;
}

// Softmax of the head logits over the embedding of "explanation [SEP] target".
inline StanceDistribution classify_explanation(const std::string& explanation,
                                               const std::string& target,
                                               const ClassifierHead& head,
                                               EmbeddingProvider& provider) {
  if (explanation.empty()) {
    throw std::invalid_argument("cannot classify an empty explanation");
  }
  const EmbeddingVector h = provider.embed(classifier_input(explanation, target));
  return softmax3(head.logits(h));
}

// Deterministic test-oriented embedder. Texts containing one of the marker
// tokens map to fixed directions; anything else gets a hash-seeded random
// unit vector, so unrelated texts are almost orthogonal at high dimension.
inline constexpr std::string_view kMarkerFavor = "[[favor]]";
inline constexpr std::string_view kMarkerAgainst = "[[against]]";
inline constexpr std::string_view kMarkerNone = "[[none]]";
inline constexpr std::string_view kMarkerUnclear = "[[unclear]]";

class FixtureEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FixtureEmbeddingProvider(std::size_t dim = 64, std::uint64_t seed = 0)
      : dim_(dim), seed_(seed) {
    if (dim_ < 4) throw ConfigError("fixture embeddings need dimension >= 4");
  }

  std::string id() const override {
    return "fixture:" + std::to_string(dim_) + ":" + std::to_string(seed_);
  }

  std::size_t dim() const { return dim_; }

  EmbeddingVector embed(const std::string& text) override {
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    if (text.find(kMarkerFavor) != std::string::npos) {
      v.values[0] = 1.0;
      return v;
    }
    if (text.find(kMarkerAgainst) != std::string::npos) {
      v.values[1] = 1.0;
      return v;
    }
    if (text.find(kMarkerNone) != std::string::npos) {
      v.values[2] = 1.0;
      return v;
    }
    if (text.find(kMarkerUnclear) != std::string::npos) {
      const double x = 1.0 / std::sqrt(3.0);
      v.values[0] = x;
      v.values[1] = x;
      v.values[2] = x;
      return v;
    }
    std::mt19937_64 rng(detail::mix64(seed_) ^ detail::fnv1a64(text));
    v.values = detail::gaussian_vector(rng, dim_);
    double n = v.norm();
    if (n <= 1e-12) {
      v.values.assign(dim_, 0.0);
      v.values[0] = 1.0;
      return v;
    }
    for (double& x : v.values) x /= n;
    return v;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Memoizing decorator keyed on the exact input text. Thread safe.
class CachingEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit CachingEmbeddingProvider(EmbeddingProvider& inner) : inner_(inner) {}

  explicit CachingEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner)
      : owned_(std::move(inner)), inner_(*owned_) {}

  std::string id() const override { return inner_.id(); }

  EmbeddingVector embed(const std::string& text) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(text);
      if (it != cache_.end()) return it->second;
    }
    EmbeddingVector v = inner_.embed(text);
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.emplace(text, v);
    return v;
  }

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> miss_indices;
    std::vector<std::string> miss_texts;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        auto it = cache_.find(texts[i]);
        if (it != cache_.end()) {
          out[i] = it->second;
        } else {
          miss_indices.push_back(i);
          miss_texts.push_back(texts[i]);
        }
      }
    }
    if (!miss_texts.empty()) {
      std::vector<EmbeddingVector> fetched = inner_.embed_batch(miss_texts);
      if (fetched.size() != miss_texts.size()) {
        throw ProtocolError("embedding provider returned " + std::to_string(fetched.size()) +
                            " vectors for " + std::to_string(miss_texts.size()) + " inputs");
      }
      std::lock_guard<std::mutex> lock(mutex_);
      for (std::size_t k = 0; k < miss_indices.size(); ++k) {
        out[miss_indices[k]] = fetched[k];
        cache_.emplace(miss_texts[k], fetched[k]);
      }
    }
    return out;
  }

  std::size_t cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<EmbeddingProvider> owned_;
  EmbeddingProvider& inner_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

// Head whose rows point along the three marker directions; together with
// FixtureEmbeddingProvider it classifies marker explanations one-hot.
inline ClassifierHead fixture_head(std::size_t dim, double scale = 40.0) {
  if (dim < 4) throw ConfigError("fixture head needs dimension >= 4");
  ClassifierHead head;
  head.dim = dim;
  head.weights.assign(kLabelCount * dim, 0.0);
  head.weights[0 * dim + 0] = scale;
  head.weights[1 * dim + 1] = scale;
  head.weights[2 * dim + 2] = scale;
  head.provider_id = "fixture:" + std::to_string(dim) + ":0";
  return head;
}

}  // namespace cover
