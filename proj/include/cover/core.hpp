#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cover/detail/text.hpp"
#include "cover/errors.hpp"

namespace cover {

inline constexpr std::size_t kLabelCount = 3;

// ln 3, the entropy of the uniform three-way distribution.
inline constexpr double kMaxStanceEntropy = 1.0986122886681098;

enum class StanceLabel { Favor = 0, Against = 1, None = 2 };

inline constexpr std::array<StanceLabel, kLabelCount> kAllLabels = {
    StanceLabel::Favor, StanceLabel::Against, StanceLabel::None};

inline constexpr std::size_t label_index(StanceLabel label) {
  return static_cast<std::size_t>(label);
}

inline const char* to_string(StanceLabel label) {
  switch (label) {
    case StanceLabel::Favor:
      return "favor";
    case StanceLabel::Against:
      return "against";
    case StanceLabel::None:
      return "none";
  }
  throw std::invalid_argument("unknown stance label value");
}

// Accepts the canonical names plus the aliases seen in datasets and model
// output ("neutral" maps to None). Case-insensitive.
inline std::optional<StanceLabel> parse_label(std::string_view text) {
  const std::string s = detail::to_lower(detail::trim(text));
  if (s == "favor" || s == "favour" || s == "pro" || s == "support") return StanceLabel::Favor;
  if (s == "against" || s == "con" || s == "oppose") return StanceLabel::Against;
  if (s == "none" || s == "neutral" || s == "neither") return StanceLabel::None;
  return std::nullopt;
}

// Probability vector over (favor, against, none). Construction validates;
// every instance sums to 1 within 1e-6 with nonnegative entries.
class StanceDistribution {
 public:
  StanceDistribution() : p_{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0} {}

  StanceDistribution(double favor, double against, double none) : p_{favor, against, none} {
    double sum = 0.0;
    for (double& v : p_) {
      if (!std::isfinite(v)) throw std::invalid_argument("stance probability is not finite");
      if (v < 0.0) {
        if (v < -1e-12) throw std::invalid_argument("stance probability is negative");
        v = 0.0;
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("stance probabilities sum to " + std::to_string(sum) +
                                  ", expected 1 within 1e-6");
    }
  }

  static StanceDistribution uniform() { return StanceDistribution(); }

  double favor() const { return p_[0]; }
  double against() const { return p_[1]; }
  double none() const { return p_[2]; }

  double at(StanceLabel label) const { return p_[label_index(label)]; }
  double at(std::size_t i) const { return p_.at(i); }

  const std::array<double, kLabelCount>& values() const { return p_; }

  // Ties break toward the earlier label in (favor, against, none) order.
  StanceLabel argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < kLabelCount; ++i) {
      if (p_[i] > p_[best]) best = i;
    }
    return static_cast<StanceLabel>(best);
  }

 private:
  std::array<double, kLabelCount> p_;
};

// Scales nonnegative scores to sum to 1. An all-zero (or fully degenerate)
// input yields the uniform distribution and sets *degenerate when provided.
inline StanceDistribution renormalize(double favor, double against, double none,
                                      bool* degenerate = nullptr) {
  std::array<double, kLabelCount> v{favor, against, none};
  double sum = 0.0;
  for (double& x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("stance score is not finite");
    if (x < 0.0) throw std::invalid_argument("stance score is negative");
    sum += x;
  }
  if (degenerate != nullptr) *degenerate = false;
  if (sum <= 0.0) {
    if (degenerate != nullptr) *degenerate = true;
    return StanceDistribution::uniform();
  }
  return StanceDistribution(v[0] / sum, v[1] / sum, v[2] / sum);
}

// Shifted-exponent softmax; saturates gracefully for extreme logits.
inline StanceDistribution softmax3(const std::array<double, kLabelCount>& logits) {
  for (double x : logits) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax logit is not finite");
  }
  const double m = std::max(logits[0], std::max(logits[1], logits[2]));
  std::array<double, kLabelCount> e{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    e[i] = std::exp(logits[i] - m);
    sum += e[i];
  }
  return StanceDistribution(e[0] / sum, e[1] / sum, e[2] / sum);
}

// Shannon entropy in nats; 0 for one-hot, ln 3 for uniform.
inline double stance_entropy(const StanceDistribution& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h < 0.0 ? 0.0 : h;
}

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

namespace detail {

inline double cosine_impl(const double* a, const double* b, std::size_t n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) {
    throw std::domain_error("cosine similarity of a zero vector is undefined");
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
}

}  // namespace detail

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine similarity dimension mismatch: " +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.size() == 0) throw std::invalid_argument("cosine similarity of empty vectors");
  return detail::cosine_impl(a.values.data(), b.values.data(), a.size());
}

inline double cosine_similarity(const StanceDistribution& a, const StanceDistribution& b) {
  return detail::cosine_impl(a.values().data(), b.values().data(), kLabelCount);
}

struct Tweet {
  std::string id;
  std::string raw_text;
  std::string target;
  std::optional<StanceLabel> gold;
};

struct KnowledgeEntry {
  std::string entity;
  std::string description;
};

enum class Verdict { Valid = 0, Invalid = 1, Referable = 2 };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Valid:
      return "valid";
    case Verdict::Invalid:
      return "invalid";
    case Verdict::Referable:
      return "referable";
  }
  throw std::invalid_argument("unknown verdict value");
}

inline std::optional<Verdict> parse_verdict(std::string_view text) {
  const std::string s = detail::to_lower(detail::trim(text));
  if (s == "valid") return Verdict::Valid;
  if (s == "invalid") return Verdict::Invalid;
  if (s == "referable") return Verdict::Referable;
  return std::nullopt;
}

// One verification outcome: a tweet's reasoning round together with the
// verifier's view of it.
struct PredictionRecord {
  std::string tweet_id;
  int round = 1;
  StanceDistribution llm_dist;
  StanceDistribution slm_dist;
  std::string explanation;
  double se_explanation = 0.0;
  double se_tweet = 0.0;
  double similarity = 0.0;
  Verdict verdict = Verdict::Invalid;
  bool parse_ok = true;
  bool escalation = false;
};

}  // namespace cover
