#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cover/core.hpp"
#include "cover/detail/text.hpp"
#include "cover/errors.hpp"

namespace cover {

using StanceEstimatorFn =
    std::function<StanceDistribution(const std::string& text, const std::string& target)>;

struct SentenceUnit {
  std::string text;
  bool knowledge = false;  // true for appended knowledge sentences
};

struct SentenceTrace {
  std::string text;
  bool knowledge = false;
  bool kept = true;
};

struct ReconstructedTweet {
  std::string tweet_id;
  std::string final_text;
  std::vector<std::string> retained_sentences;
  std::vector<KnowledgeEntry> attached_knowledge;  // entries matched during augmentation
  double se_tweet = 0.0;                           // entropy of final_text
  double se_initial = 0.0;                         // entropy before any filtering
  std::vector<SentenceTrace> provenance;
  bool truncated = false;
};

// Splits on sentence terminators (. ! ?), keeping each terminator run with
// its sentence. Newlines separate sentences without surviving into them.
// Text with no terminator is a single sentence.
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  const auto flush = [&]() {
    const std::string t = detail::trim(current);
    if (!t.empty()) out.push_back(t);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n' || c == '\r') {
      flush();
      continue;
    }
    current.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      const bool run_continues = i + 1 < text.size() && (text[i + 1] == '.' || text[i + 1] == '!' ||
                                                         text[i + 1] == '?');
      if (!run_continues) flush();
    }
  }
  flush();
  return out;
}

inline std::string normalize_entity(std::string_view s) { return detail::normalize_text(s); }

inline std::string knowledge_sentence(const KnowledgeEntry& entry) {
  return entry.entity + ": " + entry.description;
}

// Attaches every knowledge-base entry whose entity occurs in the tweet text
// on token boundaries (case- and whitespace-insensitive). Returns the
// augmented text and the matched entries, preserving knowledge-base order.
inline std::pair<std::string, std::vector<KnowledgeEntry>> augment_knowledge(
    const Tweet& tweet, const std::vector<KnowledgeEntry>& knowledge_base) {
  const std::string haystack = detail::normalize_text(tweet.raw_text);
  std::vector<KnowledgeEntry> matched;
  for (const KnowledgeEntry& entry : knowledge_base) {
    const std::string needle = normalize_entity(entry.entity);
    if (needle.empty()) continue;
    if (detail::contains_token(haystack, needle)) matched.push_back(entry);
  }
  std::string augmented = tweet.raw_text;
  for (const KnowledgeEntry& entry : matched) {
    augmented += " ";
    augmented += knowledge_sentence(entry);
  }
  return {augmented, matched};
}

namespace detail {

inline std::string join_alive(const std::vector<SentenceUnit>& sentences,
                              const std::vector<bool>& alive) {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!alive[i]) continue;
    if (!out.empty()) out.push_back(' ');
    out += sentences[i].text;
  }
  return out;
}

}  // namespace detail

// Greedy single pass over the sentence units in order: a sentence is dropped
// when dropping it does not increase the stance entropy of the remaining
// text. The last remaining original (non-knowledge) sentence is never
// dropped, so the tweet always keeps some of its own words. A positive
// length_cap then truncates whole sentences from the end (and finally
// tokens) until the text fits.
inline ReconstructedTweet filter_sentences(const std::vector<SentenceUnit>& sentences,
                                           const std::string& target,
                                           const StanceEstimatorFn& estimator,
                                           int length_cap = 0, std::string tweet_id = {}) {
  if (sentences.empty()) {
    throw std::invalid_argument("cannot filter an empty sentence list");
  }
  std::size_t original_count = 0;
  for (const SentenceUnit& s : sentences) {
    if (detail::trim(s.text).empty()) {
      throw std::invalid_argument("sentence units must be non-empty");
    }
    if (!s.knowledge) ++original_count;
  }
  if (original_count == 0) {
    throw std::invalid_argument("sentence list has no original sentence");
  }

  std::vector<bool> alive(sentences.size(), true);
  double se_current = stance_entropy(estimator(detail::join_alive(sentences, alive), target));
  const double se_initial = se_current;
  std::size_t original_alive = original_count;

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!sentences[i].knowledge && original_alive == 1) continue;
    alive[i] = false;
    const double se_without =
        stance_entropy(estimator(detail::join_alive(sentences, alive), target));
    if (se_without <= se_current) {
      se_current = se_without;
      if (!sentences[i].knowledge) --original_alive;
    } else {
      alive[i] = true;
    }
  }

  ReconstructedTweet result;
  result.tweet_id = std::move(tweet_id);
  result.se_initial = se_initial;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    result.provenance.push_back({sentences[i].text, sentences[i].knowledge, alive[i]});
    if (alive[i]) result.retained_sentences.push_back(sentences[i].text);
  }

  if (length_cap > 0) {
    const auto total_tokens = [&]() {
      std::size_t n = 0;
      for (const std::string& s : result.retained_sentences) n += detail::count_ws_tokens(s);
      return n;
    };
    while (total_tokens() > static_cast<std::size_t>(length_cap) &&
           result.retained_sentences.size() > 1) {
      const std::string& victim = result.retained_sentences.back();
      for (auto it = result.provenance.rbegin(); it != result.provenance.rend(); ++it) {
        if (it->kept && it->text == victim) {
          it->kept = false;
          break;
        }
      }
      result.retained_sentences.pop_back();
      result.truncated = true;
    }
    if (total_tokens() > static_cast<std::size_t>(length_cap)) {
      const std::vector<std::string> tokens =
          detail::split_ws_tokens(result.retained_sentences[0]);
      std::string clipped;
      for (std::size_t i = 0; i < static_cast<std::size_t>(length_cap); ++i) {
        if (i > 0) clipped.push_back(' ');
        clipped += tokens[i];
      }
      result.retained_sentences[0] = clipped;
      result.truncated = true;
    }
  }

  result.final_text = detail::join(result.retained_sentences, " ");
  if (result.truncated) {
    result.se_tweet = stance_entropy(estimator(result.final_text, target));
  } else {
    result.se_tweet = se_current;
  }
  return result;
}

// Full context reconstruction for one tweet: attach matching knowledge,
// split into sentence units (knowledge sentences are pre-made units), and
// filter by entropy.
inline ReconstructedTweet reconstruct_tweet(const Tweet& tweet,
                                            const std::vector<KnowledgeEntry>& knowledge_base,
                                            const StanceEstimatorFn& estimator,
                                            int length_cap = 512) {
  if (detail::trim(tweet.raw_text).empty()) {
    throw std::invalid_argument("tweet " + tweet.id + " has empty text");
  }
  auto [augmented, matched] = augment_knowledge(tweet, knowledge_base);
  (void)augmented;

  std::vector<SentenceUnit> units;
  for (const std::string& s : split_sentences(tweet.raw_text)) units.push_back({s, false});
  for (const KnowledgeEntry& entry : matched) units.push_back({knowledge_sentence(entry), true});

  ReconstructedTweet result = filter_sentences(units, tweet.target, estimator, length_cap, tweet.id);
  result.attached_knowledge = matched;
  return result;
}

}  // namespace cover
