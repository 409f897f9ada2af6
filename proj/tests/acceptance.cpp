// Acceptance gate: one self-checking scenario per release criterion. Each
// prints a single PASS/FAIL line; the binary exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cover/cli.hpp"
#include "support.hpp"

using namespace cover;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool condition, const std::string& message) {
  if (!condition) throw Failure(message);
}

int g_failures = 0;

void criterion(int number, const std::string& title, const std::function<void()>& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    body();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("PASS criterion %d: %s (%.2fs)\n", number, title.c_str(), s);
  } catch (const std::exception& e) {
    ++g_failures;
    std::printf("FAIL criterion %d: %s: %s\n", number, title.c_str(), e.what());
  }
  std::fflush(stdout);
}

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- independent reference implementations (long double, plain loops) ----

double entropy_ref(const StanceDistribution& p) {
  long double h = 0.0L;
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    const long double v = p.at(i);
    if (v > 0.0L) h -= v * std::log(v);
  }
  return static_cast<double>(h);
}

double cosine_ref(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0.0L, na = 0.0L, nb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::array<double, kLabelCount> softmax_ref(const std::array<double, kLabelCount>& logits) {
  long double denom = 0.0L;
  for (double x : logits) denom += std::exp(static_cast<long double>(x));
  std::array<double, kLabelCount> out{};
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    out[i] = static_cast<double>(std::exp(static_cast<long double>(logits[i])) / denom);
  }
  return out;
}

double ce_ref(const ClassifierHead& head, const std::vector<TrainingRecord>& batch) {
  long double total = 0.0L;
  for (const TrainingRecord& r : batch) {
    std::array<double, kLabelCount> logits = head.bias;
    for (std::size_t row = 0; row < kLabelCount; ++row) {
      long double acc = logits[row];
      for (std::size_t j = 0; j < head.dim; ++j) {
        acc += static_cast<long double>(head.weights[row * head.dim + j]) * r.embedding[j];
      }
      logits[row] = static_cast<double>(acc);
    }
    const auto p = softmax_ref(logits);
    total += -std::log(static_cast<long double>(p[label_index(r.label)]));
  }
  return static_cast<double>(total / batch.size());
}

double contrastive_ref(const std::vector<EmbeddingVector>& embeddings,
                       const std::vector<StanceLabel>& labels, double tau) {
  const std::size_t n = embeddings.size();
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    long double pos = 0.0L, all = 0.0L;
    bool has_positive = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const long double e =
          std::exp(static_cast<long double>(cosine_ref(embeddings[i].values, embeddings[j].values)) / tau);
      all += e;
      if (labels[j] == labels[i]) {
        pos += e;
        has_positive = true;
      }
    }
    if (has_positive) total += std::log(pos / all);
  }
  return static_cast<double>(-total / static_cast<long double>(n));
}

// ---- scripted backends ----

constexpr const char* kOracleScript = R"({
  "rules": [
    {"contains": "support widgets", "label": "favor",
     "explanation": "Praise for {target}. [[favor]]"},
    {"contains": "hate widgets", "label": "against",
     "explanation": "Scorn for {target}. [[against]]"},
    {"contains": "cryptic", "label": "none",
     "explanation": "Hard to tell. [[unclear]]"}
  ],
  "default": {"label": "none", "explanation": "No signal about {target}. [[none]]"}
})";

constexpr const char* kEscalationScript = R"({
  "rules": [],
  "default": {"label": "against", "explanation": "Expert call: opposes {target}. [[against]]"}
})";

ScriptedMockBackend make_mock(const std::string& id, const char* json_text) {
  return {id, MockScript::from_json(nlohmann::json::parse(json_text))};
}

Tweet tweet(std::string id, std::string text, std::optional<StanceLabel> gold) {
  Tweet t;
  t.id = std::move(id);
  t.raw_text = std::move(text);
  t.target = "widgets";
  t.gold = gold;
  return t;
}

std::vector<Tweet> oracle_dataset(int favor_count, int against_count) {
  std::vector<Tweet> dataset;
  for (int i = 0; i < favor_count; ++i) {
    dataset.push_back(tweet("fav" + std::to_string(i),
                            "I support widgets wholeheartedly, take " + std::to_string(i),
                            StanceLabel::Favor));
  }
  for (int i = 0; i < against_count; ++i) {
    dataset.push_back(tweet("agn" + std::to_string(i),
                            "I hate widgets with a passion, take " + std::to_string(i),
                            StanceLabel::Against));
  }
  return dataset;
}

// Referable for marked tweets on the first-round seed, Valid otherwise.
struct RoutingBackend : ChatBackend {
  std::string id() const override { return "mock:routing"; }
  std::string model() const override { return "routing"; }
  CompletionResult complete(const std::string& prompt, double,
                            std::optional<long long> seed) override {
    nlohmann::json results = nlohmann::json::array();
    for (const PromptPair& p : parse_prompt_pairs(prompt)) {
      const bool designated = p.text.find("waffle") != std::string::npos;
      double favor = 0.9, against = 0.05, none = 0.05;
      if (designated && seed.has_value() && *seed == 1) {
        favor = 0.5;
        against = 0.3;
        none = 0.2;
      }
      results.push_back({{"text_id", p.index},
                         {"explanation", "Leans toward " + p.target + ". [[favor]]"},
                         {"favor_probability", favor},
                         {"against_probability", against},
                         {"neutral_probability", none}});
    }
    return {nlohmann::json{{"results", results}}.dump(), false, 0};
  }
};

// Draws a deterministic but arbitrary behavior per (trial, prompt, seed):
// valid, referable, unclear, markerless, degraded, or garbage responses.
struct ChaosBackend : ChatBackend {
  explicit ChaosBackend(std::uint64_t trial) : trial_(trial) {}

  std::string id() const override { return "mock:chaos" + std::to_string(trial_); }
  std::string model() const override { return "chaos"; }

  CompletionResult complete(const std::string& prompt, double,
                            std::optional<long long> seed) override {
    std::mt19937_64 rng(detail::mix64(trial_) ^ detail::fnv1a64(prompt) ^
                        static_cast<std::uint64_t>(seed.value_or(0)));
    if (rng() % 16 == 0) return {"@@@ line noise, not json @@@", false, 0};
    nlohmann::json results = nlohmann::json::array();
    for (const PromptPair& p : parse_prompt_pairs(prompt)) {
      switch (rng() % 7) {
        case 0:
          results.push_back(slot(p, 0.9, 0.05, 0.05, "Backs " + p.target + ". [[favor]]"));
          break;
        case 1:
          results.push_back(slot(p, 0.05, 0.9, 0.05, "Slams " + p.target + ". [[against]]"));
          break;
        case 2:
          results.push_back(slot(p, 0.5, 0.3, 0.2, "Leans toward " + p.target + ". [[favor]]"));
          break;
        case 3:
          results.push_back(slot(p, 0.34, 0.33, 0.33, "Impossible to say. [[unclear]]"));
          break;
        case 4:
          results.push_back(slot(p, 0.4, 0.4, 0.2, "A plain markerless take on " + p.target));
          break;
        case 5:
          results.push_back(slot(p, 0.6, 0.2, 0.2, ""));  // degrades to a parse failure
          break;
        default:
          break;  // slot missing from the response entirely
      }
    }
    return {nlohmann::json{{"results", results}}.dump(), false, 0};
  }

 private:
  static nlohmann::json slot(const PromptPair& p, double favor, double against, double none,
                             const std::string& explanation) {
    return {{"text_id", p.index},
            {"explanation", explanation},
            {"favor_probability", favor},
            {"against_probability", against},
            {"neutral_probability", none}};
  }

  std::uint64_t trial_;
};

// ---- criteria ----

void formula_oracles() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  std::uniform_real_distribution<double> logit(-20.0, 20.0);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const StanceDistribution p = testutil::random_distribution(rng);
    worst = std::max(worst, std::abs(stance_entropy(p) - entropy_ref(p)));
  }
  expect(worst <= 1e-6, "stance_entropy drifts from brute force by " + std::to_string(worst));

  worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    EmbeddingVector a, b;
    for (int j = 0; j < 8; ++j) {
      a.values.push_back(unit(rng));
      b.values.push_back(unit(rng));
    }
    if (a.norm() < 1e-3 || b.norm() < 1e-3) continue;
    worst = std::max(worst,
                     std::abs(cosine_similarity(a, b) - cosine_ref(a.values, b.values)));
  }
  expect(worst <= 1e-6, "cosine_similarity drifts from brute force by " + std::to_string(worst));

  worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::array<double, kLabelCount> logits = {logit(rng), logit(rng), logit(rng)};
    const StanceDistribution got = softmax3(logits);
    const auto want = softmax_ref(logits);
    for (std::size_t k = 0; k < kLabelCount; ++k) {
      worst = std::max(worst, std::abs(got.at(k) - want[k]));
    }
  }
  expect(worst <= 1e-6, "softmax3 drifts from brute force by " + std::to_string(worst));

  // The full estimator path: softmax over text-to-phrase cosines.
  FixtureEmbeddingProvider provider(16, 3);
  worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::string text = "sample text number " + std::to_string(i);
    const StanceDistribution got = estimate_distribution(text, "widgets", provider);
    const EmbeddingVector h = provider.embed(text);
    std::array<double, kLabelCount> sims{};
    const StanceLabel order[] = {StanceLabel::Favor, StanceLabel::Against, StanceLabel::None};
    for (std::size_t k = 0; k < kLabelCount; ++k) {
      const EmbeddingVector ph = provider.embed(stance_phrase("widgets", order[k]));
      sims[k] = cosine_ref(h.values, ph.values);
    }
    const auto want = softmax_ref(sims);
    for (std::size_t k = 0; k < kLabelCount; ++k) {
      worst = std::max(worst, std::abs(got.at(k) - want[k]));
    }
  }
  expect(worst <= 1e-6, "estimator drifts from brute force by " + std::to_string(worst));

  worst = 0.0;
  const StanceLabel labels3[] = {StanceLabel::Favor, StanceLabel::Against, StanceLabel::None};
  for (int i = 0; i < 1000; ++i) {
    ClassifierHead head;
    head.dim = 8;
    head.weights.resize(kLabelCount * head.dim);
    for (double& w : head.weights) w = unit(rng);
    for (double& b : head.bias) b = unit(rng);
    std::vector<TrainingRecord> batch;
    for (int k = 0; k < 4; ++k) {
      TrainingRecord r;
      r.label = labels3[static_cast<std::size_t>(rng() % 3)];
      for (int j = 0; j < 8; ++j) r.embedding.values.push_back(unit(rng));
      batch.push_back(std::move(r));
    }
    worst = std::max(worst, std::abs(ce_loss(head, batch) - ce_ref(head, batch)));
  }
  expect(worst <= 1e-6, "ce_loss drifts from brute force by " + std::to_string(worst));

  worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<EmbeddingVector> embeddings(n);
    std::vector<StanceLabel> labels(n);
    for (std::size_t k = 0; k < n; ++k) {
      for (int j = 0; j < 6; ++j) embeddings[k].values.push_back(unit(rng));
      if (embeddings[k].norm() < 1e-3) embeddings[k].values[0] += 1.0;
      labels[k] = labels3[static_cast<std::size_t>(rng() % 3)];
    }
    worst = std::max(worst, std::abs(contrastive_loss(embeddings, labels, 0.05) -
                                     contrastive_ref(embeddings, labels, 0.05)));
  }
  expect(worst <= 1e-6, "contrastive_loss drifts from brute force by " + std::to_string(worst));

  expect(elapsed_s(start) < 5.0, "formula oracles exceeded the 5s budget");
}

void verdict_partition() {
  const auto start = std::chrono::steady_clock::now();
  const VerificationConfig config{0.9};
  constexpr double kSlack = 1e-9;
  long checked = 0;
  for (int i = 0; i <= 109; ++i) {
    const double se_e = i * 0.01;
    for (int j = 0; j <= 109; ++j) {
      const double se_x = j * 0.01;
      for (int k = 0; k <= 200; ++k) {
        const double sim = -1.0 + k * 0.01;
        // Independent re-statement of the decision table.
        const bool invalid = se_e > se_x + kSlack;
        const bool valid = !invalid && sim >= config.delta - kSlack;
        const bool referable = !invalid && !valid;
        expect(int(invalid) + int(valid) + int(referable) == 1,
               "rule table does not partition the space");
        const Verdict got = assign_verdict(se_e, se_x, sim, config);
        const Verdict want =
            invalid ? Verdict::Invalid : (valid ? Verdict::Valid : Verdict::Referable);
        if (got != want) {
          expect(false, "verdict mismatch at se_e=" + std::to_string(se_e) +
                            " se_x=" + std::to_string(se_x) + " sim=" + std::to_string(sim));
        }
        ++checked;
      }
    }
  }
  expect(checked == 110L * 110L * 201L, "grid enumeration is incomplete");
  expect(elapsed_s(start) < 5.0, "verdict grid exceeded the 5s budget");
}

void aggregation_example() {
  auto referable = [](double sim, StanceDistribution dist) {
    PredictionRecord r;
    r.tweet_id = "case";
    r.verdict = Verdict::Referable;
    r.similarity = sim;
    r.llm_dist = dist;
    return r;
  };
  const std::vector<PredictionRecord> records = {
      referable(0.8341, {0.2, 0.3, 0.5}),
      referable(0.8972, {0.05, 0.9, 0.05}),
      referable(0.8119, {0.25, 0.3, 0.45}),
  };
  const StanceDistribution agg = aggregate(records);
  expect(std::abs(agg.against() - 0.5117) <= 1e-3,
         "aggregated p_against is " + std::to_string(agg.against()));
  expect(agg.argmax() == StanceLabel::Against, "aggregated argmax is not Against");
}

void oracle_end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  ScriptedMockBackend main = make_mock("mock:main", kOracleScript);
  ScriptedMockBackend escalation = make_mock("mock:escalation", kEscalationScript);
  FixtureEmbeddingProvider provider(16, 0);
  const ClassifierHead head = fixture_head(16);
  QueryLog log;
  PipelineConfig config;
  config.seed = 19;

  const std::vector<Tweet> dataset = oracle_dataset(32, 32);
  const RunOutcome outcome =
      run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, log);

  expect(!outcome.aborted, "run aborted: " + outcome.abort_reason);
  expect(outcome.report.results.size() == 64, "not every tweet finalized");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (outcome.report.results[i].label == *dataset[i].gold) ++correct;
  }
  expect(correct == 64, "accuracy below 100%: " + std::to_string(correct) + "/64");
  expect(outcome.report.billable_queries == 8,
         "expected 8 queries, saw " + std::to_string(outcome.report.billable_queries));
  expect(outcome.report.q_avg == 0.125,
         "expected Q_AVG 0.125, saw " + std::to_string(outcome.report.q_avg));
  expect(elapsed_s(start) < 10.0, "end-to-end oracle exceeded the 10s budget");
}

void reclassification_routing() {
  RoutingBackend main;
  ScriptedMockBackend escalation = make_mock("mock:escalation", kEscalationScript);
  FixtureEmbeddingProvider provider(16, 0);
  const ClassifierHead head = fixture_head(16);
  QueryLog log;
  PipelineConfig config;
  config.seed = 0;  // round seeds 1..3, so the backend can spot round one

  std::vector<Tweet> dataset;
  std::set<std::string> designated;
  for (int i = 0; i < 64; ++i) {
    const bool waffly = i % 4 == 0;  // a designated 25% subset
    const std::string id = "t" + std::to_string(i);
    if (waffly) designated.insert(id);
    dataset.push_back(tweet(id,
                            std::string(waffly ? "Known to waffle" : "Steady support") +
                                " about widgets, take " + std::to_string(i),
                            StanceLabel::Favor));
  }

  const RunOutcome outcome =
      run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, log);
  expect(!outcome.aborted, "run aborted: " + outcome.abort_reason);
  expect(outcome.report.results.size() == 64, "not every tweet finalized");

  std::set<std::string> second_round;
  for (const PredictionRecord& r : outcome.trace) {
    expect(r.round <= 2, "tweet " + r.tweet_id + " reached round " + std::to_string(r.round));
    if (r.round == 2) second_round.insert(r.tweet_id);
  }
  expect(second_round == designated,
         "round-two population differs from the designated subset");
  for (const TweetResult& r : outcome.report.results) {
    expect(r.label == StanceLabel::Favor, "wrong label for " + r.tweet_id);
  }
  expect(outcome.report.billable_queries == 12,
         "expected 12 queries, saw " + std::to_string(outcome.report.billable_queries));
  expect(outcome.report.q_avg == 0.1875,
         "expected Q_AVG 0.1875, saw " + std::to_string(outcome.report.q_avg));
}

void escalation_path() {
  ScriptedMockBackend main = make_mock("mock:main", kOracleScript);
  ScriptedMockBackend escalation = make_mock("mock:escalation", kEscalationScript);
  FixtureEmbeddingProvider provider(16, 0);
  const ClassifierHead head = fixture_head(16);
  QueryLog log;
  PipelineConfig config;
  config.batch_sizes = {2, 2, 1};

  std::vector<Tweet> dataset = oracle_dataset(2, 1);
  dataset.push_back(tweet("cry", "Something cryptic about widgets.", StanceLabel::Against));

  const RunOutcome outcome =
      run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, log);
  expect(!outcome.aborted, "run aborted: " + outcome.abort_reason);

  long escalation_requests = 0;
  for (const QueryLogEntry& e : log.snapshot()) {
    if (e.escalation) {
      ++escalation_requests;
      expect(e.tweet_ids == std::vector<std::string>{"cry"}, "escalated the wrong tweet");
    }
  }
  expect(escalation_requests == 1,
         "expected exactly one escalation request, saw " + std::to_string(escalation_requests));

  const TweetResult* cry = nullptr;
  for (const TweetResult& r : outcome.report.results) {
    if (r.tweet_id == "cry") cry = &r;
  }
  expect(cry != nullptr, "the cryptic tweet never finalized");
  expect(cry->source == FinalSource::Escalated, "the cryptic tweet was not escalated");
  // The escalation script answers (0.05, 0.9, 0.05); its argmax must win.
  expect(cry->label == StanceLabel::Against, "final label is not the escalation argmax");
}

void filtering_monotonicity() {
  const auto start = std::chrono::steady_clock::now();
  const char* vocab[] = {"quick",  "brown", "fox",    "jumps", "over", "lazy",
                         "dogs",   "near",  "quiet",  "river", "banks", "while",
                         "loud",   "geese", "argue",  "about", "old",  "bread",
                         "crumbs", "today", "again",  "maybe", "never", "always"};
  constexpr std::size_t kVocab = sizeof(vocab) / sizeof(vocab[0]);

  for (int round = 0; round < 200; ++round) {
    std::mt19937_64 rng(4000 + round);
    FixtureEmbeddingProvider provider(8, 100 + static_cast<std::uint64_t>(round));
    const StanceEstimatorFn estimator = [&provider](const std::string& text,
                                                    const std::string& target) {
      return estimate_distribution(text, target, provider);
    };

    const std::size_t n = 2 + rng() % 9;  // 2..10 sentences
    std::vector<SentenceUnit> sentences;
    for (std::size_t s = 0; s < n; ++s) {
      std::string sentence;
      const std::size_t words = 3 + rng() % 5;
      for (std::size_t w = 0; w < words; ++w) {
        if (!sentence.empty()) sentence.push_back(' ');
        sentence += vocab[rng() % kVocab];
      }
      sentence.push_back('.');
      sentences.push_back({sentence, false});
    }

    const ReconstructedTweet got = filter_sentences(sentences, "things", estimator);
    expect(got.se_tweet <= got.se_initial + 1e-12,
           "filtering raised entropy in case " + std::to_string(round));

    // Brute-force floor over every non-empty subset, joined in order.
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::string text;
      for (std::size_t s = 0; s < n; ++s) {
        if ((mask & (1u << s)) == 0) continue;
        if (!text.empty()) text.push_back(' ');
        text += sentences[s].text;
      }
      best = std::min(best, stance_entropy(estimator(text, "things")));
    }
    expect(got.se_tweet >= best - 1e-9,
           "greedy result undercuts the exhaustive minimum in case " + std::to_string(round));
  }
  expect(elapsed_s(start) < 60.0, "filtering property exceeded the 60s budget");
}

void gradient_agreement() {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const StanceLabel labels3[] = {StanceLabel::Favor, StanceLabel::Against, StanceLabel::None};
  TrainConfig config;
  config.lambda = 0.1;
  config.tau_s = 0.05;

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ClassifierHead head;
    head.dim = 8;
    head.weights.resize(kLabelCount * head.dim);
    for (double& w : head.weights) w = unit(rng);
    for (double& b : head.bias) b = unit(rng);
    std::vector<TrainingRecord> batch;
    const std::size_t size = 2 + rng() % 7;
    for (std::size_t k = 0; k < size; ++k) {
      TrainingRecord r;
      r.label = labels3[static_cast<std::size_t>(rng() % 3)];
      for (std::size_t j = 0; j < head.dim; ++j) r.embedding.values.push_back(unit(rng));
      if (r.embedding.norm() < 1e-3) r.embedding.values[0] += 1.0;
      batch.push_back(std::move(r));
    }
    worst = std::max(worst, gradient_check(head, batch, config));
  }
  expect(worst < 1e-4, "worst gradient relative error is " + std::to_string(worst));
}

void trainer_sanity() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> noise(0.0, 0.1);
  const StanceLabel labels3[] = {StanceLabel::Favor, StanceLabel::Against, StanceLabel::None};
  std::vector<TrainingRecord> records;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    for (int k = 0; k < 100; ++k) {
      TrainingRecord r;
      r.tweet_id = "s" + std::to_string(records.size());
      r.label = labels3[axis];
      r.embedding.values.assign(16, 0.0);
      for (double& x : r.embedding.values) x = noise(rng);
      r.embedding.values[axis] += 1.0;
      records.push_back(std::move(r));
    }
  }

  TrainConfig config;
  config.epochs = 30;
  config.seed = 5;
  const TrainResult with = train_head(records, config, "fixture:16:0");
  expect(with.holdout_count == 30, "holdout split is not 10% of 300");
  const double accuracy = with.epochs[static_cast<std::size_t>(with.best_epoch - 1)].holdout_accuracy;
  expect(accuracy >= 0.95, "held-out accuracy is " + std::to_string(accuracy));

  TrainConfig ce_only = config;
  ce_only.lambda = 0.0;
  const TrainResult without = train_head(records, ce_only, "fixture:16:0");
  expect(with.head.weights == without.head.weights,
         "lambda changed the trained weights despite frozen embeddings");
  expect(with.head.bias == without.head.bias, "lambda changed the trained bias");
  expect(with.best_epoch == without.best_epoch, "lambda changed the best epoch");
}

void metric_oracle() {
  std::vector<StanceLabel> preds, golds;
  auto add = [&](int n, StanceLabel gold, StanceLabel pred) {
    for (int i = 0; i < n; ++i) {
      golds.push_back(gold);
      preds.push_back(pred);
    }
  };
  add(8, StanceLabel::Favor, StanceLabel::Favor);
  add(2, StanceLabel::Favor, StanceLabel::Against);
  add(6, StanceLabel::Against, StanceLabel::Against);
  add(2, StanceLabel::Against, StanceLabel::Favor);
  add(2, StanceLabel::None, StanceLabel::Against);

  // Independent confusion arithmetic: favor P=R=0.8; against P=6/10, R=6/8;
  // none never predicted.
  const double f1_favor = 0.8;
  const double f1_against = 2.0 * 0.6 * 0.75 / (0.6 + 0.75);
  const double two_ref = (f1_favor + f1_against) / 2.0;
  const double three_ref = (f1_favor + f1_against + 0.0) / 3.0;

  const double two = f_avg(preds, golds, DatasetKind::TwoClassAvg);
  const double three = f_avg(preds, golds, DatasetKind::ThreeClassAvg);
  expect(std::abs(two - 0.7333) <= 1e-4, "two-class F_AVG is " + std::to_string(two));
  expect(std::abs(two - two_ref) <= 1e-12, "two-class F_AVG drifts from the hand computation");
  expect(std::abs(three - three_ref) <= 1e-12,
         "three-class F_AVG drifts from the hand computation");
  expect(two != three, "the averaging conventions should differ on this fixture");

  const double perfect = f_avg(golds, golds, DatasetKind::TwoClassAvg);
  expect(std::abs(perfect - 1.0) <= 1e-12, "all-correct F_AVG is " + std::to_string(perfect));
}

void determinism() {
  testutil::TempDir dir;
  ScriptedMockBackend raw_main = make_mock("mock:main", kOracleScript);
  ScriptedMockBackend raw_escalation = make_mock("mock:escalation", kEscalationScript);
  DiskCachedChatBackend main(raw_main, dir.path() / "cache");
  DiskCachedChatBackend escalation(raw_escalation, dir.path() / "cache");
  FixtureEmbeddingProvider provider(16, 0);
  const ClassifierHead head = fixture_head(16);
  PipelineConfig config;
  config.seed = 77;
  const std::vector<Tweet> dataset = oracle_dataset(6, 6);

  QueryLog warm_log;
  run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, warm_log);

  const auto report_bytes = [&](const std::string& name) {
    QueryLog log;
    const RunOutcome outcome =
        run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, log);
    expect(!outcome.aborted, "cached run aborted: " + outcome.abort_reason);
    const std::filesystem::path path = dir.path() / name;
    write_run_report(path, outcome);
    return testutil::read_file(path);
  };
  const std::string first = report_bytes("report_a.jsonl");
  const std::string second = report_bytes("report_b.jsonl");
  expect(!first.empty(), "serialized run report is empty");
  expect(first == second, "warm-cache runs serialized differently");
}

void query_bound() {
  constexpr double kBound = 0.125 + 0.25 + 1.0 + 1.0;
  FixtureEmbeddingProvider provider(16, 0);
  const ClassifierHead head = fixture_head(16);

  std::vector<Tweet> dataset;
  for (int i = 0; i < 64; ++i) {
    dataset.push_back(tweet("t" + std::to_string(i),
                            "An unremarkable remark about widgets, number " + std::to_string(i),
                            std::nullopt));
  }

  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    ChaosBackend main(trial);
    ChaosBackend escalation(trial + 5000);
    QueryLog log;
    PipelineConfig config;
    config.seed = trial;

    const RunOutcome outcome =
        run_pipeline(dataset, {}, config, main, escalation, provider, provider, head, log);
    expect(!outcome.aborted, "trial " + std::to_string(trial) + " aborted");
    expect(outcome.report.results.size() == 64,
           "trial " + std::to_string(trial) + " left tweets unfinalized");
    for (const TweetResult& r : outcome.report.results) {
      expect(r.query_share <= kBound + 1e-9,
             "tweet " + r.tweet_id + " spent " + std::to_string(r.query_share) +
                 " shares in trial " + std::to_string(trial));
    }
    expect(outcome.report.q_avg <= kBound + 1e-9,
           "trial " + std::to_string(trial) + " q_avg " + std::to_string(outcome.report.q_avg));
  }
}

void live_smoke() {
  const char* config_path = std::getenv("COVER_LIVE_CONFIG");
  const char* dataset_path = std::getenv("COVER_LIVE_DATASET");
  if (config_path == nullptr || dataset_path == nullptr) {
    throw Failure("skip");  // reported as a skip by the caller
  }
  const Config config = load_cli_config(config_path, {});
  RuntimeParts parts = make_runtime(config, {});
  const std::vector<KnowledgeEntry> kb = load_kb_if_configured(config);
  std::vector<Tweet> dataset = load_dataset(dataset_path);
  if (dataset.size() > 16) dataset.resize(16);

  QueryLog log;
  const RunOutcome outcome =
      run_pipeline(dataset, kb, config.pipeline, *parts.main_backend, *parts.escalation_backend,
                   *parts.estimate_provider, *parts.verify_provider, parts.head, log,
                   config.eval.kind);
  expect(!outcome.aborted, "live run aborted: " + outcome.abort_reason);
  expect(outcome.report.results.size() == dataset.size(), "live run left tweets unfinalized");
  expect(outcome.report.q_avg <= 2.375 + 1e-9,
         "live Q_AVG is " + std::to_string(outcome.report.q_avg));
  std::printf("  live smoke: %zu/%zu records failed to parse, Q_AVG %.4f\n",
              outcome.report.parse_failures, outcome.report.records_total,
              outcome.report.q_avg);
}

}  // namespace

int main() {
  criterion(1, "formula implementations match brute-force references", formula_oracles);
  criterion(2, "verdict rules partition the (SE_e, SE_x, sim) grid", verdict_partition);
  criterion(3, "consistency-weighted aggregation reproduces the worked example",
            aggregation_example);
  criterion(4, "64-tweet oracle run: 100% accuracy at 8 queries", oracle_end_to_end);
  criterion(5, "only referable tweets reach round two", reclassification_routing);
  criterion(6, "invalid-everywhere tweets escalate exactly once", escalation_path);
  criterion(7, "greedy filtering never raises entropy and respects the exhaustive floor",
            filtering_monotonicity);
  criterion(8, "analytic gradients match central differences", gradient_agreement);
  criterion(9, "trainer separates clusters and ignores lambda", trainer_sanity);
  criterion(10, "F_AVG metrics reproduce the hand-computed confusion case", metric_oracle);

  criterion(11, "warm-cache runs serialize byte-identically", determinism);
  criterion(12, "per-tweet billable share never exceeds 2.375", query_bound);

  // The live smoke is optional: it runs only when credentials are configured.
  if (std::getenv("COVER_LIVE_CONFIG") == nullptr ||
      std::getenv("COVER_LIVE_DATASET") == nullptr) {
    std::printf(
        "PASS criterion 13: live smoke skipped (set COVER_LIVE_CONFIG and "
        "COVER_LIVE_DATASET to enable)\n");
  } else {
    criterion(13, "live smoke over 16 real tweets", live_smoke);
  }

  if (g_failures > 0) {
    std::printf("%d criteria failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
