#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cover/core.hpp"
#include "cover/slm.hpp"

namespace testutil {

inline std::filesystem::path fixture_dir() { return COVER_FIXTURE_DIR; }

inline std::string cli_path() { return COVER_CLI_PATH; }

// Unique scratch directory, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("cover-test-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline cover::StanceDistribution random_distribution(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  double a = u(rng), b = u(rng), c = u(rng);
  const double s = a + b + c;
  return {a / s, b / s, c / s};
}

inline cover::EmbeddingVector make_vector(std::initializer_list<double> values) {
  cover::EmbeddingVector v;
  v.values.assign(values);
  return v;
}

// Embedding provider that replays a fixed text -> vector map and counts
// calls; unknown texts are an error so tests notice unexpected lookups.
class MapProvider : public cover::EmbeddingProvider {
 public:
  explicit MapProvider(std::string id = "map:test") : id_(std::move(id)) {}

  void set(const std::string& text, std::vector<double> values) {
    vectors_[text] = std::move(values);
  }

  std::string id() const override { return id_; }

  cover::EmbeddingVector embed(const std::string& text) override {
    ++calls_;
    auto it = vectors_.find(text);
    if (it == vectors_.end()) throw std::runtime_error("MapProvider has no vector for: " + text);
    cover::EmbeddingVector v;
    v.values = it->second;
    return v;
  }

  int calls() const { return calls_; }

 private:
  std::string id_;
  std::map<std::string, std::vector<double>> vectors_;
  int calls_ = 0;
};

}  // namespace testutil
