#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "guiseprobe/backend.hpp"
#include "guiseprobe/cache.hpp"
#include "test_util.hpp"

namespace guiseprobe {
namespace {

using testing::TempDir;

// Counts calls through to a planted oracle.
class CountingBackend final : public Backend {
 public:
  explicit CountingBackend(PlantedBiasSpec spec = {}) : inner_(Descriptor(), std::move(spec)) {}

  static BackendDescriptor Descriptor() {
    BackendDescriptor d;
    d.id = "counting";
    d.version = "1";
    return d;
  }
  const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
  ContinuationScores ScoreContinuations(std::string_view prompt,
                                        std::span<const std::string> candidates) override {
    ++calls;
    return inner_.ScoreContinuations(prompt, candidates);
  }
  SequenceScore ScoreSequence(std::string_view text) override {
    ++calls;
    return inner_.ScoreSequence(text);
  }

  std::atomic<int> calls{0};

 private:
  PlantedBiasOracle inner_;
};

PlantedBiasSpec Jittered() {
  PlantedBiasSpec spec;
  spec.jitter_sd = 2.0;
  spec.jitter_seed = 77;
  return spec;
}

const std::vector<std::string> kCandidates = {"lazy", "kind", "smart"};

TEST(Sha256Hex, KnownVector) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CachedBackend, SecondCallIsHit) {
  TempDir dir;
  auto inner = std::make_shared<CountingBackend>(Jittered());
  CachedBackend cached(inner, std::make_shared<ResponseCache>(dir.path()));
  const auto first = cached.ScoreContinuations("he be", kCandidates);
  const auto second = cached.ScoreContinuations("he be", kCandidates);
  EXPECT_EQ(inner->calls, 1);
  EXPECT_EQ(cached.hits(), 1u);
  for (const auto& [token, p] : first.probabilities) {
    EXPECT_EQ(p, *second.Get(token)) << "bit-exact round trip";
  }
  // Candidate order does not matter for the key.
  const std::vector<std::string> reordered = {"smart", "lazy", "kind"};
  cached.ScoreContinuations("he be", reordered);
  EXPECT_EQ(inner->calls, 1);
  cached.ScoreContinuations("he is", kCandidates);
  EXPECT_EQ(inner->calls, 2);
}

TEST(CachedBackend, KeysDifferByPromptAndBackend) {
  auto d = CountingBackend::Descriptor();
  const auto a = ContinuationKeyMaterial(d, "p1", kCandidates);
  EXPECT_NE(a, ContinuationKeyMaterial(d, "p2", kCandidates));
  d.version = "2";
  EXPECT_NE(a, ContinuationKeyMaterial(d, "p1", kCandidates));
  d.version = "1";
  d.scoring_mode = ScoringMode::kMaskedToken;
  EXPECT_NE(a, ContinuationKeyMaterial(d, "p1", kCandidates));
}

TEST(CachedBackend, DeletedEntryIsRecomputed) {
  TempDir dir;
  auto inner = std::make_shared<CountingBackend>(Jittered());
  auto cache = std::make_shared<ResponseCache>(dir.path());
  CachedBackend cached(inner, cache);
  const auto first = cached.ScoreContinuations("x", kCandidates);
  std::filesystem::remove_all(dir.path());
  const auto again = cached.ScoreContinuations("x", kCandidates);
  EXPECT_EQ(inner->calls, 2);
  EXPECT_EQ(first.probabilities, again.probabilities);
}

TEST(CachedBackend, CorruptEntryIsMiss) {
  TempDir dir;
  auto inner = std::make_shared<CountingBackend>(Jittered());
  auto cache = std::make_shared<ResponseCache>(dir.path());
  CachedBackend cached(inner, cache);
  const auto first = cached.ScoreContinuations("x", kCandidates);
  const auto key = Sha256Hex(ContinuationKeyMaterial(inner->descriptor(), "x", kCandidates));
  std::ofstream(cache->PathFor(key), std::ios::trunc) << "{\"probs\": {\"lazy\": ";
  const auto again = cached.ScoreContinuations("x", kCandidates);
  EXPECT_EQ(inner->calls, 2);
  EXPECT_EQ(first.probabilities, again.probabilities);
  // Wrong data under the right file name is also rejected.
  const auto other_key =
      Sha256Hex(ContinuationKeyMaterial(inner->descriptor(), "y", kCandidates));
  cached.ScoreContinuations("y", kCandidates);
  std::filesystem::copy_file(cache->PathFor(other_key), cache->PathFor(key),
                             std::filesystem::copy_options::overwrite_existing);
  EXPECT_EQ(cached.ScoreContinuations("x", kCandidates).probabilities, first.probabilities);
  EXPECT_EQ(inner->calls, 4);
}

TEST(CachedBackend, SequenceScores) {
  TempDir dir;
  auto inner = std::make_shared<CountingBackend>();
  CachedBackend cached(inner, std::make_shared<ResponseCache>(dir.path()));
  const auto a = cached.ScoreSequence("a b c");
  const auto b = cached.ScoreSequence("a b c");
  EXPECT_EQ(inner->calls, 1);
  EXPECT_EQ(a.total_log_prob, b.total_log_prob);
  EXPECT_EQ(a.token_count, 3);
}

TEST(CachedBackend, ConcurrentReadersAndWriters) {
  TempDir dir;
  auto inner = std::make_shared<CountingBackend>(Jittered());
  CachedBackend cached(inner, std::make_shared<ResponseCache>(dir.path()));
  std::vector<std::thread> threads;
  std::vector<double> seen(8);
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 20; ++i) {
        const auto s = cached.ScoreContinuations("p" + std::to_string(i), kCandidates);
        if (i == 7) seen[t] = *s.Get("lazy");
      }
    });
  }
  for (auto& t : threads) t.join();
  for (double v : seen) EXPECT_EQ(v, seen[0]);
}

TEST(ResponseCache, GarbageCollection) {
  TempDir dir;
  ResponseCache cache(dir.path());
  cache.Put("aa11", "{\"key\": \"00\"}");
  cache.Put("bb22", "{\"key\": \"01\"}");
  std::ofstream(cache.PathFor("bb22"), std::ios::trunc) << "{broken";
  std::ofstream(cache.PathFor("aa11").string() + ".tmp.123") << "{";
  const auto stats = cache.CollectGarbage();
  EXPECT_EQ(stats.kept, 1u);
  EXPECT_EQ(stats.removed_corrupt, 1u);
  EXPECT_EQ(stats.removed_temp, 1u);
  EXPECT_TRUE(cache.Get("aa11").has_value());
  EXPECT_FALSE(cache.Get("bb22").has_value());
}

}  // namespace
}  // namespace guiseprobe
