#include "guiseprobe/config.hpp"

#include <algorithm>

#include <gtest/gtest.h>

#include "guiseprobe/runner.hpp"
#include "test_util.hpp"

namespace guiseprobe {
namespace {

using testing::TempDir;

constexpr const char* kCorpus =
    "she finna help them\tshe's gonna help them\n"
    "he ain't going\the isn't going\n"
    "they be working\tthey're usually working\n";

std::string MinimalConfig(std::string_view extra = "") {
  return std::string(R"(seed = 7
permutations = 50
output_dir = "out"
studies = ["covert_stereotype"]

[[corpora]]
id = "c1"
path = "corpus.tsv"

[[backends]]
id = "m1"
parameters = 1e8
[backends.mock]
[[backends.mock.plants]]
marker = "finna"
bias = { lazy = 0.7 }
)") + std::string(extra);
}

bool HasError(const ConfigErrors& e, std::string_view needle) {
  return std::any_of(e.errors().begin(), e.errors().end(), [&](const std::string& m) {
    return m.find(needle) != std::string::npos;
  });
}

TEST(ConfigTest, MinimalConfigLoads) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  const auto path = dir.Write("run.toml", MinimalConfig());
  const RunConfig config = LoadRunConfig(path);
  EXPECT_EQ(config.seed, 7u);
  EXPECT_EQ(config.permutations, 50u);
  EXPECT_EQ(config.output_dir, dir.path() / "out");
  ASSERT_EQ(config.corpora.size(), 1u);
  EXPECT_EQ(config.corpora[0].size(), 3u);
  ASSERT_EQ(config.backends.size(), 1u);
  EXPECT_EQ(config.backends[0].mock.plants.at(0).bias.at("lazy"), 0.7);
  EXPECT_EQ(config.adjectives.tokens.size(), 37u);
  EXPECT_EQ(config.prompts.at(Battery::kCovertTrait).size(), 9u);
  EXPECT_EQ(config.Fingerprint().size(), 64u);
}

TEST(ConfigTest, MissingCorpusFileIsReported) {
  TempDir dir;
  const auto path = dir.Write("run.toml", MinimalConfig());
  try {
    LoadRunConfig(path);
    FAIL() << "expected ConfigErrors";
  } catch (const ConfigErrors& e) {
    EXPECT_TRUE(HasError(e, "corpora[0].path: file not found"));
    EXPECT_TRUE(HasError(e, "corpus.tsv"));
  }
}

TEST(ConfigTest, EveryErrorIsReportedAtOnce) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  const auto path = dir.Write("run.toml", MinimalConfig(R"(
[[backends]]
id = "m2"
capability = "top_k_limited"
type = "mock"
bogus = 1
)"));
  // Replacing the study list adds an unknown study on top of the bad backend.
  std::string text = testing::ReadFile(path);
  text.replace(text.find("[\"covert_stereotype\"]"), 21, "[\"covert_stereotype\", \"vibes\"]");
  dir.Write("run.toml", text);
  try {
    LoadRunConfig(path);
    FAIL() << "expected ConfigErrors";
  } catch (const ConfigErrors& e) {
    EXPECT_GE(e.errors().size(), 3u);
    EXPECT_TRUE(HasError(e, "unknown study 'vibes'"));
    EXPECT_TRUE(HasError(e, "unknown key 'bogus'"));
    EXPECT_TRUE(HasError(e, "backends[1]"));
  }
}

TEST(ConfigTest, SyntaxErrorHasLocation) {
  TempDir dir;
  const auto path = dir.Write("run.toml", "seed = \n");
  try {
    LoadRunConfig(path);
    FAIL() << "expected ConfigErrors";
  } catch (const ConfigErrors& e) {
    ASSERT_EQ(e.errors().size(), 1u);
    EXPECT_NE(e.errors()[0].find("run.toml:1:"), std::string::npos);
  }
}

TEST(ConfigTest, SeedIsRequired) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  std::string text = MinimalConfig();
  text.erase(0, text.find('\n') + 1);
  const auto path = dir.Write("run.toml", text);
  EXPECT_THROW(LoadRunConfig(path), ConfigErrors);
  EXPECT_EQ(LoadRunConfig(path, Overrides{.seed = 3}).seed, 3u);
}

TEST(ConfigTest, StudyRequirementsAreChecked) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  std::string text = MinimalConfig("\n[hf_comparison]\nwithout_hf = \"m1\"\nwith_hf = \"nope\"\n");
  text.replace(text.find("[\"covert_stereotype\"]"), 21, "[\"favorability\", \"hf_comparison\"]");
  const auto path = dir.Write("run.toml", text);
  try {
    LoadRunConfig(path);
    FAIL() << "expected ConfigErrors";
  } catch (const ConfigErrors& e) {
    EXPECT_TRUE(HasError(e, "'favorability' is required"));
    EXPECT_TRUE(HasError(e, "unknown backend 'nope'"));
  }
}

TEST(ConfigTest, FingerprintTracksSemanticFieldsOnly) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  const auto path = dir.Write("run.toml", MinimalConfig());
  const std::string base = LoadRunConfig(path).Fingerprint();

  EXPECT_EQ(LoadRunConfig(path, Overrides{.output_dir = dir.path() / "elsewhere",
                                          .cache_dir = dir.path() / "cache",
                                          .parallelism = 3})
                .Fingerprint(),
            base);
  EXPECT_NE(LoadRunConfig(path, Overrides{.seed = 8}).Fingerprint(), base);

  std::string text = MinimalConfig();
  text.replace(text.find("lazy = 0.7"), 10, "lazy = 0.8");
  dir.Write("run.toml", text);
  EXPECT_NE(LoadRunConfig(path).Fingerprint(), base);

  dir.Write("run.toml", MinimalConfig());
  dir.Write("corpus.tsv", std::string(kCorpus) + "we finna go\twe're gonna go\n");
  EXPECT_NE(LoadRunConfig(path).Fingerprint(), base);
}

TEST(ConfigTest, MockSpecChangesCacheIdentity) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  const auto path = dir.Write("run.toml", MinimalConfig());
  const std::string version = LoadRunConfig(path).backends[0].descriptor.version;
  std::string text = MinimalConfig();
  text.replace(text.find("lazy = 0.7"), 10, "lazy = 0.8");
  dir.Write("run.toml", text);
  EXPECT_NE(LoadRunConfig(path).backends[0].descriptor.version, version);
}

TEST(RunnerTest, WarmCacheRerunIsByteIdentical) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  std::string text = MinimalConfig();
  text.insert(0, "cache_dir = \"cache\"\n");
  const auto path = dir.Write("run.toml", text);

  const RunConfig first = LoadRunConfig(path, Overrides{.output_dir = dir.path() / "a"});
  const RunSummary cold = RunStudies(first);
  EXPECT_EQ(cold.ExitCode(), 0);
  EXPECT_GT(cold.cache_misses, 0u);

  const RunConfig second = LoadRunConfig(path, Overrides{.output_dir = dir.path() / "b"});
  const RunSummary warm = RunStudies(second);
  EXPECT_EQ(warm.cache_misses, 0u);

  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir.path() / "a");
    EXPECT_EQ(testing::ReadFile(entry.path()), testing::ReadFile(dir.path() / "b" / rel))
        << rel;
  }
  EXPECT_NE(testing::ReadFile(dir.path() / "a" / "covert_stereotype" / "manifest.json")
                .find(first.Fingerprint()),
            std::string::npos);
}

TEST(RunnerTest, FailingStudyIsAttributedAndOthersRun) {
  TempDir dir;
  dir.Write("corpus.tsv", kCorpus);
  std::string text = MinimalConfig();
  // One backend means one size class, which the scaling study rejects.
  text.replace(text.find("[\"covert_stereotype\"]"), 21, "[\"scaling\", \"covert_stereotype\"]");
  const auto path = dir.Write("run.toml", text);
  const RunSummary summary = RunStudies(LoadRunConfig(path));
  ASSERT_EQ(summary.studies.size(), 2u);
  EXPECT_EQ(summary.studies[0].study, "covert_stereotype");
  EXPECT_TRUE(summary.studies[0].ok);
  EXPECT_EQ(summary.studies[1].study, "scaling");
  EXPECT_FALSE(summary.studies[1].ok);
  EXPECT_NE(summary.studies[1].error.find("2 size classes"), std::string::npos);
  EXPECT_EQ(summary.ExitCode(), 1);
  const std::string run = testing::ReadFile(dir.path() / "out" / "run.json");
  EXPECT_NE(run.find("\"failed\""), std::string::npos);
}

TEST(ConfigTest, ShippedMockConfigIsValid) {
  const auto path = DefaultDataDir().parent_path() / "configs" / "mock_all.toml";
  const RunConfig config = LoadRunConfig(path);
  EXPECT_EQ(config.studies, KnownStudies());
  EXPECT_EQ(config.backends.size(), 4u);
}

}  // namespace
}  // namespace guiseprobe
