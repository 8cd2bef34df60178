#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guiseprobe/backend.hpp"
#include "guiseprobe/corpus.hpp"
#include "guiseprobe/error.hpp"
#include "guiseprobe/http_backend.hpp"

namespace guiseprobe {

// Every problem found while validating a config, not just the first.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

enum class BackendType { kMock, kHttp };

struct BackendConfig {
  BackendDescriptor descriptor;
  BackendType type = BackendType::kMock;
  PlantedBiasSpec mock;
  HttpBackendOptions http;
};

// Study names accepted in `studies`, in run order.
const std::vector<std::string>& KnownStudies();

struct Overrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<int> parallelism;
  std::optional<std::uint64_t> seed;
};

// A validated config with every referenced data file loaded.
struct RunConfig {
  std::filesystem::path source;
  std::uint64_t seed = 0;
  int parallelism = 0;
  std::size_t permutations = 10000;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_dir;
  std::vector<std::string> studies;

  std::vector<BackendConfig> backends;
  std::vector<GuiseCorpus> corpora;
  std::map<Battery, std::vector<PromptTemplate>> prompts;
  TokenSet adjectives;
  TokenSet occupations;
  std::vector<HumanTopList> human_lists;
  std::optional<FavorabilityTable> favorability;
  std::optional<PrestigeTable> prestige;
  std::vector<OutcomeSpec> outcomes;
  OvertGuise overt;
  std::vector<double> size_thresholds;
  std::vector<std::string> stereotypical;
  std::string hf_without;
  std::string hf_with;

  // Semantic content: everything but output/cache paths and parallelism,
  // with data files replaced by the SHA-256 of their bytes.
  nlohmann::json canonical;

  std::string Fingerprint() const;
  const OutcomeSpec* Outcomes(Battery battery) const;
};

// Relative paths resolve against the config file's directory. Throws
// ConfigErrors listing every problem found.
RunConfig LoadRunConfig(const std::filesystem::path& path, const Overrides& overrides = {});

}  // namespace guiseprobe
