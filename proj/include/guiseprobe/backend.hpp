#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guiseprobe {

enum class Capability { kFullDistribution, kTopKLimited };
enum class ScoringMode { kNextToken, kMaskedToken, kSentinelDecode };

std::string_view CapabilityName(Capability capability);
Capability ParseCapability(std::string_view name);
std::string_view ScoringModeName(ScoringMode mode);
ScoringMode ParseScoringMode(std::string_view name);

struct BackendDescriptor {
  std::string id;
  std::string family;
  std::string version;
  std::int64_t parameter_count = 1;
  Capability capability = Capability::kFullDistribution;
  std::optional<int> k;  // set iff capability is top-k limited
  ScoringMode scoring_mode = ScoringMode::kNextToken;

  void Validate() const;
};

struct ContinuationScores {
  // Probability of each scored candidate; every value is in (0, 1].
  std::map<std::string, double, std::less<>> probabilities;
  bool exhaustive = true;
  // Mass of the confined candidate set that was not returned (top-k only).
  double residual_mass = 0.0;
  // Candidates the backend cannot score as a single vocabulary unit.
  std::vector<std::string> unscoreable;

  std::optional<double> Get(std::string_view token) const;
  // Probabilities strictly positive, sums within 1 + 1e-9, residual rules.
  void Validate() const;
};

struct SequenceScore {
  double total_log_prob = 0.0;  // nats
  int token_count = 1;
  bool pseudo = false;

  double Perplexity() const;
};

// A probability oracle over one language model. Implementations must be
// safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;
  virtual ContinuationScores ScoreContinuations(
      std::string_view prompt, std::span<const std::string> candidates) = 0;
  virtual SequenceScore ScoreSequence(std::string_view text) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

// Deterministic mock: p(x | prompt) is proportional to
//   base(x) * exp(sum of bias_m(x) over markers m present in the prompt
//                 + jitter_sd * z(prompt, x))
// and normalized over the requested candidates. z is a standard normal
// derived from a hash of (jitter_seed, prompt, x). Markers match whole
// words only.
struct MarkerBias {
  std::string marker;
  std::map<std::string, double, std::less<>> bias;
};

struct PlantedBiasSpec {
  std::vector<MarkerBias> plants;
  std::map<std::string, double, std::less<>> base_weights;  // missing -> 1
  double jitter_sd = 0.0;
  std::uint64_t jitter_seed = 0;
  // Sequence scoring: each whitespace token has probability word_probs[w],
  // or 1 / vocab_size when absent.
  int vocab_size = 100;
  std::map<std::string, double, std::less<>> word_probs;
  std::set<std::string, std::less<>> unscoreable;
  bool sequence_scoring = true;
};

class PlantedBiasOracle final : public Backend {
 public:
  PlantedBiasOracle(BackendDescriptor descriptor, PlantedBiasSpec spec);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  ContinuationScores ScoreContinuations(
      std::string_view prompt, std::span<const std::string> candidates) override;
  SequenceScore ScoreSequence(std::string_view text) override;

  const PlantedBiasSpec& spec() const { return spec_; }

 private:
  BackendDescriptor descriptor_;
  PlantedBiasSpec spec_;
};

BackendPtr MakePlantedBiasOracle(BackendDescriptor descriptor,
                                 PlantedBiasSpec spec);

// True when `marker` occurs in `text` delimited by non-alphanumeric
// characters or the string ends.
bool ContainsWord(std::string_view text, std::string_view marker);

// Standard normal variate that is a pure function of its arguments.
double HashedNormal(std::uint64_t seed, std::string_view a, std::string_view b);

}  // namespace guiseprobe
