#include "guiseprobe/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "guiseprobe/error.hpp"
#include "guiseprobe/rng.hpp"

namespace guiseprobe {

std::string_view CapabilityName(Capability capability) {
  return capability == Capability::kFullDistribution ? "full_distribution"
                                                     : "top_k_limited";
}

Capability ParseCapability(std::string_view name) {
  if (name == "full_distribution") return Capability::kFullDistribution;
  if (name == "top_k_limited") return Capability::kTopKLimited;
  throw ConfigError("unknown capability '" + std::string(name) + "'");
}

std::string_view ScoringModeName(ScoringMode mode) {
  switch (mode) {
    case ScoringMode::kNextToken: return "next_token";
    case ScoringMode::kMaskedToken: return "masked_token";
    case ScoringMode::kSentinelDecode: return "sentinel_decode";
  }
  return "unknown";
}

ScoringMode ParseScoringMode(std::string_view name) {
  if (name == "next_token") return ScoringMode::kNextToken;
  if (name == "masked_token") return ScoringMode::kMaskedToken;
  if (name == "sentinel_decode") return ScoringMode::kSentinelDecode;
  throw ConfigError("unknown scoring mode '" + std::string(name) + "'");
}

void BackendDescriptor::Validate() const {
  if (id.empty()) throw ConfigError("backend id must be non-empty");
  if (parameter_count <= 0) {
    throw ConfigError("backend '" + id + "': parameter_count must be > 0");
  }
  const bool limited = capability == Capability::kTopKLimited;
  if (limited != k.has_value()) {
    throw ConfigError("backend '" + id + "': k must be set iff top_k_limited");
  }
  if (k && *k < 1) throw ConfigError("backend '" + id + "': k must be >= 1");
}

std::optional<double> ContinuationScores::Get(std::string_view token) const {
  const auto it = probabilities.find(token);
  if (it == probabilities.end()) return std::nullopt;
  return it->second;
}

void ContinuationScores::Validate() const {
  double sum = 0.0;
  for (const auto& [token, p] : probabilities) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw Error("probability of '" + token + "' outside (0, 1]");
    }
    sum += p;
  }
  if (sum > 1.0 + 1e-9) throw Error("candidate probabilities sum above 1");
  if (!(residual_mass >= 0.0 && residual_mass < 1.0)) {
    throw Error("residual mass outside [0, 1)");
  }
  if (exhaustive && residual_mass != 0.0) {
    throw Error("exhaustive scores must have zero residual mass");
  }
}

double SequenceScore::Perplexity() const {
  return std::exp(-total_log_prob / static_cast<double>(token_count));
}

bool ContainsWord(std::string_view text, std::string_view marker) {
  if (marker.empty()) return false;
  auto is_word = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\'';
  };
  for (std::size_t pos = text.find(marker); pos != std::string_view::npos;
       pos = text.find(marker, pos + 1)) {
    const bool left = pos == 0 || !is_word(text[pos - 1]);
    const std::size_t end = pos + marker.size();
    const bool right = end == text.size() || !is_word(text[end]);
    if (left && right) return true;
  }
  return false;
}

double HashedNormal(std::uint64_t seed, std::string_view a, std::string_view b) {
  std::uint64_t state = seed ^ Fnv1a(a) ^ (Fnv1a(b) * 0x9E3779B97F4A7C15ULL);
  const double u1 = (static_cast<double>(SplitMix64(state) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(SplitMix64(state) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PlantedBiasOracle::PlantedBiasOracle(BackendDescriptor descriptor,
                                     PlantedBiasSpec spec)
    : descriptor_(std::move(descriptor)), spec_(std::move(spec)) {
  descriptor_.Validate();
  for (const auto& [token, weight] : spec_.base_weights) {
    if (!(weight > 0.0)) {
      throw PreconditionError("base weight of '" + token + "' must be > 0");
    }
  }
  if (spec_.vocab_size < 1) throw PreconditionError("vocab_size must be >= 1");
}

ContinuationScores PlantedBiasOracle::ScoreContinuations(
    std::string_view prompt, std::span<const std::string> candidates) {
  if (candidates.empty()) throw PreconditionError("no candidates to score");
  std::vector<std::string_view> active_markers;
  for (const auto& plant : spec_.plants) {
    if (ContainsWord(prompt, plant.marker)) active_markers.push_back(plant.marker);
  }

  ContinuationScores out;
  std::vector<std::pair<std::string, double>> log_weights;
  for (const auto& token : candidates) {
    if (spec_.unscoreable.contains(token)) {
      out.unscoreable.push_back(token);
      continue;
    }
    const auto base = spec_.base_weights.find(token);
    double log_weight = std::log(base == spec_.base_weights.end() ? 1.0 : base->second);
    for (const auto& plant : spec_.plants) {
      if (std::find(active_markers.begin(), active_markers.end(), plant.marker) ==
          active_markers.end()) {
        continue;
      }
      if (const auto bias = plant.bias.find(token); bias != plant.bias.end()) {
        log_weight += bias->second;
      }
    }
    if (spec_.jitter_sd > 0.0) {
      log_weight += spec_.jitter_sd * HashedNormal(spec_.jitter_seed, prompt, token);
    }
    log_weights.emplace_back(token, log_weight);
  }
  if (log_weights.empty()) return out;

  double max_log = log_weights.front().second;
  for (const auto& [token, lw] : log_weights) max_log = std::max(max_log, lw);
  std::vector<double> weights;
  weights.reserve(log_weights.size());
  for (const auto& [token, lw] : log_weights) weights.push_back(std::exp(lw - max_log));
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  std::vector<std::size_t> order(log_weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (descriptor_.capability == Capability::kTopKLimited &&
      static_cast<std::size_t>(*descriptor_.k) < order.size()) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (weights[a] != weights[b]) return weights[a] > weights[b];
      return log_weights[a].first < log_weights[b].first;
    });
    const auto k = static_cast<std::size_t>(*descriptor_.k);
    double residual = 0.0;
    for (std::size_t i = k; i < order.size(); ++i) residual += weights[order[i]] / total;
    order.resize(k);
    out.exhaustive = false;
    out.residual_mass = residual;
  }
  for (std::size_t i : order) {
    out.probabilities.emplace(log_weights[i].first, weights[i] / total);
  }
  return out;
}

SequenceScore PlantedBiasOracle::ScoreSequence(std::string_view text) {
  if (!spec_.sequence_scoring) {
    throw CapabilityError("backend '" + descriptor_.id +
                          "' does not support sequence scoring");
  }
  std::istringstream words{std::string(text)};
  SequenceScore score;
  score.token_count = 0;
  score.pseudo = descriptor_.scoring_mode != ScoringMode::kNextToken;
  const double uniform = std::log(1.0 / spec_.vocab_size);
  for (std::string word; words >> word;) {
    const auto it = spec_.word_probs.find(word);
    score.total_log_prob += it == spec_.word_probs.end() ? uniform : std::log(it->second);
    ++score.token_count;
  }
  if (score.token_count == 0) {
    throw PreconditionError("sequence scoring needs a non-empty text");
  }
  return score;
}

BackendPtr MakePlantedBiasOracle(BackendDescriptor descriptor,
                                 PlantedBiasSpec spec) {
  return std::make_shared<PlantedBiasOracle>(std::move(descriptor), std::move(spec));
}

}  // namespace guiseprobe
