#pragma once

// Data-parallel hot loops. Each kernel has an OpenMP implementation in
// guiseprobe::kernels and a plain serial implementation with identical
// signature in guiseprobe::kernels::serial. Both produce bit-identical
// results for any thread count: work items write into indexed slots and
// every floating-point reduction runs in index order on one thread.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "guiseprobe/backend.hpp"
#include "guiseprobe/corpus.hpp"

namespace guiseprobe::kernels {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool IsMissing(double p) { return std::isnan(p); }

// p(token | prompt(text)) for every text x token; kMissing where the backend
// could not score the token.
struct ProbabilityGrid {
  std::size_t n_texts = 0;
  std::size_t n_tokens = 0;
  std::vector<double> values;  // row-major, text-major
  std::set<std::string> unscoreable;

  double at(std::size_t text, std::size_t token) const {
    return values[text * n_tokens + token];
  }
};

struct FetchOptions {
  int parallelism = 0;  // <= 0: OpenMP default
  // Top-k backends: give each unreturned candidate an equal share of the
  // residual mass of its request.
  bool fill_topk_residual = true;
};

// Runs fn(i) for i in [0, n) on up to `parallelism` threads. The first
// exception thrown by any item is rethrown after the loop.
void ParallelFor(std::size_t n, int parallelism,
                 const std::function<void(std::size_t)>& fn);

ProbabilityGrid FetchProbabilities(Backend& backend, const PromptTemplate& prompt,
                                   std::span<const std::string> texts,
                                   std::span<const std::string> tokens,
                                   const FetchOptions& options = {});

// Per-token estimator output; q is kMissing when no usable pair remains.
struct TokenEstimate {
  double q = kMissing;
  std::size_t used = 0;      // pairs (matched) or texts per side (unmatched)
  std::size_t excluded = 0;  // dropped because a probability was missing
};

// Mean over pairs of log(p_treatment / p_control).
std::vector<TokenEstimate> MatchedEstimates(const ProbabilityGrid& treatment,
                                            const ProbabilityGrid& control,
                                            int parallelism = 0);
// log of mean treatment probability over mean control probability.
std::vector<TokenEstimate> UnmatchedEstimates(const ProbabilityGrid& treatment,
                                              const ProbabilityGrid& control,
                                              int parallelism = 0);

// One mAP sample per permutation; see stats::PermutationNull.
std::vector<double> PermutationMapSamples(std::size_t universe_size,
                                          std::span<const std::size_t> human_indices,
                                          std::size_t n_perm, std::uint64_t seed,
                                          int parallelism = 0);

namespace serial {

ProbabilityGrid FetchProbabilities(Backend& backend, const PromptTemplate& prompt,
                                   std::span<const std::string> texts,
                                   std::span<const std::string> tokens,
                                   const FetchOptions& options = {});
std::vector<TokenEstimate> MatchedEstimates(const ProbabilityGrid& treatment,
                                            const ProbabilityGrid& control);
std::vector<TokenEstimate> UnmatchedEstimates(const ProbabilityGrid& treatment,
                                              const ProbabilityGrid& control);
std::vector<double> PermutationMapSamples(std::size_t universe_size,
                                          std::span<const std::size_t> human_indices,
                                          std::size_t n_perm, std::uint64_t seed);

}  // namespace serial
}  // namespace guiseprobe::kernels
