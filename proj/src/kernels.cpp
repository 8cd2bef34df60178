#include "guiseprobe/kernels.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "guiseprobe/error.hpp"
#include "guiseprobe/rng.hpp"
#include "guiseprobe/stats.hpp"

namespace guiseprobe::kernels {
namespace {

int ThreadCount(int parallelism) {
#ifdef _OPENMP
  return parallelism > 0 ? parallelism : omp_get_max_threads();
#else
  (void)parallelism;
  return 1;
#endif
}

// Scores one text: candidates sharing a rendered prompt go out in one
// request (the a/an rule splits employability candidates into two groups).
void ScoreRow(Backend& backend, const PromptTemplate& prompt, std::string_view text,
              std::span<const std::string> tokens, const FetchOptions& options,
              std::span<double> row, std::set<std::string>& unscoreable) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    groups[RenderPrompt(prompt, text, tokens[j])].push_back(j);
  }
  for (const auto& [rendered, members] : groups) {
    std::vector<std::string> candidates;
    candidates.reserve(members.size());
    for (std::size_t j : members) candidates.push_back(tokens[j]);
    const ContinuationScores scores = backend.ScoreContinuations(rendered, candidates);
    unscoreable.insert(scores.unscoreable.begin(), scores.unscoreable.end());

    std::size_t unreturned = 0;
    for (std::size_t j : members) {
      const auto p = scores.Get(tokens[j]);
      const bool dropped = std::find(scores.unscoreable.begin(), scores.unscoreable.end(),
                                     tokens[j]) != scores.unscoreable.end();
      if (p) {
        row[j] = *p;
      } else {
        row[j] = kMissing;
        if (!dropped) ++unreturned;
      }
    }
    if (options.fill_topk_residual && !scores.exhaustive && unreturned > 0 &&
        scores.residual_mass > 0.0) {
      const double share = scores.residual_mass / static_cast<double>(unreturned);
      for (std::size_t j : members) {
        const bool dropped = std::find(scores.unscoreable.begin(),
                                       scores.unscoreable.end(),
                                       tokens[j]) != scores.unscoreable.end();
        if (IsMissing(row[j]) && !dropped) row[j] = share;
      }
    }
  }
}

TokenEstimate MatchedToken(const ProbabilityGrid& treatment,
                           const ProbabilityGrid& control, std::size_t token) {
  TokenEstimate out;
  double sum = 0.0;
  for (std::size_t i = 0; i < treatment.n_texts; ++i) {
    const double pa = treatment.at(i, token);
    const double ps = control.at(i, token);
    if (IsMissing(pa) || IsMissing(ps)) {
      ++out.excluded;
      continue;
    }
    sum += std::log(pa / ps);
    ++out.used;
  }
  if (out.used > 0) out.q = sum / static_cast<double>(out.used);
  return out;
}

TokenEstimate UnmatchedToken(const ProbabilityGrid& treatment,
                             const ProbabilityGrid& control, std::size_t token) {
  TokenEstimate out;
  auto side_sum = [&](const ProbabilityGrid& grid, std::size_t& used) {
    double sum = 0.0;
    used = 0;
    for (std::size_t i = 0; i < grid.n_texts; ++i) {
      const double p = grid.at(i, token);
      if (IsMissing(p)) {
        ++out.excluded;
        continue;
      }
      sum += p;
      ++used;
    }
    return sum;
  };
  std::size_t used_a = 0;
  std::size_t used_s = 0;
  const double sum_a = side_sum(treatment, used_a);
  const double sum_s = side_sum(control, used_s);
  out.used = std::min(used_a, used_s);
  if (used_a == 0 || used_s == 0) return out;
  // Ratio of mean probabilities; equal counts reduce it to the ratio of sums.
  out.q = used_a == used_s
              ? std::log(sum_a / sum_s)
              : std::log((sum_a / static_cast<double>(used_a)) /
                         (sum_s / static_cast<double>(used_s)));
  return out;
}

double PermutationSample(std::size_t universe_size,
                         std::span<const std::size_t> human_indices,
                         std::uint64_t seed, std::size_t index,
                         std::vector<std::size_t>& order,
                         std::vector<std::size_t>& rank_of) {
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::SubstreamSeed(seed, index));
  rng.Shuffle(std::span<std::size_t>(order));
  for (std::size_t r = 0; r < universe_size; ++r) rank_of[order[r]] = r + 1;
  std::vector<std::size_t> ranks;
  ranks.reserve(human_indices.size());
  for (std::size_t h : human_indices) ranks.push_back(rank_of[h]);
  return stats::MeanAveragePrecisionFromRanks(ranks);
}

void CheckGridShapes(const ProbabilityGrid& treatment, const ProbabilityGrid& control,
                     bool same_texts) {
  if (treatment.n_tokens != control.n_tokens ||
      (same_texts && treatment.n_texts != control.n_texts)) {
    throw PreconditionError("probability grids have different shapes");
  }
}

}  // namespace

void ParallelFor(std::size_t n, int parallelism,
                 const std::function<void(std::size_t)>& fn) {
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(ThreadCount(parallelism))
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

ProbabilityGrid FetchProbabilities(Backend& backend, const PromptTemplate& prompt,
                                   std::span<const std::string> texts,
                                   std::span<const std::string> tokens,
                                   const FetchOptions& options) {
  ProbabilityGrid grid;
  grid.n_texts = texts.size();
  grid.n_tokens = tokens.size();
  grid.values.assign(grid.n_texts * grid.n_tokens, kMissing);
  std::vector<std::set<std::string>> dropped(texts.size());
  ParallelFor(texts.size(), options.parallelism, [&](std::size_t i) {
    ScoreRow(backend, prompt, texts[i], tokens, options,
             std::span<double>(grid.values).subspan(i * grid.n_tokens, grid.n_tokens),
             dropped[i]);
  });
  for (const auto& set : dropped) grid.unscoreable.insert(set.begin(), set.end());
  return grid;
}

std::vector<TokenEstimate> MatchedEstimates(const ProbabilityGrid& treatment,
                                            const ProbabilityGrid& control,
                                            int parallelism) {
  CheckGridShapes(treatment, control, /*same_texts=*/true);
  std::vector<TokenEstimate> out(treatment.n_tokens);
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) num_threads(ThreadCount(parallelism))
  for (std::int64_t j = 0; j < n; ++j) {
    out[j] = MatchedToken(treatment, control, static_cast<std::size_t>(j));
  }
  return out;
}

std::vector<TokenEstimate> UnmatchedEstimates(const ProbabilityGrid& treatment,
                                              const ProbabilityGrid& control,
                                              int parallelism) {
  CheckGridShapes(treatment, control, /*same_texts=*/false);
  std::vector<TokenEstimate> out(treatment.n_tokens);
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) num_threads(ThreadCount(parallelism))
  for (std::int64_t j = 0; j < n; ++j) {
    out[j] = UnmatchedToken(treatment, control, static_cast<std::size_t>(j));
  }
  return out;
}

std::vector<double> PermutationMapSamples(std::size_t universe_size,
                                          std::span<const std::size_t> human_indices,
                                          std::size_t n_perm, std::uint64_t seed,
                                          int parallelism) {
  std::vector<double> samples(n_perm);
  const auto n = static_cast<std::int64_t>(n_perm);
#pragma omp parallel num_threads(ThreadCount(parallelism))
  {
    std::vector<std::size_t> order(universe_size);
    std::vector<std::size_t> rank_of(universe_size);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      samples[i] = PermutationSample(universe_size, human_indices, seed,
                                     static_cast<std::size_t>(i), order, rank_of);
    }
  }
  return samples;
}

namespace serial {

ProbabilityGrid FetchProbabilities(Backend& backend, const PromptTemplate& prompt,
                                   std::span<const std::string> texts,
                                   std::span<const std::string> tokens,
                                   const FetchOptions& options) {
  ProbabilityGrid grid;
  grid.n_texts = texts.size();
  grid.n_tokens = tokens.size();
  grid.values.assign(grid.n_texts * grid.n_tokens, kMissing);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ScoreRow(backend, prompt, texts[i], tokens, options,
             std::span<double>(grid.values).subspan(i * grid.n_tokens, grid.n_tokens),
             grid.unscoreable);
  }
  return grid;
}

std::vector<TokenEstimate> MatchedEstimates(const ProbabilityGrid& treatment,
                                            const ProbabilityGrid& control) {
  CheckGridShapes(treatment, control, /*same_texts=*/true);
  std::vector<TokenEstimate> out;
  for (std::size_t j = 0; j < treatment.n_tokens; ++j) {
    out.push_back(MatchedToken(treatment, control, j));
  }
  return out;
}

std::vector<TokenEstimate> UnmatchedEstimates(const ProbabilityGrid& treatment,
                                              const ProbabilityGrid& control) {
  CheckGridShapes(treatment, control, /*same_texts=*/false);
  std::vector<TokenEstimate> out;
  for (std::size_t j = 0; j < treatment.n_tokens; ++j) {
    out.push_back(UnmatchedToken(treatment, control, j));
  }
  return out;
}

std::vector<double> PermutationMapSamples(std::size_t universe_size,
                                          std::span<const std::size_t> human_indices,
                                          std::size_t n_perm, std::uint64_t seed) {
  std::vector<double> samples;
  samples.reserve(n_perm);
  std::vector<std::size_t> order(universe_size);
  std::vector<std::size_t> rank_of(universe_size);
  for (std::size_t i = 0; i < n_perm; ++i) {
    samples.push_back(
        PermutationSample(universe_size, human_indices, seed, i, order, rank_of));
  }
  return samples;
}

}  // namespace serial
}  // namespace guiseprobe::kernels
