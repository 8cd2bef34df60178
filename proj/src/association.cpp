#include "guiseprobe/association.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "guiseprobe/error.hpp"
#include "guiseprobe/kernels.hpp"

namespace guiseprobe {

Ranking Ranking::FromScores(const std::map<std::string, double, std::less<>>& scores) {
  std::vector<std::pair<std::string, double>> items(scores.begin(), scores.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Ranking ranking;
  for (auto& [token, score] : items) ranking.order.push_back(std::move(token));
  return ranking;
}

std::optional<std::size_t> Ranking::RankOf(std::string_view token) const {
  const auto it = std::find(order.begin(), order.end(), token);
  if (it == order.end()) return std::nullopt;
  return static_cast<std::size_t>(it - order.begin()) + 1;
}

std::vector<std::string> Ranking::Top(std::size_t n) const {
  return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, order.size()))};
}

void AssociationTable::Append(const AssociationTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  exclusions.insert(exclusions.end(), other.exclusions.begin(), other.exclusions.end());
}

std::string AssociationTable::ToCsv() const {
  std::string out = "token,prompt,backend,setting,q\n";
  for (const auto& row : rows) {
    out += fmt::format("{},{},{},{},{:.17g}\n", row.token, row.prompt, row.backend,
                       row.setting, row.q);
  }
  return out;
}

namespace {

enum class Estimator { kMatched, kUnmatched };

AssociationTable Estimate(const GuiseCorpus& corpus, const PromptTemplate& prompt,
                          const TokenSet& tokens, Backend& backend,
                          const ProbeOptions& options, Estimator estimator,
                          bool fill_residual) {
  corpus.Validate();
  tokens.Validate();
  kernels::FetchOptions fetch;
  fetch.parallelism = options.parallelism;
  fetch.fill_topk_residual = fill_residual;
  const auto treatment = kernels::FetchProbabilities(
      backend, prompt, corpus.treatment_texts, tokens.tokens, fetch);
  const auto control = kernels::FetchProbabilities(
      backend, prompt, corpus.control_texts, tokens.tokens, fetch);
  const auto estimates =
      estimator == Estimator::kMatched
          ? kernels::MatchedEstimates(treatment, control, options.parallelism)
          : kernels::UnmatchedEstimates(treatment, control, options.parallelism);

  AssociationTable table;
  table.corpus_id = corpus.id;
  const std::string setting = options.setting_label.empty()
                                  ? std::string(SettingName(corpus.setting))
                                  : options.setting_label;
  const std::string& backend_id = backend.descriptor().id;
  for (std::size_t j = 0; j < tokens.tokens.size(); ++j) {
    const auto& token = tokens.tokens[j];
    const auto& estimate = estimates[j];
    if (estimate.excluded > 0) {
      const bool whole = kernels::IsMissing(estimate.q);
      const bool unscoreable = treatment.unscoreable.contains(token) ||
                               control.unscoreable.contains(token);
      table.exclusions.push_back(
          {token, prompt.id, backend_id, setting, estimate.excluded, whole,
           unscoreable ? "not a single vocabulary unit" : "probability missing"});
      spdlog::warn("{} / {} / {}: '{}' dropped {} {}{}", backend_id, prompt.id, setting,
                   token, estimate.excluded,
                   estimator == Estimator::kMatched ? "pairs" : "texts",
                   whole ? " (token excluded)" : "");
    }
    if (!kernels::IsMissing(estimate.q)) {
      table.rows.push_back({token, prompt.id, backend_id, setting, estimate.q});
    }
  }
  if (table.rows.empty()) {
    throw Error("backend '" + backend_id + "' / prompt '" + prompt.id +
                "': every token was excluded");
  }
  return table;
}

}  // namespace

AssociationTable AssocMatched(const GuiseCorpus& corpus, const PromptTemplate& prompt,
                              const TokenSet& tokens, Backend& backend,
                              const ProbeOptions& options) {
  if (corpus.setting != Setting::kMatched) {
    throw PreconditionError("corpus '" + corpus.id + "' is not meaning-matched");
  }
  return Estimate(corpus, prompt, tokens, backend, options, Estimator::kMatched,
                  /*fill_residual=*/false);
}

AssociationTable AssocUnmatched(const GuiseCorpus& corpus,
                                const PromptTemplate& prompt,
                                const TokenSet& tokens, Backend& backend,
                                const ProbeOptions& options) {
  if (corpus.setting != Setting::kUnmatched) {
    throw PreconditionError("corpus '" + corpus.id + "' is not an unmatched corpus");
  }
  return Estimate(corpus, prompt, tokens, backend, options, Estimator::kUnmatched,
                  /*fill_residual=*/false);
}

AssociationTable AssocTopKRestricted(const GuiseCorpus& corpus,
                                     const PromptTemplate& prompt,
                                     const TokenSet& tokens, Backend& backend,
                                     const ProbeOptions& options) {
  const auto& descriptor = backend.descriptor();
  const bool limited = descriptor.capability == Capability::kTopKLimited &&
                       static_cast<std::size_t>(*descriptor.k) < tokens.tokens.size();
  return Estimate(corpus, prompt, tokens, backend, options, Estimator::kUnmatched,
                  /*fill_residual=*/limited);
}

AssociationTable Associate(const GuiseCorpus& corpus, const PromptTemplate& prompt,
                           const TokenSet& tokens, Backend& backend,
                           const ProbeOptions& options) {
  if (backend.descriptor().capability == Capability::kTopKLimited) {
    return AssocTopKRestricted(corpus, prompt, tokens, backend, options);
  }
  return corpus.setting == Setting::kMatched
             ? AssocMatched(corpus, prompt, tokens, backend, options)
             : AssocUnmatched(corpus, prompt, tokens, backend, options);
}

AggregateScores Aggregate(std::span<const AssociationRow> rows) {
  if (rows.empty()) throw PreconditionError("nothing to aggregate");
  std::map<std::string, std::pair<double, std::size_t>, std::less<>> sums;
  for (const auto& row : rows) {
    auto& [sum, count] = sums[row.token];
    sum += row.q;
    ++count;
  }
  AggregateScores out;
  for (const auto& [token, entry] : sums) {
    out.scores.emplace(token, entry.first / static_cast<double>(entry.second));
  }
  out.ranking = Ranking::FromScores(out.scores);
  return out;
}

std::map<std::string, AggregateScores> GroupAggregate(const AssociationTable& table,
                                                      unsigned keep) {
  std::map<std::string, std::vector<AssociationRow>> groups;
  for (const auto& row : table.rows) {
    std::vector<std::string_view> parts;
    if (keep & kGroupBackend) parts.push_back(row.backend);
    if (keep & kGroupPrompt) parts.push_back(row.prompt);
    if (keep & kGroupSetting) parts.push_back(row.setting);
    groups[fmt::format("{}", fmt::join(parts, "|"))].push_back(row);
  }
  std::map<std::string, AggregateScores> out;
  for (const auto& [key, rows] : groups) out.emplace(key, Aggregate(rows));
  return out;
}

}  // namespace guiseprobe
