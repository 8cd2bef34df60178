#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "guiseprobe/backend.hpp"
#include "guiseprobe/corpus.hpp"
#include "guiseprobe/ranking.hpp"

namespace guiseprobe {

// One prompt-level association score q(x; v, backend) for a setting.
struct AssociationRow {
  std::string token;
  std::string prompt;
  std::string backend;
  std::string setting;
  double q = 0.0;
};

// A token whose estimate dropped pairs (or was dropped entirely) because
// the backend returned no probability for it.
struct Exclusion {
  std::string token;
  std::string prompt;
  std::string backend;
  std::string setting;
  std::size_t dropped = 0;
  bool whole_token = false;
  std::string reason;
};

struct AssociationTable {
  std::vector<AssociationRow> rows;
  std::vector<Exclusion> exclusions;
  std::string corpus_id;
  std::string timestamp;  // left empty by the library; reports stay reproducible

  void Append(const AssociationTable& other);
  // Columns token,prompt,backend,setting,q.
  std::string ToCsv() const;
};

struct ProbeOptions {
  int parallelism = 0;
  // Overrides the setting column (defaults to the corpus setting name).
  std::string setting_label;
};

// Mean over meaning-matched pairs of log p(x | v(t_a)) / p(x | v(t_s)).
AssociationTable AssocMatched(const GuiseCorpus& corpus, const PromptTemplate& prompt,
                              const TokenSet& tokens, Backend& backend,
                              const ProbeOptions& options = {});
// log of summed treatment probabilities over summed control probabilities.
AssociationTable AssocUnmatched(const GuiseCorpus& corpus,
                                const PromptTemplate& prompt,
                                const TokenSet& tokens, Backend& backend,
                                const ProbeOptions& options = {});
// For backends that only return the top k of a distribution confined to the
// token set: unreturned tokens share the residual mass uniformly and the
// unmatched (ratio of sums) form is used for either setting.
AssociationTable AssocTopKRestricted(const GuiseCorpus& corpus,
                                     const PromptTemplate& prompt,
                                     const TokenSet& tokens, Backend& backend,
                                     const ProbeOptions& options = {});
// Picks the estimator from the backend capability and corpus setting.
AssociationTable Associate(const GuiseCorpus& corpus, const PromptTemplate& prompt,
                           const TokenSet& tokens, Backend& backend,
                           const ProbeOptions& options = {});

struct AggregateScores {
  std::map<std::string, double, std::less<>> scores;
  Ranking ranking;
};

// Unweighted mean of q per token over all given rows.
AggregateScores Aggregate(std::span<const AssociationRow> rows);

enum GroupBy : unsigned {
  kGroupNone = 0,
  kGroupBackend = 1u << 0,
  kGroupPrompt = 1u << 1,
  kGroupSetting = 1u << 2,
};

// Aggregates within each group of the kept dimensions; the key joins the
// kept values with '|' in backend, prompt, setting order ("" when none kept).
std::map<std::string, AggregateScores> GroupAggregate(const AssociationTable& table,
                                                      unsigned keep);

}  // namespace guiseprobe
