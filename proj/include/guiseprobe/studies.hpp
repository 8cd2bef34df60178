#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guiseprobe/association.hpp"
#include "guiseprobe/backend.hpp"
#include "guiseprobe/corpus.hpp"
#include "guiseprobe/report.hpp"

namespace guiseprobe {

struct StudyOptions {
  int parallelism = 0;
  std::uint64_t seed = 0;
  std::size_t permutations = 10000;
};

// Family used to pool model versions; the backend id when unset.
std::string FamilyOf(const Backend& backend);

// Every backend x corpus x prompt slice, concatenated in that order.
AssociationTable ProbeAssociations(std::span<const GuiseCorpus> corpora,
                                   std::span<const BackendPtr> backends,
                                   std::span<const PromptTemplate> prompts,
                                   const TokenSet& tokens, int parallelism,
                                   const std::string& setting_label = {});

// ---- Stereotypes ------------------------------------------------------------

// Katz & Braly (1933) top five for African Americans.
std::vector<std::string> DefaultStereotypicalSet();

// Mean q over `stereotypical` minus mean q over every other scored token.
double StereotypeStrength(const std::map<std::string, double, std::less<>>& q,
                          std::span<const std::string> stereotypical);

struct FavorabilityResult {
  double weighted = 0.0;
  double unweighted = 0.0;
  // True when a weight was negative or the weights summed to <= 0 and the
  // unweighted mean is reported as the weighted value too.
  bool fell_back = false;
};

// F = sum f(x) q(x) / sum q(x) over the given tokens.
FavorabilityResult WeightedFavorability(std::span<const std::string> tokens,
                                        const std::map<std::string, double, std::less<>>& q,
                                        const FavorabilityTable& favorability);

struct StereotypeInputs {
  std::vector<GuiseCorpus> corpora;
  std::vector<BackendPtr> backends;
  std::vector<PromptTemplate> prompts;
  TokenSet adjectives;
  std::vector<HumanTopList> human_lists;
  std::optional<FavorabilityTable> favorability;
};

// Rankings, top-5 lists, agreement with each human list (mAP per prompt and
// per prompt x setting), one-sided pooled t-tests of the per-prompt agreement
// against the permutation null, Holm-corrected, and weighted favorability.
StudyReport RunCovertStereotypes(const StereotypeInputs& inputs,
                                 const StudyOptions& options);

// Treatment texts {Term, term}, control {Term', term'} as a two-pair matched
// corpus, so the matched estimate averages the two casings.
GuiseCorpus OvertCorpus(const OvertGuise& guise);

struct OvertInputs {
  OvertGuise guise;
  std::vector<BackendPtr> backends;
  std::vector<PromptTemplate> prompts;  // {r} slot
  TokenSet adjectives;
  std::vector<HumanTopList> human_lists;
  std::optional<FavorabilityTable> favorability;
};

StudyReport RunOvertStereotypes(const OvertInputs& inputs, const StudyOptions& options);

// Weighted and unweighted favorability of covert and overt top-5 lists per
// family, next to the unweighted favorability of each human list.
StudyReport RunFavorability(const StereotypeInputs& covert, const OvertInputs& overt,
                            const StudyOptions& options);

// ---- Employability ----------------------------------------------------------

struct EmployabilityInputs {
  std::vector<GuiseCorpus> corpora;
  std::vector<BackendPtr> backends;
  std::vector<PromptTemplate> prompts;
  TokenSet occupations;
  std::optional<PrestigeTable> prestige;
};

StudyReport RunEmployability(const EmployabilityInputs& inputs, const StudyOptions& options);

// ---- Decisions ----------------------------------------------------------------

enum class Guise { kTreatment, kControl };
std::string_view GuiseName(Guise guise);

struct DecisionRecord {
  std::string corpus;
  std::size_t text_index = 0;
  Guise guise = Guise::kTreatment;
  std::string prompt;
  std::string backend;
  std::string outcome;
  std::map<std::string, double, std::less<>> calibrated_scores;
  bool tie = false;
};

struct Decision {
  std::string outcome;
  std::map<std::string, double, std::less<>> calibrated_scores;
  bool tie = false;
};

// p(x | v(t)) / p(x | v(empty)) per outcome; argmax wins, ties go to the
// non-detrimental outcome.
Decision CalibratedDecision(const std::map<std::string, double, std::less<>>& with_text,
                            const std::map<std::string, double, std::less<>>& neutral,
                            const OutcomeSpec& outcomes);

struct DecisionInputs {
  std::vector<GuiseCorpus> corpora;
  std::vector<BackendPtr> backends;
  std::vector<PromptTemplate> prompts;
  OutcomeSpec outcomes;
};

StudyReport RunDecisions(const DecisionInputs& inputs, const StudyOptions& options,
                         std::vector<DecisionRecord>* records = nullptr);

// ---- Scaling ------------------------------------------------------------------

inline const std::vector<double> kDefaultSizeThresholds = {1.5e8, 3.5e8, 1.0e10};

// Class index: the first threshold t with parameters <= t, else the count.
std::size_t SizeClassIndex(std::int64_t parameters, std::span<const double> thresholds);
std::string SizeClassName(std::size_t index, std::size_t n_thresholds);

struct ScalingInputs {
  std::vector<GuiseCorpus> corpora;
  std::vector<BackendPtr> backends;
  std::vector<PromptTemplate> covert_prompts;
  OvertGuise guise;
  std::vector<PromptTemplate> overt_prompts;
  TokenSet adjectives;
  std::vector<std::string> stereotypical = DefaultStereotypicalSet();
  std::vector<double> thresholds = kDefaultSizeThresholds;
};

StudyReport RunScaling(const ScalingInputs& inputs, const StudyOptions& options);

// ---- Human feedback -------------------------------------------------------------

struct HfInputs {
  BackendPtr without_hf;
  BackendPtr with_hf;
  std::vector<GuiseCorpus> corpora;
  std::vector<PromptTemplate> covert_prompts;
  OvertGuise guise;
  std::vector<PromptTemplate> overt_prompts;
  TokenSet adjectives;
  std::optional<FavorabilityTable> favorability;
  std::vector<std::string> stereotypical = DefaultStereotypicalSet();
};

StudyReport RunHfComparison(const HfInputs& inputs, const StudyOptions& options);

}  // namespace guiseprobe
