#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "guiseprobe/corpus.hpp"

namespace guiseprobe::synth {

enum class Feature {
  kInForIng,           // chattin / chatting
  kAint,               // she ain't walking / she isn't walking
  kFinna,              // she finna help / she's gonna help
  kHabitualBe,         // she be drinking / she's usually drinking
  kBeenPerfect,        // she been pulling / she's been pulling
  kStay,               // she stay writing / she's usually writing
  kCopulaAbsence,      // she parking / she's parking
  kInflectionAbsence,  // she sing / she sings
  kHeAmControl,        // he am going / he is going (not an AAE feature)
  kFixinToVariant,     // she fixin to help / she's gonna help
};

std::string_view FeatureName(Feature feature);
Feature ParseFeature(std::string_view name);
std::vector<Feature> AllFeatures();

enum class VerbForm { kBase, kIng };

// Form the lexicon entries must have for this feature.
VerbForm LexiconForm(Feature feature);

struct FeatureSpec {
  Feature id = Feature::kFinna;
  std::string lexicon_ref;
  std::vector<std::string> pronouns;

  void Validate() const;
};

// Pronouns {he, she, they}; {he, she} for inflection absence, {he} for the
// "am" control and none for -in spellings, which are bare verb forms.
FeatureSpec DefaultSpec(Feature feature, std::string lexicon_ref = {});

struct SynthPair {
  std::string treatment;
  std::string control;
  std::vector<std::string> feature_ids;
  int density = 1;
};

// Present-tense third person singular: sing -> sings, watch -> watches,
// try -> tries, have -> has.
std::string ThirdPersonSingular(std::string_view verb);
// go -> going, make -> making, run -> running, lie -> lying.
std::string IngForm(std::string_view verb);

// The word sequence that marks the feature in the treatment text; it never
// occurs as whole words in the control text.
std::string TreatmentMarker(Feature feature, std::string_view pronoun, std::string_view verb);

// Every verb x pronoun combination (verbs outer), |lexicon| * |pronouns|
// pairs, or |lexicon| for the bare -in feature. Throws PreconditionError on
// an entry of the wrong verb form.
std::vector<SynthPair> GenerateFeaturePairs(const FeatureSpec& spec,
                                            std::span<const std::string> lexicon);

struct NoiseResult {
  SynthPair pair;  // treatment = perturbed text, control = input
  std::size_t words = 0;
  std::size_t modified = 0;
};

// Each whitespace-delimited word is modified with probability `word_rate`;
// a modification is word- or character-level with equal chance and then an
// insertion, deletion or substitution with equal chance. Words come from
// `lexicon`, characters from [A-Za-z]. Word insertions go before the
// current word.
NoiseResult InjectNoise(std::string_view control_text, double word_rate, std::uint64_t seed,
                        std::span<const std::string> lexicon);

struct AnnotatedSentence {
  std::string treatment;
  std::string control;
  int feature_count = 0;
};

// "<treatment>\t<control>\t<feature count>" per line.
std::vector<AnnotatedSentence> LoadAnnotatedSentences(const std::filesystem::path& path);

struct DensityOptions {
  int low = 1;
  int high = 3;
  std::size_t min_words = 10;
  std::size_t max_words = 15;
  std::size_t size = 100;
  std::uint64_t seed = 0;
};

struct DensityCorpora {
  GuiseCorpus low;
  GuiseCorpus high;
};

enum class Bucket { kNone, kLow, kHigh };

// Low: exactly `low` features; high: at least `high`. Word counts are taken
// on the treatment text.
Bucket DensityBucket(const AnnotatedSentence& sentence, const DensityOptions& options);

// Seeded sample of `size` sentences per bucket, kept in input order.
DensityCorpora ComposeDensity(std::span<const AnnotatedSentence> sentences,
                              const DensityOptions& options);

std::size_t WordCount(std::string_view text);

GuiseCorpus ToCorpus(std::span<const SynthPair> pairs, std::string id);
// Corpus TSV at `path` plus `<path>.json` with feature ids and density per row.
void WriteSynthCorpus(std::span<const SynthPair> pairs, const std::filesystem::path& path);

}  // namespace guiseprobe::synth
