#include "guiseprobe/synth.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "guiseprobe/error.hpp"
#include "guiseprobe/rng.hpp"

namespace guiseprobe::synth {

namespace {

constexpr std::pair<Feature, std::string_view> kNames[] = {
    {Feature::kInForIng, "in_for_ing"},
    {Feature::kAint, "aint"},
    {Feature::kFinna, "finna"},
    {Feature::kHabitualBe, "habitual_be"},
    {Feature::kBeenPerfect, "been_perfect"},
    {Feature::kStay, "stay"},
    {Feature::kCopulaAbsence, "copula_absence"},
    {Feature::kInflectionAbsence, "inflection_absence"},
    {Feature::kHeAmControl, "he_am_control"},
    {Feature::kFixinToVariant, "fixin_to_variant"},
};

constexpr std::string_view kLetters =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

bool IsVowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

// "she's", "they're"
std::string Is(std::string_view pronoun) {
  return std::string(pronoun) + (pronoun == "they" ? "'re" : "'s");
}

std::string IsFull(std::string_view pronoun) {
  return std::string(pronoun) + (pronoun == "they" ? " are" : " is");
}

std::string IsNot(std::string_view pronoun) {
  return std::string(pronoun) + (pronoun == "they" ? " aren't" : " isn't");
}

std::string Has(std::string_view pronoun) {
  return std::string(pronoun) + (pronoun == "they" ? "'ve" : "'s");
}

bool IsSingleWord(std::string_view word) {
  return !word.empty() &&
         std::none_of(word.begin(), word.end(),
                      [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

// Byte offsets at which a UTF-8 code point starts, plus the end offset.
std::vector<std::size_t> CharBoundaries(std::string_view word) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if ((static_cast<unsigned char>(word[i]) & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(word.size());
  return out;
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
    fields.push_back(line.substr(start, pos - start));
  }
  fields.push_back(line.substr(start));
  return fields;
}

}  // namespace

std::string_view FeatureName(Feature feature) {
  for (const auto& [f, name] : kNames) {
    if (f == feature) return name;
  }
  return "unknown";
}

Feature ParseFeature(std::string_view name) {
  for (const auto& [f, n] : kNames) {
    if (n == name) return f;
  }
  throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::vector<Feature> AllFeatures() {
  std::vector<Feature> out;
  for (const auto& [f, name] : kNames) out.push_back(f);
  return out;
}

VerbForm LexiconForm(Feature feature) {
  switch (feature) {
    case Feature::kFinna:
    case Feature::kInflectionAbsence:
    case Feature::kHeAmControl:
    case Feature::kFixinToVariant:
      return VerbForm::kBase;
    default:
      return VerbForm::kIng;
  }
}

void FeatureSpec::Validate() const {
  const std::string name(FeatureName(id));
  if (id == Feature::kInForIng) {
    if (!pronouns.empty()) throw PreconditionError("in_for_ing pairs take no pronoun");
    return;
  }
  if (pronouns.empty()) throw PreconditionError(name + ": empty pronoun set");
  for (const auto& p : pronouns) {
    if (p != "he" && p != "she" && p != "they") {
      throw PreconditionError(name + ": pronoun '" + p + "' is not one of he, she, they");
    }
    if (id == Feature::kInflectionAbsence && p == "they") {
      throw PreconditionError("inflection_absence is third person singular only");
    }
  }
}

FeatureSpec DefaultSpec(Feature feature, std::string lexicon_ref) {
  FeatureSpec spec;
  spec.id = feature;
  spec.lexicon_ref = std::move(lexicon_ref);
  switch (feature) {
    case Feature::kInForIng: break;
    case Feature::kInflectionAbsence: spec.pronouns = {"he", "she"}; break;
    case Feature::kHeAmControl: spec.pronouns = {"he"}; break;
    default: spec.pronouns = {"he", "she", "they"};
  }
  return spec;
}

std::string ThirdPersonSingular(std::string_view verb) {
  std::string v(verb);
  if (v == "have") return "has";
  if (v == "be") return "is";
  if (v.ends_with("s") || v.ends_with("x") || v.ends_with("z") || v.ends_with("ch") ||
      v.ends_with("sh") || v.ends_with("o")) {
    return v + "es";
  }
  if (v.size() > 1 && v.back() == 'y' && !IsVowel(v[v.size() - 2])) {
    return v.substr(0, v.size() - 1) + "ies";
  }
  return v + "s";
}

std::string IngForm(std::string_view verb) {
  std::string v(verb);
  if (v == "be") return "being";
  if (v.ends_with("ie")) return v.substr(0, v.size() - 2) + "ying";
  if (v.ends_with("ee") || v.ends_with("oe") || v.ends_with("ye")) return v + "ing";
  if (v.size() > 2 && v.back() == 'e') return v.substr(0, v.size() - 1) + "ing";
  // Single-syllable consonant-vowel-consonant: run -> running.
  const auto vowel_groups = [&] {
    int groups = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (IsVowel(v[i]) && (i == 0 || !IsVowel(v[i - 1]))) ++groups;
    }
    return groups;
  }();
  const std::size_t n = v.size();
  if (n >= 3 && vowel_groups == 1 && !IsVowel(v[n - 1]) &&
      std::string_view("wxy").find(v[n - 1]) == std::string_view::npos && IsVowel(v[n - 2]) &&
      !IsVowel(v[n - 3])) {
    return v + v.back() + "ing";
  }
  return v + "ing";
}

std::string TreatmentMarker(Feature feature, std::string_view pronoun, std::string_view verb) {
  const std::string p(pronoun);
  const std::string v(verb);
  switch (feature) {
    case Feature::kInForIng: return v.substr(0, v.size() - 1);
    case Feature::kAint: return "ain't";
    case Feature::kFinna: return "finna";
    case Feature::kHabitualBe: return p + " be";
    case Feature::kBeenPerfect: return p + " been";
    case Feature::kStay: return p + " stay";
    case Feature::kCopulaAbsence: return p + " " + v;
    case Feature::kInflectionAbsence: return p + " " + v;
    case Feature::kHeAmControl: return "am";
    case Feature::kFixinToVariant: return "fixin to";
  }
  return {};
}

namespace {

SynthPair Render(Feature feature, const std::string& p, const std::string& v) {
  SynthPair pair;
  switch (feature) {
    case Feature::kInForIng:
      pair = {v.substr(0, v.size() - 1), v, {}, 1};
      break;
    case Feature::kAint:
      pair = {p + " ain't " + v, IsNot(p) + " " + v, {}, 1};
      break;
    case Feature::kFinna:
      pair = {p + " finna " + v, Is(p) + " gonna " + v, {}, 1};
      break;
    case Feature::kHabitualBe:
      pair = {p + " be " + v, Is(p) + " usually " + v, {}, 1};
      break;
    case Feature::kBeenPerfect:
      pair = {p + " been " + v, Has(p) + " been " + v, {}, 1};
      break;
    case Feature::kStay:
      pair = {p + " stay " + v, Is(p) + " usually " + v, {}, 1};
      break;
    case Feature::kCopulaAbsence:
      pair = {p + " " + v, Is(p) + " " + v, {}, 1};
      break;
    case Feature::kInflectionAbsence:
      pair = {p + " " + v, p + " " + ThirdPersonSingular(v), {}, 1};
      break;
    case Feature::kHeAmControl:
      pair = {p + " am " + IngForm(v), IsFull(p) + " " + IngForm(v), {}, 1};
      break;
    case Feature::kFixinToVariant:
      pair = {p + " fixin to " + v, Is(p) + " gonna " + v, {}, 1};
      break;
  }
  pair.feature_ids = {std::string(FeatureName(feature))};
  return pair;
}

}  // namespace

std::vector<SynthPair> GenerateFeaturePairs(const FeatureSpec& spec,
                                            std::span<const std::string> lexicon) {
  spec.Validate();
  const std::string name(FeatureName(spec.id));
  if (lexicon.empty()) throw PreconditionError(name + ": empty verb lexicon");
  for (const auto& verb : lexicon) {
    if (!IsSingleWord(verb)) {
      throw PreconditionError(name + ": lexicon entry '" + verb + "' is not a single word");
    }
    if (LexiconForm(spec.id) == VerbForm::kIng && !(verb.size() >= 5 && verb.ends_with("ing"))) {
      throw PreconditionError(name + " needs -ing verb forms; got '" + verb + "'");
    }
  }
  std::vector<SynthPair> pairs;
  for (const auto& verb : lexicon) {
    if (spec.id == Feature::kInForIng) {
      pairs.push_back(Render(spec.id, {}, verb));
      continue;
    }
    for (const auto& pronoun : spec.pronouns) pairs.push_back(Render(spec.id, pronoun, verb));
  }
  return pairs;
}

NoiseResult InjectNoise(std::string_view control_text, double word_rate, std::uint64_t seed,
                        std::span<const std::string> lexicon) {
  if (!(word_rate >= 0.0 && word_rate <= 1.0)) {
    throw PreconditionError("noise rate must be in [0, 1]");
  }
  const auto words = SplitWords(control_text);
  if (words.empty()) throw PreconditionError("cannot perturb an empty text");

  Rng rng(seed);
  NoiseResult result;
  result.words = words.size();
  std::vector<std::string> out;
  auto lexicon_word = [&]() -> const std::string& {
    if (lexicon.empty()) throw PreconditionError("word-level noise needs a non-empty lexicon");
    return lexicon[rng.UniformIndex(lexicon.size())];
  };
  auto letter = [&] { return kLetters[rng.UniformIndex(kLetters.size())]; };

  for (const auto& word : words) {
    if (!(rng.Uniform() < word_rate)) {
      out.push_back(word);
      continue;
    }
    ++result.modified;
    const bool word_level = rng.UniformIndex(2) == 0;
    const auto op = rng.UniformIndex(3);  // insert, delete, substitute
    if (word_level) {
      if (op == 0) {
        out.push_back(lexicon_word());
        out.push_back(word);
      } else if (op == 2) {
        out.push_back(lexicon_word());
      }
      continue;
    }
    const auto bounds = CharBoundaries(word);
    const std::size_t n_chars = bounds.size() - 1;
    std::string w = word;
    if (op == 0) {
      const std::size_t at = bounds[rng.UniformIndex(n_chars + 1)];
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(at), letter());
    } else {
      const std::size_t i = rng.UniformIndex(n_chars);
      const std::size_t at = bounds[i];
      const std::size_t len = bounds[i + 1] - at;
      if (op == 1) {
        w.erase(at, len);
      } else {
        char c;
        do {
          c = letter();
        } while (len == 1 && c == w[at]);
        w.replace(at, len, 1, c);
      }
    }
    if (!w.empty()) out.push_back(std::move(w));
  }
  result.pair.treatment = fmt::format("{}", fmt::join(out, " "));
  result.pair.control = std::string(control_text);
  result.pair.feature_ids = {"noise"};
  result.pair.density = static_cast<int>(result.modified);
  return result;
}

std::vector<AnnotatedSentence> LoadAnnotatedSentences(const std::filesystem::path& path) {
  std::vector<AnnotatedSentence> out;
  const auto lines = ReadLines(path);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto fields = SplitTabs(lines[row]);
    auto fail = [&](const std::string& what) {
      return LoadError(fmt::format("{}: row {}: {}", path.string(), row + 1, what));
    };
    if (fields.size() != 3) throw fail("expected 3 tab-separated fields");
    AnnotatedSentence sentence{fields[0], fields[1], 0};
    const auto& count = fields[2];
    const auto [end, ec] =
        std::from_chars(count.data(), count.data() + count.size(), sentence.feature_count);
    if (ec != std::errc() || end != count.data() + count.size() || sentence.feature_count < 0) {
      throw fail("bad feature count '" + count + "'");
    }
    out.push_back(std::move(sentence));
  }
  return out;
}

std::size_t WordCount(std::string_view text) { return SplitWords(text).size(); }

Bucket DensityBucket(const AnnotatedSentence& sentence, const DensityOptions& options) {
  const std::size_t words = WordCount(sentence.treatment);
  if (words < options.min_words || words > options.max_words) return Bucket::kNone;
  if (sentence.feature_count == options.low) return Bucket::kLow;
  if (sentence.feature_count >= options.high) return Bucket::kHigh;
  return Bucket::kNone;
}

DensityCorpora ComposeDensity(std::span<const AnnotatedSentence> sentences,
                              const DensityOptions& options) {
  if (options.low < 1 || options.high <= options.low) {
    throw PreconditionError("density buckets need 1 <= low < high");
  }
  if (options.min_words > options.max_words) {
    throw PreconditionError("word-length bounds are inverted");
  }
  std::vector<std::size_t> low, high;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    switch (DensityBucket(sentences[i], options)) {
      case Bucket::kLow: low.push_back(i); break;
      case Bucket::kHigh: high.push_back(i); break;
      case Bucket::kNone: break;
    }
  }
  auto build = [&](std::vector<std::size_t>& pool, std::uint64_t stream, const char* name) {
    if (pool.size() < options.size) {
      throw PreconditionError(fmt::format(
          "insufficient annotated sentences: {} bucket has {} of {} needed", name, pool.size(),
          options.size));
    }
    Rng rng(Rng::SubstreamSeed(options.seed, stream));
    rng.Shuffle(std::span(pool));
    pool.resize(options.size);
    std::sort(pool.begin(), pool.end());
    GuiseCorpus corpus;
    corpus.id = std::string("density_") + name;
    corpus.setting = Setting::kMatched;
    for (auto i : pool) {
      corpus.treatment_texts.push_back(sentences[i].treatment);
      corpus.control_texts.push_back(sentences[i].control);
    }
    return corpus;
  };
  DensityCorpora out;
  out.low = build(low, 0, "low");
  out.high = build(high, 1, "high");
  return out;
}

GuiseCorpus ToCorpus(std::span<const SynthPair> pairs, std::string id) {
  GuiseCorpus corpus;
  corpus.id = std::move(id);
  corpus.setting = Setting::kMatched;
  for (const auto& pair : pairs) {
    corpus.treatment_texts.push_back(pair.treatment);
    corpus.control_texts.push_back(pair.control);
  }
  return corpus;
}

void WriteSynthCorpus(std::span<const SynthPair> pairs, const std::filesystem::path& path) {
  const auto corpus = ToCorpus(pairs, path.stem().string());
  WriteGuiseCorpus(corpus, path);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rows.push_back({{"row", i + 1},
                    {"feature_ids", pairs[i].feature_ids},
                    {"density", pairs[i].density}});
  }
  const nlohmann::json sidecar = {{"corpus", path.filename().string()}, {"rows", rows}};
  std::filesystem::path json_path = path;
  json_path += ".json";
  std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + json_path.string());
  out << sidecar.dump(2) << "\n";
}

}  // namespace guiseprobe::synth
