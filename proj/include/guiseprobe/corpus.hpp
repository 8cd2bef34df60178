#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace guiseprobe {

enum class Setting { kMatched, kUnmatched };

std::string_view SettingName(Setting setting);
Setting ParseSetting(std::string_view name);

// Treatment (e.g. AAE) and control (e.g. SAE) texts of equal size. In the
// matched setting index i of both lists is a meaning-matched pair.
struct GuiseCorpus {
  std::string id;
  Setting setting = Setting::kMatched;
  std::vector<std::string> treatment_texts;
  std::vector<std::string> control_texts;
  std::string label_treatment = "AAE";
  std::string label_control = "SAE";

  std::size_t size() const { return treatment_texts.size(); }

  // Throws LoadError on size mismatch, empty corpus or blank texts.
  void Validate() const;
  // Same texts with the two guises exchanged.
  GuiseCorpus Swapped() const;
};

// Two tab-separated columns per line (treatment, control). Texts are kept
// verbatim; only a trailing '\r' is stripped.
GuiseCorpus LoadGuiseCorpus(const std::filesystem::path& path, Setting setting,
                            std::string id = {});
// One text per line per guise; the two pools must have the same length.
GuiseCorpus LoadUnmatchedCorpus(const std::filesystem::path& treatment_path,
                                const std::filesystem::path& control_path,
                                std::string id = {});
std::string SerializeGuiseCorpus(const GuiseCorpus& corpus);
void WriteGuiseCorpus(const GuiseCorpus& corpus,
                      const std::filesystem::path& path);

enum class Battery {
  kCovertTrait,
  kOvertTrait,
  kEmployability,
  kConviction,
  kDeathPenalty,
  kIq,
};

std::string_view BatteryName(Battery battery);
Battery ParseBattery(std::string_view name);

enum class ArticleRule { kNone, kAAn };

inline constexpr std::string_view kTextSlot = "{t}";
inline constexpr std::string_view kRaceSlot = "{r}";

struct PromptTemplate {
  std::string id;
  std::string text;  // exactly one {t} or {r} slot
  Battery battery = Battery::kCovertTrait;
  ArticleRule article_rule = ArticleRule::kNone;

  void Validate() const;
};

// Fills the slot. With the a/an rule the trailing article becomes "an" when
// the candidate starts with a vowel letter.
std::string RenderPrompt(const PromptTemplate& prompt, std::string_view text,
                         std::optional<std::string_view> candidate = {});
std::string NeutralPrompt(const PromptTemplate& prompt);

// One template per line; ids are "<battery>/<line index>".
std::vector<PromptTemplate> LoadPromptBattery(const std::filesystem::path& path,
                                              Battery battery);

enum class TokenKind { kAdjectives, kOccupations, kOutcomes };

struct TokenSet {
  std::string id;
  std::vector<std::string> tokens;
  TokenKind kind = TokenKind::kAdjectives;

  void Validate() const;
  bool Contains(std::string_view token) const;
};

TokenSet LoadTokenSet(const std::filesystem::path& path, TokenKind kind,
                      std::string id = {});

struct HumanTopList {
  std::string study_id;
  std::vector<std::string> top5;

  void Validate(const TokenSet& adjectives) const;
};

// "<study_id>\t<a>,<b>,<c>,<d>,<e>" per line.
std::vector<HumanTopList> LoadHumanTopLists(const std::filesystem::path& path);

struct FavorabilityTable {
  std::map<std::string, double, std::less<>> ratings;

  // Range check only; coverage is checked with MissingFrom.
  void Validate() const;
  std::vector<std::string> MissingFrom(const TokenSet& tokens) const;
};

FavorabilityTable LoadFavorabilityTable(const std::filesystem::path& path);

struct PrestigeTable {
  std::map<std::string, double, std::less<>> prestige;

  void Validate(const TokenSet& occupations) const;
};

PrestigeTable LoadPrestigeTable(const std::filesystem::path& path);

struct OvertGuise {
  std::string treatment_term = "Black";
  std::string control_term = "White";

  void Validate() const;
};

// Outcome pair of a decision battery and the outcome counted as detrimental.
struct OutcomeSpec {
  Battery battery = Battery::kConviction;
  std::vector<std::string> outcomes;
  std::string detrimental;
};

std::vector<OutcomeSpec> LoadOutcomeSpecs(const std::filesystem::path& path);

// Location of the shipped data directory (prompts, token sets, top lists).
std::filesystem::path DefaultDataDir();

// Lines of a UTF-8 text file with '\r' stripped; the final empty line after a
// trailing newline is dropped.
std::vector<std::string> ReadLines(const std::filesystem::path& path);

}  // namespace guiseprobe
