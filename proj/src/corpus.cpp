#include "guiseprobe/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "guiseprobe/error.hpp"

#ifndef GUISEPROBE_DATA_DIR
#define GUISEPROBE_DATA_DIR "data"
#endif

namespace guiseprobe {
namespace {

bool IsBlank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<std::string> SplitCommas(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    std::string item(text.substr(start, comma - start));
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::size_t CountOccurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

double ParseDouble(const std::string& field, const std::filesystem::path& path,
                   std::size_t row) {
  try {
    std::size_t used = 0;
    const double value = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return value;
  } catch (const std::exception&) {
    throw LoadError(path.string() + ": row " + std::to_string(row + 1) +
                    ": not a number: '" + field + "'");
  }
}

std::string RowError(const std::filesystem::path& path, std::size_t row,
                     const std::string& what) {
  // Rows are reported 1-based, like line numbers.
  return path.string() + ": row " + std::to_string(row + 1) + ": " + what;
}

}  // namespace

std::string_view SettingName(Setting setting) {
  return setting == Setting::kMatched ? "matched" : "unmatched";
}

Setting ParseSetting(std::string_view name) {
  if (name == "matched") return Setting::kMatched;
  if (name == "unmatched") return Setting::kUnmatched;
  throw ConfigError("unknown setting '" + std::string(name) + "'");
}

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (!lines.empty() && lines.front().starts_with("\xEF\xBB\xBF")) {
    lines.front().erase(0, 3);
  }
  return lines;
}

void GuiseCorpus::Validate() const {
  if (treatment_texts.size() != control_texts.size()) {
    throw LoadError("corpus '" + id + "': length mismatch (" +
                    std::to_string(treatment_texts.size()) + " treatment vs " +
                    std::to_string(control_texts.size()) + " control texts)");
  }
  if (treatment_texts.empty()) {
    throw LoadError("corpus '" + id + "': empty corpus");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (IsBlank(treatment_texts[i]) || IsBlank(control_texts[i])) {
      throw LoadError("corpus '" + id + "': row " + std::to_string(i) +
                      ": empty text");
    }
  }
}

GuiseCorpus GuiseCorpus::Swapped() const {
  GuiseCorpus out = *this;
  std::swap(out.treatment_texts, out.control_texts);
  std::swap(out.label_treatment, out.label_control);
  return out;
}

GuiseCorpus LoadGuiseCorpus(const std::filesystem::path& path, Setting setting,
                            std::string id) {
  const auto lines = ReadLines(path);
  if (lines.empty()) throw LoadError(path.string() + ": empty file");
  GuiseCorpus corpus;
  corpus.id = id.empty() ? path.stem().string() : std::move(id);
  corpus.setting = setting;
  for (std::size_t row = 0; row < lines.size(); ++row) {
    const auto fields = SplitTabs(lines[row]);
    if (fields.size() == 1 && IsBlank(fields[0])) {
      throw LoadError(RowError(path, row, "empty row"));
    }
    if (fields.size() == 1) {
      // A lone column in a matched file means the control side is missing.
      if (setting == Setting::kMatched) {
        throw LoadError(RowError(path, row, "length mismatch: missing control text"));
      }
      throw LoadError(RowError(path, row, "malformed row: expected 2 columns"));
    }
    if (fields.size() != 2) {
      throw LoadError(RowError(path, row, "malformed row: expected 2 columns, got " +
                                              std::to_string(fields.size())));
    }
    if (setting == Setting::kMatched && IsBlank(fields[0]) != IsBlank(fields[1])) {
      throw LoadError(RowError(path, row,
                               IsBlank(fields[0])
                                   ? "length mismatch: missing treatment text"
                                   : "length mismatch: missing control text"));
    }
    if (IsBlank(fields[0]) || IsBlank(fields[1])) {
      throw LoadError(RowError(path, row, "empty text"));
    }
    corpus.treatment_texts.push_back(fields[0]);
    corpus.control_texts.push_back(fields[1]);
  }
  corpus.Validate();
  return corpus;
}

GuiseCorpus LoadUnmatchedCorpus(const std::filesystem::path& treatment_path,
                                const std::filesystem::path& control_path,
                                std::string id) {
  auto read_pool = [](const std::filesystem::path& path) {
    auto lines = ReadLines(path);
    if (lines.empty()) throw LoadError(path.string() + ": empty file");
    for (std::size_t row = 0; row < lines.size(); ++row) {
      if (IsBlank(lines[row])) throw LoadError(RowError(path, row, "empty text"));
      if (lines[row].find('\t') != std::string::npos) {
        throw LoadError(RowError(path, row, "malformed row: expected 1 column"));
      }
    }
    return lines;
  };
  GuiseCorpus corpus;
  corpus.id = id.empty() ? treatment_path.stem().string() : std::move(id);
  corpus.setting = Setting::kUnmatched;
  corpus.treatment_texts = read_pool(treatment_path);
  corpus.control_texts = read_pool(control_path);
  corpus.Validate();
  return corpus;
}

std::string SerializeGuiseCorpus(const GuiseCorpus& corpus) {
  corpus.Validate();
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto* text : {&corpus.treatment_texts[i], &corpus.control_texts[i]}) {
      if (text->find_first_of("\t\n") != std::string::npos) {
        throw PreconditionError("corpus '" + corpus.id + "': row " +
                                std::to_string(i) +
                                ": text contains a tab or newline");
      }
    }
    out += corpus.treatment_texts[i];
    out += '\t';
    out += corpus.control_texts[i];
    out += '\n';
  }
  return out;
}

void WriteGuiseCorpus(const GuiseCorpus& corpus,
                      const std::filesystem::path& path) {
  const std::string body = SerializeGuiseCorpus(corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot write");
  out << body;
}

std::string_view BatteryName(Battery battery) {
  switch (battery) {
    case Battery::kCovertTrait: return "covert_trait";
    case Battery::kOvertTrait: return "overt_trait";
    case Battery::kEmployability: return "employability";
    case Battery::kConviction: return "conviction";
    case Battery::kDeathPenalty: return "death_penalty";
    case Battery::kIq: return "iq";
  }
  return "unknown";
}

Battery ParseBattery(std::string_view name) {
  for (Battery b : {Battery::kCovertTrait, Battery::kOvertTrait,
                    Battery::kEmployability, Battery::kConviction,
                    Battery::kDeathPenalty, Battery::kIq}) {
    if (BatteryName(b) == name) return b;
  }
  throw ConfigError("unknown prompt battery '" + std::string(name) + "'");
}

void PromptTemplate::Validate() const {
  const std::size_t slots =
      CountOccurrences(text, kTextSlot) + CountOccurrences(text, kRaceSlot);
  if (slots != 1) {
    throw LoadError("prompt '" + id + "': expected exactly one slot, found " +
                    std::to_string(slots));
  }
  if (article_rule == ArticleRule::kAAn && battery != Battery::kEmployability) {
    throw LoadError("prompt '" + id +
                    "': a/an rule is only valid for the employability battery");
  }
  if (article_rule == ArticleRule::kAAn && !text.ends_with(" a")) {
    throw LoadError("prompt '" + id + "': a/an rule needs a trailing article 'a'");
  }
}

std::string RenderPrompt(const PromptTemplate& prompt, std::string_view text,
                         std::optional<std::string_view> candidate) {
  std::size_t pos = prompt.text.find(kTextSlot);
  if (pos == std::string::npos) pos = prompt.text.find(kRaceSlot);
  if (pos == std::string::npos) {
    throw PreconditionError("prompt '" + prompt.id + "' has no slot");
  }
  std::string out = prompt.text;
  out.replace(pos, kTextSlot.size(), text);
  if (prompt.article_rule == ArticleRule::kAAn) {
    if (!candidate || candidate->empty()) {
      throw PreconditionError("prompt '" + prompt.id +
                              "': a/an rule requires a candidate");
    }
    const char first = static_cast<char>(
        std::tolower(static_cast<unsigned char>(candidate->front())));
    if (std::string_view("aeiou").find(first) != std::string_view::npos) {
      out += 'n';
    }
  }
  return out;
}

std::string NeutralPrompt(const PromptTemplate& prompt) {
  std::size_t pos = prompt.text.find(kTextSlot);
  if (pos == std::string::npos) pos = prompt.text.find(kRaceSlot);
  if (pos == std::string::npos) return prompt.text;
  std::string out = prompt.text;
  out.erase(pos, kTextSlot.size());
  return out;
}

std::vector<PromptTemplate> LoadPromptBattery(const std::filesystem::path& path,
                                              Battery battery) {
  std::vector<PromptTemplate> prompts;
  const auto lines = ReadLines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (IsBlank(lines[i])) continue;
    PromptTemplate prompt;
    prompt.id = std::string(BatteryName(battery)) + "/" + std::to_string(prompts.size());
    prompt.text = lines[i];
    prompt.battery = battery;
    prompt.article_rule = battery == Battery::kEmployability ? ArticleRule::kAAn
                                                             : ArticleRule::kNone;
    prompt.Validate();
    prompts.push_back(std::move(prompt));
  }
  if (prompts.empty()) throw LoadError(path.string() + ": empty prompt battery");
  return prompts;
}

void TokenSet::Validate() const {
  if (tokens.empty()) throw LoadError("token set '" + id + "' is empty");
  std::set<std::string_view> seen;
  for (const auto& token : tokens) {
    if (IsBlank(token)) throw LoadError("token set '" + id + "' has a blank token");
    if (!seen.insert(token).second) {
      throw LoadError("token set '" + id + "': duplicate token '" + token + "'");
    }
  }
}

bool TokenSet::Contains(std::string_view token) const {
  return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

TokenSet LoadTokenSet(const std::filesystem::path& path, TokenKind kind,
                      std::string id) {
  TokenSet set;
  set.id = id.empty() ? path.stem().string() : std::move(id);
  set.kind = kind;
  for (auto& line : ReadLines(path)) {
    if (!IsBlank(line)) set.tokens.push_back(std::move(line));
  }
  set.Validate();
  return set;
}

void HumanTopList::Validate(const TokenSet& adjectives) const {
  if (top5.size() != 5) {
    throw LoadError("human list '" + study_id + "' must have 5 entries");
  }
  for (const auto& token : top5) {
    if (!adjectives.Contains(token)) {
      throw LoadError("human list '" + study_id + "': '" + token +
                      "' is not in token set '" + adjectives.id + "'");
    }
  }
}

std::vector<HumanTopList> LoadHumanTopLists(const std::filesystem::path& path) {
  std::vector<HumanTopList> lists;
  const auto lines = ReadLines(path);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    if (IsBlank(lines[row])) continue;
    const auto fields = SplitTabs(lines[row]);
    if (fields.size() != 2) throw LoadError(RowError(path, row, "malformed row"));
    lists.push_back({fields[0], SplitCommas(fields[1])});
    if (lists.back().top5.size() != 5) {
      throw LoadError(RowError(path, row, "expected 5 adjectives"));
    }
  }
  return lists;
}

void FavorabilityTable::Validate() const {
  for (const auto& [token, value] : ratings) {
    if (!(value >= -2.0 && value <= 2.0)) {
      throw LoadError("favorability of '" + token + "' outside [-2, 2]");
    }
  }
}

std::vector<std::string> FavorabilityTable::MissingFrom(const TokenSet& tokens) const {
  std::vector<std::string> missing;
  for (const auto& token : tokens.tokens) {
    if (!ratings.contains(token)) missing.push_back(token);
  }
  return missing;
}

namespace {

std::map<std::string, double, std::less<>> LoadTokenValues(
    const std::filesystem::path& path) {
  std::map<std::string, double, std::less<>> values;
  const auto lines = ReadLines(path);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    if (IsBlank(lines[row])) continue;
    const auto fields = SplitTabs(lines[row]);
    if (fields.size() != 2) throw LoadError(RowError(path, row, "malformed row"));
    if (!values.emplace(fields[0], ParseDouble(fields[1], path, row)).second) {
      throw LoadError(RowError(path, row, "duplicate token '" + fields[0] + "'"));
    }
  }
  if (values.empty()) throw LoadError(path.string() + ": empty file");
  return values;
}

}  // namespace

FavorabilityTable LoadFavorabilityTable(const std::filesystem::path& path) {
  FavorabilityTable table{LoadTokenValues(path)};
  table.Validate();
  return table;
}

void PrestigeTable::Validate(const TokenSet& occupations) const {
  for (const auto& [occupation, value] : prestige) {
    if (!(value >= 1.0 && value <= 9.0)) {
      throw LoadError("prestige of '" + occupation + "' outside [1, 9]");
    }
    if (!occupations.Contains(occupation)) {
      throw LoadError("prestige entry '" + occupation +
                      "' is not an occupation in '" + occupations.id + "'");
    }
  }
}

PrestigeTable LoadPrestigeTable(const std::filesystem::path& path) {
  return PrestigeTable{LoadTokenValues(path)};
}

void OvertGuise::Validate() const {
  if (IsBlank(treatment_term) || IsBlank(control_term)) {
    throw PreconditionError("overt guise terms must be non-empty");
  }
}

std::vector<OutcomeSpec> LoadOutcomeSpecs(const std::filesystem::path& path) {
  std::vector<OutcomeSpec> specs;
  const auto lines = ReadLines(path);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    if (IsBlank(lines[row])) continue;
    const auto fields = SplitTabs(lines[row]);
    if (fields.size() != 3) throw LoadError(RowError(path, row, "malformed row"));
    OutcomeSpec spec{ParseBattery(fields[0]), SplitCommas(fields[1]), fields[2]};
    if (spec.outcomes.size() != 2 ||
        std::find(spec.outcomes.begin(), spec.outcomes.end(), spec.detrimental) ==
            spec.outcomes.end()) {
      throw LoadError(RowError(path, row, "expected two outcomes incl. the detrimental one"));
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::filesystem::path DefaultDataDir() {
  if (const char* env = std::getenv("GUISEPROBE_DATA_DIR"); env && *env) {
    return env;
  }
  return GUISEPROBE_DATA_DIR;
}

}  // namespace guiseprobe
