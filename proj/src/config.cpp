#include "guiseprobe/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "guiseprobe/cache.hpp"
#include "toml.hpp"

namespace guiseprobe {

namespace fs = std::filesystem;
using nlohmann::json;

ConfigErrors::ConfigErrors(std::vector<std::string> errors)
    : ConfigError(errors.size() == 1 ? errors.front()
                                     : fmt::format("{} config errors; first: {}", errors.size(),
                                                   errors.front())),
      errors_(std::move(errors)) {}

const std::vector<std::string>& KnownStudies() {
  static const std::vector<std::string> kStudies = {
      "covert_stereotype", "overt_stereotype", "favorability", "employability", "conviction",
      "death_penalty",     "iq",               "scaling",      "hf_comparison"};
  return kStudies;
}

std::string RunConfig::Fingerprint() const { return Sha256Hex(canonical.dump()); }

const OutcomeSpec* RunConfig::Outcomes(Battery battery) const {
  for (const auto& spec : outcomes) {
    if (spec.battery == battery) return &spec;
  }
  return nullptr;
}

namespace {

std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

class Reader {
 public:
  explicit Reader(fs::path base) : base_(std::move(base)) {}

  std::vector<std::string> errors;

  void Fail(std::string message) { errors.push_back(std::move(message)); }

  void CheckKeys(const toml::table& table, std::initializer_list<std::string_view> allowed,
                 const std::string& where) {
    for (const auto& [key, node] : table) {
      if (std::find(allowed.begin(), allowed.end(), key.str()) == allowed.end()) {
        Fail(fmt::format("{}: unknown key '{}'", where, key.str()));
      }
    }
  }

  std::optional<std::string> String(const toml::table& t, std::string_view key,
                                    const std::string& where, bool required = false) {
    const auto* node = t.get(key);
    if (!node) {
      if (required) Fail(fmt::format("{}: '{}' is required", where, key));
      return std::nullopt;
    }
    if (const auto v = node->value<std::string>()) return *v;
    Fail(fmt::format("{}: '{}' must be a string", where, key));
    return std::nullopt;
  }

  std::optional<double> Number(const toml::table& t, std::string_view key,
                               const std::string& where, bool required = false) {
    const auto* node = t.get(key);
    if (!node) {
      if (required) Fail(fmt::format("{}: '{}' is required", where, key));
      return std::nullopt;
    }
    if (node->is_integer()) return static_cast<double>(*node->value<std::int64_t>());
    if (node->is_floating_point()) return *node->value<double>();
    Fail(fmt::format("{}: '{}' must be a number", where, key));
    return std::nullopt;
  }

  std::optional<std::int64_t> Integer(const toml::table& t, std::string_view key,
                                      const std::string& where, bool required = false) {
    const auto* node = t.get(key);
    if (!node) {
      if (required) Fail(fmt::format("{}: '{}' is required", where, key));
      return std::nullopt;
    }
    if (node->is_integer()) return *node->value<std::int64_t>();
    Fail(fmt::format("{}: '{}' must be an integer", where, key));
    return std::nullopt;
  }

  std::optional<bool> Bool(const toml::table& t, std::string_view key, const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return std::nullopt;
    if (node->is_boolean()) return *node->value<bool>();
    Fail(fmt::format("{}: '{}' must be true or false", where, key));
    return std::nullopt;
  }

  std::optional<std::vector<std::string>> Strings(const toml::table& t, std::string_view key,
                                                  const std::string& where,
                                                  bool required = false) {
    const auto* node = t.get(key);
    if (!node) {
      if (required) Fail(fmt::format("{}: '{}' is required", where, key));
      return std::nullopt;
    }
    const auto* array = node->as_array();
    if (!array) {
      Fail(fmt::format("{}: '{}' must be an array of strings", where, key));
      return std::nullopt;
    }
    std::vector<std::string> out;
    for (const auto& item : *array) {
      if (const auto v = item.value<std::string>()) {
        out.push_back(*v);
      } else {
        Fail(fmt::format("{}: '{}' must be an array of strings", where, key));
        return std::nullopt;
      }
    }
    return out;
  }

  std::optional<std::vector<double>> Numbers(const toml::table& t, std::string_view key,
                                             const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return std::nullopt;
    const auto* array = node->as_array();
    std::vector<double> out;
    if (array) {
      for (const auto& item : *array) {
        if (item.is_integer()) {
          out.push_back(static_cast<double>(*item.value<std::int64_t>()));
        } else if (item.is_floating_point()) {
          out.push_back(*item.value<double>());
        } else {
          array = nullptr;
          break;
        }
      }
    }
    if (!array) {
      Fail(fmt::format("{}: '{}' must be an array of numbers", where, key));
      return std::nullopt;
    }
    return out;
  }

  fs::path Resolve(const fs::path& path) const {
    return path.is_absolute() ? path : (base_ / path).lexically_normal();
  }

  // Resolved path of an existing file, or nullopt after recording an error.
  std::optional<fs::path> ExistingFile(const fs::path& path, const std::string& where) {
    const fs::path resolved = Resolve(path);
    std::error_code ec;
    if (!fs::is_regular_file(resolved, ec)) {
      Fail(fmt::format("{}: file not found: {}", where, resolved.string()));
      return std::nullopt;
    }
    return resolved;
  }

  std::optional<fs::path> File(const toml::table& t, std::string_view key,
                               const std::string& where, bool required = false) {
    const auto value = String(t, key, where, required);
    if (!value) return std::nullopt;
    return ExistingFile(*value, where + "." + std::string(key));
  }

  // Runs a loader, turning library errors into config errors.
  template <typename F>
  auto Load(const std::string& where, F&& load) -> std::optional<decltype(load())> {
    try {
      return load();
    } catch (const Error& e) {
      Fail(fmt::format("{}: {}", where, e.what()));
      return std::nullopt;
    }
  }

 private:
  fs::path base_;
};

const toml::table* SubTable(Reader& r, const toml::table& t, std::string_view key,
                            const std::string& where) {
  const auto* node = t.get(key);
  if (!node) return nullptr;
  if (const auto* table = node->as_table()) return table;
  r.Fail(fmt::format("{}: '{}' must be a table", where, key));
  return nullptr;
}

std::string FileHash(const fs::path& path) { return Sha256Hex(ReadBytes(path)); }

json MockToJson(const PlantedBiasSpec& spec) {
  json plants = json::array();
  for (const auto& plant : spec.plants) {
    json bias = json::object();
    for (const auto& [token, b] : plant.bias) bias[token] = b;
    plants.push_back({{"marker", plant.marker}, {"bias", bias}});
  }
  json base = json::object();
  for (const auto& [token, w] : spec.base_weights) base[token] = w;
  json words = json::object();
  for (const auto& [word, p] : spec.word_probs) words[word] = p;
  return {{"plants", plants},
          {"base_weights", base},
          {"jitter_sd", spec.jitter_sd},
          {"jitter_seed", spec.jitter_seed},
          {"vocab_size", spec.vocab_size},
          {"word_probs", words},
          {"unscoreable", std::vector<std::string>(spec.unscoreable.begin(), spec.unscoreable.end())},
          {"sequence_scoring", spec.sequence_scoring}};
}

std::map<std::string, double, std::less<>> NumberMap(Reader& r, const toml::table& t,
                                                     std::string_view key,
                                                     const std::string& where) {
  std::map<std::string, double, std::less<>> out;
  const auto* table = SubTable(r, t, key, where);
  if (!table) return out;
  for (const auto& [k, node] : *table) {
    if (node.is_integer()) {
      out[std::string(k.str())] = static_cast<double>(*node.value<std::int64_t>());
    } else if (node.is_floating_point()) {
      out[std::string(k.str())] = *node.value<double>();
    } else {
      r.Fail(fmt::format("{}.{}: '{}' must be a number", where, key, k.str()));
    }
  }
  return out;
}

PlantedBiasSpec ParseMock(Reader& r, const toml::table& t, const std::string& where) {
  r.CheckKeys(t,
              {"plants", "base_weights", "jitter_sd", "jitter_seed", "vocab_size", "word_probs",
               "unscoreable", "sequence_scoring"},
              where);
  PlantedBiasSpec spec;
  if (const auto* plants = t.get("plants")) {
    const auto* array = plants->as_array();
    if (!array) {
      r.Fail(where + ": 'plants' must be an array of tables");
    } else {
      for (std::size_t i = 0; i < array->size(); ++i) {
        const std::string at = fmt::format("{}.plants[{}]", where, i);
        const auto* plant = array->get(i)->as_table();
        if (!plant) {
          r.Fail(at + ": must be a table");
          continue;
        }
        r.CheckKeys(*plant, {"marker", "bias"}, at);
        MarkerBias bias;
        bias.marker = r.String(*plant, "marker", at, true).value_or("");
        bias.bias = NumberMap(r, *plant, "bias", at);
        spec.plants.push_back(std::move(bias));
      }
    }
  }
  spec.base_weights = NumberMap(r, t, "base_weights", where);
  for (const auto& [token, w] : spec.base_weights) {
    if (!(w > 0.0)) r.Fail(fmt::format("{}.base_weights: '{}' must be > 0", where, token));
  }
  spec.jitter_sd = r.Number(t, "jitter_sd", where).value_or(0.0);
  if (spec.jitter_sd < 0.0) r.Fail(where + ": 'jitter_sd' must be >= 0");
  spec.jitter_seed = static_cast<std::uint64_t>(r.Integer(t, "jitter_seed", where).value_or(0));
  spec.vocab_size = static_cast<int>(r.Integer(t, "vocab_size", where).value_or(100));
  if (spec.vocab_size < 1) r.Fail(where + ": 'vocab_size' must be >= 1");
  spec.word_probs = NumberMap(r, t, "word_probs", where);
  for (const auto& token : r.Strings(t, "unscoreable", where).value_or(std::vector<std::string>{})) {
    spec.unscoreable.insert(token);
  }
  spec.sequence_scoring = r.Bool(t, "sequence_scoring", where).value_or(true);
  return spec;
}

std::optional<BackendConfig> ParseBackend(Reader& r, const toml::table& t, std::size_t index,
                                          json& canonical) {
  const std::string where = fmt::format("backends[{}]", index);
  r.CheckKeys(t,
              {"id", "family", "version", "parameters", "type", "capability", "k", "scoring_mode",
               "endpoint", "model", "api_key_env", "max_attempts", "timeout_seconds", "mock"},
              where);
  const std::size_t errors_before = r.errors.size();
  BackendConfig config;
  auto& d = config.descriptor;
  d.id = r.String(t, "id", where, true).value_or("");
  d.family = r.String(t, "family", where).value_or(d.id);
  d.version = r.String(t, "version", where).value_or("1");
  const double params = r.Number(t, "parameters", where).value_or(1.0);
  if (!(params >= 1.0)) r.Fail(where + ": 'parameters' must be >= 1");
  d.parameter_count = static_cast<std::int64_t>(params);
  try {
    if (auto c = r.String(t, "capability", where)) d.capability = ParseCapability(*c);
    if (auto m = r.String(t, "scoring_mode", where)) d.scoring_mode = ParseScoringMode(*m);
  } catch (const Error& e) {
    r.Fail(where + ": " + e.what());
  }
  if (auto k = r.Integer(t, "k", where)) d.k = static_cast<int>(*k);
  try {
    if (r.errors.size() == errors_before) d.Validate();
  } catch (const Error& e) {
    r.Fail(where + ": " + e.what());
  }

  const std::string type = r.String(t, "type", where).value_or("mock");
  json entry = {{"id", d.id},
                {"family", d.family},
                {"version", d.version},
                {"parameters", d.parameter_count},
                {"capability", CapabilityName(d.capability)},
                {"scoring_mode", ScoringModeName(d.scoring_mode)},
                {"type", type}};
  if (d.k) entry["k"] = *d.k;
  if (type == "mock") {
    config.type = BackendType::kMock;
    if (t.get("endpoint")) r.Fail(where + ": 'endpoint' is only valid for http backends");
    const auto* mock = SubTable(r, t, "mock", where);
    if (mock) config.mock = ParseMock(r, *mock, where + ".mock");
    const json mock_json = MockToJson(config.mock);
    entry["mock"] = mock_json;
    // Cache keys are built from the descriptor, so the mock spec goes in too.
    d.version += "+mock:" + Sha256Hex(mock_json.dump()).substr(0, 12);
  } else if (type == "http") {
    config.type = BackendType::kHttp;
    if (t.get("mock")) r.Fail(where + ": 'mock' is only valid for mock backends");
    config.http.endpoint = r.String(t, "endpoint", where, true).value_or("");
    config.http.model = r.String(t, "model", where).value_or(d.id);
    config.http.api_key_env =
        r.String(t, "api_key_env", where).value_or(config.http.api_key_env);
    config.http.max_attempts =
        static_cast<int>(r.Integer(t, "max_attempts", where).value_or(config.http.max_attempts));
    if (auto s = r.Integer(t, "timeout_seconds", where)) config.http.timeout = std::chrono::seconds(*s);
    if (config.http.max_attempts < 1) r.Fail(where + ": 'max_attempts' must be >= 1");
    entry["model"] = config.http.model;
  } else {
    r.Fail(fmt::format("{}: unknown backend type '{}' (expected mock or http)", where, type));
  }
  canonical.push_back(entry);
  if (r.errors.size() != errors_before) return std::nullopt;
  return config;
}

std::optional<GuiseCorpus> ParseCorpus(Reader& r, const toml::table& t, std::size_t index,
                                       json& canonical) {
  const std::string where = fmt::format("corpora[{}]", index);
  r.CheckKeys(t, {"id", "setting", "path", "treatment", "control"}, where);
  const std::string id = r.String(t, "id", where, true).value_or("");
  const std::string setting_name = r.String(t, "setting", where).value_or("matched");
  Setting setting = Setting::kMatched;
  try {
    setting = ParseSetting(setting_name);
  } catch (const Error& e) {
    r.Fail(where + ": " + e.what());
    return std::nullopt;
  }
  json entry = {{"id", id}, {"setting", setting_name}};
  std::optional<GuiseCorpus> corpus;
  if (t.get("path")) {
    if (t.get("treatment") || t.get("control")) {
      r.Fail(where + ": give either 'path' or 'treatment' and 'control', not both");
    }
    if (const auto path = r.File(t, "path", where)) {
      entry["sha256"] = FileHash(*path);
      corpus = r.Load(where, [&] { return LoadGuiseCorpus(*path, setting, id); });
    }
  } else if (t.get("treatment") || t.get("control")) {
    if (setting != Setting::kUnmatched) {
      r.Fail(where + ": separate treatment/control files are for the unmatched setting");
    }
    const auto treatment = r.File(t, "treatment", where, true);
    const auto control = r.File(t, "control", where, true);
    if (treatment && control) {
      entry["treatment_sha256"] = FileHash(*treatment);
      entry["control_sha256"] = FileHash(*control);
      corpus = r.Load(where, [&] { return LoadUnmatchedCorpus(*treatment, *control, id); });
    }
  } else {
    r.Fail(where + ": needs 'path' or 'treatment' and 'control'");
  }
  canonical.push_back(entry);
  return corpus;
}

std::vector<Battery> BatteriesFor(const std::vector<std::string>& studies) {
  std::set<Battery> needed;
  for (const auto& s : studies) {
    if (s == "covert_stereotype") needed.insert(Battery::kCovertTrait);
    if (s == "overt_stereotype") needed.insert(Battery::kOvertTrait);
    if (s == "favorability" || s == "scaling" || s == "hf_comparison") {
      needed.insert(Battery::kCovertTrait);
      needed.insert(Battery::kOvertTrait);
    }
    if (s == "employability") needed.insert(Battery::kEmployability);
    if (s == "conviction") needed.insert(Battery::kConviction);
    if (s == "death_penalty") needed.insert(Battery::kDeathPenalty);
    if (s == "iq") needed.insert(Battery::kIq);
  }
  return {needed.begin(), needed.end()};
}

bool Uses(const std::vector<std::string>& studies, std::initializer_list<const char*> names) {
  return std::any_of(names.begin(), names.end(), [&](const char* n) {
    return std::find(studies.begin(), studies.end(), n) != studies.end();
  });
}

}  // namespace

RunConfig LoadRunConfig(const fs::path& path, const Overrides& overrides) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream message;
    message << path.string() << ":" << e.source().begin.line << ":" << e.source().begin.column
            << ": " << e.description();
    throw ConfigErrors({message.str()});
  }

  Reader r(fs::absolute(path).parent_path());
  RunConfig config;
  config.source = path;
  json canonical;
  r.CheckKeys(root,
              {"seed", "parallelism", "permutations", "output_dir", "cache_dir", "studies", "data",
               "prompts", "backends", "corpora", "overt", "scaling", "hf_comparison"},
              "config");

  // Run settings.
  if (overrides.seed) {
    config.seed = *overrides.seed;
  } else if (const auto seed = r.Integer(root, "seed", "config")) {
    config.seed = static_cast<std::uint64_t>(*seed);
  } else if (!root.get("seed")) {
    r.Fail("config: 'seed' is required (no implicit seeds)");
  }
  config.parallelism = static_cast<int>(r.Integer(root, "parallelism", "config").value_or(0));
  if (overrides.parallelism) config.parallelism = *overrides.parallelism;
  if (config.parallelism < 0) r.Fail("config: 'parallelism' must be >= 0");
  const auto permutations = r.Integer(root, "permutations", "config").value_or(10000);
  if (permutations < 1) r.Fail("config: 'permutations' must be >= 1");
  config.permutations = static_cast<std::size_t>(std::max<std::int64_t>(permutations, 1));

  if (overrides.output_dir) {
    config.output_dir = *overrides.output_dir;
  } else if (const auto out = r.String(root, "output_dir", "config", true)) {
    config.output_dir = r.Resolve(*out);
  }
  if (overrides.cache_dir) {
    config.cache_dir = *overrides.cache_dir;
  } else if (const auto cache = r.String(root, "cache_dir", "config")) {
    config.cache_dir = r.Resolve(*cache);
  }

  config.studies = r.Strings(root, "studies", "config", true).value_or(std::vector<std::string>{});
  if (root.get("studies") && config.studies.empty()) r.Fail("config: 'studies' is empty");
  {
    std::set<std::string> seen;
    for (const auto& s : config.studies) {
      if (std::find(KnownStudies().begin(), KnownStudies().end(), s) == KnownStudies().end()) {
        r.Fail(fmt::format("config: unknown study '{}' (known: {})", s,
                           fmt::join(KnownStudies(), ", ")));
      }
      if (!seen.insert(s).second) r.Fail(fmt::format("config: study '{}' listed twice", s));
    }
    // Run order is fixed.
    std::vector<std::string> ordered;
    for (const auto& s : KnownStudies()) {
      if (seen.contains(s)) ordered.push_back(s);
    }
    config.studies = ordered;
  }
  canonical["seed"] = config.seed;
  canonical["permutations"] = config.permutations;
  canonical["studies"] = config.studies;

  // Backends.
  canonical["backends"] = json::array();
  if (const auto* node = root.get("backends")) {
    if (const auto* array = node->as_array()) {
      std::set<std::string> ids;
      for (std::size_t i = 0; i < array->size(); ++i) {
        const auto* table = array->get(i)->as_table();
        if (!table) {
          r.Fail(fmt::format("backends[{}]: must be a table", i));
          continue;
        }
        if (auto backend = ParseBackend(r, *table, i, canonical["backends"])) {
          if (!ids.insert(backend->descriptor.id).second) {
            r.Fail(fmt::format("backends[{}]: duplicate id '{}'", i, backend->descriptor.id));
          }
          config.backends.push_back(std::move(*backend));
        }
      }
    } else {
      r.Fail("config: 'backends' must be an array of tables ([[backends]])");
    }
  }
  if (!config.studies.empty() && config.backends.empty() && root.get("backends") == nullptr) {
    r.Fail("config: at least one [[backends]] entry is required");
  }

  // Corpora.
  canonical["corpora"] = json::array();
  if (const auto* node = root.get("corpora")) {
    if (const auto* array = node->as_array()) {
      std::set<std::string> ids;
      for (std::size_t i = 0; i < array->size(); ++i) {
        const auto* table = array->get(i)->as_table();
        if (!table) {
          r.Fail(fmt::format("corpora[{}]: must be a table", i));
          continue;
        }
        if (auto corpus = ParseCorpus(r, *table, i, canonical["corpora"])) {
          if (!ids.insert(corpus->id).second) {
            r.Fail(fmt::format("corpora[{}]: duplicate id '{}'", i, corpus->id));
          }
          config.corpora.push_back(std::move(*corpus));
        }
      }
    } else {
      r.Fail("config: 'corpora' must be an array of tables ([[corpora]])");
    }
  }
  const bool needs_corpora =
      std::any_of(config.studies.begin(), config.studies.end(),
                  [](const std::string& s) { return s != "overt_stereotype"; });
  if (needs_corpora && config.corpora.empty() && !root.get("corpora")) {
    r.Fail("config: the selected studies need at least one [[corpora]] entry");
  }

  // Data files.
  static const toml::table kEmpty;
  const toml::table* data = SubTable(r, root, "data", "config");
  if (!data) data = &kEmpty;
  r.CheckKeys(*data,
              {"dir", "adjectives", "occupations", "human_lists", "favorability", "prestige",
               "outcomes"},
              "data");
  fs::path data_dir = DefaultDataDir();
  if (const auto dir = r.String(*data, "dir", "data")) data_dir = r.Resolve(*dir);
  json data_hashes = json::object();
  auto data_file = [&](std::string_view key, const char* default_name) -> std::optional<fs::path> {
    std::optional<fs::path> file;
    if (data->get(key)) {
      file = r.File(*data, key, "data");
    } else if (default_name) {
      file = r.ExistingFile(data_dir / default_name, "data." + std::string(key));
    }
    if (file) data_hashes[std::string(key)] = FileHash(*file);
    return file;
  };
  if (const auto f = data_file("adjectives", "adjectives.txt")) {
    if (auto v = r.Load("data.adjectives",
                        [&] { return LoadTokenSet(*f, TokenKind::kAdjectives, "adjectives"); })) {
      config.adjectives = std::move(*v);
    }
  }
  if (const auto f = data_file("occupations", "occupations.txt")) {
    if (auto v = r.Load("data.occupations",
                        [&] { return LoadTokenSet(*f, TokenKind::kOccupations, "occupations"); })) {
      config.occupations = std::move(*v);
    }
  }
  if (const auto f = data_file("human_lists", "princeton_top5.tsv")) {
    if (auto v = r.Load("data.human_lists", [&] { return LoadHumanTopLists(*f); })) {
      config.human_lists = std::move(*v);
      for (const auto& list : config.human_lists) {
        r.Load("data.human_lists", [&] {
          list.Validate(config.adjectives);
          return 0;
        });
      }
    }
  }
  if (const auto f = data_file("outcomes", "outcomes.tsv")) {
    if (auto v = r.Load("data.outcomes", [&] { return LoadOutcomeSpecs(*f); })) {
      config.outcomes = std::move(*v);
    }
  }
  if (const auto f = data_file("favorability", nullptr)) {
    config.favorability = r.Load("data.favorability", [&] {
      auto table = LoadFavorabilityTable(*f);
      table.Validate();
      return table;
    });
  }
  if (const auto f = data_file("prestige", nullptr)) {
    config.prestige = r.Load("data.prestige", [&] {
      auto table = LoadPrestigeTable(*f);
      table.Validate(config.occupations);
      return table;
    });
  }
  canonical["data"] = data_hashes;

  // Prompt batteries.
  const toml::table* prompts = SubTable(r, root, "prompts", "config");
  if (!prompts) prompts = &kEmpty;
  r.CheckKeys(*prompts,
              {"covert_trait", "overt_trait", "employability", "conviction", "death_penalty", "iq"},
              "prompts");
  json prompt_hashes = json::object();
  for (Battery battery : BatteriesFor(config.studies)) {
    const std::string name(BatteryName(battery));
    std::optional<fs::path> file;
    if (prompts->get(name)) {
      file = r.File(*prompts, name, "prompts");
    } else {
      file = r.ExistingFile(data_dir / "prompts" / (name + ".txt"), "prompts." + name);
    }
    if (!file) continue;
    prompt_hashes[name] = FileHash(*file);
    if (auto v = r.Load("prompts." + name, [&] { return LoadPromptBattery(*file, battery); })) {
      config.prompts[battery] = std::move(*v);
    }
  }
  canonical["prompts"] = prompt_hashes;

  // Study settings.
  if (const auto* overt = SubTable(r, root, "overt", "config")) {
    r.CheckKeys(*overt, {"treatment_term", "control_term"}, "overt");
    config.overt.treatment_term =
        r.String(*overt, "treatment_term", "overt").value_or(config.overt.treatment_term);
    config.overt.control_term =
        r.String(*overt, "control_term", "overt").value_or(config.overt.control_term);
  }
  r.Load("overt", [&] {
    config.overt.Validate();
    return 0;
  });
  if (config.overt.treatment_term == config.overt.control_term) {
    r.Fail("overt: treatment_term and control_term must differ");
  }
  canonical["overt"] = {{"treatment_term", config.overt.treatment_term},
                        {"control_term", config.overt.control_term}};

  config.size_thresholds = {1.5e8, 3.5e8, 1.0e10};
  config.stereotypical = {"lazy", "ignorant", "musical", "religious", "stupid"};
  if (const auto* scaling = SubTable(r, root, "scaling", "config")) {
    r.CheckKeys(*scaling, {"thresholds", "stereotypical"}, "scaling");
    if (auto t = r.Numbers(*scaling, "thresholds", "scaling")) config.size_thresholds = *t;
    if (auto s = r.Strings(*scaling, "stereotypical", "scaling")) config.stereotypical = *s;
  }
  if (config.size_thresholds.empty() ||
      !std::is_sorted(config.size_thresholds.begin(), config.size_thresholds.end()) ||
      std::adjacent_find(config.size_thresholds.begin(), config.size_thresholds.end()) !=
          config.size_thresholds.end()) {
    r.Fail("scaling: 'thresholds' must be non-empty and strictly ascending");
  }
  for (const auto& token : config.stereotypical) {
    if (!config.adjectives.tokens.empty() && !config.adjectives.Contains(token)) {
      r.Fail(fmt::format("scaling: stereotypical adjective '{}' is not in the adjective set",
                         token));
    }
  }
  if (config.stereotypical.empty()) r.Fail("scaling: 'stereotypical' is empty");
  canonical["scaling"] = {{"thresholds", config.size_thresholds},
                          {"stereotypical", config.stereotypical}};

  if (const auto* hf = SubTable(r, root, "hf_comparison", "config")) {
    r.CheckKeys(*hf, {"without_hf", "with_hf"}, "hf_comparison");
    config.hf_without = r.String(*hf, "without_hf", "hf_comparison").value_or("");
    config.hf_with = r.String(*hf, "with_hf", "hf_comparison").value_or("");
  }
  canonical["hf_comparison"] = {{"without_hf", config.hf_without}, {"with_hf", config.hf_with}};

  // Cross-checks for the selected studies.
  if (Uses(config.studies, {"hf_comparison"})) {
    for (const auto& [key, id] :
         {std::pair{"without_hf", config.hf_without}, std::pair{"with_hf", config.hf_with}}) {
      const bool known =
          std::any_of(config.backends.begin(), config.backends.end(),
                      [&](const BackendConfig& b) { return b.descriptor.id == id; });
      if (id.empty()) {
        r.Fail(fmt::format("hf_comparison: '{}' is required for the hf_comparison study", key));
      } else if (!known) {
        r.Fail(fmt::format("hf_comparison: '{}' names unknown backend '{}'", key, id));
      }
    }
    if (!config.hf_without.empty() && config.hf_without == config.hf_with) {
      r.Fail("hf_comparison: without_hf and with_hf must name different backends");
    }
  }
  if (Uses(config.studies, {"favorability"}) && !data->get("favorability")) {
    r.Fail("data: 'favorability' is required for the favorability study");
  }
  if (config.favorability && Uses(config.studies, {"favorability"})) {
    const auto missing = config.favorability->MissingFrom(config.adjectives);
    if (!missing.empty()) {
      r.Fail(fmt::format("data.favorability: no rating for {} adjective(s): {}", missing.size(),
                         fmt::join(missing, ", ")));
    }
  }
  for (const auto& [study, battery] : {std::pair{"conviction", Battery::kConviction},
                                       std::pair{"death_penalty", Battery::kDeathPenalty},
                                       std::pair{"iq", Battery::kIq}}) {
    if (Uses(config.studies, {study}) && !config.Outcomes(battery)) {
      r.Fail(fmt::format("data.outcomes: no outcome pair for '{}'", study));
    }
  }

  if (!r.errors.empty()) throw ConfigErrors(std::move(r.errors));
  config.canonical = std::move(canonical);
  return config;
}

}  // namespace guiseprobe
