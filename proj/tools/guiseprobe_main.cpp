#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "guiseprobe/cache.hpp"
#include "guiseprobe/config.hpp"
#include "guiseprobe/runner.hpp"
#include "guiseprobe/synth.hpp"

namespace fs = std::filesystem;
using namespace guiseprobe;

namespace {

constexpr int kOk = 0;
constexpr int kStudyFailure = 1;
constexpr int kConfigError = 2;

int PrintConfigErrors(const ConfigError& e) {
  if (const auto* all = dynamic_cast<const ConfigErrors*>(&e)) {
    for (const auto& message : all->errors()) fmt::print(stderr, "config error: {}\n", message);
  } else {
    fmt::print(stderr, "config error: {}\n", e.what());
  }
  return kConfigError;
}

int Validate(const fs::path& config_path) {
  try {
    const RunConfig config = LoadRunConfig(config_path);
    fmt::print("ok: {} backend(s), {} corpus/corpora, studies: {}\n", config.backends.size(),
               config.corpora.size(), fmt::join(config.studies, ", "));
    fmt::print("fingerprint: {}\n", config.Fingerprint());
    return kOk;
  } catch (const ConfigError& e) {
    return PrintConfigErrors(e);
  }
}

int Run(const fs::path& config_path, const Overrides& overrides) {
  RunConfig config;
  try {
    config = LoadRunConfig(config_path, overrides);
  } catch (const ConfigError& e) {
    return PrintConfigErrors(e);
  }
  const RunSummary summary = RunStudies(config);
  fmt::print("{:<20} {:<7} {:>6} {:>12}  {}\n", "study", "status", "tests", "holm p<0.05",
             "output");
  for (const auto& s : summary.studies) {
    fmt::print("{:<20} {:<7} {:>6} {:>12}  {}\n", s.study, s.ok ? "ok" : "FAILED", s.tests,
               s.significant, s.ok ? s.dir.string() : s.error);
  }
  if (config.cache_dir) {
    fmt::print("cache: {} hit(s), {} miss(es)\n", summary.cache_hits, summary.cache_misses);
  }
  fmt::print("fingerprint: {}\n", summary.fingerprint);
  return summary.ExitCode();
}

std::vector<std::string> Lexicon(const std::optional<fs::path>& path, const char* fallback) {
  return ReadLines(path ? *path : DefaultDataDir() / "lexicons" / fallback);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matched guise probing of language model dialect bias"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  fs::path config_path;
  auto* validate = app.add_subcommand("validate", "Check a run config and print its fingerprint");
  validate->add_option("config", config_path, "TOML run config")->required();

  Overrides overrides;
  auto* run = app.add_subcommand("run", "Run the studies selected in a config");
  run->add_option("config", config_path, "TOML run config")->required();
  run->add_option("--out", overrides.output_dir, "Report directory");
  run->add_option("--cache", overrides.cache_dir, "Response cache directory");
  run->add_option("--parallelism", overrides.parallelism, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--seed", overrides.seed, "Seed for permutations and sampling");

  auto* synth = app.add_subcommand("synth", "Build synthetic guise corpora");
  synth->require_subcommand(1);

  std::string feature_name;
  std::optional<fs::path> lexicon_path;
  std::vector<std::string> pronouns;
  fs::path out_path;
  auto* feature = synth->add_subcommand("feature", "Meaning-matched pairs for one AAE feature");
  feature->add_option("--feature", feature_name, "Feature id, e.g. finna or habitual_be")
      ->required();
  feature->add_option("--lexicon", lexicon_path, "Verb list (one per line)");
  feature->add_option("--pronouns", pronouns, "Override the default pronouns");
  feature->add_option("--out", out_path, "Corpus TSV to write")->required();

  fs::path in_path;
  double rate = 0.25;
  std::uint64_t seed = 0;
  auto* noise = synth->add_subcommand("noise", "Noisy copies of texts as a noise control");
  noise->add_option("--in", in_path, "Text file, one text per line")->required();
  noise->add_option("--rate", rate, "Word modification rate")->check(CLI::Range(0.0, 1.0));
  noise->add_option("--seed", seed, "Seed")->required();
  noise->add_option("--lexicon", lexicon_path, "Words for word-level edits");
  noise->add_option("--out", out_path, "Corpus TSV to write")->required();

  synth::DensityOptions density_options;
  fs::path out_high;
  auto* density = synth->add_subcommand("density", "Low and high feature-density corpora");
  density->add_option("--in", in_path, "Annotated sentences TSV")->required();
  density->add_option("--low", density_options.low, "Feature count of the low bucket");
  density->add_option("--high", density_options.high, "Minimum feature count of the high bucket");
  density->add_option("--min-words", density_options.min_words);
  density->add_option("--max-words", density_options.max_words);
  density->add_option("--size", density_options.size, "Sentences per bucket");
  density->add_option("--seed", density_options.seed, "Seed")->required();
  density->add_option("--out-low", out_path, "Low-density corpus TSV")->required();
  density->add_option("--out-high", out_high, "High-density corpus TSV")->required();

  fs::path cache_dir;
  auto* cache = app.add_subcommand("cache", "Response cache maintenance");
  cache->require_subcommand(1);
  auto* gc = cache->add_subcommand("gc", "Remove temporary and corrupt cache entries");
  gc->add_option("dir", cache_dir, "Cache directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*validate) return Validate(config_path);
    if (*run) return Run(config_path, overrides);
    if (*feature) {
      auto spec = synth::DefaultSpec(synth::ParseFeature(feature_name));
      if (!pronouns.empty()) spec.pronouns = pronouns;
      const bool ing = synth::LexiconForm(spec.id) == synth::VerbForm::kIng;
      const auto lexicon = Lexicon(lexicon_path, ing ? "ing_verbs.txt" : "base_verbs.txt");
      const auto pairs = synth::GenerateFeaturePairs(spec, lexicon);
      synth::WriteSynthCorpus(pairs, out_path);
      fmt::print("{} pair(s) -> {}\n", pairs.size(), out_path.string());
      return kOk;
    }
    if (*noise) {
      const auto lexicon = Lexicon(lexicon_path, "frequent_words.txt");
      std::vector<synth::SynthPair> pairs;
      std::size_t words = 0;
      std::size_t modified = 0;
      std::uint64_t line_seed = seed;
      for (const auto& text : ReadLines(in_path)) {
        if (text.empty()) continue;
        auto result = synth::InjectNoise(text, rate, line_seed++, lexicon);
        words += result.words;
        modified += result.modified;
        pairs.push_back(std::move(result.pair));
      }
      synth::WriteSynthCorpus(pairs, out_path);
      fmt::print("{} text(s), {} of {} word(s) modified -> {}\n", pairs.size(), modified, words,
                 out_path.string());
      return kOk;
    }
    if (*density) {
      const auto sentences = synth::LoadAnnotatedSentences(in_path);
      const auto corpora = synth::ComposeDensity(sentences, density_options);
      WriteGuiseCorpus(corpora.low, out_path);
      WriteGuiseCorpus(corpora.high, out_high);
      fmt::print("low: {} -> {}\nhigh: {} -> {}\n", corpora.low.size(), out_path.string(),
                 corpora.high.size(), out_high.string());
      return kOk;
    }
    if (*gc) {
      ResponseCache response_cache(cache_dir);
      const auto stats = response_cache.CollectGarbage();
      fmt::print("kept {}, removed {} temporary and {} corrupt\n", stats.kept,
                 stats.removed_temp, stats.removed_corrupt);
      return kOk;
    }
  } catch (const ConfigError& e) {
    return PrintConfigErrors(e);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kStudyFailure;
  }
  return kOk;
}
