#include "guiseprobe/runner.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "guiseprobe/http_backend.hpp"
#include "guiseprobe/studies.hpp"

namespace guiseprobe {

namespace fs = std::filesystem;

int RunSummary::ExitCode() const {
  return std::all_of(studies.begin(), studies.end(), [](const StudyOutcome& s) { return s.ok; })
             ? 0
             : 1;
}

std::vector<BackendPtr> BuildBackends(const RunConfig& config,
                                      std::shared_ptr<ResponseCache> cache) {
  std::vector<BackendPtr> out;
  for (const auto& b : config.backends) {
    BackendPtr backend;
    if (b.type == BackendType::kMock) {
      backend = MakePlantedBiasOracle(b.descriptor, b.mock);
    } else {
      backend = std::make_shared<HttpBackend>(b.descriptor, b.http);
    }
    if (cache) backend = std::make_shared<CachedBackend>(backend, cache);
    out.push_back(std::move(backend));
  }
  return out;
}

namespace {

const std::vector<PromptTemplate>& Prompts(const RunConfig& config, Battery battery) {
  const auto it = config.prompts.find(battery);
  if (it == config.prompts.end()) {
    throw PreconditionError(fmt::format("no prompts loaded for {}", BatteryName(battery)));
  }
  return it->second;
}

BackendPtr FindBackend(const std::vector<BackendPtr>& backends, const std::string& id) {
  for (const auto& b : backends) {
    if (b->descriptor().id == id) return b;
  }
  throw PreconditionError(fmt::format("unknown backend '{}'", id));
}

StereotypeInputs Covert(const RunConfig& config, const std::vector<BackendPtr>& backends) {
  return {config.corpora,    backends,           Prompts(config, Battery::kCovertTrait),
          config.adjectives, config.human_lists, config.favorability};
}

OvertInputs Overt(const RunConfig& config, const std::vector<BackendPtr>& backends) {
  return {config.overt,      backends,           Prompts(config, Battery::kOvertTrait),
          config.adjectives, config.human_lists, config.favorability};
}

StudyReport RunOne(const std::string& study, const RunConfig& config,
                   const std::vector<BackendPtr>& backends, const StudyOptions& options) {
  if (study == "covert_stereotype") return RunCovertStereotypes(Covert(config, backends), options);
  if (study == "overt_stereotype") return RunOvertStereotypes(Overt(config, backends), options);
  if (study == "favorability") {
    return RunFavorability(Covert(config, backends), Overt(config, backends), options);
  }
  if (study == "employability") {
    return RunEmployability({config.corpora, backends, Prompts(config, Battery::kEmployability),
                             config.occupations, config.prestige},
                            options);
  }
  for (const auto& [name, battery] : {std::pair{"conviction", Battery::kConviction},
                                      std::pair{"death_penalty", Battery::kDeathPenalty},
                                      std::pair{"iq", Battery::kIq}}) {
    if (study != name) continue;
    const OutcomeSpec* outcomes = config.Outcomes(battery);
    if (!outcomes) throw PreconditionError(fmt::format("no outcome pair for {}", name));
    return RunDecisions({config.corpora, backends, Prompts(config, battery), *outcomes}, options);
  }
  if (study == "scaling") {
    ScalingInputs inputs{config.corpora,    backends,
                         Prompts(config, Battery::kCovertTrait), config.overt,
                         Prompts(config, Battery::kOvertTrait),  config.adjectives};
    inputs.stereotypical = config.stereotypical;
    inputs.thresholds = config.size_thresholds;
    return RunScaling(inputs, options);
  }
  if (study == "hf_comparison") {
    HfInputs inputs{FindBackend(backends, config.hf_without),
                    FindBackend(backends, config.hf_with),
                    config.corpora,
                    Prompts(config, Battery::kCovertTrait),
                    config.overt,
                    Prompts(config, Battery::kOvertTrait),
                    config.adjectives,
                    config.favorability};
    inputs.stereotypical = config.stereotypical;
    return RunHfComparison(inputs, options);
  }
  throw PreconditionError(fmt::format("unknown study '{}'", study));
}

}  // namespace

RunSummary RunStudies(const RunConfig& config) {
  RunSummary summary;
  summary.fingerprint = config.Fingerprint();
  std::shared_ptr<ResponseCache> cache;
  if (config.cache_dir) cache = std::make_shared<ResponseCache>(*config.cache_dir);
  const auto backends = BuildBackends(config, cache);
  const StudyOptions options{config.parallelism, config.seed, config.permutations};

  fs::create_directories(config.output_dir);
  nlohmann::json run = {{"config_fingerprint", summary.fingerprint},
                        {"seed", config.seed},
                        {"studies", nlohmann::json::array()}};
  for (const auto& study : config.studies) {
    StudyOutcome outcome;
    outcome.study = study;
    outcome.dir = config.output_dir / study;
    spdlog::info("running {}", study);
    try {
      StudyReport report = RunOne(study, config, backends, options);
      report.config_fingerprint = summary.fingerprint;
      WriteReport(report, outcome.dir);
      outcome.ok = true;
      outcome.tests = report.tests.size();
      outcome.significant = static_cast<std::size_t>(
          std::count_if(report.tests.begin(), report.tests.end(), [](const NamedTest& t) {
            return t.result.corrected_p && *t.result.corrected_p < 0.05;
          }));
    } catch (const std::exception& e) {
      outcome.error = e.what();
      spdlog::error("{} failed: {}", study, e.what());
    }
    nlohmann::json entry = {{"study", study}, {"status", outcome.ok ? "ok" : "failed"}};
    if (!outcome.ok) entry["error"] = outcome.error;
    run["studies"].push_back(entry);
    summary.studies.push_back(std::move(outcome));
  }
  std::ofstream(config.output_dir / "run.json", std::ios::binary) << run.dump(2) << "\n";

  for (const auto& b : backends) {
    if (const auto* cached = dynamic_cast<const CachedBackend*>(b.get())) {
      summary.cache_hits += cached->hits();
      summary.cache_misses += cached->misses();
    }
  }
  return summary;
}

}  // namespace guiseprobe
