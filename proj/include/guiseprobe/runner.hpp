#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "guiseprobe/cache.hpp"
#include "guiseprobe/config.hpp"

namespace guiseprobe {

struct StudyOutcome {
  std::string study;
  bool ok = false;
  std::string error;
  std::size_t tests = 0;
  std::size_t significant = 0;  // Holm-corrected p < 0.05
  std::filesystem::path dir;
};

struct RunSummary {
  std::string fingerprint;
  std::vector<StudyOutcome> studies;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;

  // 0 when every study succeeded, 1 otherwise.
  int ExitCode() const;
};

// One backend per config entry, wrapped in a CachedBackend when `cache` is set.
std::vector<BackendPtr> BuildBackends(const RunConfig& config,
                                      std::shared_ptr<ResponseCache> cache);

// Runs the selected studies in order, writing <output_dir>/<study>/ for each
// and <output_dir>/run.json. A failing study is recorded and the rest still run.
RunSummary RunStudies(const RunConfig& config);

}  // namespace guiseprobe
