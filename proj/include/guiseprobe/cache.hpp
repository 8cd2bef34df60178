#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>

#include "guiseprobe/backend.hpp"

namespace guiseprobe {

// Lowercase hex SHA-256 digest.
std::string Sha256Hex(std::string_view bytes);

// Content-addressed store: one JSON file per key under dir/<2 hex>/<key>.json.
// Writes go to a temporary file first and are renamed into place, so an
// interrupted run never leaves a half-written entry behind.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> Get(std::string_view key) const;
  void Put(std::string_view key, std::string_view payload);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path PathFor(std::string_view key) const;

  struct GcStats {
    std::size_t kept = 0;
    std::size_t removed_temp = 0;
    std::size_t removed_corrupt = 0;
  };
  // Drops leftover temporary files and entries that are not valid JSON.
  GcStats CollectGarbage();

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

// Canonical key material of a continuation request.
std::string ContinuationKeyMaterial(const BackendDescriptor& backend,
                                    std::string_view prompt,
                                    std::span<const std::string> candidates);
std::string SequenceKeyMaterial(const BackendDescriptor& backend,
                                std::string_view text);

// Memoizes another backend through a ResponseCache. Entries that fail to
// decode, or whose stored key material differs, count as misses.
class CachedBackend final : public Backend {
 public:
  CachedBackend(BackendPtr inner, std::shared_ptr<ResponseCache> cache);

  const BackendDescriptor& descriptor() const override {
    return inner_->descriptor();
  }
  ContinuationScores ScoreContinuations(
      std::string_view prompt, std::span<const std::string> candidates) override;
  SequenceScore ScoreSequence(std::string_view text) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 private:
  BackendPtr inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace guiseprobe
