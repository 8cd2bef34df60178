#include "guiseprobe/cache.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "guiseprobe/error.hpp"

#if defined(__unix__)
#include <unistd.h>
#endif

namespace guiseprobe {

using nlohmann::json;

std::string Sha256Hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::PathFor(std::string_view key) const {
  return dir_ / std::string(key.substr(0, 2)) / (std::string(key) + ".json");
}

std::optional<std::string> ResponseCache::Get(std::string_view key) const {
  std::shared_lock lock(mutex_);
  std::ifstream in(PathFor(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

void ResponseCache::Put(std::string_view key, std::string_view payload) {
  const auto target = PathFor(key);
  std::ostringstream suffix;
#if defined(__unix__)
  suffix << ".tmp." << ::getpid() << "." << std::this_thread::get_id();
#else
  suffix << ".tmp." << std::this_thread::get_id();
#endif
  auto temp = target;
  temp += suffix.str();
  std::unique_lock lock(mutex_);
  std::filesystem::create_directories(target.parent_path());
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + temp.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) throw Error("cannot write cache entry " + temp.string());
  }
  std::filesystem::rename(temp, target);
}

ResponseCache::GcStats ResponseCache::CollectGarbage() {
  std::unique_lock lock(mutex_);
  GcStats stats;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir_)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    if (name.find(".tmp.") != std::string::npos) {
      std::filesystem::remove(path);
      ++stats.removed_temp;
      continue;
    }
    std::ifstream in(path, std::ios::binary);
    const json parsed = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.contains("key")) {
      in.close();
      std::filesystem::remove(path);
      ++stats.removed_corrupt;
      continue;
    }
    ++stats.kept;
  }
  return stats;
}

namespace {

std::string DescriptorMaterial(const BackendDescriptor& backend) {
  std::string out = backend.id;
  out += '\0';
  out += backend.version;
  out += '\0';
  out += ScoringModeName(backend.scoring_mode);
  out += '\0';
  return out;
}

}  // namespace

std::string ContinuationKeyMaterial(const BackendDescriptor& backend,
                                    std::string_view prompt,
                                    std::span<const std::string> candidates) {
  std::vector<std::string> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::string out = "continuations";
  out += '\0';
  out += DescriptorMaterial(backend);
  out += prompt;
  for (const auto& candidate : sorted) {
    out += '\0';
    out += candidate;
  }
  return out;
}

std::string SequenceKeyMaterial(const BackendDescriptor& backend,
                                std::string_view text) {
  std::string out = "sequence";
  out += '\0';
  out += DescriptorMaterial(backend);
  out += text;
  return out;
}

CachedBackend::CachedBackend(BackendPtr inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

namespace {

// Key material is stored hex-encoded because it may contain NUL bytes.
std::string HexEncode(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out += kHex[c >> 4];
    out += kHex[c & 0xF];
  }
  return out;
}

std::optional<json> ReadEntry(const ResponseCache& cache, const std::string& key,
                              const std::string& material) {
  const auto body = cache.Get(key);
  if (!body) return std::nullopt;
  json parsed = json::parse(*body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object() ||
      parsed.value("key", std::string()) != HexEncode(material)) {
    spdlog::warn("cache entry {} is corrupt; recomputing", key);
    return std::nullopt;
  }
  return parsed;
}

}  // namespace

ContinuationScores CachedBackend::ScoreContinuations(
    std::string_view prompt, std::span<const std::string> candidates) {
  const std::string material =
      ContinuationKeyMaterial(inner_->descriptor(), prompt, candidates);
  const std::string key = Sha256Hex(material);
  if (auto entry = ReadEntry(*cache_, key, material)) {
    try {
      ContinuationScores scores;
      for (const auto& [token, p] : entry->at("probabilities").items()) {
        scores.probabilities.emplace(token, p.get<double>());
      }
      scores.exhaustive = entry->at("exhaustive").get<bool>();
      scores.residual_mass = entry->at("residual_mass").get<double>();
      scores.unscoreable = entry->at("unscoreable").get<std::vector<std::string>>();
      scores.Validate();
      ++hits_;
      return scores;
    } catch (const std::exception& e) {
      spdlog::warn("cache entry {} is corrupt ({}); recomputing", key, e.what());
    }
  }
  ++misses_;
  ContinuationScores scores = inner_->ScoreContinuations(prompt, candidates);
  json entry;
  entry["key"] = HexEncode(material);
  entry["probabilities"] = json::object();
  for (const auto& [token, p] : scores.probabilities) entry["probabilities"][token] = p;
  entry["exhaustive"] = scores.exhaustive;
  entry["residual_mass"] = scores.residual_mass;
  entry["unscoreable"] = scores.unscoreable;
  cache_->Put(key, entry.dump());
  return scores;
}

SequenceScore CachedBackend::ScoreSequence(std::string_view text) {
  const std::string material = SequenceKeyMaterial(inner_->descriptor(), text);
  const std::string key = Sha256Hex(material);
  if (auto entry = ReadEntry(*cache_, key, material)) {
    try {
      SequenceScore score;
      score.total_log_prob = entry->at("total_log_prob").get<double>();
      score.token_count = entry->at("token_count").get<int>();
      score.pseudo = entry->at("pseudo").get<bool>();
      ++hits_;
      return score;
    } catch (const std::exception& e) {
      spdlog::warn("cache entry {} is corrupt ({}); recomputing", key, e.what());
    }
  }
  ++misses_;
  const SequenceScore score = inner_->ScoreSequence(text);
  json entry;
  entry["key"] = HexEncode(material);
  entry["total_log_prob"] = score.total_log_prob;
  entry["token_count"] = score.token_count;
  entry["pseudo"] = score.pseudo;
  cache_->Put(key, entry.dump());
  return score;
}

}  // namespace guiseprobe
