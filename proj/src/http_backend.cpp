#include "guiseprobe/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "guiseprobe/error.hpp"

namespace guiseprobe {

using nlohmann::json;

HttpBackend::HttpBackend(BackendDescriptor descriptor, HttpBackendOptions options)
    : descriptor_(std::move(descriptor)), options_(std::move(options)) {
  descriptor_.Validate();
  if (options_.endpoint.empty()) {
    throw ConfigError("backend '" + descriptor_.id + "': endpoint is required");
  }
  if (options_.model.empty()) options_.model = descriptor_.id;
  options_.max_attempts = std::max(1, options_.max_attempts);
}

HttpBackend::Response HttpBackend::PostWithRetry(const std::string& path,
                                                 const std::string& body) const {
  httplib::Headers headers;
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto result = client.Post(path, headers, body, "application/json");
    // 501 means the endpoint is not implemented; retrying cannot help.
    if (result && (result->status < 500 || result->status == 501)) {
      return {result->status, result->body};
    }
    last_error = result ? "HTTP " + std::to_string(result->status)
                        : httplib::to_string(result.error());
    if (attempt < options_.max_attempts) {
      spdlog::warn("{} {}{}: {} (attempt {}/{})", descriptor_.id, options_.endpoint,
                   path, last_error, attempt, options_.max_attempts);
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError("backend '" + descriptor_.id + "' at " + options_.endpoint +
                       path + " failed after " + std::to_string(options_.max_attempts) +
                       " attempts: " + last_error);
}

ContinuationScores HttpBackend::ScoreContinuations(
    std::string_view prompt, std::span<const std::string> candidates) {
  if (candidates.empty()) throw PreconditionError("no candidates to score");
  std::vector<std::string> remaining(candidates.begin(), candidates.end());
  ContinuationScores out;
  // At most one round of dropping unscoreable candidates per request.
  for (int round = 0; round < 2 && !remaining.empty(); ++round) {
    const json request = {{"model", options_.model},
                          {"prompt", std::string(prompt)},
                          {"candidates", remaining},
                          {"confine", true}};
    const Response response = PostWithRetry("/v1/score_continuations", request.dump());
    json body = json::parse(response.body, nullptr, /*allow_exceptions=*/false);
    if (response.status == 422 && round == 0 && body.is_object() &&
        body.contains("unscoreable")) {
      for (const auto& token : body.at("unscoreable")) {
        const auto name = token.is_object() ? token.value("token", std::string())
                                            : token.get<std::string>();
        const auto it = std::find(remaining.begin(), remaining.end(), name);
        if (it != remaining.end()) {
          spdlog::warn("{}: candidate '{}' is not a single vocabulary unit; excluded",
                       descriptor_.id, name);
          out.unscoreable.push_back(name);
          remaining.erase(it);
        }
      }
      continue;
    }
    if (response.status != 200 || body.is_discarded() || !body.is_object()) {
      throw Error("backend '" + descriptor_.id + "': bad response (HTTP " +
                  std::to_string(response.status) + "): " + response.body.substr(0, 200));
    }
    try {
      if (!body.at("probs").is_object()) throw Error("'probs' is not an object");
      for (const auto& [token, logprob] : body.at("probs").items()) {
        if (std::find(remaining.begin(), remaining.end(), token) == remaining.end()) {
          continue;
        }
        const double lp = logprob.get<double>();
        const double p = std::exp(lp);
        if (!(p > 0.0)) {
          throw Error("non-positive probability for '" + token + "'");
        }
        out.probabilities.emplace(token, std::min(p, 1.0));
      }
      out.exhaustive = body.value("exhaustive", true);
      const auto residual = body.find("residual_logmass");
      out.residual_mass = (residual == body.end() || residual->is_null())
                              ? 0.0
                              : std::exp(residual->get<double>());
      if (out.exhaustive) out.residual_mass = 0.0;
    } catch (const std::exception& e) {
      throw Error("backend '" + descriptor_.id + "': malformed response: " + e.what());
    }
    if (descriptor_.capability == Capability::kFullDistribution) {
      for (const auto& token : remaining) {
        if (!out.probabilities.contains(token)) {
          spdlog::warn("{}: no probability returned for '{}'; excluded",
                       descriptor_.id, token);
          out.unscoreable.push_back(token);
        }
      }
    }
    break;
  }
  std::sort(out.unscoreable.begin(), out.unscoreable.end());
  out.Validate();
  return out;
}

SequenceScore HttpBackend::ScoreSequence(std::string_view text) {
  if (text.empty()) throw PreconditionError("sequence scoring needs a non-empty text");
  const json request = {{"model", options_.model}, {"text", std::string(text)}};
  const Response response = PostWithRetry("/v1/score_sequence", request.dump());
  if (response.status == 501 || response.status == 405) {
    throw CapabilityError("backend '" + descriptor_.id +
                          "' does not support sequence scoring");
  }
  const json body = json::parse(response.body, nullptr, /*allow_exceptions=*/false);
  if (response.status != 200 || body.is_discarded()) {
    throw Error("backend '" + descriptor_.id + "': bad sequence response (HTTP " +
                std::to_string(response.status) + ")");
  }
  try {
    SequenceScore score;
    score.total_log_prob = body.at("total_logprob").get<double>();
    score.token_count = body.at("token_count").get<int>();
    score.pseudo = body.value("pseudo", false);
    if (score.token_count < 1 || score.total_log_prob > 0.0) {
      throw Error("invalid sequence score");
    }
    return score;
  } catch (const json::exception& e) {
    throw Error("backend '" + descriptor_.id + "': malformed response: " + e.what());
  }
}

}  // namespace guiseprobe
