#pragma once

#include <chrono>
#include <string>

#include "guiseprobe/backend.hpp"

namespace guiseprobe {

struct HttpBackendOptions {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  std::string model;     // sent as "model" in every request
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
  // Name of the environment variable holding a bearer token, if any.
  std::string api_key_env = "GUISEPROBE_API_KEY";
};

// Client of the scoring wire protocol:
//   POST /v1/score_continuations {model, prompt, candidates[], confine}
//     -> {probs: {token: logprob}, exhaustive, residual_logmass}
//   POST /v1/score_sequence {model, text}
//     -> {total_logprob, token_count, pseudo}
// Log-probabilities are exponentiated here. A 422 response listing
// "unscoreable" candidates drops them and re-requests the rest. Transport
// failures and 5xx responses are retried with exponential backoff.
class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendDescriptor descriptor, HttpBackendOptions options);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  ContinuationScores ScoreContinuations(
      std::string_view prompt, std::span<const std::string> candidates) override;
  SequenceScore ScoreSequence(std::string_view text) override;

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response PostWithRetry(const std::string& path, const std::string& body) const;

  BackendDescriptor descriptor_;
  HttpBackendOptions options_;
};

}  // namespace guiseprobe
