#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetappeal/http.hpp"
#include "streetappeal/imagery.hpp"
#include "streetappeal/prompt.hpp"

namespace streetappeal::backend {

enum class Kind { remote, mock };

struct BackendConfig {
  Kind kind = Kind::mock;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_in_flight = 4;
  double requests_per_minute = 60.0;
  int max_retries = 3;
  std::uint64_t seed = 0;
  // Generation parameters; logged with every rating.
  std::optional<double> temperature;
  int max_tokens = 64;
  std::string image_detail = "auto";
  int timeout_s = 120;
  double backoff_base_s = 1.0;
  double backoff_factor = 2.0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

std::string to_string(Kind k);
Kind kind_from_string(const std::string& s);

struct RawModelRating {
  std::string point_id;
  prompt::PromptModel prompt;
  prompt::CriterionVector vector;
  double aggregate = 0.0;
  int attempt_count = 0;
  std::string raw_text;

  friend bool operator==(const RawModelRating&, const RawModelRating&) = default;
};

/// Invoked immediately before every outbound request (including retries).
using RequestHook = std::function<void()>;

class RatingBackend {
 public:
  virtual ~RatingBackend() = default;
  virtual RawModelRating rate(const imagery::Panorama& pan, const prompt::PromptModel& m,
                              const RequestHook& before_request = {}) = 0;
};

/// Deterministic stand-in for a multimodal model: greener panoramas score higher.
///
/// Per pixel the excess green chromaticity is e = clamp((3G/(R+G+B+1) - 1)/2, 0, 1)
/// and g is its mean over the panorama. Criterion k (0-based) scores
/// clamp(round(1 + 6g + 0.3 sin(seed + k + offset)), 1, 7) with offset 0 for
/// LR and 1 for NR. Pure grey gives g = 0, pure green g ~ 1.
class MockBackend final : public RatingBackend {
 public:
  explicit MockBackend(std::uint64_t seed) : seed_(seed) {}
  RawModelRating rate(const imagery::Panorama& pan, const prompt::PromptModel& m,
                      const RequestHook& before_request = {}) override;

  static double green_fraction(const imagery::Raster& image);

 private:
  std::uint64_t seed_;
};

class Clock {
 public:
  using duration = std::chrono::duration<double>;
  virtual ~Clock() = default;
  virtual duration now() = 0;
  virtual void sleep_until(duration t) = 0;
  void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
 public:
  duration now() override;
  void sleep_until(duration t) override;
};

/// Virtual time for tests: sleeping advances the clock instantly.
class ManualClock final : public Clock {
 public:
  duration now() override;
  void sleep_until(duration t) override;

 private:
  std::mutex mu_;
  duration t_{0.0};
};

/// Generic cell rate limiter; thread-safe. With burst = 1 consecutive grants
/// are spaced exactly 60 / requests_per_minute seconds apart.
class TokenBucket {
 public:
  TokenBucket(double requests_per_minute, Clock& clock, int burst = 1);
  void acquire();

 private:
  Clock& clock_;
  double interval_s_;
  double tolerance_s_;
  std::mutex mu_;
  std::optional<double> theoretical_arrival_;
};

/// OpenAI-style chat completions adapter. Only this class knows the wire schema.
class RemoteBackend final : public RatingBackend {
 public:
  /// Reads the API key from the configured environment variable; throws
  /// AuthError when it is unset.
  RemoteBackend(BackendConfig config, std::shared_ptr<http::Transport> transport, Clock& clock);
  RemoteBackend(BackendConfig config, std::string api_key, std::shared_ptr<http::Transport> transport,
                Clock& clock);

  RawModelRating rate(const imagery::Panorama& pan, const prompt::PromptModel& m,
                      const RequestHook& before_request = {}) override;

  /// Request body for one rating.
  std::string build_request(const std::string& prompt_text, const std::string& png_base64) const;

  /// Message text of a chat completion response; throws ParseError on schema mismatch.
  static std::string extract_content(const std::string& response_body);

  /// Optional override of the built-in prompt templates (tier -> text).
  void set_templates(std::vector<std::pair<prompt::Tier, std::string>> templates);

 private:
  std::string prompt_for(const prompt::PromptModel& m) const;

  BackendConfig config_;
  std::string api_key_;
  std::shared_ptr<http::Transport> transport_;
  Clock& clock_;
  std::vector<std::pair<prompt::Tier, std::string>> templates_;
};

std::unique_ptr<RatingBackend> make_backend(const BackendConfig& config, Clock& clock);

struct BatchItem {
  std::string point_id;
  prompt::PromptModel prompt;
  std::optional<RawModelRating> rating;
  std::string error;
  std::string last_raw_text;
  int attempts = 0;
  double elapsed_s = 0.0;

  bool ok() const { return rating.has_value(); }
};

using PanoramaLoader = std::function<imagery::Panorama(const std::string& point_id)>;

/// Rates requested (point, model) pairs with at most max_in_flight concurrent
/// requests and a shared token bucket. Failures are recorded per item.
/// Output is sorted by (point_id, tier, persona).
std::vector<BatchItem> batch_rate(RatingBackend& backend,
                                  std::span<const std::pair<std::string, prompt::PromptModel>> work,
                                  const PanoramaLoader& load, const BackendConfig& config, Clock& clock);

/// Cross product of in-memory panoramas and prompt models.
std::vector<BatchItem> batch_rate(RatingBackend& backend, std::span<const imagery::Panorama> pans,
                                  std::span<const prompt::PromptModel> models, const BackendConfig& config,
                                  Clock& clock);

}  // namespace streetappeal::backend
