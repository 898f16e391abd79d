#include "streetappeal/backend.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "streetappeal/errors.hpp"
#include "streetappeal/random.hpp"

namespace streetappeal::backend {

using nlohmann::json;

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw ConfigError("backend.max_in_flight must be >= 1");
  if (!(requests_per_minute > 0.0)) throw ConfigError("backend.requests_per_minute must be > 0");
  if (max_retries < 0) throw ConfigError("backend.max_retries must be >= 0");
  if (!(backoff_base_s >= 0.0) || !(backoff_factor >= 1.0)) throw ConfigError("backend backoff parameters invalid");
  if (kind == Kind::remote && endpoint.empty()) throw ConfigError("backend.endpoint required for remote backend");
}

std::string to_string(Kind k) { return k == Kind::remote ? "remote" : "mock"; }

Kind kind_from_string(const std::string& s) {
  if (s == "remote") return Kind::remote;
  if (s == "mock") return Kind::mock;
  throw ConfigError("unknown backend kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Mock

double MockBackend::green_fraction(const imagery::Raster& image) {
  const std::size_t n = image.pixel_count();
  if (n == 0) throw ValidationError("empty raster");
  const std::uint8_t* px = image.rgb.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i, px += 3) {
    const double chroma = double(px[1]) / (double(px[0]) + double(px[1]) + double(px[2]) + 1.0);
    sum += std::clamp((3.0 * chroma - 1.0) / 2.0, 0.0, 1.0);
  }
  return sum / double(n);
}

RawModelRating MockBackend::rate(const imagery::Panorama& pan, const prompt::PromptModel& m,
                                 const RequestHook& before_request) {
  if (before_request) before_request();
  const double g = green_fraction(pan.image);
  const double offset = m.persona == prompt::Persona::LR ? 0.0 : 1.0;
  prompt::CriterionVector v;
  for (int k = 0; k < m.criteria_count(); ++k) {
    const double raw = 1.0 + 6.0 * g + 0.3 * std::sin(double(seed_) + double(k) + offset);
    v.scores.push_back(std::clamp(static_cast<int>(std::lround(raw)), prompt::kMinScore, prompt::kMaxScore));
  }
  RawModelRating out;
  out.point_id = pan.point_id;
  out.prompt = m;
  out.raw_text = prompt::format_vector(v);
  out.vector = prompt::parse_response(out.raw_text, m.criteria_count());
  out.aggregate = prompt::aggregate(out.vector);
  out.attempt_count = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Clocks and rate limiting

Clock::duration SteadyClock::now() {
  return std::chrono::duration_cast<duration>(std::chrono::steady_clock::now().time_since_epoch());
}

void SteadyClock::sleep_until(duration t) {
  const auto d = t - now();
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

Clock::duration ManualClock::now() {
  std::lock_guard lock(mu_);
  return t_;
}

void ManualClock::sleep_until(duration t) {
  std::lock_guard lock(mu_);
  if (t > t_) t_ = t;
}

TokenBucket::TokenBucket(double requests_per_minute, Clock& clock, int burst)
    : clock_(clock), interval_s_(60.0 / requests_per_minute), tolerance_s_(0.0) {
  if (!(requests_per_minute > 0.0)) throw ConfigError("requests_per_minute must be > 0");
  if (burst < 1) throw ConfigError("burst must be >= 1");
  tolerance_s_ = (burst - 1) * interval_s_;
}

void TokenBucket::acquire() {
  double allowed_at = 0.0;
  {
    std::lock_guard lock(mu_);
    const double now = clock_.now().count();
    const double tat = std::max(theoretical_arrival_.value_or(now), now);
    allowed_at = tat - tolerance_s_;
    theoretical_arrival_ = tat + interval_s_;
  }
  clock_.sleep_until(Clock::duration(allowed_at));
}

// ---------------------------------------------------------------------------
// Remote adapter

namespace {

std::string env_or_throw(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') throw AuthError("environment variable " + name + " is not set");
  return v;
}

bool retryable_status(int status) { return status == 0 || status == 429 || (status >= 500 && status <= 599); }

}  // namespace

RemoteBackend::RemoteBackend(BackendConfig config, std::shared_ptr<http::Transport> transport, Clock& clock)
    : RemoteBackend(config, env_or_throw(config.api_key_env), std::move(transport), clock) {}

RemoteBackend::RemoteBackend(BackendConfig config, std::string api_key,
                             std::shared_ptr<http::Transport> transport, Clock& clock)
    : config_(std::move(config)), api_key_(std::move(api_key)), transport_(std::move(transport)), clock_(clock) {
  config_.validate();
}

void RemoteBackend::set_templates(std::vector<std::pair<prompt::Tier, std::string>> templates) {
  templates_ = std::move(templates);
}

std::string RemoteBackend::prompt_for(const prompt::PromptModel& m) const {
  for (const auto& [tier, text] : templates_) {
    if (tier == m.tier) return prompt::render_template(text, m.persona);
  }
  return prompt::render_prompt(m);
}

std::string RemoteBackend::build_request(const std::string& prompt_text, const std::string& png_base64) const {
  json body = {
      {"model", config_.model},
      {"max_tokens", config_.max_tokens},
      {"messages",
       json::array({{{"role", "user"},
                     {"content", json::array({{{"type", "text"}, {"text", prompt_text}},
                                              {{"type", "image_url"},
                                               {"image_url",
                                                {{"url", "data:image/png;base64," + png_base64},
                                                 {"detail", config_.image_detail}}}}})}}})}};
  if (config_.temperature) body["temperature"] = *config_.temperature;
  return body.dump();
}

std::string RemoteBackend::extract_content(const std::string& response_body) {
  json doc = json::parse(response_body, nullptr, false);
  if (doc.is_discarded()) throw prompt::ParseError("response is not JSON", response_body);
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw prompt::ParseError("response lacks choices[0].message.content", response_body);
  }
}

RawModelRating RemoteBackend::rate(const imagery::Panorama& pan, const prompt::PromptModel& m,
                                   const RequestHook& before_request) {
  const std::string body = build_request(prompt_for(m), http::base64_encode(imagery::encode_png(pan.image)));
  const http::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto jitter_rng = substream(config_.seed, std::hash<std::string>{}(pan.point_id), std::uint64_t(m.tier) * 2 +
                                                                                        std::uint64_t(m.persona));
  std::string last_raw;
  std::string last_error;
  const int max_attempts = config_.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) {
      const double delay = config_.backoff_base_s * std::pow(config_.backoff_factor, attempt - 2) *
                           (1.0 + 0.25 * uniform_unit(jitter_rng));
      clock_.sleep_for(Clock::duration(delay));
    }
    if (before_request) before_request();
    const http::Response res = transport_->post(config_.endpoint, body, "application/json", headers);
    if (res.status == 401 || res.status == 403) {
      throw AuthError("rating API rejected credentials (HTTP " + std::to_string(res.status) + ")");
    }
    if (res.status != 200) {
      last_raw = res.body;
      last_error = res.status == 0 ? "transport error: " + res.transport_error
                                   : "HTTP " + std::to_string(res.status);
      if (retryable_status(res.status)) continue;
      throw BackendExhausted(pan.point_id + "/" + m.key() + ": non-retryable " + last_error, last_raw, attempt);
    }
    try {
      last_raw = extract_content(res.body);
      RawModelRating out;
      out.point_id = pan.point_id;
      out.prompt = m;
      out.vector = prompt::parse_response(last_raw, m.criteria_count());
      out.aggregate = prompt::aggregate(out.vector);
      out.attempt_count = attempt;
      out.raw_text = last_raw;
      return out;
    } catch (const prompt::ResponseError& e) {
      last_raw = e.raw_text();
      last_error = e.what();
    }
  }
  throw BackendExhausted(pan.point_id + "/" + m.key() + ": retries exhausted (" + last_error + ")", last_raw,
                         max_attempts);
}

std::unique_ptr<RatingBackend> make_backend(const BackendConfig& config, Clock& clock) {
  config.validate();
  if (config.kind == Kind::mock) return std::make_unique<MockBackend>(config.seed);
  return std::make_unique<RemoteBackend>(config, http::make_transport(std::chrono::seconds(config.timeout_s)),
                                         clock);
}

// ---------------------------------------------------------------------------
// Batch orchestration

std::vector<BatchItem> batch_rate(RatingBackend& backend,
                                  std::span<const std::pair<std::string, prompt::PromptModel>> work,
                                  const PanoramaLoader& load, const BackendConfig& config, Clock& clock) {
  config.validate();
  if (work.empty()) throw ConfigError("batch_rate needs at least one (point, prompt) pair");

  // One group per point so each panorama is loaded once.
  std::map<std::string, std::vector<prompt::PromptModel>> groups;
  for (const auto& [id, m] : work) groups[id].push_back(m);
  std::vector<std::pair<std::string, std::vector<prompt::PromptModel>>> queue(groups.begin(), groups.end());

  TokenBucket bucket(config.requests_per_minute, clock);
  std::vector<std::vector<BatchItem>> results(queue.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto worker = [&] {
    while (!abort) {
      const std::size_t gi = next.fetch_add(1);
      if (gi >= queue.size()) return;
      const auto& [point_id, models] = queue[gi];
      auto& out = results[gi];
      std::optional<imagery::Panorama> pan;
      std::string load_error;
      try {
        pan = load(point_id);
      } catch (const std::exception& e) {
        load_error = std::string("panorama unavailable: ") + e.what();
      }
      for (const auto& m : models) {
        BatchItem item;
        item.point_id = point_id;
        item.prompt = m;
        if (!pan) {
          item.error = load_error;
          out.push_back(std::move(item));
          continue;
        }
        const auto start = std::chrono::steady_clock::now();
        try {
          item.rating = backend.rate(*pan, m, [&] { bucket.acquire(); });
          item.attempts = item.rating->attempt_count;
          item.last_raw_text = item.rating->raw_text;
        } catch (const BackendExhausted& e) {
          item.error = e.what();
          item.last_raw_text = e.last_raw_text();
          item.attempts = e.attempts();
        } catch (const AuthError&) {
          std::lock_guard lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
          abort = true;
          return;
        } catch (const std::exception& e) {
          item.error = e.what();
        }
        item.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.push_back(std::move(item));
      }
    }
  };

  const auto n_workers = std::min<std::size_t>(std::size_t(config.max_in_flight), queue.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  std::vector<BatchItem> flat;
  for (auto& r : results) {
    for (auto& item : r) flat.push_back(std::move(item));
  }
  std::sort(flat.begin(), flat.end(), [](const BatchItem& a, const BatchItem& b) {
    return std::tie(a.point_id, a.prompt) < std::tie(b.point_id, b.prompt);
  });
  return flat;
}

std::vector<BatchItem> batch_rate(RatingBackend& backend, std::span<const imagery::Panorama> pans,
                                  std::span<const prompt::PromptModel> models, const BackendConfig& config,
                                  Clock& clock) {
  if (pans.empty() || models.empty()) throw ConfigError("batch_rate needs panoramas and prompt models");
  std::map<std::string, const imagery::Panorama*> by_id;
  std::vector<std::pair<std::string, prompt::PromptModel>> work;
  for (const auto& p : pans) {
    by_id[p.point_id] = &p;
    for (const auto& m : models) work.emplace_back(p.point_id, m);
  }
  return batch_rate(
      backend, work, [&](const std::string& id) { return *by_id.at(id); }, config, clock);
}

}  // namespace streetappeal::backend
