#pragma once

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streetappeal/errors.hpp"

namespace streetappeal::prompt {

enum class Tier { Model1 = 1, Model2 = 2, Model3 = 3 };
enum class Persona { LR, NR };

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 7;

struct PromptModel {
  Tier tier = Tier::Model1;
  Persona persona = Persona::LR;

  /// 1, 5 or 14 criteria for Model1..Model3.
  int criteria_count() const;

  /// "model2_nr" style key, used for template files and surface labels.
  std::string key() const;

  friend auto operator<=>(const PromptModel&, const PromptModel&) = default;
};

/// All six tier x persona combinations, ordered by (tier, persona).
std::vector<PromptModel> all_models();

PromptModel model_from_key(std::string_view key);
std::string to_string(Persona p);

/// Criterion names in document (slot) order for a tier.
std::vector<std::string> criteria(Tier tier);

struct CriterionVector {
  std::vector<int> scores;

  friend bool operator==(const CriterionVector&, const CriterionVector&) = default;
};

/// Response rejections; each keeps the offending raw text for audit.
class ResponseError : public Error {
 public:
  ResponseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class ParseError : public ResponseError {
 public:
  using ResponseError::ResponseError;
};

class CountMismatch : public ResponseError {
 public:
  using ResponseError::ResponseError;
};

class RangeError : public ResponseError {
 public:
  using ResponseError::ResponseError;
};

/// Template text with {persona_role} / {persona_perspective} placeholders.
std::string_view template_text(Tier tier);

/// Template version embedded in audit logs.
inline constexpr std::string_view kTemplateVersion = "v1";

/// Full prompt for a tier and persona. Deterministic.
std::string render_prompt(const PromptModel& m);

/// Same as render_prompt but with a caller supplied template.
std::string render_template(std::string_view tmpl, Persona persona);

/// Accepts a bare integer or a bracketed comma separated list; whitespace
/// around tokens is ignored, anything else is rejected. Checks run in the
/// order syntax (ParseError), count (CountMismatch), range (RangeError).
CriterionVector parse_response(std::string_view text, int expected);

/// "[a, b, c]" for vectors, bare integer for length one.
std::string format_vector(const CriterionVector& v);

/// Weighted mean of the scores; uniform weights when none are supplied.
double aggregate(const CriterionVector& v, std::span<const double> weights = {});

}  // namespace streetappeal::prompt
