#include "streetappeal/prompt.hpp"

#include <cctype>
#include <limits>
#include <numeric>

namespace streetappeal::prompt {

namespace {

constexpr std::string_view kPrompt1 =
    R"(Imagine you are a {persona_role}, Finland {persona_perspective} a typical local perspective on aesthetics and environment. Based on the panoramic image provided, rate the overall visual appeal and functionality of this specific location on a scale of 1 (completely unappealing) to 7 (completely appealing).

Please exclude temporary elements such as weather or passing vehicles. Consider the image as if you're experiencing the environment in person and not just as a viewer of a photograph.

You must not provide any rationale or any conversation. I only need one integer number between 1 to 7.
)";

constexpr std::string_view kPrompt2 =
    R"(Imagine you are a {persona_role}, Finland {persona_perspective} a typical local perspective on aesthetics and environment. Based on the panoramic image provided, rate the overall visual appeal and functionality of this specific location on a scale of 1 (completely unappealing) to 7 (completely appealing). Focus your assessment on the following criteria:

- **Sidewalk Features for Pedestrian Activity:** Assess the design and features of the sidewalks. Consider aspects like width, surface condition, pedestrian signage, and accessibility features (e.g., curb cuts, tactile paving) that facilitate comfort and activity.
- **Street Design for Traffic and Activity:** Evaluate the street layout and design. Focus on street width, lane markings, traffic calming measures (e.g., speed bumps, pedestrian crossings), and the integration of cycle paths or public transit stops, assessing how these features impact traffic flow and pedestrian interaction.
- **Tree Canopy and Greenery:** Consider the presence of greenery and its contribution to the area's ambiance, irrespective of seasonal changes.
- **Physical Indicators of Human Activity:** Assess features indicating a space designed for human activity, such as street furniture, public space design, and amenities like water fountains and public art, reflecting potential vibrancy and safety.
- **Permanent Lighting:** Examine the placement and design of lighting fixtures, disregarding temporary effects of natural lighting due to weather conditions.

Please exclude temporary elements such as weather or passing vehicles. Consider the image as if you're experiencing the environment in person and not just as a viewer of a photograph.

You must not provide any rationale or any conversation. I only need one integer number between 1 to 7 per criterion in the format of [##, ##, ##, ##, ##].
)";

// "rational" in the closing clause is kept as originally worded.
constexpr std::string_view kPrompt3 =
    R"(Imagine you are a {persona_role}, Finland {persona_perspective} a typical local perspective on aesthetics and environment. Based on the panoramic image provided, rate the overall visual appeal and functionality of this specific location on a scale of 1 (completely unappealing) to 7 (completely appealing). Focus your assessment on the following criteria:

Enduring Physical Features:

- **Sidewalk Features for Pedestrian Activity:** Assess the design and features of the sidewalks. Consider aspects like width, surface condition, pedestrian signage, and accessibility features (e.g., curb cuts, tactile paving) that facilitate comfort and activity.
- **Street Design for Traffic and Activity:** Evaluate the street layout and design. Focus on street width, lane markings, traffic calming measures (e.g., speed bumps, pedestrian crossings), and the integration of cycle paths or public transit stops, assessing how these features impact traffic flow and pedestrian interaction.
- **Tree Canopy and Greenery:** Consider the presence of greenery and its contribution to the area's ambiance, irrespective of seasonal changes.
- **Physical Indicators of Human Activity:** Assess features indicating a space designed for human activity, such as street furniture, public space design, and amenities like water fountains and public art, reflecting potential vibrancy and safety.
- **Permanent Lighting:** Examine the placement and design of lighting fixtures, disregarding temporary effects of natural lighting due to weather conditions.

Urban Design Qualities:

- Imageability: Determine the visual distinctiveness and memorability of the environment.
- Legibility: Evaluate how easily one can understand and navigate the spatial layout.
- Enclosure: Consider the sense of spatial definition provided by buildings and natural elements.
- Human Scale: Observe how the proportions of space and elements align with human dimensions for comfort.
- Transparency: Assess the visibility and perceived openness of space, including sightlines and visual connections.
- Linkage: Analyze how different spaces within the image are connected to facilitate movement and interaction.
- Complexity: Reflect on the variety and visual richness of the environment.
- Coherence: Judge the consistency and unity of the urban design elements.

Subjective Reaction: Contemplate your instinctive response to the area's appeal, considering the potential for enjoyment and engagement with the space.

Please exclude temporary elements such as weather or passing vehicles. Provide a balanced assessment without leaning towards an overly positive or negative evaluation. Consider the image as if you're experiencing the environment in person and not just as a viewer of a photograph.

You must not provide any rational or any conversation. I only need one integer number between 1 to 7 per criterion in the format of [##, ##, ##, ##, ##, ##, ##, ##, ##, ##, ##, ##, ##, ##].
)";

const std::vector<std::string> kPhysicalFeatures = {
    "Sidewalk Features for Pedestrian Activity", "Street Design for Traffic and Activity",
    "Tree Canopy and Greenery", "Physical Indicators of Human Activity", "Permanent Lighting"};

const std::vector<std::string> kDesignQualities = {"Imageability", "Legibility",   "Enclosure",
                                                   "Human Scale",  "Transparency", "Linkage",
                                                   "Complexity",   "Coherence"};

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Optional leading minus so negative integers surface as range errors.
bool is_integer_token(std::string_view s) {
  if (!s.empty() && s.front() == '-') s.remove_prefix(1);
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

int PromptModel::criteria_count() const {
  switch (tier) {
    case Tier::Model1: return 1;
    case Tier::Model2: return 5;
    case Tier::Model3: return 14;
  }
  return 0;
}

std::string PromptModel::key() const {
  return "model" + std::to_string(static_cast<int>(tier)) + (persona == Persona::LR ? "_lr" : "_nr");
}

std::vector<PromptModel> all_models() {
  std::vector<PromptModel> out;
  for (Tier t : {Tier::Model1, Tier::Model2, Tier::Model3}) {
    for (Persona p : {Persona::LR, Persona::NR}) out.push_back({t, p});
  }
  return out;
}

PromptModel model_from_key(std::string_view key) {
  for (const auto& m : all_models()) {
    if (m.key() == key) return m;
  }
  throw ValidationError("unknown prompt model '" + std::string(key) + "'");
}

std::string to_string(Persona p) { return p == Persona::LR ? "LR" : "NR"; }

std::vector<std::string> criteria(Tier tier) {
  switch (tier) {
    case Tier::Model1: return {"Overall visual appeal"};
    case Tier::Model2: return kPhysicalFeatures;
    case Tier::Model3: {
      auto out = kPhysicalFeatures;
      out.insert(out.end(), kDesignQualities.begin(), kDesignQualities.end());
      out.emplace_back("Subjective Reaction");
      return out;
    }
  }
  return {};
}

std::string_view template_text(Tier tier) {
  switch (tier) {
    case Tier::Model1: return kPrompt1;
    case Tier::Model2: return kPrompt2;
    case Tier::Model3: return kPrompt3;
  }
  return {};
}

std::string render_template(std::string_view tmpl, Persona persona) {
  std::string out(tmpl);
  replace_all(out, "{persona_role}",
              persona == Persona::LR ? "human resident of Helsinki" : "human tourist in Helsinki");
  replace_all(out, "{persona_perspective}", persona == Persona::LR ? "with" : "without");
  return out;
}

std::string render_prompt(const PromptModel& m) { return render_template(template_text(m.tier), m.persona); }

CriterionVector parse_response(std::string_view text, int expected) {
  const std::string raw(text);
  if (expected != 1 && expected != 5 && expected != 14) {
    throw ConfigError("expected criteria count must be 1, 5 or 14");
  }
  std::string_view body = trim(text);
  std::vector<std::string_view> tokens;
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']') throw ParseError("unterminated list", raw);
    body = trim(body.substr(1, body.size() - 2));
    if (!body.empty()) {
      std::size_t start = 0;
      while (true) {
        const auto comma = body.find(',', start);
        tokens.push_back(trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }
  } else {
    tokens.push_back(body);
  }
  CriterionVector v;
  for (auto tok : tokens) {
    if (!is_integer_token(tok)) throw ParseError("not an integer token: '" + std::string(tok) + "'", raw);
    // Long digit strings are integers too, just far out of range.
    const bool negative = tok.front() == '-';
    v.scores.push_back(tok.size() - (negative ? 1 : 0) > 9 ? (negative ? std::numeric_limits<int>::min()
                                                                       : std::numeric_limits<int>::max())
                                                           : std::stoi(std::string(tok)));
  }
  if (static_cast<int>(v.scores.size()) != expected) {
    throw CountMismatch("expected " + std::to_string(expected) + " values, got " +
                            std::to_string(v.scores.size()),
                        raw);
  }
  for (int s : v.scores) {
    if (s < kMinScore || s > kMaxScore) throw RangeError("score " + std::to_string(s) + " outside [1, 7]", raw);
  }
  return v;
}

std::string format_vector(const CriterionVector& v) {
  if (v.scores.size() == 1) return std::to_string(v.scores.front());
  std::string out = "[";
  for (std::size_t i = 0; i < v.scores.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v.scores[i]);
  }
  return out + "]";
}

double aggregate(const CriterionVector& v, std::span<const double> weights) {
  if (v.scores.empty()) throw ValidationError("cannot aggregate an empty criterion vector");
  if (weights.empty()) {
    return std::accumulate(v.scores.begin(), v.scores.end(), 0.0) / double(v.scores.size());
  }
  if (weights.size() != v.scores.size()) throw ConfigError("weight vector length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    num += weights[i] * v.scores[i];
    den += weights[i];
  }
  if (!(den > 0.0)) throw ConfigError("weights must sum to a positive value");
  return num / den;
}

}  // namespace streetappeal::prompt
