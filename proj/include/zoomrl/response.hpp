#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zoomrl/expected.hpp"
#include "zoomrl/geometry.hpp"
#include "zoomrl/prompts.hpp"

namespace zoomrl {

// One bbox proposal as it appears in the answer JSON, before any
// frame binding: raw (possibly fractional) numbers plus a label.
struct RawProposal {
  std::array<double, 4> bbox{};
  std::string label;

  friend bool operator==(const RawProposal&, const RawProposal&) = default;
};

// Parsed policy response: the <think> block, the <answer> block, and the
// proposals extracted from the answer JSON, in source order.
struct StructuredResponse {
  std::string think_text;
  std::string answer_text;
  std::vector<RawProposal> proposals;

  friend bool operator==(const StructuredResponse&, const StructuredResponse&) = default;
};

enum class FormatErrorKind {
  MissingThink,
  MissingAnswer,
  TagOrder,
  DuplicateTags,
  InvalidJson,
  MissingBboxField,
  BadArity,
  NonFiniteNumber,
};

struct FormatError {
  FormatErrorKind kind = FormatErrorKind::MissingThink;
  std::string detail;
};

inline const char* to_string(FormatErrorKind k) {
  switch (k) {
    case FormatErrorKind::MissingThink: return "MissingThink";
    case FormatErrorKind::MissingAnswer: return "MissingAnswer";
    case FormatErrorKind::TagOrder: return "TagOrder";
    case FormatErrorKind::DuplicateTags: return "DuplicateTags";
    case FormatErrorKind::InvalidJson: return "InvalidJson";
    case FormatErrorKind::MissingBboxField: return "MissingBboxField";
    case FormatErrorKind::BadArity: return "BadArity";
    case FormatErrorKind::NonFiniteNumber: return "NonFiniteNumber";
  }
  return "?";
}

namespace detail {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Drops a leading ``` fence line (optionally ```json etc.) and a trailing
// ``` line, if both are present after trimming.
inline std::string_view strip_code_fence(std::string_view s) {
  s = trim(s);
  if (s.size() < 6 || s.substr(0, 3) != "```") return s;
  const std::size_t nl = s.find('\n');
  if (nl == std::string_view::npos) return s;
  const std::size_t close = s.rfind("```");
  if (close <= nl) return s;
  return trim(s.substr(nl + 1, close - nl - 1));
}

}  // namespace detail

// Extracts the <think>/<answer> blocks and parses the answer as a JSON array
// of {"bbox_2d": [x1,y1,x2,y2], "label": ...} objects. On failure the error
// names the first violated rule; the function itself never throws on
// arbitrary input.
inline Expected<StructuredResponse, FormatError> parse_response(std::string_view text) {
  using namespace detail;
  using E = Expected<StructuredResponse, FormatError>;

  const std::size_t think_open = text.find(kThinkOpen);
  const std::size_t think_close =
      think_open == std::string_view::npos ? std::string_view::npos
                                           : text.find(kThinkClose, think_open + kThinkOpen.size());
  if (think_open == std::string_view::npos || think_close == std::string_view::npos)
    return E(FormatError{FormatErrorKind::MissingThink, "no <think>...</think> block"});

  const std::size_t answer_open = text.find(kAnswerOpen);
  const std::size_t answer_close =
      answer_open == std::string_view::npos
          ? std::string_view::npos
          : text.find(kAnswerClose, answer_open + kAnswerOpen.size());
  if (answer_open == std::string_view::npos || answer_close == std::string_view::npos)
    return E(FormatError{FormatErrorKind::MissingAnswer, "no <answer>...</answer> block"});

  if (answer_open < think_close + kThinkClose.size())
    return E(FormatError{FormatErrorKind::TagOrder, "<answer> does not follow </think>"});

  const auto count = [&](std::string_view tag) {
    std::size_t n = 0, pos = 0;
    while ((pos = text.find(tag, pos)) != std::string_view::npos) {
      ++n;
      pos += tag.size();
    }
    return n;
  };
  // "</think>" contains no "<think>" substring and likewise for answer, so
  // counting occurrences of each literal is unambiguous.
  if (count(kThinkOpen) != 1 || count(kThinkClose) != 1 || count(kAnswerOpen) != 1 ||
      count(kAnswerClose) != 1)
    return E(FormatError{FormatErrorKind::DuplicateTags, "repeated tag"});

  StructuredResponse out;
  out.think_text = std::string(
      text.substr(think_open + kThinkOpen.size(), think_close - think_open - kThinkOpen.size()));
  out.answer_text = std::string(text.substr(answer_open + kAnswerOpen.size(),
                                            answer_close - answer_open - kAnswerOpen.size()));

  const std::string_view payload = strip_code_fence(out.answer_text);
  const nlohmann::json doc = nlohmann::json::parse(payload, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_array())
    return E(FormatError{FormatErrorKind::InvalidJson, "answer is not a JSON array"});

  for (const auto& el : doc) {
    if (!el.is_object() || !el.contains("bbox_2d"))
      return E(FormatError{FormatErrorKind::MissingBboxField, "element without bbox_2d"});
    const auto& bb = el["bbox_2d"];
    if (!bb.is_array() || bb.size() != 4)
      return E(FormatError{FormatErrorKind::BadArity, "bbox_2d length != 4"});
    RawProposal p;
    for (std::size_t i = 0; i < 4; ++i) {
      if (!bb[i].is_number())
        return E(FormatError{FormatErrorKind::NonFiniteNumber, "bbox_2d entry is not a number"});
      p.bbox[i] = bb[i].get<double>();
      if (!std::isfinite(p.bbox[i]))
        return E(FormatError{FormatErrorKind::NonFiniteNumber, "bbox_2d entry is not finite"});
    }
    if (el.contains("label") && el["label"].is_string()) p.label = el["label"].get<std::string>();
    out.proposals.push_back(std::move(p));
  }
  return E(std::move(out));
}

// Renders proposals back to the tag + JSON wire form. parse_response of the
// result reproduces the input response (answer_text is the rendered JSON).
inline std::string serialize_response(const std::string& think_text,
                                      const std::vector<RawProposal>& proposals) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : proposals) {
    nlohmann::json el;
    el["bbox_2d"] = {p.bbox[0], p.bbox[1], p.bbox[2], p.bbox[3]};
    el["label"] = p.label;
    arr.push_back(std::move(el));
  }
  return "<think>" + think_text + "</think><answer>" + arr.dump() + "</answer>";
}

enum class ValidationErrorKind { OutOfFrame, Inverted, CountViolation };

struct ValidationError {
  ValidationErrorKind kind = ValidationErrorKind::CountViolation;
  int proposal_index = -1;
  std::string detail;
};

inline const char* to_string(ValidationErrorKind k) {
  switch (k) {
    case ValidationErrorKind::OutOfFrame: return "OutOfFrame";
    case ValidationErrorKind::Inverted: return "Inverted";
    case ValidationErrorKind::CountViolation: return "CountViolation";
  }
  return "?";
}

// Binds raw proposals to a frame: coordinates truncated toward zero, corner
// order and frame bounds checked, proposal count constrained to
// [k_min, k_max].
inline Expected<std::vector<BBox>, ValidationError> validate_proposals(
    const StructuredResponse& r, int frame_w, int frame_h, int k_min, int k_max) {
  using E = Expected<std::vector<BBox>, ValidationError>;
  const int n = static_cast<int>(r.proposals.size());
  if (n < k_min || n > k_max)
    return E(ValidationError{ValidationErrorKind::CountViolation, -1,
                             "proposal count " + std::to_string(n) + " outside [" +
                                 std::to_string(k_min) + ", " + std::to_string(k_max) + "]"});
  std::vector<BBox> out;
  out.reserve(r.proposals.size());
  for (int i = 0; i < n; ++i) {
    const auto& p = r.proposals[i].bbox;
    const int x1 = static_cast<int>(std::trunc(p[0]));
    const int y1 = static_cast<int>(std::trunc(p[1]));
    const int x2 = static_cast<int>(std::trunc(p[2]));
    const int y2 = static_cast<int>(std::trunc(p[3]));
    if (x1 > x2 || y1 > y2)
      return E(ValidationError{ValidationErrorKind::Inverted, i, "inverted corners"});
    if (x1 < 0 || y1 < 0 || x2 >= frame_w || y2 >= frame_h)
      return E(ValidationError{ValidationErrorKind::OutOfFrame, i, "box outside frame"});
    out.push_back(BBox(x1, y1, x2, y2));
  }
  return E(std::move(out));
}

// Proposal-count bounds implied by the prompt wording: detection asks for
// "up to three" regions, segmentation for "exactly three".
inline void proposal_count_bounds(TaskKind kind, int& k_min, int& k_max) {
  if (kind == TaskKind::detection) {
    k_min = 1;
    k_max = 3;
  } else {
    k_min = 3;
    k_max = 3;
  }
}

}  // namespace zoomrl
