#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zoomrl {

enum class TaskKind { detection, segmentation };

inline constexpr std::string_view kObjectPlaceholder = "{object}";

// Instruction templates for the sensing policy. The same text lives as
// assets under assets/prompts/; a test pins the two copies byte-identical.
inline constexpr std::string_view kDetectionPromptBody =
    "Find up to three different regions in the image that likely contain a high number of "
    "'{object}'.\n"
    "Even if the '{object}' are not clearly visible, infer where they are most likely to appear.\n"
    "Each region should cover multiple '{object}' and include some visual context.\n"
    "The selected regions should be as distinct as possible, with minimal or no overlap between "
    "them.\n"
    "Return the coordinates in JSON format as: {\"bbox_2d\": [x1, y1, x2, y2], \"label\": "
    "\"{object}-dense region\"}.\n"
    "Explain your reasoning in <think>...</think> and output the final result in "
    "<answer>...</answer>.\n"
    "Example: <think> thinking process here </think> <answer> JSON format here </answer>\n";

inline constexpr std::string_view kSegmentationPromptBody =
    "Identify exactly three distinct regions in the image that illustrate segmentation "
    "inaccuracies in the translucent green mask for the '{object}'.\n"
    "The selected regions should be as distinct as possible, with minimal or no overlap between "
    "them.\n"
    "Check whether the mask accurately covers the '{object}', meaning it should fully include "
    "the object without significant over-segmentation (mask extends into background) or "
    "under-segmentation (parts of the object are not covered).\n"
    "Each region should represent a clear segmentation mistake and include enough surrounding "
    "context for verification.\n"
    "Return the results in JSON format as: {\"bbox_2d\": [x1, y1, x2, y2], \"label\": "
    "\"{object} segmentation error\"}.\n"
    "Explain your reasoning in <think>...</think> and output the final result in "
    "<answer>...</answer>.\n"
    "Example: <think> reasoning process here </think> <answer> JSON format here </answer>\n";

struct PromptTemplate {
  TaskKind task_kind = TaskKind::detection;
  std::string body;

  PromptTemplate(TaskKind kind, std::string body_) : task_kind(kind), body(std::move(body_)) {
    if (body.find(kObjectPlaceholder) == std::string::npos)
      throw std::logic_error("PromptTemplate: body has no {object} placeholder");
  }
};

inline PromptTemplate detection_prompt() {
  return PromptTemplate(TaskKind::detection, std::string(kDetectionPromptBody));
}

inline PromptTemplate segmentation_prompt() {
  return PromptTemplate(TaskKind::segmentation, std::string(kSegmentationPromptBody));
}

// Replaces every placeholder occurrence; everything else is left untouched.
inline std::string render_prompt(const PromptTemplate& t, std::string_view object_name) {
  if (object_name.empty()) throw std::invalid_argument("render_prompt: empty object name");
  std::string out;
  out.reserve(t.body.size() + 4 * object_name.size());
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = t.body.find(kObjectPlaceholder, pos);
    if (hit == std::string::npos) {
      out.append(t.body, pos, std::string::npos);
      break;
    }
    out.append(t.body, pos, hit - pos);
    out.append(object_name);
    pos = hit + kObjectPlaceholder.size();
  }
  return out;
}

}  // namespace zoomrl
