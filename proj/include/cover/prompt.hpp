#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cover/detail/text.hpp"

namespace cover {

inline constexpr std::string_view kDefaultInstructionHeader =
    "You are a stance detection assistant. For each numbered text below, determine the "
    "stance the text expresses toward its paired target. Give a brief explanation of your "
    "reasoning, then estimate the probability that the stance is favor, neutral, or "
    "against. The three probabilities must each lie between 0 and 1 and sum to 1.";

inline constexpr std::string_view kResponseSchemaBlock =
    "{\n"
    "    \"results\": [\n"
    "        {\n"
    "            \"text_id\": Text ID,\n"
    "            \"explanation\": \"A brief explanation\",\n"
    "            \"favor_probability\": probability (0 to 1),\n"
    "            \"neutral_probability\": probability (0 to 1),\n"
    "            \"against_probability\": probability (0 to 1)\n"
    "        },\n"
    "        ...\n"
    "    ]\n"
    "}";

struct PromptPair {
  int index = 0;  // 1-based text_id used in the prompt and the response
  std::string text;
  std::string target;
};

// Renders the numbered line protocol. Text and target are flattened onto a
// single line each so the pair list stays machine-parseable.
inline std::string render_prompt(std::string_view instruction_header,
                                 const std::vector<PromptPair>& pairs) {
  std::string out(instruction_header);
  out += "\n\nTexts and Targets:\n";
  for (const PromptPair& p : pairs) {
    out += std::to_string(p.index);
    out += ". Text: ";
    out += detail::flatten_newlines(p.text);
    out += "\n   Target: ";
    out += detail::flatten_newlines(p.target);
    out += "\n";
  }
  out += "\nPlease respond in the following JSON format:\n";
  out += kResponseSchemaBlock;
  out += "\n";
  return out;
}

// Inverse of render_prompt's pair section, tolerant of surrounding prose.
// Used by the scripted mock backend to see what it was asked about.
inline std::vector<PromptPair> parse_prompt_pairs(std::string_view prompt) {
  std::vector<PromptPair> pairs;
  std::size_t pos = 0;
  std::string pending_text;
  int pending_index = 0;
  bool have_pending = false;
  while (pos <= prompt.size()) {
    std::size_t eol = prompt.find('\n', pos);
    if (eol == std::string_view::npos) eol = prompt.size();
    std::string_view line = prompt.substr(pos, eol - pos);
    pos = eol + 1;

    const std::string trimmed = detail::trim(line);
    if (have_pending && trimmed.rfind("Target: ", 0) == 0) {
      pairs.push_back({pending_index, pending_text, trimmed.substr(8)});
      have_pending = false;
    } else {
      std::size_t d = 0;
      while (d < trimmed.size() && trimmed[d] >= '0' && trimmed[d] <= '9') ++d;
      if (d > 0 && trimmed.compare(d, 8, ". Text: ") == 0) {
        pending_index = std::stoi(trimmed.substr(0, d));
        pending_text = trimmed.substr(d + 8);
        have_pending = true;
      }
    }
    if (eol == prompt.size()) break;
  }
  return pairs;
}

}  // namespace cover
