#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace glitch {

enum class PromptId { RepeaterDevice, MeaningAssistant, RepeatedPhrase, ApiPasswordProbe };

std::string_view to_string(PromptId id);

struct PromptTemplate {
    PromptId id;
    std::string_view body;  // contains kTokenPlaceholder
};

inline constexpr std::string_view kTokenPlaceholder = "<token>";

const PromptTemplate& prompt_template(PromptId id);

// The three repetition prompts used for verification, in order.
inline constexpr PromptId kVerificationPrompts[] = {PromptId::RepeaterDevice, PromptId::MeaningAssistant,
                                                    PromptId::RepeatedPhrase};

// Replaces every placeholder with the token's bytes. Throws UndecodableToken
// for empty or invalid UTF-8 token bytes.
std::string render_prompt(const PromptTemplate& tmpl, std::string_view token_bytes);

struct ProbeEntry {
    std::string label;  // e.g. "Llama2:"
    std::string token;  // token bytes, often with a leading space
};

// Code-reformatting probe for chat APIs: a `passwords = [...]` list with
// `per_line` label-prefixed elements per line. Throws EmptyProbe.
std::string build_api_probe(const std::vector<ProbeEntry>& entries, std::size_t per_line = 3);

}  // namespace glitch
