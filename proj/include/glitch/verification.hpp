#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glitch/backend.hpp"
#include "glitch/error.hpp"
#include "glitch/indicators.hpp"
#include "glitch/prompts.hpp"
#include "glitch/taxonomy.hpp"

namespace glitch {

enum class Verdict { Confirmed, NotConfirmed, Inconclusive };

std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

inline constexpr double kDefaultThreshold = 0.01;
inline constexpr int kVerificationSteps = 3;

struct VerificationResult {
    TokenId token_id = 0;
    std::map<PromptId, double> per_prompt_max;
    double max_probability = 0.0;  // over every completed prompt position
    Verdict verdict = Verdict::Inconclusive;
    std::optional<ErrorCode> error_code;
    std::string error;

    bool verified() const { return verdict == Verdict::Confirmed; }
    bool operator==(const VerificationResult&) const = default;
};

struct VerificationSummary {
    std::size_t candidates = 0;
    std::size_t tested = 0;  // excludes inconclusive results
    std::size_t confirmed = 0;
    std::size_t inconclusive = 0;

    bool operator==(const VerificationSummary&) const = default;
};

std::vector<CompletionStep> complete_greedy(const CompletionBackend& backend, std::string_view prompt,
                                            int n_steps, TokenId target);

// Renders the three verification prompts around the token, completes each
// for n_steps greedy steps and compares the largest target probability
// against `threshold`. Backend failures make the result Inconclusive.
// Throws UndecodableToken or InvalidArgument.
VerificationResult verify_candidate(const CompletionBackend& backend, const TokenizerModel& model, TokenId id,
                                    double threshold = kDefaultThreshold, int n_steps = kVerificationSteps);

struct VerifyOptions {
    double threshold = kDefaultThreshold;
    unsigned max_parallel = 4;
    int n_steps = kVerificationSteps;
};

// Verifies every candidate, at most max_parallel at a time. Results come
// back in candidate order. Ids whose taxonomy entry lacks OkForTesting are
// skipped when a taxonomy is given.
std::vector<VerificationResult> verify_set(const CompletionBackend& backend, const TokenizerModel& model,
                                           std::span<const TokenId> candidates,
                                           std::span<const TokenCategory> taxonomy = {},
                                           const VerifyOptions& options = {});

VerificationSummary summarize(std::span<const VerificationResult> results);

}  // namespace glitch
