#include "glitch/verification.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace glitch {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Confirmed: return "Confirmed";
        case Verdict::NotConfirmed: return "NotConfirmed";
        case Verdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
    for (const Verdict v : {Verdict::Confirmed, Verdict::NotConfirmed, Verdict::Inconclusive}) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

std::vector<CompletionStep> complete_greedy(const CompletionBackend& backend, std::string_view prompt,
                                            int n_steps, TokenId target) {
    if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be at least 1");
    auto steps = backend.complete_greedy(prompt, n_steps, target);
    for (const auto& s : steps) {
        if (!std::isfinite(s.target_probability) || s.target_probability < 0.0 || s.target_probability > 1.0 + 1e-12) {
            throw Error(ErrorCode::ProtocolError, "backend reported an invalid probability");
        }
    }
    return steps;
}

VerificationResult verify_candidate(const CompletionBackend& backend, const TokenizerModel& model, TokenId id,
                                    double threshold, int n_steps) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
    }
    const std::string& bytes = model.decode_token(id).raw_bytes;
    std::vector<std::string> prompts;
    for (const PromptId p : kVerificationPrompts) prompts.push_back(render_prompt(prompt_template(p), bytes));

    VerificationResult result;
    result.token_id = id;
    bool failed = false;
    for (std::size_t k = 0; k < prompts.size(); ++k) {
        try {
            const auto steps = complete_greedy(backend, prompts[k], n_steps, id);
            double best = 0.0;
            for (const auto& s : steps) best = std::max(best, s.target_probability);
            result.per_prompt_max[kVerificationPrompts[k]] = best;
            result.max_probability = std::max(result.max_probability, best);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidArgument) throw;
            failed = true;
            if (!result.error_code) {
                result.error_code = e.code();
                result.error = e.what();
            }
        }
    }
    if (failed) {
        result.verdict = Verdict::Inconclusive;
    } else {
        result.verdict = result.max_probability < threshold ? Verdict::Confirmed : Verdict::NotConfirmed;
    }
    return result;
}

std::vector<VerificationResult> verify_set(const CompletionBackend& backend, const TokenizerModel& model,
                                           std::span<const TokenId> candidates,
                                           std::span<const TokenCategory> taxonomy, const VerifyOptions& options) {
    std::vector<TokenId> ids;
    for (const TokenId id : candidates) {
        if (!taxonomy.empty()) {
            if (id < 0 || static_cast<std::size_t>(id) >= taxonomy.size()) {
                throw Error(ErrorCode::IdOutOfRange, "candidate id " + std::to_string(id) + " outside the taxonomy");
            }
            if (!taxonomy[static_cast<std::size_t>(id)].has(TokenFlag::OkForTesting)) continue;
        }
        ids.push_back(id);
    }
    std::vector<VerificationResult> results(ids.size());
    const std::size_t workers = std::min<std::size_t>(std::max(1u, options.max_parallel), ids.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < ids.size(); i = next++) {
                    try {
                        results[i] = verify_candidate(backend, model, ids[i], options.threshold, options.n_steps);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

VerificationSummary summarize(std::span<const VerificationResult> results) {
    VerificationSummary s;
    s.candidates = results.size();
    for (const auto& r : results) {
        if (r.verdict == Verdict::Inconclusive) {
            ++s.inconclusive;
        } else {
            ++s.tested;
            if (r.verdict == Verdict::Confirmed) ++s.confirmed;
        }
    }
    return s;
}

}  // namespace glitch
