#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "glitch/matrix.hpp"
#include "glitch/tokenizer.hpp"

namespace glitch {

struct CompletionStep {
    int position = 0;
    TokenId chosen_id = -1;  // -1 when the backend's token has no single id
    double target_probability = 0.0;
};

// A temperature-zero completion source. Implementations must be callable
// from several threads at once.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;

    // Generates n_steps tokens greedily after `prompt`, reporting at each
    // position the probability assigned to `target`.
    virtual std::vector<CompletionStep> complete_greedy(std::string_view prompt, int n_steps,
                                                        TokenId target) const = 0;
};

// ---------------------------------------------------------------------------
// Synthetic softmax "model" over an output embedding matrix.
//
// Hidden state at step k:
//   h_0 = copy_gain * unit(E[t]) * [prompt contains t's text]
//       + background_gain * g - untrained_gain * u
//   h_k = h_0 + continuation_gain * unit(E[c_{k-1}])
// with t the target, u the unit untrained reference direction, g the unit
// mean vocabulary row with its u component removed, and c_{k-1} the token
// chosen at the previous step. Logits are E[0:V] . h; the greedy choice is
// the arg max, lowest id on ties.
struct SyntheticParams {
    double copy_gain = 16.0;
    double background_gain = 30.0;
    double untrained_gain = 0.0;
    double continuation_gain = 4.0;
};

class SyntheticSoftmaxBackend final : public CompletionBackend {
public:
    SyntheticSoftmaxBackend(std::shared_ptr<const TokenizerModel> model, std::shared_ptr<const Matrix> e_out,
                            std::vector<double> untrained_direction, SyntheticParams params = {});

    std::vector<CompletionStep> complete_greedy(std::string_view prompt, int n_steps, TokenId target) const override;

    // Next-token distribution over [0, vocab_size) given the prompt, the
    // target and the previously chosen tokens.
    std::vector<double> distribution(std::string_view prompt, TokenId target,
                                     const std::vector<TokenId>& generated) const;

    const SyntheticParams& params() const { return params_; }

private:
    std::vector<double> unit_row(TokenId id) const;

    std::shared_ptr<const TokenizerModel> model_;
    std::shared_ptr<const Matrix> e_out_;
    std::vector<double> direction_;
    std::vector<double> background_;
    SyntheticParams params_;
};

// ---------------------------------------------------------------------------
// HTTP completion endpoint speaking the legacy completions protocol:
//   POST {"prompt", "max_tokens", "temperature": 0, "logprobs": K}
//   -> {"choices": [{"logprobs": {"tokens": [...], "top_logprobs": [{tok: lp}, ...]}}]}
struct HttpBackendOptions {
    std::string url;  // scheme://host[:port]/path
    std::string model_name;
    int top_logprobs = 20;
    double timeout_seconds = 60.0;
    int retries = 3;
    double backoff_initial_seconds = 1.0;
    std::string auth_env;  // environment variable holding a bearer token
};

class HttpCompletionBackend final : public CompletionBackend {
public:
    HttpCompletionBackend(std::shared_ptr<const TokenizerModel> model, HttpBackendOptions options);

    std::vector<CompletionStep> complete_greedy(std::string_view prompt, int n_steps, TokenId target) const override;

    // Parses a response body; exposed for protocol tests.
    std::vector<CompletionStep> parse_response(std::string_view body, int n_steps, TokenId target) const;

private:
    std::shared_ptr<const TokenizerModel> model_;
    HttpBackendOptions options_;
    std::string base_;
    std::string path_;
};

struct BackendDescriptor {
    enum class Kind { HttpCompletion, SyntheticSoftmax };
    Kind kind = Kind::SyntheticSoftmax;
    unsigned max_parallel = 4;
    HttpBackendOptions http;  // endpoint, timeout, auth
    SyntheticParams synthetic;
};

}  // namespace glitch
