#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "glitch/error.hpp"
#include "glitch/fixture.hpp"
#include "glitch/verification.hpp"
#include "oracles.hpp"

using namespace glitch;

namespace {

// Probabilities chosen per prompt by a marker in the prompt text.
class ScriptedBackend final : public CompletionBackend {
public:
    std::map<TokenId, std::vector<double>> per_prompt;  // RepeaterDevice, MeaningAssistant, RepeatedPhrase
    std::map<TokenId, ErrorCode> failures;
    mutable std::mutex mutex;
    mutable int calls = 0;
    mutable int in_flight = 0;
    mutable int peak = 0;

    std::vector<CompletionStep> complete_greedy(std::string_view prompt, int n_steps, TokenId target) const override {
        {
            std::lock_guard lock(mutex);
            ++calls;
            peak = std::max(peak, ++in_flight);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        {
            std::lock_guard lock(mutex);
            --in_flight;
        }
        if (const auto it = failures.find(target); it != failures.end() && prompt.starts_with("Below")) {
            throw Error(it->second, "scripted failure");
        }
        std::size_t k = prompt.starts_with("This device") ? 0 : prompt.starts_with("This helpful") ? 1 : 2;
        const auto it = per_prompt.find(target);
        const double p = it == per_prompt.end() ? 0.0 : it->second[k];
        std::vector<CompletionStep> steps;
        for (int s = 0; s < n_steps; ++s) steps.push_back({s, 0, s == n_steps - 1 ? p : p / 2});
        return steps;
    }
};

class BadBackend final : public CompletionBackend {
public:
    double value;
    explicit BadBackend(double v) : value(v) {}
    std::vector<CompletionStep> complete_greedy(std::string_view, int n_steps, TokenId) const override {
        return std::vector<CompletionStep>(static_cast<std::size_t>(n_steps), CompletionStep{0, 0, value});
    }
};

TokenizerModel letters() {
    return load_tokenizer(R"({"byte_alphabet": "byte_fallback", "vocab": {"a": 0, "b": 1, "c": 2, "d": 3, "<0xF5>": 4}})");
}

struct FixtureBackend {
    SyntheticFixture fx = make_synthetic_fixture();
    std::shared_ptr<const TokenizerModel> model = std::make_shared<const TokenizerModel>(TokenizerModel::build(fx.tokenizer));
    std::shared_ptr<const Matrix> e = std::make_shared<const Matrix>(fx.e_out);
    std::vector<double> u_ref = mean_of_rows(fx.e_out, fx.padding_rows);
    SyntheticSoftmaxBackend backend{model, e, u_ref};
};

// Softmax of E[0:V] . h with h assembled from scratch.
std::vector<double> oracle_distribution(const FixtureBackend& f, std::string_view prompt, TokenId target,
                                        const std::vector<TokenId>& generated) {
    const auto rows = oracle::rows_of(f.fx.e_out);
    const std::size_t v = static_cast<std::size_t>(f.model->vocab_size());
    const std::size_t d = rows[0].size();
    auto unit = [](std::vector<double> x) {
        const double n = std::sqrt(static_cast<double>(oracle::dot(x, x)));
        for (double& a : x) a /= n;
        return x;
    };
    const auto u = unit(f.u_ref);
    std::vector<std::size_t> vocab_ids(v);
    for (std::size_t i = 0; i < v; ++i) vocab_ids[i] = i;
    auto g = oracle::mean_rows(rows, vocab_ids);
    const double along = static_cast<double>(oracle::dot(g, u));
    for (std::size_t k = 0; k < d; ++k) g[k] -= along * u[k];
    g = unit(g);

    const SyntheticParams p;
    std::vector<double> h(d, 0.0);
    const bool present = prompt.find(f.model->decode_token(target).raw_bytes) != std::string_view::npos;
    const auto t = unit(rows[static_cast<std::size_t>(target)]);
    for (std::size_t k = 0; k < d; ++k) {
        h[k] = (present ? p.copy_gain * t[k] : 0.0) + p.background_gain * g[k] - p.untrained_gain * u[k];
    }
    if (!generated.empty()) {
        const auto c = unit(rows[static_cast<std::size_t>(generated.back())]);
        for (std::size_t k = 0; k < d; ++k) h[k] += p.continuation_gain * c[k];
    }
    std::vector<long double> logits(v);
    long double top = -INFINITY;
    for (std::size_t i = 0; i < v; ++i) {
        logits[i] = oracle::dot(rows[i], h);
        top = std::max(top, logits[i]);
    }
    long double z = 0;
    for (const auto l : logits) z += std::exp(l - top);
    std::vector<double> out(v);
    for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(std::exp(logits[i] - top) / z);
    return out;
}

}  // namespace

TEST_SUITE("verification") {

TEST_CASE("verdicts follow the threshold on the maximum over prompts") {
    const auto m = letters();
    ScriptedBackend b;
    b.per_prompt[0] = {0.93, 0.2, 0.5};
    b.per_prompt[1] = {0.001, 0.004, 0.0};
    b.per_prompt[2] = {0.0, 0.0, 0.01};

    const auto trained = verify_candidate(b, m, 0);
    CHECK(trained.verdict == Verdict::NotConfirmed);
    CHECK(trained.max_probability == 0.93);
    CHECK(trained.per_prompt_max.at(PromptId::RepeaterDevice) == 0.93);
    CHECK(trained.per_prompt_max.at(PromptId::MeaningAssistant) == 0.2);

    const auto untrained = verify_candidate(b, m, 1);
    CHECK(untrained.verified());
    CHECK(untrained.max_probability == 0.004);
    CHECK(untrained.per_prompt_max.size() == 3);

    // exactly at the threshold is not below it
    CHECK(verify_candidate(b, m, 2).verdict == Verdict::NotConfirmed);
    CHECK(verify_candidate(b, m, 2, 0.0100001).verified());
}

TEST_CASE("lowering the threshold never confirms more") {
    const auto m = letters();
    ScriptedBackend b;
    b.per_prompt[0] = {0.003, 0.0, 0.0};
    bool was = true;
    for (const double t : {0.5, 0.1, 0.01, 0.004, 0.003, 0.001}) {
        const bool now = verify_candidate(b, m, 0, t).verified();
        if (!was) CHECK_FALSE(now);
        was = now;
    }
    CHECK_FALSE(was);
}

TEST_CASE("a failed prompt makes the candidate inconclusive") {
    const auto m = letters();
    ScriptedBackend b;
    b.failures[3] = ErrorCode::Timeout;
    const auto r = verify_candidate(b, m, 3);
    CHECK(r.verdict == Verdict::Inconclusive);
    CHECK(r.error_code == ErrorCode::Timeout);
    CHECK_FALSE(r.verified());
    CHECK(r.per_prompt_max.size() == 2);
}

TEST_CASE("argument and token errors") {
    const auto m = letters();
    ScriptedBackend b;
    CHECK_THROWS_AS(verify_candidate(b, m, 0, 0.0), Error);
    CHECK_THROWS_AS(verify_candidate(b, m, 0, 1.0), Error);
    try {
        verify_candidate(b, m, 4);
        FAIL("expected UndecodableToken");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UndecodableToken);
    }
    CHECK_THROWS_AS(glitch::complete_greedy(b, "x", 0, 0), Error);
    // invalid probabilities are protocol errors, so the candidate is inconclusive
    BadBackend nan(std::nan(""));
    BadBackend big(1.5);
    CHECK(verify_candidate(nan, m, 0).error_code == ErrorCode::ProtocolError);
    CHECK(verify_candidate(big, m, 0).verdict == Verdict::Inconclusive);
}

TEST_CASE("verify_set keeps candidate order, skips excluded ids and bounds concurrency") {
    const auto m = letters();
    ScriptedBackend b;
    b.per_prompt[0] = {0.5, 0.5, 0.5};
    b.failures[2] = ErrorCode::BackendUnavailable;
    const std::vector<TokenId> ids{3, 2, 0, 1, 4};
    auto tax = taxonomy_report(m);
    REQUIRE_FALSE(tax[4].has(TokenFlag::OkForTesting));
    VerifyOptions opts;
    opts.max_parallel = 2;
    const auto results = verify_set(b, m, ids, tax, opts);
    REQUIRE(results.size() == 4);
    CHECK(results[0].token_id == 3);
    CHECK(results[1].token_id == 2);
    CHECK(results[2].token_id == 0);
    CHECK(results[3].token_id == 1);
    CHECK(b.peak <= 2);
    CHECK(b.calls == 12);

    const auto s = summarize(results);
    CHECK(s.candidates == 4);
    CHECK(s.inconclusive == 1);
    CHECK(s.tested == 3);
    CHECK(s.confirmed == 2);

    CHECK(verify_set(b, m, {}, tax).empty());
    CHECK(summarize({}) == VerificationSummary{});
}

TEST_CASE("synthetic distribution matches a brute-force softmax") {
    FixtureBackend f;
    const std::string prompt = render_prompt(prompt_template(PromptId::RepeaterDevice), "th");
    for (const TokenId target : {TokenId{5}, TokenId{13}, TokenId{63}, TokenId{0}}) {
        for (const std::vector<TokenId>& gen : {std::vector<TokenId>{}, std::vector<TokenId>{63}, std::vector<TokenId>{7, 2}}) {
            const auto got = f.backend.distribution(prompt, target, gen);
            const auto want = oracle_distribution(f, prompt, target, gen);
            REQUIRE(got.size() == 64);
            double sum = 0;
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(std::abs(got[i] - want[i]) <= 1e-12);
                sum += got[i];
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("synthetic backend separates planted from trained tokens") {
    FixtureBackend f;
    for (const TokenId id : f.fx.planted) {
        for (const PromptId p : kVerificationPrompts) {
            const auto text = render_prompt(prompt_template(p), f.model->decode_token(id).raw_bytes);
            for (const auto& s : glitch::complete_greedy(f.backend, text, 3, id)) CHECK(s.target_probability < 1e-4);
        }
        const auto r = verify_candidate(f.backend, *f.model, id);
        CHECK(r.verified());
        CHECK(r.max_probability < 1e-3);
    }
    for (const TokenId id : f.fx.trained) {
        const auto text = render_prompt(prompt_template(PromptId::RepeaterDevice), f.model->decode_token(id).raw_bytes);
        const auto steps = glitch::complete_greedy(f.backend, text, 3, id);
        CHECK(steps[0].chosen_id == id);
        CHECK(steps[0].target_probability > 0.9);
        CHECK_FALSE(verify_candidate(f.backend, *f.model, id).verified());
    }
}

TEST_CASE("greedy ties go to the lowest id") {
    // two identical rows: equal logits everywhere
    auto model = std::make_shared<const TokenizerModel>(letters());
    auto e = std::make_shared<const Matrix>(5, 2, std::vector<double>{1, 0, 0, 1, 0, 1, -1, 0, 0, -1});
    SyntheticParams p;
    p.background_gain = 0;
    p.continuation_gain = 0;
    const SyntheticSoftmaxBackend b(model, e, {-1, -1}, p);
    const auto steps = b.complete_greedy("c", 2, 2);
    CHECK(steps[0].chosen_id == 1);
    CHECK(steps[1].chosen_id == 1);
    CHECK(steps[0].target_probability == doctest::Approx(0.5).epsilon(1e-6));

    CHECK_THROWS_AS(SyntheticSoftmaxBackend(model, e, {1, 0, 0}), Error);
    auto short_e = std::make_shared<const Matrix>(2, 2);
    CHECK_THROWS_AS(SyntheticSoftmaxBackend(model, short_e, {1, 0}), Error);
}

TEST_CASE("verification is deterministic") {
    FixtureBackend f;
    std::vector<TokenId> all(64);
    for (TokenId i = 0; i < 64; ++i) all[static_cast<std::size_t>(i)] = i;
    VerifyOptions serial, wide;
    serial.max_parallel = 1;
    wide.max_parallel = 8;
    CHECK(verify_set(f.backend, *f.model, all, {}, serial) == verify_set(f.backend, *f.model, all, {}, wide));
}

}
