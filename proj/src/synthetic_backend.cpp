#include <algorithm>
#include <cmath>

#include "glitch/backend.hpp"
#include "glitch/error.hpp"

namespace glitch {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

std::vector<double> normalized(std::span<const double> v) {
    const double n = std::sqrt(dot(v, v));
    std::vector<double> out(v.begin(), v.end());
    if (n > 0.0) {
        for (double& x : out) x /= n;
    }
    return out;
}

}  // namespace

SyntheticSoftmaxBackend::SyntheticSoftmaxBackend(std::shared_ptr<const TokenizerModel> model,
                                                 std::shared_ptr<const Matrix> e_out,
                                                 std::vector<double> untrained_direction, SyntheticParams params)
    : model_(std::move(model)), e_out_(std::move(e_out)), params_(params) {
    if (!model_ || !e_out_) throw Error(ErrorCode::MissingInput, "synthetic backend needs a tokenizer and E_out");
    if (e_out_->rows() < static_cast<std::size_t>(model_->vocab_size())) {
        throw Error(ErrorCode::ShapeMismatch, "output embeddings have fewer rows than the vocabulary");
    }
    if (untrained_direction.size() != e_out_->cols()) {
        throw Error(ErrorCode::ShapeMismatch, "untrained direction width differs from E_out");
    }
    direction_ = normalized(untrained_direction);

    const std::size_t d = e_out_->cols();
    const auto vocab = static_cast<std::size_t>(model_->vocab_size());
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < vocab; ++i) {
        const auto r = e_out_->row(i);
        for (std::size_t k = 0; k < d; ++k) mean[k] += r[k] / static_cast<double>(vocab);
    }
    const double along = dot(mean, direction_);
    for (std::size_t k = 0; k < d; ++k) mean[k] -= along * direction_[k];
    background_ = normalized(mean);
}

std::vector<double> SyntheticSoftmaxBackend::unit_row(TokenId id) const {
    return normalized(e_out_->row(static_cast<std::size_t>(id)));
}

std::vector<double> SyntheticSoftmaxBackend::distribution(std::string_view prompt, TokenId target,
                                                          const std::vector<TokenId>& generated) const {
    const std::size_t d = e_out_->cols();
    std::vector<double> h(d, 0.0);
    const TokenRecord& rec = model_->decode_token(target);
    if (prompt.find(rec.raw_bytes) != std::string_view::npos) {
        const auto t = unit_row(target);
        for (std::size_t k = 0; k < d; ++k) h[k] += params_.copy_gain * t[k];
    }
    for (std::size_t k = 0; k < d; ++k) {
        h[k] += params_.background_gain * background_[k] - params_.untrained_gain * direction_[k];
    }
    if (!generated.empty()) {
        const auto c = unit_row(generated.back());
        for (std::size_t k = 0; k < d; ++k) h[k] += params_.continuation_gain * c[k];
    }

    const auto vocab = static_cast<std::size_t>(model_->vocab_size());
    std::vector<double> p(vocab);
    double max_logit = -INFINITY;
    for (std::size_t i = 0; i < vocab; ++i) {
        p[i] = dot(e_out_->row(i), h);
        max_logit = std::max(max_logit, p[i]);
    }
    double total = 0.0;
    for (double& x : p) {
        x = std::exp(x - max_logit);
        total += x;
    }
    for (double& x : p) x /= total;
    return p;
}

std::vector<CompletionStep> SyntheticSoftmaxBackend::complete_greedy(std::string_view prompt, int n_steps,
                                                                     TokenId target) const {
    if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be at least 1");
    std::vector<CompletionStep> steps;
    std::vector<TokenId> generated;
    for (int k = 0; k < n_steps; ++k) {
        const auto p = distribution(prompt, target, generated);
        // max_element returns the first maximum: lowest id wins ties
        const auto chosen = static_cast<TokenId>(std::max_element(p.begin(), p.end()) - p.begin());
        steps.push_back(CompletionStep{k, chosen, p[static_cast<std::size_t>(target)]});
        generated.push_back(chosen);
    }
    return steps;
}

}  // namespace glitch
