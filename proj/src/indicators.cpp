#include "glitch/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glitch/error.hpp"
#include "glitch/parallel.hpp"

namespace glitch {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_dim(const Matrix& a, std::span<const double> x) {
    if (x.size() != a.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "vector of length " + std::to_string(x.size()) +
                                                  " against matrix with " + std::to_string(a.cols()) + " columns");
    }
}

std::shared_ptr<const Matrix> read_matrix(const SafeTensorsFile& container, std::string_view name) {
    const TensorInfo& info = container.info(name);
    if (info.shape.size() != 2 || info.shape[0] == 0 || info.shape[1] == 0) {
        throw Error(ErrorCode::ShapeMismatch, "tensor '" + info.name + "' is not a non-empty rank-2 matrix");
    }
    std::vector<double> values = container.values(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw Error(ErrorCode::NonFiniteEntries, "tensor '" + info.name + "' has a non-finite entry at flat index " +
                                                         std::to_string(i));
        }
    }
    return std::make_shared<const Matrix>(static_cast<std::size_t>(info.shape[0]),
                                          static_cast<std::size_t>(info.shape[1]), std::move(values));
}

std::string bias_name_for(std::string_view weight_name) {
    constexpr std::string_view suffix = "weight";
    if (weight_name.size() >= suffix.size() && weight_name.substr(weight_name.size() - suffix.size()) == suffix) {
        return std::string(weight_name.substr(0, weight_name.size() - suffix.size())) + "bias";
    }
    return std::string(weight_name) + ".bias";
}

}  // namespace

LoadedEmbeddings load_embeddings(const SafeTensorsFile& container, std::string_view input_name,
                                 std::string_view output_name) {
    LoadedEmbeddings out;
    const bool has_in = container.contains(input_name);
    const bool has_out = container.contains(output_name);
    if (!has_in && !has_out) {
        throw Error(ErrorCode::MissingTensor, "neither '" + std::string(input_name) + "' nor '" +
                                                  std::string(output_name) + "' is present");
    }

    if (has_in && has_out && input_name != output_name) {
        const TensorInfo& a = container.info(input_name);
        const TensorInfo& b = container.info(output_name);
        out.tied = a.dtype == b.dtype && a.shape == b.shape && container.raw(input_name) == container.raw(output_name);
    } else {
        out.tied = true;
    }

    if (out.tied) {
        const auto m = read_matrix(container, has_out ? output_name : input_name);
        out.input = EmbeddingMatrix{MatrixKind::Input, m};
        out.output = EmbeddingMatrix{MatrixKind::Output, m};
    } else {
        out.input = EmbeddingMatrix{MatrixKind::Input, read_matrix(container, input_name)};
        out.output = EmbeddingMatrix{MatrixKind::Output, read_matrix(container, output_name)};
        if (out.input->rows->cols() != out.output->rows->cols()) {
            throw Error(ErrorCode::ShapeMismatch, "input and output embeddings differ in width");
        }
    }

    for (const auto& candidate : {bias_name_for(output_name), std::string("lm_head.bias"), std::string("output.bias")}) {
        if (container.contains(candidate)) {
            out.has_output_bias = true;
            out.warnings.push_back("output bias tensor '" + candidate + "' present; input-norm indicator preferred");
            break;
        }
    }
    return out;
}

CosineDistances cosine_distances(const Matrix& a, std::span<const double> x, unsigned threads) {
    check_dim(a, x);
    const double xn = norm(x);
    if (!(xn > 0.0)) throw Error(ErrorCode::ZeroReferenceVector, "reference vector has zero norm");

    CosineDistances out;
    out.scores.resize(a.rows());
    std::vector<char> degenerate(a.rows(), 0);
    parallel_for(a.rows(), threads, [&](std::size_t i) {
        const auto r = a.row(i);
        const double rn = norm(r);
        if (rn == 0.0) {
            out.scores[i] = 1.0;
            degenerate[i] = 1;
            return;
        }
        const double d = 1.0 - dot(r, x) / (rn * xn);
        out.scores[i] = std::clamp(d, 0.0, 2.0);
    });
    for (std::size_t i = 0; i < degenerate.size(); ++i) {
        if (degenerate[i]) out.degenerate_rows.push_back(i);
    }
    return out;
}

std::vector<double> euclidean_distances(const Matrix& a, std::span<const double> x, unsigned threads) {
    check_dim(a, x);
    std::vector<double> out(a.rows());
    parallel_for(a.rows(), threads, [&](std::size_t i) {
        const auto r = a.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            const double d = r[k] - x[k];
            s += d * d;
        }
        out[i] = std::sqrt(s);
    });
    return out;
}

std::vector<double> row_norms(const Matrix& a, unsigned threads) {
    std::vector<double> out(a.rows());
    parallel_for(a.rows(), threads, [&](std::size_t i) { out[i] = norm(a.row(i)); });
    return out;
}

std::vector<double> column_means(const Matrix& a) {
    std::vector<double> mean(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        for (std::size_t k = 0; k < r.size(); ++k) mean[k] += r[k];
    }
    if (a.rows() > 0) {
        for (double& m : mean) m /= static_cast<double>(a.rows());
    }
    return mean;
}

Matrix center_rows(const Matrix& a) {
    const auto mean = column_means(a);
    Matrix out = a;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= mean[k];
    }
    return out;
}

Matrix remove_first_pc(const Matrix& e, std::span<const double> u1) {
    check_dim(e, u1);
    if (std::abs(norm(u1) - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "u1 must be a unit vector");
    Matrix out = e;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double proj = dot(r, u1);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= proj * u1[k];
    }
    return out;
}

std::string_view to_string(IndicatorName name) {
    switch (name) {
        case IndicatorName::CosineToRef: return "CosineToRef";
        case IndicatorName::EuclideanToRef: return "EuclideanToRef";
        case IndicatorName::InputNorm: return "InputNorm";
        case IndicatorName::CosineCenteredToRef: return "CosineCenteredToRef";
        case IndicatorName::CosinePcRemovedToRef: return "CosinePcRemovedToRef";
    }
    return "?";
}

std::optional<IndicatorName> parse_indicator(std::string_view name) {
    for (const auto n : kAllIndicators) {
        if (to_string(n) == name) return n;
    }
    return std::nullopt;
}

bool needs_reference(IndicatorName name) { return name != IndicatorName::InputNorm; }

bool is_extended(IndicatorName name) {
    return name == IndicatorName::CosineCenteredToRef || name == IndicatorName::CosinePcRemovedToRef;
}

IndicatorName default_indicator(bool tied) { return tied ? IndicatorName::CosineToRef : IndicatorName::InputNorm; }

IndicatorVector compute_indicator(IndicatorName name, const Matrix* e_in, const Matrix* e_out,
                                  const ReferenceSet* ref, const IndicatorOptions& options) {
    IndicatorVector out;
    out.name = name;
    if (name == IndicatorName::InputNorm) {
        if (!e_in) throw Error(ErrorCode::MissingInput, "InputNorm needs input embeddings");
        out.scores = row_norms(*e_in, options.threads);
        return out;
    }
    if (!e_out) throw Error(ErrorCode::MissingInput, std::string(to_string(name)) + " needs output embeddings");
    if (!ref || ref->ids.empty()) {
        throw Error(ErrorCode::MissingInput, std::string(to_string(name)) + " needs a reference token set");
    }

    switch (name) {
        case IndicatorName::CosineToRef: {
            auto d = cosine_distances(*e_out, ref->u_ref, options.threads);
            out.scores = std::move(d.scores);
            out.degenerate_rows = std::move(d.degenerate_rows);
            break;
        }
        case IndicatorName::EuclideanToRef:
            out.scores = euclidean_distances(*e_out, ref->u_ref, options.threads);
            break;
        case IndicatorName::CosineCenteredToRef: {
            const Matrix centered = center_rows(*e_out);
            const auto u = mean_of_rows(centered, ref->ids);
            auto d = cosine_distances(centered, u, options.threads);
            out.scores = std::move(d.scores);
            out.degenerate_rows = std::move(d.degenerate_rows);
            break;
        }
        case IndicatorName::CosinePcRemovedToRef: {
            const auto pc = first_principal_direction(*e_out, options.pca_max_iter, options.pca_tol, options.threads);
            const Matrix reduced = remove_first_pc(*e_out, pc.u1);
            const auto u = mean_of_rows(reduced, ref->ids);
            auto d = cosine_distances(reduced, u, options.threads);
            out.scores = std::move(d.scores);
            out.degenerate_rows = std::move(d.degenerate_rows);
            break;
        }
        case IndicatorName::InputNorm:
            break;
    }
    return out;
}

std::size_t candidate_window(double fraction, TokenId vocab_size) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fraction must lie in (0, 1]");
    }
    // the small offset keeps exact products (0.125 * 64) from rounding up
    const double raw = fraction * static_cast<double>(vocab_size);
    const auto w = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::min(w, static_cast<std::size_t>(vocab_size));
}

CandidateSet select_candidates(const IndicatorVector& indicator, std::span<const TokenCategory> taxonomy,
                               double fraction) {
    CandidateSet out;
    out.indicator = indicator.name;
    out.fraction = fraction;
    out.vocab_size = static_cast<TokenId>(taxonomy.size());
    out.window = candidate_window(fraction, out.vocab_size);
    if (indicator.scores.size() < taxonomy.size()) {
        throw Error(ErrorCode::ShapeMismatch, "indicator has fewer rows than the vocabulary");
    }

    std::vector<TokenId> order(taxonomy.size());
    std::iota(order.begin(), order.end(), 0);
    const auto& s = indicator.scores;
    auto less = [&](TokenId a, TokenId b) {
        const double sa = s[static_cast<std::size_t>(a)];
        const double sb = s[static_cast<std::size_t>(b)];
        return sa != sb ? sa < sb : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(out.window), order.end(), less);

    for (std::size_t k = 0; k < out.window; ++k) {
        const TokenId id = order[k];
        if (!taxonomy[static_cast<std::size_t>(id)].has(TokenFlag::OkForTesting)) continue;
        out.ids.push_back(id);
        out.scores.push_back(s[static_cast<std::size_t>(id)]);
    }
    return out;
}

}  // namespace glitch
