#include "glitch/pipeline.hpp"

#include <algorithm>
#include <set>

#include "glitch/error.hpp"

namespace glitch {

namespace fs = std::filesystem;

void RunConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must lie in (0, 1]");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
    if (output_dir.empty()) throw Error(ErrorCode::InvalidArgument, "an output directory is required");
    if (backend.max_parallel == 0) throw Error(ErrorCode::InvalidArgument, "max_parallel must be positive");
}

TensorNames detect_tensor_names(const SafeTensorsFile& container, const std::string& input_hint,
                                const std::string& output_hint) {
    static const char* const kInputNames[] = {"model.embed_tokens.weight", "transformer.wte.weight", "wte.weight",
                                              "gpt_neox.embed_in.weight",  "model.embed_in.weight",  "embed_tokens.weight",
                                              "tok_embeddings.weight",     "transformer.word_embeddings.weight",
                                              "input_embeddings"};
    static const char* const kOutputNames[] = {"lm_head.weight", "model.lm_head.weight", "embed_out.weight",
                                               "output.weight", "transformer.lm_head.weight", "output_embeddings"};
    auto pick = [&](const std::string& hint, auto& names) -> std::string {
        if (!hint.empty()) {
            if (!container.contains(hint)) throw Error(ErrorCode::MissingTensor, "no tensor named '" + hint + "'");
            return hint;
        }
        for (const char* n : names) {
            if (container.contains(n)) return n;
        }
        return {};
    };
    TensorNames out{pick(input_hint, kInputNames), pick(output_hint, kOutputNames)};
    if (out.input.empty() && out.output.empty()) {
        throw Error(ErrorCode::MissingTensor, "no embedding tensor with a known name; pass the tensor names explicitly");
    }
    return out;
}

std::unique_ptr<CompletionBackend> make_backend(const BackendDescriptor& descriptor,
                                                std::shared_ptr<const TokenizerModel> model,
                                                std::shared_ptr<const Matrix> e_out,
                                                const std::vector<double>& untrained_direction) {
    switch (descriptor.kind) {
        case BackendDescriptor::Kind::HttpCompletion:
            return std::make_unique<HttpCompletionBackend>(std::move(model), descriptor.http);
        case BackendDescriptor::Kind::SyntheticSoftmax:
            if (untrained_direction.empty()) {
                throw Error(ErrorCode::NoReferenceTokens, "synthetic backend needs an untrained reference direction");
            }
            return std::make_unique<SyntheticSoftmaxBackend>(std::move(model), std::move(e_out), untrained_direction,
                                                             descriptor.synthetic);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown backend kind");
}

namespace {

template <typename Fn>
auto in_stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    } catch (const fs::filesystem_error& e) {
        throw StageError(name, ErrorCode::IoFailure, e.what());
    }
}

// Lazily loaded inputs shared by the stages of one invocation.
class Context {
public:
    explicit Context(const RunConfig& config) : config_(config) {}

    const RunConfig& config() const { return config_; }

    std::shared_ptr<const TokenizerModel> model() {
        if (!model_) {
            if (config_.tokenizer_path.empty()) throw Error(ErrorCode::LoadFailure, "no tokenizer path given");
            if (!fs::is_regular_file(config_.tokenizer_path)) {
                throw Error(ErrorCode::LoadFailure, "tokenizer file " + config_.tokenizer_path.string() + " not found");
            }
            model_ = std::make_shared<const TokenizerModel>(load_tokenizer_file(config_.tokenizer_path));
            fingerprint_.tokenizer = fingerprint_file(config_.tokenizer_path);
        }
        return model_;
    }

    const SafeTensorsFile& weights() {
        if (!weights_) {
            if (config_.weights_path.empty()) throw Error(ErrorCode::LoadFailure, "no weights path given");
            if (!fs::is_regular_file(config_.weights_path)) {
                throw Error(ErrorCode::LoadFailure, "weights file " + config_.weights_path.string() + " not found");
            }
            weights_ = SafeTensorsFile::open(config_.weights_path);
            fingerprint_.weights = fingerprint_file(config_.weights_path);
        }
        return *weights_;
    }

    const Fingerprint& fingerprint() const { return fingerprint_; }

    fs::path out(std::string_view file) const { return config_.output_dir / file; }

private:
    const RunConfig& config_;
    std::shared_ptr<const TokenizerModel> model_;
    std::optional<SafeTensorsFile> weights_;
    Fingerprint fingerprint_;
};

TaxonomyArtifact load_taxonomy(Context& ctx) {
    auto a = taxonomy_from_json(read_file(ctx.out(kTaxonomyFile)));
    check_fingerprint(ctx.fingerprint(), a.fingerprint, kTaxonomyFile);
    return a;
}

IndicatorsArtifact load_indicators(Context& ctx) {
    auto a = read_indicators(ctx.config().output_dir);
    check_fingerprint(ctx.fingerprint(), a.fingerprint, kIndicatorsFile);
    return a;
}

CandidatesArtifact load_candidates(Context& ctx) {
    auto a = candidates_from_json(read_file(ctx.out(kCandidatesFile)));
    check_fingerprint(ctx.fingerprint(), a.fingerprint, kCandidatesFile);
    return a;
}

TaxonomyArtifact classify_stage(Context& ctx) {
    return in_stage("classify", [&] {
        const auto model = ctx.model();
        fs::create_directories(ctx.config().output_dir);
        TaxonomyArtifact a;
        a.fingerprint.tokenizer = ctx.fingerprint().tokenizer;
        a.categories = taxonomy_report(*model, ctx.config().threads);
        write_atomic(ctx.out(kTaxonomyFile), taxonomy_to_json(*model, a));
        return a;
    });
}

std::vector<IndicatorName> requested_indicators(const RunConfig& config, bool tied) {
    std::vector<IndicatorName> names{config.indicator_override.value_or(default_indicator(tied))};
    for (const IndicatorName n : config.compare) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    return names;
}

IndicatorsArtifact indicators_stage(Context& ctx) {
    return in_stage("indicators", [&] {
        const RunConfig& config = ctx.config();
        const auto model = ctx.model();
        const SafeTensorsFile& weights = ctx.weights();
        const auto taxonomy = load_taxonomy(ctx);
        if (taxonomy.categories.size() != static_cast<std::size_t>(model->vocab_size())) {
            throw Error(ErrorCode::MismatchedRuns, "taxonomy size differs from the tokenizer vocabulary");
        }

        const auto names = detect_tensor_names(weights, config.input_tensor, config.output_tensor);
        const auto loaded = load_embeddings(weights, names.input, names.output);
        IndicatorsArtifact a;
        a.fingerprint = ctx.fingerprint();
        a.input_tensor = names.input;
        a.output_tensor = names.output;
        a.tied = config.tied_override.value_or(loaded.tied);
        a.warnings = loaded.warnings;

        const Matrix* e_out = loaded.output->rows.get();
        const Matrix* e_in = a.tied ? e_out : loaded.input->rows.get();
        if (e_out->rows() < static_cast<std::size_t>(model->vocab_size())) {
            throw Error(ErrorCode::ShapeMismatch, "embedding matrix has " + std::to_string(e_out->rows()) +
                                                      " rows for " + std::to_string(model->vocab_size()) + " tokens");
        }
        if (e_in->rows() != e_out->rows()) {
            throw Error(ErrorCode::ShapeMismatch, "input and output embeddings differ in row count");
        }

        const auto requested = requested_indicators(config, a.tied);
        a.chosen = requested.front();
        const bool reference_required =
            std::any_of(requested.begin(), requested.end(), [](IndicatorName n) { return needs_reference(n); });
        try {
            a.reference = find_reference_tokens(*model, *e_out, taxonomy.categories, config.ref_ids);
        } catch (const Error& e) {
            if (reference_required || e.code() != ErrorCode::NoReferenceTokens) throw;
            a.warnings.push_back("no reference tokens found; reference-based indicators unavailable");
        }

        IndicatorOptions options;
        options.threads = config.threads;
        for (const IndicatorName n : requested) {
            a.indicators.push_back(
                compute_indicator(n, e_in, e_out, a.reference.ids.empty() ? nullptr : &a.reference, options));
        }
        write_indicators(config.output_dir, a);
        return a;
    });
}

CandidatesArtifact candidates_stage(Context& ctx) {
    return in_stage("candidates", [&] {
        const RunConfig& config = ctx.config();
        const auto model = ctx.model();
        const auto taxonomy = load_taxonomy(ctx);
        const auto indicators = load_indicators(ctx);

        std::vector<IndicatorName> order{config.indicator_override.value_or(indicators.chosen)};
        for (const auto& v : indicators.indicators) {
            if (std::find(order.begin(), order.end(), v.name) == order.end()) order.push_back(v.name);
        }
        CandidatesArtifact a;
        a.fingerprint = indicators.fingerprint;
        for (const IndicatorName n : order) {
            a.sets.push_back(select_candidates(indicators.get(n), taxonomy.categories, config.fraction));
        }
        write_atomic(ctx.out(kCandidatesFile), candidates_to_json(*model, a));
        return a;
    });
}

VerificationArtifact verify_stage(Context& ctx) {
    return in_stage("verify", [&] {
        const RunConfig& config = ctx.config();
        const auto model = ctx.model();
        const bool synthetic = config.backend.kind == BackendDescriptor::Kind::SyntheticSoftmax;
        if (synthetic) ctx.weights();
        const auto taxonomy = load_taxonomy(ctx);
        const auto candidates = load_candidates(ctx);

        std::shared_ptr<const Matrix> e_out;
        std::vector<double> direction;
        if (synthetic) {
            const auto indicators = load_indicators(ctx);
            const SafeTensorsFile& weights = ctx.weights();
            const std::string& name = indicators.output_tensor.empty() ? indicators.input_tensor
                                                                        : indicators.output_tensor;
            const auto loaded = load_embeddings(weights, name, name);
            e_out = loaded.output->rows;
            direction = indicators.reference.u_ref;
        }
        const auto backend = make_backend(config.backend, model, e_out, direction);

        std::vector<TokenId> ids;
        std::set<TokenId> seen;
        for (const auto& s : candidates.sets) {
            for (const TokenId id : s.ids) {
                if (seen.insert(id).second) ids.push_back(id);
            }
        }
        VerifyOptions options;
        options.threshold = config.threshold;
        options.max_parallel = config.backend.max_parallel;
        VerificationArtifact a;
        a.fingerprint = candidates.fingerprint;
        a.threshold = config.threshold;
        a.results = verify_set(*backend, *model, ids, taxonomy.categories, options);

        const bool unreachable_backend =
            !a.results.empty() && std::all_of(a.results.begin(), a.results.end(), [](const VerificationResult& r) {
                return r.error_code == ErrorCode::BackendUnavailable || r.error_code == ErrorCode::Timeout;
            });
        if (unreachable_backend) {
            throw Error(ErrorCode::BackendUnavailable, "every candidate failed: " + a.results.front().error);
        }
        write_atomic(ctx.out(kVerificationFile), verification_to_json(*model, a));
        return a;
    });
}

ModelReport report_stage(Context& ctx) {
    return in_stage("report", [&] {
        const RunConfig& config = ctx.config();
        const auto model = ctx.model();
        const auto taxonomy = load_taxonomy(ctx);
        const auto indicators = load_indicators(ctx);
        const auto candidates = load_candidates(ctx);

        std::optional<VerificationArtifact> verification;
        if (config.verify && fs::is_regular_file(ctx.out(kVerificationFile))) {
            verification = verification_from_json(read_file(ctx.out(kVerificationFile)));
            check_fingerprint(candidates.fingerprint, verification->fingerprint, kVerificationFile);
        }

        const CandidateSet& chosen = candidates.sets.front();
        ReportInputs in;
        in.model = model.get();
        in.taxonomy = taxonomy.categories;
        in.indicators = indicators.indicators;
        in.tied = indicators.tied;
        in.candidates = &chosen;
        in.threshold = verification ? verification->threshold : config.threshold;
        in.warnings = model->warnings();
        in.warnings.insert(in.warnings.end(), indicators.warnings.begin(), indicators.warnings.end());

        std::vector<VerificationResult> chosen_results;
        if (verification) {
            const std::set<TokenId> members(chosen.ids.begin(), chosen.ids.end());
            for (const auto& r : verification->results) {
                if (members.count(r.token_id)) chosen_results.push_back(r);
            }
            in.results = &chosen_results;
            if (candidates.sets.size() > 1) {
                std::vector<IndicatorRun> runs;
                for (const auto& s : candidates.sets) {
                    runs.push_back(IndicatorRun{s, verification->results, verification->fingerprint.tokenizer +
                                                                              verification->fingerprint.weights});
                }
                in.comparison = compare_indicators(runs);
            }
        }
        auto report = build_report(in);
        emit_report(report, config.output_dir);
        return report;
    });
}

void prepare(const RunConfig& config) {
    in_stage("load", [&] {
        config.validate();
        return 0;
    });
}

}  // namespace

TaxonomyArtifact run_classify(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    return classify_stage(ctx);
}

IndicatorsArtifact run_indicators(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    in_stage("load", [&] { return ctx.model(); });
    return indicators_stage(ctx);
}

CandidatesArtifact run_candidates(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    in_stage("load", [&] { return ctx.model(); });
    return candidates_stage(ctx);
}

VerificationArtifact run_verify(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    in_stage("load", [&] { return ctx.model(); });
    return verify_stage(ctx);
}

ModelReport run_report(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    in_stage("load", [&] { return ctx.model(); });
    return report_stage(ctx);
}

ModelReport run_pipeline(const RunConfig& config) {
    prepare(config);
    Context ctx(config);
    in_stage("load", [&] {
        ctx.model();
        ctx.weights();
        return 0;
    });
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw StageError("load", ErrorCode::IoFailure, "cannot create " + config.output_dir.string());

    classify_stage(ctx);
    indicators_stage(ctx);
    candidates_stage(ctx);
    if (config.verify) verify_stage(ctx);
    return report_stage(ctx);
}

}  // namespace glitch
