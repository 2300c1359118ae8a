#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "glitch/fixture.hpp"
#include "glitch/pipeline.hpp"

using namespace glitch;

namespace {

struct Options {
    RunConfig config;
    std::string indicator;
    std::string ref_ids;
    std::string compare;
    std::string backend_url;
    bool tied = false;
    bool untied = false;
    bool no_verify = false;
    bool synthetic = false;
    std::uint64_t seed = FixtureOptions{}.seed;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

IndicatorName indicator_arg(const std::string& name) {
    const auto parsed = parse_indicator(name);
    if (!parsed) throw CLI::ValidationError("--indicator", "unknown indicator '" + name + "'");
    return *parsed;
}

void add_common(CLI::App* app, Options& o, bool weights) {
    app->add_option("--tokenizer", o.config.tokenizer_path, "tokenizer.json (portable or BPE tokenizer.json)");
    if (weights) app->add_option("--weights", o.config.weights_path, "safetensors container with the embeddings");
    app->add_option("--out", o.config.output_dir, "artifact directory")->required();
    app->add_option("--threads", o.config.threads, "worker threads (0 = all cores)");
}

void add_indicator_flags(CLI::App* app, Options& o) {
    app->add_option("--indicator", o.indicator, "indicator to rank by");
    app->add_option("--compare", o.compare, "further indicators to compute and compare (CSV or 'all')");
    app->add_option("--ref-ids", o.ref_ids, "reference token ids (CSV) defining u_ref");
    app->add_flag("--tied", o.tied, "treat embeddings as tied");
    app->add_flag("--untied", o.untied, "treat embeddings as untied");
    app->add_option("--input-tensor", o.config.input_tensor, "input embedding tensor name");
    app->add_option("--output-tensor", o.config.output_tensor, "output embedding tensor name");
}

void add_candidate_flags(CLI::App* app, Options& o) {
    app->add_option("--fraction", o.config.fraction, "fraction of the vocabulary to test")->capture_default_str();
}

void add_verify_flags(CLI::App* app, Options& o) {
    auto& http = o.config.backend.http;
    app->add_option("--threshold", o.config.threshold, "confirmation threshold on the max probability")
        ->capture_default_str();
    app->add_option("--backend-url", o.backend_url, "completion endpoint, e.g. http://127.0.0.1:8080/v1/completions");
    app->add_flag("--synthetic", o.synthetic, "use the synthetic softmax backend over the output embeddings");
    app->add_option("--max-parallel", o.config.backend.max_parallel, "concurrent candidates")->capture_default_str();
    app->add_option("--timeout", http.timeout_seconds, "request timeout in seconds")->capture_default_str();
    app->add_option("--retries", http.retries, "retries per request")->capture_default_str();
    app->add_option("--backoff", http.backoff_initial_seconds, "initial retry backoff in seconds")
        ->capture_default_str();
    app->add_option("--top-logprobs", http.top_logprobs, "alternatives requested per position")
        ->capture_default_str();
    app->add_option("--model-name", http.model_name, "model field sent with each request");
    app->add_option("--auth-env", http.auth_env, "environment variable holding a bearer token");
}

void finish_config(Options& o, bool needs_backend) {
    RunConfig& c = o.config;
    if (o.tied && o.untied) throw CLI::ValidationError("--tied/--untied", "choose one");
    if (o.tied) c.tied_override = true;
    if (o.untied) c.tied_override = false;
    if (!o.indicator.empty()) c.indicator_override = indicator_arg(o.indicator);
    if (o.compare == "all") {
        c.compare.assign(std::begin(kAllIndicators), std::end(kAllIndicators));
    } else {
        for (const auto& n : split_csv(o.compare)) c.compare.push_back(indicator_arg(n));
    }
    if (!o.ref_ids.empty()) {
        std::vector<std::size_t> ids;
        for (const auto& s : split_csv(o.ref_ids)) {
            try {
                ids.push_back(std::stoul(s));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--ref-ids", "'" + s + "' is not an id");
            }
        }
        c.ref_ids = std::move(ids);
    }
    c.verify = !o.no_verify;
    if (!o.backend_url.empty()) {
        c.backend.kind = BackendDescriptor::Kind::HttpCompletion;
        c.backend.http.url = o.backend_url;
    } else if (o.synthetic) {
        c.backend.kind = BackendDescriptor::Kind::SyntheticSoftmax;
    } else if (needs_backend && c.verify) {
        throw CLI::ValidationError("backend", "pass --backend-url URL, --synthetic or --no-verify");
    }
}

void print_report(const ModelReport& r, const RunConfig& c) {
    const auto& s = r.summary;
    std::cout << "vocab " << s.vocab_size << ", " << (s.tied ? "tied" : "untied") << ", "
              << (s.indicator ? to_string(*s.indicator) : "-") << ": " << s.candidates << " candidates";
    if (s.verification_run) {
        std::cout << ", " << s.confirmed << "/" << s.tested << " confirmed, " << s.inconclusive << " inconclusive";
    }
    std::cout << "\n";
    for (const auto& row : r.comparison) {
        std::cout << "  " << to_string(row.indicator) << ": " << row.verified << "/" << row.tested << " verified\n";
    }
    std::cout << "report: " << (c.output_dir / "report.md").string() << "\n";
}

int exit_code(const Error& e) {
    switch (e.code()) {
        case ErrorCode::InvalidArgument: return 1;
        case ErrorCode::BackendUnavailable:
        case ErrorCode::Timeout: return 3;
        default: return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Find under-trained tokens from tokenizer and embedding weights"};
    app.require_subcommand(1);
    Options o;

    auto* classify = app.add_subcommand("classify", "tokenizer taxonomy -> taxonomy.json");
    add_common(classify, o, false);

    auto* indicators = app.add_subcommand("indicators", "embedding indicators -> indicators.json/.bin");
    add_common(indicators, o, true);
    add_indicator_flags(indicators, o);

    auto* candidates = app.add_subcommand("candidates", "lowest-scoring tokens -> candidates.json");
    add_common(candidates, o, false);
    add_candidate_flags(candidates, o);
    candidates->add_option("--indicator", o.indicator, "computed indicator to rank by");

    auto* verify = app.add_subcommand("verify", "prompt the model with each candidate -> verification.json");
    add_common(verify, o, true);
    add_verify_flags(verify, o);

    auto* report = app.add_subcommand("report", "report.json and report.md from stored artifacts");
    add_common(report, o, false);
    report->add_flag("--no-verify", o.no_verify, "ignore stored verification results");
    report->add_option("--threshold", o.config.threshold, "threshold shown when not verified");

    auto* run = app.add_subcommand("run", "all stages");
    add_common(run, o, true);
    add_indicator_flags(run, o);
    add_candidate_flags(run, o);
    add_verify_flags(run, o);
    run->add_flag("--no-verify", o.no_verify, "stop after candidate selection");

    auto* fixture = app.add_subcommand("fixture", "write the synthetic 64-token fixture");
    fixture->add_option("--out", o.config.output_dir, "directory for tokenizer.json and model.safetensors")
        ->required();
    fixture->add_option("--seed", o.seed, "generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
        finish_config(o, verify->parsed() || run->parsed());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const RunConfig& c = o.config;
        if (classify->parsed()) {
            const auto a = run_classify(c);
            std::size_t ok = 0;
            for (const auto& cat : a.categories) ok += cat.has(TokenFlag::OkForTesting) ? 1 : 0;
            std::cout << a.categories.size() << " tokens, " << ok << " OkForTesting\n";
        } else if (indicators->parsed()) {
            const auto a = run_indicators(c);
            std::cout << (a.tied ? "tied" : "untied") << ", chosen " << to_string(a.chosen) << ", "
                      << a.reference.ids.size() << " reference rows\n";
        } else if (candidates->parsed()) {
            const auto a = run_candidates(c);
            for (const auto& s : a.sets) {
                std::cout << to_string(s.indicator) << ": " << s.ids.size() << " candidates (window " << s.window
                          << ")\n";
            }
        } else if (verify->parsed()) {
            const auto a = run_verify(c);
            const auto s = summarize(a.results);
            std::cout << s.confirmed << "/" << s.tested << " confirmed, " << s.inconclusive << " inconclusive\n";
        } else if (report->parsed()) {
            print_report(run_report(c), c);
        } else if (run->parsed()) {
            print_report(run_pipeline(c), c);
        } else if (fixture->parsed()) {
            FixtureOptions fo;
            fo.seed = o.seed;
            write_fixture(make_synthetic_fixture(fo), c.output_dir);
            std::cout << "fixture written to " << c.output_dir.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
