#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "doctest.h"
#include "glitch/error.hpp"
#include "glitch/fixture.hpp"
#include "glitch/pipeline.hpp"
#include "oracles.hpp"

using namespace glitch;
namespace fs = std::filesystem;

namespace {

struct FixtureDir {
    oracle::TempDir dir{"pipeline"};
    SyntheticFixture fixture = make_synthetic_fixture();

    FixtureDir() { write_fixture(fixture, dir.path / "fx"); }

    RunConfig config(const std::string& out, double fraction) const {
        RunConfig c;
        c.tokenizer_path = dir.path / "fx" / "tokenizer.json";
        c.weights_path = dir.path / "fx" / "model.safetensors";
        c.output_dir = dir.path / out;
        c.fraction = fraction;
        c.backend.kind = BackendDescriptor::Kind::SyntheticSoftmax;
        return c;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GLITCHSCAN_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Spearman correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i] / n;
        mb += rb[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("fixture geometry") {
    const auto fx = make_synthetic_fixture();
    CHECK(fx.e_out.rows() == 72);
    CHECK(fx.planted == std::vector<TokenId>{5, 13, 21, 29, 37, 45, 53, 61});
    CHECK(fx.trained.size() == 56);
    const auto rows = oracle::rows_of(fx.e_out);
    const auto pad_mean = oracle::mean_rows(rows, fx.padding_rows);
    const auto d = oracle::cosine(rows, pad_mean);
    for (const TokenId id : fx.planted) CHECK(d[static_cast<std::size_t>(id)] < 0.05);
    for (const TokenId id : fx.trained) CHECK(d[static_cast<std::size_t>(id)] > 0.5);
    // same seed, same matrix
    CHECK(make_synthetic_fixture().e_out == fx.e_out);
}

TEST_CASE("end to end: 8 of 8 planted tokens confirmed") {
    FixtureDir f;
    const auto report = run_pipeline(f.config("out", 0.125));
    CHECK(report.summary.vocab_size == 64);
    CHECK(report.summary.tied);
    CHECK(report.summary.candidates == 8);
    CHECK(report.summary.tested == 8);
    CHECK(report.summary.confirmed == 8);
    std::set<TokenId> confirmed;
    for (const auto& c : report.confirmed_tokens) {
        confirmed.insert(c.token.id);
        CHECK(c.max_probability < 1e-3);
    }
    CHECK(confirmed == std::set<TokenId>(f.fixture.planted.begin(), f.fixture.planted.end()));

    // planted cluster near zero, separated from the trained mass
    const auto& h = report.histograms.front();
    CHECK(h.indicator == IndicatorName::CosineToRef);
    CHECK(h.total() == 72);
    std::size_t low = 0, gap = 0;
    for (std::size_t b = 0; b < 10; ++b) low += h.counts[b];
    for (std::size_t b = 10; b < 40; ++b) gap += h.counts[b];
    CHECK(low == 16);  // 8 planted + 8 padding rows
    CHECK(gap == 0);

    for (const char* file : {"taxonomy.json", "indicators.json", "indicators.bin", "candidates.json",
                             "verification.json", "report.json", "report.md"}) {
        CHECK(fs::exists(f.dir.path / "out" / file));
    }
}

TEST_CASE("trained tokens are never confirmed") {
    FixtureDir f;
    auto c = f.config("wide", 0.5);
    c.compare.assign(std::begin(kAllIndicators), std::end(kAllIndicators));
    const auto report = run_pipeline(c);
    CHECK(report.summary.candidates == 32);
    CHECK(report.summary.confirmed == 8);
    CHECK(report.summary.tested == 32);

    const auto verification = verification_from_json(slurp(c.output_dir / "verification.json"));
    const std::set<TokenId> planted(f.fixture.planted.begin(), f.fixture.planted.end());
    for (const auto& r : verification.results) {
        if (planted.count(r.token_id)) {
            CHECK(r.verified());
        } else {
            CHECK(r.max_probability > 0.1);
        }
    }
    REQUIRE(report.comparison.size() == 5);
    for (const auto& row : report.comparison) CHECK(row.verified == 8);
}

TEST_CASE("--no-verify stops after candidate selection") {
    FixtureDir f;
    auto c = f.config("nv", 0.125);
    c.verify = false;
    const auto report = run_pipeline(c);
    CHECK(report.summary.candidates == 8);
    CHECK(report.summary.tested == 0);
    CHECK_FALSE(report.summary.verification_run);
    CHECK_FALSE(fs::exists(c.output_dir / "verification.json"));
}

TEST_CASE("missing weights fail the load stage without a report") {
    FixtureDir f;
    auto c = f.config("missing", 0.125);
    c.weights_path = f.dir.path / "nope.safetensors";
    try {
        run_pipeline(c);
        FAIL("expected LoadFailure");
    } catch (const StageError& e) {
        CHECK(e.code() == ErrorCode::LoadFailure);
        CHECK(e.stage() == "load");
    }
    CHECK_FALSE(fs::exists(c.output_dir / "report.json"));

    auto bad = f.config("bad", 0.0);
    CHECK(code_of([&] { run_pipeline(bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("runs are byte-identical and stages rerun independently") {
    FixtureDir f;
    const auto a = f.config("a", 0.25), b = f.config("b", 0.25);
    run_pipeline(a);
    run_pipeline(b);
    for (const auto& entry : fs::directory_iterator(a.output_dir)) {
        const auto name = entry.path().filename();
        CHECK_MESSAGE(slurp(entry.path()) == slurp(b.output_dir / name), name.string());
    }

    const auto before = slurp(a.output_dir / "report.json");
    const auto candidates_before = slurp(a.output_dir / "candidates.json");
    const auto verification_before = slurp(a.output_dir / "verification.json");
    run_candidates(a);
    run_verify(a);
    run_report(a);
    CHECK(slurp(a.output_dir / "candidates.json") == candidates_before);
    CHECK(slurp(a.output_dir / "verification.json") == verification_before);
    CHECK(slurp(a.output_dir / "report.json") == before);

    // staged run from scratch matches the one-shot run
    const auto s = f.config("staged", 0.25);
    run_classify(s);
    run_indicators(s);
    run_candidates(s);
    run_verify(s);
    run_report(s);
    CHECK(slurp(s.output_dir / "report.json") == before);
}

TEST_CASE("artifacts from different inputs are rejected") {
    FixtureDir f;
    const auto a = f.config("a", 0.125);
    run_pipeline(a);

    FixtureOptions other;
    other.seed = 99;
    write_fixture(make_synthetic_fixture(other), f.dir.path / "fx2");
    auto c = a;
    c.weights_path = f.dir.path / "fx2" / "model.safetensors";
    try {
        run_verify(c);
        FAIL("expected MismatchedRuns");
    } catch (const StageError& e) {
        CHECK(e.code() == ErrorCode::MismatchedRuns);
        CHECK(e.stage() == "verify");
    }

    // the same tokenizer with different bytes on disk
    std::ofstream(f.dir.path / "fx2" / "tokenizer.json") << slurp(a.tokenizer_path) << "\n";
    c = a;
    c.tokenizer_path = f.dir.path / "fx2" / "tokenizer.json";
    CHECK(code_of([&] { run_candidates(c); }) == ErrorCode::MismatchedRuns);
}

TEST_CASE("training counts order CosineToRef scores") {
    const auto fx = make_count_fixture();
    ReferenceSet ref;
    ref.ids = fx.reference_rows;
    ref.u_ref = mean_of_rows(fx.e_out, ref.ids);
    const auto scores = compute_indicator(IndicatorName::CosineToRef, nullptr, &fx.e_out, &ref).scores;
    const std::vector<double> token_scores(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(fx.counts.size()));
    CHECK(spearman(fx.counts, token_scores) >= 0.9);
}

TEST_CASE("spearman oracle sanity") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 1, 2, 3}, {5, 5, 6, 7}) == doctest::Approx(1.0));
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
    oracle::TempDir dir("cli");
    const std::string d = dir.path.string();
    REQUIRE(run_cli("fixture --out " + d + "/fx") == 0);
    const std::string inputs = " --tokenizer " + d + "/fx/tokenizer.json --weights " + d + "/fx/model.safetensors";

    CHECK(run_cli("run" + inputs + " --out " + d + "/ok --synthetic --fraction 0.125") == 0);
    const auto report = report_from_json(slurp(dir.path / "ok" / "report.json"));
    CHECK(report.summary.confirmed == 8);

    CHECK(run_cli("run" + inputs + " --out " + d + "/nv --no-verify --fraction 0.125") == 0);
    CHECK(run_cli("classify --tokenizer " + d + "/fx/tokenizer.json --out " + d + "/st") == 0);
    CHECK(run_cli("indicators" + inputs + " --out " + d + "/st") == 0);
    CHECK(run_cli("candidates --tokenizer " + d + "/fx/tokenizer.json --out " + d + "/st --fraction 0.125") == 0);
    CHECK(run_cli("verify" + inputs + " --out " + d + "/st --synthetic") == 0);
    CHECK(run_cli("report --tokenizer " + d + "/fx/tokenizer.json --out " + d + "/st") == 0);
    CHECK(slurp(dir.path / "st" / "report.json") == slurp(dir.path / "ok" / "report.json"));

    // usage errors
    CHECK(run_cli("") == 1);
    CHECK(run_cli("run" + inputs + " --out " + d + "/u") == 1);
    CHECK(run_cli("run" + inputs + " --out " + d + "/u --synthetic --bogus") == 1);
    CHECK(run_cli("run" + inputs + " --out " + d + "/u --synthetic --indicator Nope") == 1);
    CHECK(run_cli("run" + inputs + " --out " + d + "/u --synthetic --fraction 2") == 1);

    // stage failure
    CHECK(run_cli("run --tokenizer " + d + "/fx/tokenizer.json --weights " + d + "/none --out " + d +
                  "/f --synthetic") == 2);
    CHECK_FALSE(fs::exists(dir.path / "f" / "report.json"));

    // nothing listens on port 1
    CHECK(run_cli("run" + inputs + " --out " + d +
                  "/down --fraction 0.125 --backend-url http://127.0.0.1:1/v1/completions --retries 0 --timeout 2") == 3);
}

}
