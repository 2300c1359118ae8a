#include <fstream>

#include "doctest.h"
#include "glitch/error.hpp"
#include "glitch/report.hpp"
#include "oracles.hpp"

using namespace glitch;

namespace {

// Chained merges make the long token and "b|c" reachable.
TokenizerModel sample_model() {
    TokenizerDefinition def;
    def.byte_alphabet = ByteAlphabet::ByteFallback;
    auto add = [&](const std::string& s) {
        for (const auto& [surface, id] : def.vocab) {
            if (surface == s) return;
        }
        def.vocab.emplace_back(s, static_cast<TokenId>(def.vocab.size()));
    };
    for (const char* s : {"\u2581SolidGoldMagikarp", "<0xF5>", "<mask>", "a", "<0x61>", "b|c", "\u2581"}) add(s);
    auto chain = [&](const std::vector<std::string>& pieces) {
        std::string acc = pieces[0];
        add(acc);
        for (std::size_t i = 1; i < pieces.size(); ++i) {
            add(pieces[i]);
            def.merges.push_back({acc, pieces[i]});
            acc += pieces[i];
            add(acc);
        }
    };
    std::vector<std::string> magikarp{"\u2581"};
    for (const char c : std::string("SolidGoldMagikarp")) magikarp.emplace_back(1, c);
    chain(magikarp);
    chain({"b", "|", "c"});
    return TokenizerModel::build(def);
}

VerificationResult result(TokenId id, double p, Verdict v) {
    VerificationResult r;
    r.token_id = id;
    r.max_probability = p;
    r.verdict = v;
    for (const auto pid : kVerificationPrompts) r.per_prompt_max[pid] = p;
    return r;
}

struct Sample {
    TokenizerModel model = sample_model();
    std::vector<TokenCategory> taxonomy = taxonomy_report(model);
    std::vector<IndicatorVector> indicators;
    CandidateSet candidates;
    std::vector<VerificationResult> results;

    Sample() {
        IndicatorVector cos;
        cos.name = IndicatorName::CosineToRef;
        cos.scores = {0.01, 0.0, 0.9, 0.02, 0.5, 0.03, 0.8};
        for (auto id = cos.scores.size(); id < static_cast<std::size_t>(model.vocab_size()); ++id) {
            cos.scores.push_back(0.6 + 0.001 * static_cast<double>(id));
        }
        indicators.push_back(cos);
        candidates = select_candidates(cos, taxonomy, 5.0 / model.vocab_size());
        for (const TokenId id : candidates.ids) {
            results.push_back(id == 3 ? result(id, 0.5, Verdict::NotConfirmed) : result(id, 1e-5, Verdict::Confirmed));
        }
    }

    ReportInputs inputs() const {
        ReportInputs in;
        in.model = &model;
        in.taxonomy = taxonomy;
        in.indicators = indicators;
        in.tied = true;
        in.candidates = &candidates;
        in.results = &results;
        in.warnings = {"example warning"};
        return in;
    }
};

}  // namespace

TEST_SUITE("report") {

TEST_CASE("histogram binning") {
    const std::vector<double> scores{0.0, 0.1, 0.5, 0.99, 1.0, 1.0};
    const auto h = make_histogram(IndicatorName::InputNorm, scores, 10);
    CHECK(h.min == 0.0);
    CHECK(h.max == 1.0);
    CHECK(h.total() == scores.size());
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 1);
    CHECK(h.counts[5] == 1);
    CHECK(h.counts[9] == 3);

    const std::vector<double> flat(7, 0.25);
    const auto c = make_histogram(IndicatorName::InputNorm, flat);
    CHECK(c.counts.size() == 100);
    CHECK(c.counts[0] == 7);
    CHECK(make_histogram(IndicatorName::InputNorm, {}).total() == 0);
}

TEST_CASE("report contents") {
    Sample s;
    const auto r = build_report(s.inputs());
    CHECK(r.summary.vocab_size == s.model.vocab_size());
    CHECK(r.summary.tied);
    CHECK(r.summary.indicator == IndicatorName::CosineToRef);
    // window of 5: ids 1, 0, 3, 5, 4 minus the excluded 1 and 4
    CHECK(s.candidates.ids == std::vector<TokenId>{0, 3, 5});
    CHECK(r.summary.candidates == 3);
    CHECK(r.summary.tested == 3);
    CHECK(r.summary.confirmed == 2);
    CHECK(r.summary.confirmed == r.confirmed_tokens.size());
    REQUIRE(r.confirmed_tokens.size() == 2);
    CHECK(r.confirmed_tokens[0].token.display == "_SolidGoldMagikarp");
    CHECK(r.confirmed_tokens[0].score == 0.01);
    CHECK(r.confirmed_tokens[1].token.id == 5);
    CHECK(r.special_tokens.size() == 1);
    CHECK(r.special_tokens[0].display == "<mask>");
    REQUIRE(r.partial_utf8_tokens.size() == 1);
    CHECK(r.partial_utf8_tokens[0].display == "\\xF5");
    CHECK(r.partial_utf8_tokens[0].bytes_hex == "f5");
    REQUIRE(r.unreachable_tokens.size() == 1);
    CHECK(r.unreachable_tokens[0].id == 4);
    REQUIRE(r.histograms.size() == 1);
    CHECK(r.histograms[0].total() == static_cast<std::uint64_t>(s.model.vocab_size()));
    for (const auto& c : r.confirmed_tokens) CHECK(s.taxonomy[c.token.id].has(TokenFlag::OkForTesting));
}

TEST_CASE("JSON round trip") {
    Sample s;
    const auto r = build_report(s.inputs());
    const auto text = report_to_json(r);
    CHECK(report_from_json(text) == r);
    CHECK(report_to_json(report_from_json(text)) == text);
    CHECK(text.find("\\\\xF5") != std::string::npos);
    CHECK_THROWS_AS(report_from_json("{"), Error);
}

TEST_CASE("an empty report is valid JSON with a zeroed summary") {
    const ModelReport empty;
    const auto text = report_to_json(empty);
    const auto back = report_from_json(text);
    CHECK(back == empty);
    CHECK(back.summary.candidates == 0);
    CHECK(back.summary.confirmed == 0);
    CHECK_FALSE(report_to_markdown(empty).empty());
}

TEST_CASE("markdown tables") {
    Sample s;
    const auto md = report_to_markdown(build_report(s.inputs()));
    CHECK(md.starts_with("# Under-trained token report"));
    CHECK(md.find("| _SolidGoldMagikarp |") != std::string::npos);
    CHECK(md.find("\\xF5") != std::string::npos);
    CHECK(md.find("2/3") != std::string::npos);
    CHECK(md.find("b\\|c") != std::string::npos);
    CHECK(md.find("example warning") != std::string::npos);
}

TEST_CASE("reports without verification") {
    Sample s;
    auto in = s.inputs();
    in.results = nullptr;
    const auto r = build_report(in);
    CHECK_FALSE(r.summary.verification_run);
    CHECK(r.summary.candidates == 3);
    CHECK(r.summary.tested == 0);
    CHECK(r.confirmed_tokens.empty());
}

TEST_CASE("a confirmed token must be testable") {
    Sample s;
    s.results.push_back(result(1, 1e-6, Verdict::Confirmed));
    CHECK_THROWS_AS(build_report(s.inputs()), Error);
}

TEST_CASE("emit_report writes both formats") {
    Sample s;
    const auto r = build_report(s.inputs());
    oracle::TempDir dir("report");
    emit_report(r, dir.path);
    std::ifstream j(dir.path / "report.json"), m(dir.path / "report.md");
    const std::string json_text((std::istreambuf_iterator<char>(j)), {});
    const std::string md_text((std::istreambuf_iterator<char>(m)), {});
    CHECK(json_text == report_to_json(r));
    CHECK(md_text == report_to_markdown(r));

    oracle::TempDir only("report_json");
    emit_report(r, only.path, static_cast<unsigned>(ReportFormat::Json));
    CHECK(std::filesystem::exists(only.path / "report.json"));
    CHECK_FALSE(std::filesystem::exists(only.path / "report.md"));

    CHECK_THROWS_AS(emit_report(r, dir.path / "report.json" / "nested"), Error);
}

TEST_CASE("indicator comparison") {
    Sample s;
    IndicatorRun a{s.candidates, s.results, "fp"};
    IndicatorRun b = a;
    b.candidates.indicator = IndicatorName::EuclideanToRef;
    const std::vector<IndicatorRun> runs{a, b};
    const auto rows = compare_indicators(runs);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].verified == 2);
    CHECK(rows[0].tested == 3);
    CHECK(rows[1].verified == rows[0].verified);
    CHECK(rows[1].indicator == IndicatorName::EuclideanToRef);

    // inconclusive or missing results are not tested
    IndicatorRun c = a;
    c.results[0].verdict = Verdict::Inconclusive;
    c.results.pop_back();
    const auto partial = compare_indicators(std::vector<IndicatorRun>{c});
    CHECK(partial[0].tested == 1);
    CHECK(partial[0].candidates == 3);

    IndicatorRun d = a;
    d.fingerprint = "other";
    try {
        compare_indicators(std::vector<IndicatorRun>{a, d});
        FAIL("expected MismatchedRuns");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MismatchedRuns);
    }
}

}
