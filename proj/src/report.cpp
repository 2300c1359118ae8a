#include "glitch/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "glitch/artifacts.hpp"
#include "glitch/utf8.hpp"
#include "json.hpp"

namespace glitch {

using json = nlohmann::ordered_json;

std::uint64_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Histogram make_histogram(IndicatorName name, std::span<const double> scores, std::size_t bins) {
    if (bins == 0) throw Error(ErrorCode::InvalidArgument, "histogram needs at least one bin");
    Histogram h;
    h.indicator = name;
    h.counts.assign(bins, 0);
    if (scores.empty()) return h;
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    h.min = *lo;
    h.max = *hi;
    const double width = h.max - h.min;
    for (const double s : scores) {
        std::size_t bin = 0;
        if (width > 0.0) {
            bin = static_cast<std::size_t>((s - h.min) / width * static_cast<double>(bins));
            bin = std::min(bin, bins - 1);
        }
        ++h.counts[bin];
    }
    return h;
}

TokenEntry token_entry(const TokenizerModel& model, TokenId id) {
    const std::string& bytes = model.decode_token(id).raw_bytes;
    return TokenEntry{id, utf8::display(bytes), utf8::to_hex(bytes)};
}

ModelReport build_report(const ReportInputs& in) {
    if (in.model == nullptr) throw Error(ErrorCode::MissingInput, "report needs a tokenizer");
    ModelReport r;
    const TokenizerModel& model = *in.model;
    r.summary.vocab_size = model.vocab_size();
    r.summary.tied = in.tied;
    r.summary.threshold = in.threshold;
    r.warnings = in.warnings;
    r.comparison = in.comparison;

    for (const auto& cat : in.taxonomy) {
        if (cat.has(TokenFlag::Special)) r.special_tokens.push_back(token_entry(model, cat.id));
        if (cat.has(TokenFlag::Unreachable)) r.unreachable_tokens.push_back(token_entry(model, cat.id));
        if (cat.has(TokenFlag::PartialUtf8)) r.partial_utf8_tokens.push_back(token_entry(model, cat.id));
    }
    for (const auto& ind : in.indicators) r.histograms.push_back(make_histogram(ind.name, ind.scores));

    std::map<TokenId, double> scores;
    if (in.candidates != nullptr) {
        r.summary.indicator = in.candidates->indicator;
        r.summary.fraction = in.candidates->fraction;
        r.summary.candidates = in.candidates->ids.size();
        for (std::size_t k = 0; k < in.candidates->ids.size(); ++k) {
            scores[in.candidates->ids[k]] = in.candidates->scores[k];
        }
    } else if (!in.indicators.empty()) {
        r.summary.indicator = in.indicators.front().name;
    }

    if (in.results != nullptr) {
        const auto s = summarize(*in.results);
        r.summary.verification_run = true;
        r.summary.tested = s.tested;
        r.summary.confirmed = s.confirmed;
        r.summary.inconclusive = s.inconclusive;
        for (const auto& res : *in.results) {
            if (!res.verified()) continue;
            if (!in.taxonomy.empty() &&
                !in.taxonomy[static_cast<std::size_t>(res.token_id)].has(TokenFlag::OkForTesting)) {
                throw Error(ErrorCode::InvalidArgument,
                            "confirmed token " + std::to_string(res.token_id) + " is not OkForTesting");
            }
            const auto it = scores.find(res.token_id);
            r.confirmed_tokens.push_back(ConfirmedToken{token_entry(model, res.token_id),
                                                        it == scores.end() ? 0.0 : it->second, res.max_probability});
        }
        std::sort(r.confirmed_tokens.begin(), r.confirmed_tokens.end(), [](const auto& a, const auto& b) {
            return a.score != b.score ? a.score < b.score : a.token.id < b.token.id;
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json entry_json(const TokenEntry& e) {
    return json{{"id", e.id}, {"display", e.display}, {"bytes_hex", e.bytes_hex}};
}

TokenEntry entry_from(const json& j) {
    return TokenEntry{j.at("id").get<TokenId>(), j.at("display").get<std::string>(),
                      j.at("bytes_hex").get<std::string>()};
}

json entries_json(const std::vector<TokenEntry>& v) {
    json out = json::array();
    for (const auto& e : v) out.push_back(entry_json(e));
    return out;
}

std::vector<TokenEntry> entries_from(const json& j) {
    std::vector<TokenEntry> out;
    for (const auto& e : j) out.push_back(entry_from(e));
    return out;
}

IndicatorName indicator_from(const json& j) {
    const auto name = parse_indicator(j.get<std::string>());
    if (!name) throw Error(ErrorCode::MalformedConfig, "unknown indicator " + j.dump());
    return *name;
}

}  // namespace

std::string report_to_json(const ModelReport& r) {
    json doc;
    const auto& s = r.summary;
    doc["summary"] = {{"vocab_size", s.vocab_size},
                      {"tied", s.tied},
                      {"indicator", s.indicator ? json(to_string(*s.indicator)) : json(nullptr)},
                      {"fraction", s.fraction},
                      {"threshold", s.threshold},
                      {"verification_run", s.verification_run},
                      {"candidates", s.candidates},
                      {"tested", s.tested},
                      {"confirmed", s.confirmed},
                      {"inconclusive", s.inconclusive}};
    doc["taxonomy"] = {{"special", entries_json(r.special_tokens)},
                       {"unreachable", entries_json(r.unreachable_tokens)},
                       {"partial_utf8", entries_json(r.partial_utf8_tokens)}};
    json hists = json::array();
    for (const auto& h : r.histograms) {
        hists.push_back({{"indicator", to_string(h.indicator)}, {"min", h.min}, {"max", h.max}, {"counts", h.counts}});
    }
    doc["histograms"] = std::move(hists);
    json confirmed = json::array();
    for (const auto& c : r.confirmed_tokens) {
        json e = entry_json(c.token);
        e["score"] = c.score;
        e["max_probability"] = c.max_probability;
        confirmed.push_back(std::move(e));
    }
    doc["confirmed_tokens"] = std::move(confirmed);
    json comparison = json::array();
    for (const auto& row : r.comparison) {
        comparison.push_back({{"indicator", to_string(row.indicator)},
                              {"candidates", row.candidates},
                              {"tested", row.tested},
                              {"verified", row.verified}});
    }
    doc["comparison"] = std::move(comparison);
    doc["warnings"] = r.warnings;
    return doc.dump(2) + "\n";
}

ModelReport report_from_json(std::string_view document) {
    try {
        const json doc = json::parse(document);
        ModelReport r;
        const json& s = doc.at("summary");
        r.summary.vocab_size = s.at("vocab_size").get<TokenId>();
        r.summary.tied = s.at("tied").get<bool>();
        if (!s.at("indicator").is_null()) r.summary.indicator = indicator_from(s.at("indicator"));
        r.summary.fraction = s.at("fraction").get<double>();
        r.summary.threshold = s.at("threshold").get<double>();
        r.summary.verification_run = s.at("verification_run").get<bool>();
        r.summary.candidates = s.at("candidates").get<std::size_t>();
        r.summary.tested = s.at("tested").get<std::size_t>();
        r.summary.confirmed = s.at("confirmed").get<std::size_t>();
        r.summary.inconclusive = s.at("inconclusive").get<std::size_t>();

        const json& tax = doc.at("taxonomy");
        r.special_tokens = entries_from(tax.at("special"));
        r.unreachable_tokens = entries_from(tax.at("unreachable"));
        r.partial_utf8_tokens = entries_from(tax.at("partial_utf8"));
        for (const auto& h : doc.at("histograms")) {
            r.histograms.push_back(Histogram{indicator_from(h.at("indicator")), h.at("min").get<double>(),
                                             h.at("max").get<double>(),
                                             h.at("counts").get<std::vector<std::uint64_t>>()});
        }
        for (const auto& c : doc.at("confirmed_tokens")) {
            r.confirmed_tokens.push_back(
                ConfirmedToken{entry_from(c), c.at("score").get<double>(), c.at("max_probability").get<double>()});
        }
        for (const auto& row : doc.at("comparison")) {
            r.comparison.push_back(ComparisonRow{indicator_from(row.at("indicator")),
                                                 row.at("candidates").get<std::size_t>(),
                                                 row.at("tested").get<std::size_t>(),
                                                 row.at("verified").get<std::size_t>()});
        }
        r.warnings = doc.at("warnings").get<std::vector<std::string>>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedConfig, std::string("report JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Markdown

namespace {

std::string cell(std::string_view text) {
    std::string out;
    for (const char c : text) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void token_table(std::string& md, std::string_view title, const std::vector<TokenEntry>& tokens) {
    md += "## " + std::string(title) + " (" + std::to_string(tokens.size()) + ")\n\n";
    if (tokens.empty()) {
        md += "None.\n\n";
        return;
    }
    md += "| id | token | bytes |\n|---:|---|---|\n";
    for (const auto& t : tokens) {
        md += "| " + std::to_string(t.id) + " | " + cell(t.display) + " | " + t.bytes_hex + " |\n";
    }
    md += "\n";
}

}  // namespace

std::string report_to_markdown(const ModelReport& r) {
    const auto& s = r.summary;
    std::string md = "# Under-trained token report\n\n";
    md += "| Vocab size | Tied emb. | Indicator | #Confirmed | Examples |\n|---:|---|---|---|---|\n";
    std::string confirmed = s.verification_run
                                ? std::to_string(s.confirmed) + "/" + std::to_string(s.tested)
                                : "not verified (" + std::to_string(s.candidates) + " candidates)";
    std::string examples;
    for (std::size_t k = 0; k < std::min<std::size_t>(5, r.confirmed_tokens.size()); ++k) {
        if (k > 0) examples += ", ";
        examples += cell(r.confirmed_tokens[k].token.display);
    }
    md += "| " + std::to_string(s.vocab_size) + " | " + (s.tied ? "yes" : "no") + " | " +
          (s.indicator ? std::string(to_string(*s.indicator)) : "-") + " | " + confirmed + " | " + examples +
          " |\n\n";
    md += "Candidate fraction " + number(s.fraction) + ", threshold " + number(s.threshold) + ", " +
          std::to_string(s.inconclusive) + " inconclusive.\n\n";

    md += "## Confirmed tokens (" + std::to_string(r.confirmed_tokens.size()) + ")\n\n";
    if (r.confirmed_tokens.empty()) {
        md += "None.\n\n";
    } else {
        md += "| id | token | score | max probability |\n|---:|---|---:|---:|\n";
        for (const auto& c : r.confirmed_tokens) {
            md += "| " + std::to_string(c.token.id) + " | " + cell(c.token.display) + " | " + number(c.score) +
                  " | " + number(c.max_probability) + " |\n";
        }
        md += "\n";
    }
    token_table(md, "Special tokens", r.special_tokens);
    token_table(md, "Unreachable tokens", r.unreachable_tokens);
    token_table(md, "Partial UTF-8 tokens", r.partial_utf8_tokens);

    if (!r.histograms.empty()) {
        md += "## Indicator histograms\n\n| indicator | min | max | counts |\n|---|---:|---:|---|\n";
        for (const auto& h : r.histograms) {
            std::string counts;
            for (std::size_t k = 0; k < h.counts.size(); ++k) {
                if (k > 0) counts += ' ';
                counts += std::to_string(h.counts[k]);
            }
            md += "| " + std::string(to_string(h.indicator)) + " | " + number(h.min) + " | " + number(h.max) +
                  " | " + counts + " |\n";
        }
        md += "\n";
    }
    if (!r.comparison.empty()) {
        md += "## Indicator comparison\n\n| indicator | candidates | tested | verified |\n|---|---:|---:|---:|\n";
        for (const auto& row : r.comparison) {
            md += "| " + std::string(to_string(row.indicator)) + " | " + std::to_string(row.candidates) + " | " +
                  std::to_string(row.tested) + " | " + std::to_string(row.verified) + " |\n";
        }
        md += "\n";
    }
    if (!r.warnings.empty()) {
        md += "## Warnings\n\n";
        for (const auto& w : r.warnings) md += "- " + w + "\n";
        md += "\n";
    }
    return md;
}

void emit_report(const ModelReport& report, const std::filesystem::path& dir, unsigned formats) {
    if (formats & static_cast<unsigned>(ReportFormat::Json)) write_atomic(dir / "report.json", report_to_json(report));
    if (formats & static_cast<unsigned>(ReportFormat::Markdown)) {
        write_atomic(dir / "report.md", report_to_markdown(report));
    }
}

std::vector<ComparisonRow> compare_indicators(std::span<const IndicatorRun> runs) {
    std::vector<ComparisonRow> rows;
    if (runs.empty()) return rows;
    for (const auto& run : runs) {
        if (run.fingerprint != runs.front().fingerprint ||
            run.candidates.vocab_size != runs.front().candidates.vocab_size) {
            throw Error(ErrorCode::MismatchedRuns, "indicator runs were made on different tokenizer or weights");
        }
    }
    for (const auto& run : runs) {
        std::map<TokenId, Verdict> verdicts;
        for (const auto& r : run.results) verdicts[r.token_id] = r.verdict;
        ComparisonRow row;
        row.indicator = run.candidates.indicator;
        row.candidates = run.candidates.ids.size();
        for (const TokenId id : run.candidates.ids) {
            const auto it = verdicts.find(id);
            if (it == verdicts.end() || it->second == Verdict::Inconclusive) continue;
            ++row.tested;
            if (it->second == Verdict::Confirmed) ++row.verified;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace glitch
