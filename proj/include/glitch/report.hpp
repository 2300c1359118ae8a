#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glitch/indicators.hpp"
#include "glitch/taxonomy.hpp"
#include "glitch/verification.hpp"

namespace glitch {

inline constexpr std::size_t kHistogramBins = 100;

struct Histogram {
    IndicatorName indicator = IndicatorName::CosineToRef;
    double min = 0.0;
    double max = 0.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
    bool operator==(const Histogram&) const = default;
};

// Uniform bins over [min, max]; the maximum lands in the last bin. A
// constant vector puts every row in the first bin.
Histogram make_histogram(IndicatorName name, std::span<const double> scores, std::size_t bins = kHistogramBins);

struct TokenEntry {
    TokenId id = 0;
    std::string display;    // "_" for a leading space, \xNN for undecodable bytes
    std::string bytes_hex;  // exact raw bytes

    bool operator==(const TokenEntry&) const = default;
};

TokenEntry token_entry(const TokenizerModel& model, TokenId id);

struct ConfirmedToken {
    TokenEntry token;
    double score = 0.0;
    double max_probability = 0.0;

    bool operator==(const ConfirmedToken&) const = default;
};

struct ReportSummary {
    TokenId vocab_size = 0;
    bool tied = false;
    std::optional<IndicatorName> indicator;
    double fraction = 0.0;
    double threshold = 0.0;
    bool verification_run = false;
    std::size_t candidates = 0;
    std::size_t tested = 0;
    std::size_t confirmed = 0;
    std::size_t inconclusive = 0;

    bool operator==(const ReportSummary&) const = default;
};

struct ComparisonRow {
    IndicatorName indicator = IndicatorName::CosineToRef;
    std::size_t candidates = 0;
    std::size_t tested = 0;
    std::size_t verified = 0;

    bool operator==(const ComparisonRow&) const = default;
};

struct ModelReport {
    ReportSummary summary;
    std::vector<TokenEntry> special_tokens;
    std::vector<TokenEntry> unreachable_tokens;
    std::vector<TokenEntry> partial_utf8_tokens;
    std::vector<Histogram> histograms;
    std::vector<ConfirmedToken> confirmed_tokens;  // ascending score, then id
    std::vector<ComparisonRow> comparison;
    std::vector<std::string> warnings;

    bool operator==(const ModelReport&) const = default;
};

struct ReportInputs {
    const TokenizerModel* model = nullptr;
    std::span<const TokenCategory> taxonomy;
    std::span<const IndicatorVector> indicators;
    bool tied = false;
    const CandidateSet* candidates = nullptr;
    const std::vector<VerificationResult>* results = nullptr;  // null when verification was skipped
    double threshold = kDefaultThreshold;
    std::vector<ComparisonRow> comparison;
    std::vector<std::string> warnings;
};

ModelReport build_report(const ReportInputs& in);

std::string report_to_json(const ModelReport& report);
ModelReport report_from_json(std::string_view document);
std::string report_to_markdown(const ModelReport& report);

enum class ReportFormat : unsigned { Json = 1, Markdown = 2 };

// Writes report.json and/or report.md into dir. Throws IoFailure.
void emit_report(const ModelReport& report, const std::filesystem::path& dir,
                 unsigned formats = static_cast<unsigned>(ReportFormat::Json) |
                                    static_cast<unsigned>(ReportFormat::Markdown));

// One indicator's run for comparison: its candidates, the verification
// results covering them, and the fingerprint of the inputs it was run on.
struct IndicatorRun {
    CandidateSet candidates;
    std::vector<VerificationResult> results;
    std::string fingerprint;
};

// Counts, per indicator, how many of its candidates were verified.
// Throws MismatchedRuns when the runs used different inputs.
std::vector<ComparisonRow> compare_indicators(std::span<const IndicatorRun> runs);

}  // namespace glitch
