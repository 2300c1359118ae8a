#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "glitch/indicators.hpp"
#include "glitch/taxonomy.hpp"
#include "glitch/verification.hpp"

namespace glitch {

// Writes to a temporary sibling and renames it into place. Throws IoFailure.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
// Throws MissingInput when the file does not exist, IoFailure on read errors.
std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a of a file, hex encoded. For safetensors containers only
// the header and the file size are hashed.
std::string fingerprint_file(const std::filesystem::path& path);

struct Fingerprint {
    std::string tokenizer;
    std::string weights;

    bool operator==(const Fingerprint&) const = default;
};

// Throws MismatchedRuns when a field set in both differs.
void check_fingerprint(const Fingerprint& expected, const Fingerprint& found, std::string_view artifact);

inline constexpr std::string_view kTaxonomyFile = "taxonomy.json";
inline constexpr std::string_view kIndicatorsFile = "indicators.json";
inline constexpr std::string_view kIndicatorsBinFile = "indicators.bin";
inline constexpr std::string_view kCandidatesFile = "candidates.json";
inline constexpr std::string_view kVerificationFile = "verification.json";

// Indicator scores are also written inline in indicators.json up to this
// many rows.
inline constexpr std::size_t kInlineScoreLimit = 65536;

struct TaxonomyArtifact {
    Fingerprint fingerprint;
    std::vector<TokenCategory> categories;
};

std::string taxonomy_to_json(const TokenizerModel& model, const TaxonomyArtifact& artifact);
TaxonomyArtifact taxonomy_from_json(std::string_view document);

struct IndicatorsArtifact {
    Fingerprint fingerprint;
    std::string input_tensor;
    std::string output_tensor;
    bool tied = false;
    IndicatorName chosen = IndicatorName::CosineToRef;
    ReferenceSet reference;  // empty when no indicator needed one
    std::vector<IndicatorVector> indicators;
    std::vector<std::string> warnings;

    const IndicatorVector& get(IndicatorName name) const;
};

void write_indicators(const std::filesystem::path& dir, const IndicatorsArtifact& artifact);
IndicatorsArtifact read_indicators(const std::filesystem::path& dir);

struct CandidatesArtifact {
    Fingerprint fingerprint;
    std::vector<CandidateSet> sets;  // first entry is the chosen indicator
};

std::string candidates_to_json(const TokenizerModel& model, const CandidatesArtifact& artifact);
CandidatesArtifact candidates_from_json(std::string_view document);

struct VerificationArtifact {
    Fingerprint fingerprint;
    double threshold = kDefaultThreshold;
    std::vector<VerificationResult> results;
};

std::string verification_to_json(const TokenizerModel& model, const VerificationArtifact& artifact);
VerificationArtifact verification_from_json(std::string_view document);

}  // namespace glitch
