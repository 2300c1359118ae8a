#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glitch/matrix.hpp"
#include "glitch/safetensors.hpp"
#include "glitch/taxonomy.hpp"
#include "glitch/tokenizer.hpp"

namespace glitch {

enum class MatrixKind { Input, Output };

struct EmbeddingMatrix {
    MatrixKind kind = MatrixKind::Output;
    std::shared_ptr<const Matrix> rows;
};

struct LoadedEmbeddings {
    std::optional<EmbeddingMatrix> input;
    std::optional<EmbeddingMatrix> output;
    bool tied = false;
    bool has_output_bias = false;
    std::vector<std::string> warnings;
};

// Reads the input and output embedding matrices. A container holding only
// one of the two names is treated as tied; so are two names whose tensors
// are byte-identical. Throws MissingTensor, ShapeMismatch or
// NonFiniteEntries.
LoadedEmbeddings load_embeddings(const SafeTensorsFile& container, std::string_view input_name,
                                 std::string_view output_name);

// ---------------------------------------------------------------------------
// Row-wise distance primitives. Results hold one entry per matrix row.

struct CosineDistances {
    std::vector<double> scores;
    std::vector<std::size_t> degenerate_rows;  // zero-norm rows, scored 1.0
};

// 1 - (A_i . x) / (|A_i| |x|), clamped to [0, 2]. Throws ZeroReferenceVector.
CosineDistances cosine_distances(const Matrix& a, std::span<const double> x, unsigned threads = 0);
std::vector<double> euclidean_distances(const Matrix& a, std::span<const double> x, unsigned threads = 0);
std::vector<double> row_norms(const Matrix& a, unsigned threads = 0);

std::vector<double> column_means(const Matrix& a);
Matrix center_rows(const Matrix& a);

struct PrincipalDirection {
    std::vector<double> u1;
    double rayleigh = 0.0;  // largest eigenvalue of the centered Gram matrix
    int matvecs = 0;
};

// Leading eigenvector of the centered Gram operator (X - 1 mu^T)^T (X - 1 mu^T),
// found with restarted Lanczos iterations from the normalized all-ones
// vector. Stops when successive Ritz vectors satisfy |cos| >= 1 - tol.
// The sign is chosen so the largest-magnitude entry is positive.
PrincipalDirection first_principal_direction(const Matrix& e, int max_iter = 1000, double tol = 1e-10,
                                             unsigned threads = 0);

Matrix remove_first_pc(const Matrix& e, std::span<const double> u1);

// ---------------------------------------------------------------------------
// Reference (known-untrained) tokens.

enum class RefProvenance { PaddingRow, UnusedUtf8Byte, PatternMatch, UserSupplied };

std::string_view to_string(RefProvenance p);

struct ReferenceSet {
    std::vector<std::size_t> ids;  // ascending row indices
    std::vector<RefProvenance> provenance;
    std::vector<double> u_ref;
};

struct ReferenceOptions {
    // Case-insensitive substrings searched inside bracket-pattern specials.
    std::vector<std::string> unused_patterns{"unused"};
};

std::vector<double> mean_of_rows(const Matrix& a, std::span<const std::size_t> ids);

ReferenceSet find_reference_tokens(const TokenizerModel& model, const Matrix& e_out,
                                   std::span<const TokenCategory> taxonomy,
                                   const std::optional<std::vector<std::size_t>>& user_ids,
                                   const ReferenceOptions& options = {});

// ---------------------------------------------------------------------------
// Indicators.

enum class IndicatorName { CosineToRef, EuclideanToRef, InputNorm, CosineCenteredToRef, CosinePcRemovedToRef };

std::string_view to_string(IndicatorName name);
std::optional<IndicatorName> parse_indicator(std::string_view name);
bool needs_reference(IndicatorName name);
bool is_extended(IndicatorName name);
inline constexpr IndicatorName kAllIndicators[] = {
    IndicatorName::CosineToRef, IndicatorName::EuclideanToRef, IndicatorName::InputNorm,
    IndicatorName::CosineCenteredToRef, IndicatorName::CosinePcRemovedToRef};

struct IndicatorVector {
    IndicatorName name = IndicatorName::CosineToRef;
    std::vector<double> scores;  // lower = more likely under-trained
    std::vector<std::size_t> degenerate_rows;

    bool operator==(const IndicatorVector&) const = default;
};

struct IndicatorOptions {
    unsigned threads = 0;
    int pca_max_iter = 1000;
    double pca_tol = 1e-10;
};

// Throws MissingInput when the matrices or reference set `name` needs are absent.
IndicatorVector compute_indicator(IndicatorName name, const Matrix* e_in, const Matrix* e_out,
                                  const ReferenceSet* ref, const IndicatorOptions& options = {});

// Auto-selection: tied -> CosineToRef, untied -> InputNorm.
IndicatorName default_indicator(bool tied);

// ---------------------------------------------------------------------------
// Candidate selection.

struct CandidateSet {
    IndicatorName indicator = IndicatorName::CosineToRef;
    double fraction = 0.02;
    TokenId vocab_size = 0;
    std::size_t window = 0;  // ceil(fraction * vocab_size)
    std::vector<TokenId> ids;
    std::vector<double> scores;

    bool operator==(const CandidateSet&) const = default;
};

std::size_t candidate_window(double fraction, TokenId vocab_size);

// Takes the `window` lowest-scoring token ids (score, then id), then drops
// ids not flagged OkForTesting. Rows at or beyond vocab_size never qualify.
CandidateSet select_candidates(const IndicatorVector& indicator, std::span<const TokenCategory> taxonomy,
                               double fraction = 0.02);

}  // namespace glitch
