#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glitch/artifacts.hpp"
#include "glitch/backend.hpp"
#include "glitch/report.hpp"

namespace glitch {

struct RunConfig {
    std::filesystem::path tokenizer_path;
    std::filesystem::path weights_path;
    std::filesystem::path output_dir;
    std::optional<bool> tied_override;
    std::optional<std::vector<std::size_t>> ref_ids;
    double fraction = 0.02;
    double threshold = kDefaultThreshold;
    std::optional<IndicatorName> indicator_override;
    BackendDescriptor backend;
    bool verify = true;
    // Further indicators to score, select and verify alongside the chosen one.
    std::vector<IndicatorName> compare;
    // Tensor names; empty means detect from well-known names.
    std::string input_tensor;
    std::string output_tensor;
    unsigned threads = 0;

    // Throws InvalidArgument.
    void validate() const;
};

struct TensorNames {
    std::string input;
    std::string output;
};

// Picks embedding tensor names from hints or well-known names. Either
// name may come back empty (but not both). Throws MissingTensor.
TensorNames detect_tensor_names(const SafeTensorsFile& container, const std::string& input_hint,
                                const std::string& output_hint);

std::unique_ptr<CompletionBackend> make_backend(const BackendDescriptor& descriptor,
                                                std::shared_ptr<const TokenizerModel> model,
                                                std::shared_ptr<const Matrix> e_out,
                                                const std::vector<double>& untrained_direction);

// Individual stages. Each reads earlier artifacts from output_dir, writes
// its own, and reports failures as StageError.
TaxonomyArtifact run_classify(const RunConfig& config);
IndicatorsArtifact run_indicators(const RunConfig& config);
CandidatesArtifact run_candidates(const RunConfig& config);
VerificationArtifact run_verify(const RunConfig& config);
ModelReport run_report(const RunConfig& config);

// All stages in order; verification is skipped when config.verify is false.
ModelReport run_pipeline(const RunConfig& config);

}  // namespace glitch
