#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "glitch/matrix.hpp"
#include "glitch/tokenizer.hpp"

namespace glitch {

// Deterministic normal variates (Box-Muller over mt19937_64) that do not
// depend on the standard library's distribution implementations.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed);
    double uniform();  // [0, 1)
    double normal();
    std::vector<double> unit_vector(std::size_t dim);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct FixtureOptions {
    std::uint64_t seed = 20240501;
    std::size_t dim = 64;
    std::size_t padding_rows = 8;
};

// 64-token byte-fallback vocabulary ('a'-'z', 'A'-'Z', '0'-'9', U+2581,
// "th") with a tied output matrix of 64 + padding_rows rows. Planted rows
// sit near the padding-row mean; trained rows are far from it and share a
// common background component.
struct SyntheticFixture {
    TokenizerDefinition tokenizer;
    Matrix e_out;
    std::vector<TokenId> planted;
    std::vector<TokenId> trained;
    std::vector<std::size_t> padding_rows;
};

SyntheticFixture make_synthetic_fixture(const FixtureOptions& options = {});

inline constexpr const char* kFixtureTensor = "lm_head.weight";

// Writes tokenizer.json and model.safetensors into dir.
void write_fixture(const SyntheticFixture& fixture, const std::filesystem::path& dir);

// Rows interpolated between the reference direction and random trained
// directions by s = log(1 + count) / log(1 + max_count).
struct CountFixture {
    Matrix e_out;
    std::vector<double> counts;  // one per token row
    std::vector<std::size_t> reference_rows;
};

CountFixture make_count_fixture(std::size_t tokens = 200, std::size_t dim = 32, std::uint64_t seed = 7,
                                double noise = 0.05);

}  // namespace glitch
