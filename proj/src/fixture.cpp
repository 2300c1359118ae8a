#include "glitch/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "glitch/artifacts.hpp"
#include "glitch/safetensors.hpp"

namespace glitch {

GaussianSource::GaussianSource(std::uint64_t seed) : engine_(seed) {}

double GaussianSource::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianSource::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::vector<double> GaussianSource::unit_vector(std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (double& x : v) {
        x = normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// Removes the components along each (unit) vector in `against`, then normalizes.
std::vector<double> orthonormal(std::vector<double> v, std::initializer_list<const std::vector<double>*> against) {
    for (const auto* a : against) {
        const double c = dot(v, *a);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= c * (*a)[k];
    }
    const double n = std::sqrt(dot(v, v));
    for (double& x : v) x /= n;
    return v;
}

void set_row(Matrix& m, std::size_t i, const std::vector<double>& v) {
    auto r = m.row(i);
    std::copy(v.begin(), v.end(), r.begin());
}

std::vector<double> near(GaussianSource& g, const std::vector<double>& center, double scale, double spread) {
    const double sd = spread / std::sqrt(static_cast<double>(center.size()));
    std::vector<double> v(center.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = scale * (center[k] + sd * g.normal());
    return v;
}

}  // namespace

SyntheticFixture make_synthetic_fixture(const FixtureOptions& options) {
    SyntheticFixture f;
    auto& def = f.tokenizer;
    def.byte_alphabet = ByteAlphabet::ByteFallback;
    TokenId next = 0;
    for (char c = 'a'; c <= 'z'; ++c) def.vocab.emplace_back(std::string(1, c), next++);
    for (char c = 'A'; c <= 'Z'; ++c) def.vocab.emplace_back(std::string(1, c), next++);
    for (char c = '0'; c <= '9'; ++c) def.vocab.emplace_back(std::string(1, c), next++);
    def.vocab.emplace_back(std::string(kSpaceMarker), next++);
    def.vocab.emplace_back("th", next++);
    def.merges.push_back(MergeRule{"t", "h"});

    const std::size_t vocab = def.vocab.size();
    const std::size_t d = options.dim;
    GaussianSource g(options.seed);
    const auto untrained = g.unit_vector(d);
    const auto background = orthonormal(g.unit_vector(d), {&untrained});

    for (TokenId id = 5; id < static_cast<TokenId>(vocab); id += 8) f.planted.push_back(id);

    constexpr double kUntrainedScale = 0.05;
    f.e_out = Matrix(vocab + options.padding_rows, d);
    for (TokenId id = 0; id < static_cast<TokenId>(vocab); ++id) {
        const auto i = static_cast<std::size_t>(id);
        if (std::find(f.planted.begin(), f.planted.end(), id) != f.planted.end()) {
            set_row(f.e_out, i, near(g, untrained, kUntrainedScale, 0.1));
            continue;
        }
        f.trained.push_back(id);
        const auto w = orthonormal(g.unit_vector(d), {&untrained, &background});
        const double a = -0.2 + 0.4 * g.uniform();
        const double b = 0.30 + 0.05 * g.uniform();
        const double r = 0.95 + 0.10 * g.uniform();
        const double rest = std::sqrt(1.0 - a * a - b * b);
        std::vector<double> row(d);
        for (std::size_t k = 0; k < d; ++k) row[k] = r * (rest * w[k] + a * untrained[k] + b * background[k]);
        set_row(f.e_out, i, row);
    }
    for (std::size_t p = 0; p < options.padding_rows; ++p) {
        f.padding_rows.push_back(vocab + p);
        set_row(f.e_out, vocab + p, near(g, untrained, kUntrainedScale, 0.05));
    }
    return f;
}

void write_fixture(const SyntheticFixture& fixture, const std::filesystem::path& dir) {
    const auto model = TokenizerModel::build(fixture.tokenizer);
    write_atomic(dir / "tokenizer.json", to_portable_json(model));
    const TensorData t{kFixtureTensor,
                       DType::F64,
                       {static_cast<std::int64_t>(fixture.e_out.rows()), static_cast<std::int64_t>(fixture.e_out.cols())},
                       fixture.e_out.data()};
    write_atomic(dir / "model.safetensors", write_safetensors(std::span<const TensorData>(&t, 1), {{"format", "pt"}}));
}

CountFixture make_count_fixture(std::size_t tokens, std::size_t dim, std::uint64_t seed, double noise) {
    CountFixture f;
    GaussianSource g(seed);
    const auto ref = g.unit_vector(dim);
    f.counts.resize(tokens);
    for (double& c : f.counts) c = std::floor(std::pow(10.0, 6.0 * g.uniform())) - 1.0;
    const double top = std::log1p(*std::max_element(f.counts.begin(), f.counts.end()));

    constexpr std::size_t kReferenceRows = 8;
    f.e_out = Matrix(tokens + kReferenceRows, dim);
    const double sd = noise / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < tokens; ++i) {
        const double s = top > 0.0 ? std::log1p(f.counts[i]) / top : 0.0;
        const auto w = orthonormal(g.unit_vector(dim), {&ref});
        std::vector<double> row(dim);
        for (std::size_t k = 0; k < dim; ++k) row[k] = (1.0 - s) * ref[k] + s * w[k] + sd * g.normal();
        set_row(f.e_out, i, row);
    }
    for (std::size_t p = 0; p < kReferenceRows; ++p) {
        f.reference_rows.push_back(tokens + p);
        set_row(f.e_out, tokens + p, near(g, ref, 1.0, 0.01));
    }
    return f;
}

}  // namespace glitch
