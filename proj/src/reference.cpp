#include <algorithm>
#include <cctype>
#include <map>

#include "glitch/error.hpp"
#include "glitch/indicators.hpp"

namespace glitch {

std::string_view to_string(RefProvenance p) {
    switch (p) {
        case RefProvenance::PaddingRow: return "PaddingRow";
        case RefProvenance::UnusedUtf8Byte: return "UnusedUtf8Byte";
        case RefProvenance::PatternMatch: return "PatternMatch";
        case RefProvenance::UserSupplied: return "UserSupplied";
    }
    return "?";
}

std::vector<double> mean_of_rows(const Matrix& a, std::span<const std::size_t> ids) {
    if (ids.empty()) throw Error(ErrorCode::NoReferenceTokens, "mean of an empty row set");
    std::vector<double> mean(a.cols(), 0.0);
    for (const std::size_t i : ids) {
        if (i >= a.rows()) throw Error(ErrorCode::IdOutOfRange, "row " + std::to_string(i) + " outside matrix");
        const auto r = a.row(i);
        for (std::size_t k = 0; k < r.size(); ++k) mean[k] += r[k];
    }
    for (double& m : mean) m /= static_cast<double>(ids.size());
    return mean;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

ReferenceSet find_reference_tokens(const TokenizerModel& model, const Matrix& e_out,
                                   std::span<const TokenCategory> taxonomy,
                                   const std::optional<std::vector<std::size_t>>& user_ids,
                                   const ReferenceOptions& options) {
    std::map<std::size_t, RefProvenance> chosen;
    if (user_ids) {
        for (const std::size_t id : *user_ids) {
            if (id >= e_out.rows()) {
                throw Error(ErrorCode::IdOutOfRange, "reference id " + std::to_string(id) + " outside the matrix");
            }
            chosen.emplace(id, RefProvenance::UserSupplied);
        }
    } else {
        const auto vocab = static_cast<std::size_t>(model.vocab_size());
        for (std::size_t row = vocab; row < e_out.rows(); ++row) chosen.emplace(row, RefProvenance::PaddingRow);

        for (TokenId id = 0; id < model.vocab_size(); ++id) {
            const TokenRecord& rec = model.decode_token(id);
            if (rec.source == TokenSource::Trained && rec.raw_bytes.size() == 1 &&
                static_cast<unsigned char>(rec.raw_bytes[0]) >= 0xF5) {
                chosen.emplace(static_cast<std::size_t>(id), RefProvenance::UnusedUtf8Byte);
            }
        }

        if (!options.unused_patterns.empty()) {
            for (const auto& cat : taxonomy) {
                if (!cat.has(TokenFlag::Special)) continue;
                const TokenRecord& rec = model.decode_token(cat.id);
                if (!rec.decoded_text || !matches_bracket_pattern(*rec.decoded_text)) continue;
                const std::string text = lower(*rec.decoded_text);
                const bool hit = std::any_of(options.unused_patterns.begin(), options.unused_patterns.end(),
                                             [&](const std::string& p) { return text.find(lower(p)) != std::string::npos; });
                if (hit) chosen.emplace(static_cast<std::size_t>(cat.id), RefProvenance::PatternMatch);
            }
        }
    }
    if (chosen.empty()) {
        throw Error(ErrorCode::NoReferenceTokens,
                    "no padding rows, unused byte tokens or unused specials; supply reference ids explicitly");
    }

    ReferenceSet ref;
    for (const auto& [id, prov] : chosen) {
        if (id >= e_out.rows()) continue;
        ref.ids.push_back(id);
        ref.provenance.push_back(prov);
    }
    if (ref.ids.empty()) throw Error(ErrorCode::NoReferenceTokens, "reference ids lie outside the output matrix");
    ref.u_ref = mean_of_rows(e_out, ref.ids);
    return ref;
}

}  // namespace glitch
