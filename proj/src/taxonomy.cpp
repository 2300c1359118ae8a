#include "glitch/taxonomy.hpp"

#include "glitch/error.hpp"
#include "glitch/parallel.hpp"

namespace glitch {

std::string_view to_string(ByteClass cls) {
    switch (cls) {
        case ByteClass::Ascii: return "Ascii";
        case ByteClass::Continuation: return "Continuation";
        case ByteClass::Lead2: return "Lead2";
        case ByteClass::Lead3: return "Lead3";
        case ByteClass::Lead4: return "Lead4";
        case ByteClass::NeverValid: return "NeverValid";
        case ByteClass::CurrentlyUnassigned: return "CurrentlyUnassigned";
    }
    return "?";
}

ByteClass classify_byte(std::uint8_t b) {
    if (b < 0x80) return ByteClass::Ascii;
    if (b < 0xC0) return ByteClass::Continuation;
    if (b == 0xC0 || b == 0xC1) return ByteClass::NeverValid;
    if (b < 0xE0) return ByteClass::Lead2;
    if (b < 0xF0) return ByteClass::Lead3;
    if (b == 0xF1 || b == 0xF2 || b == 0xF4) return ByteClass::CurrentlyUnassigned;
    if (b < 0xF5) return ByteClass::Lead4;
    return ByteClass::NeverValid;
}

std::string_view to_string(TokenFlag flag) {
    switch (flag) {
        case TokenFlag::PartialUtf8: return "PartialUtf8";
        case TokenFlag::Unreachable: return "Unreachable";
        case TokenFlag::Special: return "Special";
        case TokenFlag::ByteToken: return "ByteToken";
        case TokenFlag::OkForTesting: return "OkForTesting";
    }
    return "?";
}

std::vector<std::string> TokenCategory::flag_names() const {
    std::vector<std::string> names;
    for (const auto f : {TokenFlag::PartialUtf8, TokenFlag::Unreachable, TokenFlag::Special, TokenFlag::ByteToken,
                         TokenFlag::OkForTesting}) {
        if (has(f)) names.emplace_back(to_string(f));
    }
    return names;
}

bool matches_bracket_pattern(std::string_view text) {
    if (text.size() < 3) return false;
    return (text.front() == '<' && text.back() == '>') || (text.front() == '[' && text.back() == ']');
}

TokenCategory classify_token(const TokenizerModel& model, const TokenRecord& record) {
    TokenCategory cat;
    cat.id = record.id;
    if (record.raw_bytes.size() == 1) cat.set(TokenFlag::ByteToken);

    if (!record.decoded_text) {
        cat.set(TokenFlag::PartialUtf8);
        return cat;
    }

    // explicit added-token metadata overrides the bracket heuristic
    bool special = matches_bracket_pattern(*record.decoded_text);
    if (const AddedToken* added = model.added_token(record.id)) special = added->special;
    if (special) {
        cat.set(TokenFlag::Special);
        return cat;
    }

    bool reachable = false;
    try {
        const auto ids = model.encode(*record.decoded_text);
        reachable = ids.size() == 1 && ids.front() == record.id;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SymbolNotInVocab) throw;
    }
    if (!reachable) {
        cat.set(TokenFlag::Unreachable);
        return cat;
    }
    cat.set(TokenFlag::OkForTesting);
    return cat;
}

std::vector<TokenCategory> taxonomy_report(const TokenizerModel& model, unsigned threads) {
    std::vector<TokenCategory> out(static_cast<std::size_t>(model.vocab_size()));
    parallel_for(out.size(), threads, [&](std::size_t i) {
        out[i] = classify_token(model, model.decode_token(static_cast<TokenId>(i)));
    });
    return out;
}

std::vector<ByteCoverage> byte_coverage(const TokenizerModel& model) {
    std::vector<ByteCoverage> out(256);
    for (int b = 0; b < 256; ++b) {
        out[b].byte_value = static_cast<std::uint8_t>(b);
        out[b].cls = classify_byte(static_cast<std::uint8_t>(b));
    }
    for (TokenId id = 0; id < model.vocab_size(); ++id) {
        const TokenRecord& rec = model.decode_token(id);
        if (rec.source != TokenSource::Trained || rec.raw_bytes.size() != 1) continue;
        out[static_cast<unsigned char>(rec.raw_bytes[0])].tokens.push_back(id);
    }
    return out;
}

}  // namespace glitch
