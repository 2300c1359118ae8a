#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "glitch/tokenizer.hpp"

namespace glitch {

enum class ByteClass { Ascii, Continuation, Lead2, Lead3, Lead4, NeverValid, CurrentlyUnassigned };

std::string_view to_string(ByteClass cls);

// Position of a byte value in the UTF-8 bit-pattern table. 0xC0/0xC1 and
// 0xF5-0xFF can never occur in valid UTF-8; 0xF1, 0xF2 and 0xF4 are
// structurally valid lead bytes that no assigned code point outside the
// private use planes needs.
ByteClass classify_byte(std::uint8_t b);

enum class TokenFlag : std::uint8_t {
    PartialUtf8 = 1 << 0,
    Unreachable = 1 << 1,
    Special = 1 << 2,
    ByteToken = 1 << 3,
    OkForTesting = 1 << 4,
};

std::string_view to_string(TokenFlag flag);

struct TokenCategory {
    TokenId id = 0;
    std::uint8_t flags = 0;

    bool has(TokenFlag f) const { return (flags & static_cast<std::uint8_t>(f)) != 0; }
    void set(TokenFlag f) { flags |= static_cast<std::uint8_t>(f); }
    std::vector<std::string> flag_names() const;
    bool operator==(const TokenCategory&) const = default;
};

// True for text shaped like <...> or [...] (at least one inner character).
bool matches_bracket_pattern(std::string_view text);

TokenCategory classify_token(const TokenizerModel& model, const TokenRecord& record);

// One entry per id in [0, vocab_size), in id order.
std::vector<TokenCategory> taxonomy_report(const TokenizerModel& model, unsigned threads = 0);

struct ByteCoverage {
    std::uint8_t byte_value = 0;
    ByteClass cls = ByteClass::Ascii;
    std::vector<TokenId> tokens;  // trained tokens whose raw bytes are exactly this byte
};

// Single-byte token coverage for all 256 byte values.
std::vector<ByteCoverage> byte_coverage(const TokenizerModel& model);

}  // namespace glitch
