#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace glitch::utf8 {

// Length of the well-formed UTF-8 sequence starting at s[pos], or 0 if the
// bytes there are not a complete, valid sequence (overlongs, surrogates and
// code points above U+10FFFF are rejected).
std::size_t valid_sequence_length(std::string_view s, std::size_t pos);

bool is_valid(std::string_view s);

// Decodes the sequence at s[pos]; nullopt when invalid.
std::optional<char32_t> decode_at(std::string_view s, std::size_t pos);

std::string encode(char32_t cp);

// Splits s into its UTF-8 characters. Invalid bytes come out as
// one-byte pieces.
std::vector<std::string_view> split_chars(std::string_view s);

// Human-facing rendering of a token's bytes: a leading space becomes '_',
// undecodable bytes and C0/DEL control characters become \xNN.
std::string display(std::string_view bytes);

std::string to_hex(std::string_view bytes);
std::optional<std::string> from_hex(std::string_view hex);

}  // namespace glitch::utf8
