#include "pretokenizer.hpp"

#include <unicode/regex.h>
#include <unicode/unistr.h>

#include "glitch/error.hpp"
#include "glitch/utf8.hpp"

namespace glitch {

namespace {

// UTF-16 view of a byte string. Bytes that are not valid UTF-8 become lone
// low surrogates (U+DC80 + byte) so they can never match a letter or digit
// class; offsets[k] is the byte offset of UTF-16 unit k.
struct Utf16Text {
    icu::UnicodeString text;
    std::vector<std::size_t> offsets;
};

Utf16Text to_utf16(std::string_view s) {
    Utf16Text out;
    out.offsets.reserve(s.size() + 1);
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t n = utf8::valid_sequence_length(s, pos);
        if (n == 0) {
            out.text.append(static_cast<char16_t>(0xDC80 + static_cast<unsigned char>(s[pos])));
            out.offsets.push_back(pos);
            pos += 1;
            continue;
        }
        const char32_t cp = *utf8::decode_at(s, pos);
        const int32_t before = out.text.length();
        out.text.append(static_cast<UChar32>(cp));
        for (int32_t k = before; k < out.text.length(); ++k) out.offsets.push_back(pos);
        pos += n;
    }
    out.offsets.push_back(s.size());
    return out;
}

}  // namespace

struct PreTokenizer::Compiled {
    std::unique_ptr<icu::RegexPattern> pattern;
};

PreTokenizer::PreTokenizer(const std::string& pattern) : compiled_(std::make_unique<Compiled>()) {
    auto& pattern_ = compiled_->pattern;
    UErrorCode status = U_ZERO_ERROR;
    UParseError parse_error{};
    pattern_.reset(icu::RegexPattern::compile(icu::UnicodeString::fromUTF8(pattern), 0, parse_error, status));
    if (U_FAILURE(status) || !pattern_) {
        throw Error(ErrorCode::MalformedConfig,
                    "unsupported pre-tokenizer pattern (" + std::string(u_errorName(status)) + " at offset " +
                        std::to_string(parse_error.offset) + "): " + pattern);
    }
}

PreTokenizer::~PreTokenizer() = default;

std::vector<std::string_view> PreTokenizer::split(std::string_view text) const {
    std::vector<std::string_view> pieces;
    if (text.empty()) return pieces;

    const Utf16Text u16 = to_utf16(text);
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::RegexMatcher> matcher(compiled_->pattern->matcher(u16.text, status));
    if (U_FAILURE(status)) throw Error(ErrorCode::MalformedConfig, "regex matcher creation failed");

    std::size_t emitted = 0;
    while (matcher->find(status) && U_SUCCESS(status)) {
        const int32_t begin16 = matcher->start(status);
        const int32_t end16 = matcher->end(status);
        if (end16 == begin16) continue;
        const std::size_t begin = u16.offsets[static_cast<std::size_t>(begin16)];
        const std::size_t end = u16.offsets[static_cast<std::size_t>(end16)];
        if (begin > emitted) pieces.push_back(text.substr(emitted, begin - emitted));
        pieces.push_back(text.substr(begin, end - begin));
        emitted = end;
    }
    if (U_FAILURE(status)) throw Error(ErrorCode::MalformedConfig, "regex evaluation failed");
    if (emitted < text.size()) pieces.push_back(text.substr(emitted));
    return pieces;
}

}  // namespace glitch
