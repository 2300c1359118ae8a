#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace glitch {

// Splits text into pre-tokens with a Unicode-aware regular expression.
// Matches and the gaps between them are both emitted, in order, so the
// pieces always concatenate back to the input.
class PreTokenizer {
public:
    // Throws MalformedConfig if the pattern does not compile.
    explicit PreTokenizer(const std::string& pattern);
    ~PreTokenizer();

    PreTokenizer(const PreTokenizer&) = delete;
    PreTokenizer& operator=(const PreTokenizer&) = delete;

    std::vector<std::string_view> split(std::string_view text) const;

private:
    struct Compiled;
    std::unique_ptr<Compiled> compiled_;
};

}  // namespace glitch
