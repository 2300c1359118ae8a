#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace glitch {

using TokenId = std::int32_t;

enum class ByteAlphabet {
    ByteToCharTable,  // GPT-2 style: every byte remapped to a printable code point
    ByteFallback,     // "▁" marks spaces, <0xNN> tokens cover raw bytes
};

enum class TokenSource { Trained, Added, Special };

std::string_view to_string(ByteAlphabet alphabet);
std::string_view to_string(TokenSource source);

struct AddedToken {
    TokenId id = 0;
    std::string content;
    bool special = false;
};

struct MergeRule {
    std::string left;
    std::string right;
};

// Unvalidated tokenizer description, as read from a config document.
struct TokenizerDefinition {
    ByteAlphabet byte_alphabet = ByteAlphabet::ByteToCharTable;
    std::vector<std::pair<std::string, TokenId>> vocab;
    std::vector<MergeRule> merges;
    std::string pre_tokenizer_pattern;
    std::vector<AddedToken> added_tokens;
    // Pre-tokens that are already a vocabulary entry skip the merge loop.
    bool ignore_merges = false;
    std::vector<std::string> warnings;
};

struct TokenRecord {
    TokenId id = 0;
    std::string raw_bytes;
    std::optional<std::string> decoded_text;
    TokenSource source = TokenSource::Trained;
};

class PreTokenizer;

// Immutable once built; every member function is safe to call concurrently.
class TokenizerModel {
public:
    // Validates the definition. Throws Error with MalformedConfig,
    // DuplicateTokenId or UnsupportedModelType.
    static TokenizerModel build(TokenizerDefinition def);

    TokenId vocab_size() const { return static_cast<TokenId>(surfaces_.size()); }
    ByteAlphabet byte_alphabet() const { return alphabet_; }
    const std::string& pre_tokenizer_pattern() const { return pattern_; }
    bool ignore_merges() const { return ignore_merges_; }
    std::span<const MergeRule> merges() const { return merges_; }
    std::span<const AddedToken> added_tokens() const { return added_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    // Surface form in the model's alphabet (for added tokens: their content).
    const std::string& surface(TokenId id) const;
    std::optional<TokenId> find(std::string_view surface) const;
    // Added-token entry for id, or nullptr.
    const AddedToken* added_token(TokenId id) const;
    // Rank of the merge (left, right), if any.
    std::optional<int> merge_rank(std::string_view left, std::string_view right) const;

    std::vector<TokenId> encode(std::string_view text) const;
    const TokenRecord& decode_token(TokenId id) const;
    std::string decode_sequence(std::span<const TokenId> ids) const;

    // Stages of encode, exposed for tests and diagnostics.
    std::vector<std::string_view> pre_tokenize(std::string_view text) const;
    std::vector<std::string> to_symbols(std::string_view piece) const;
    std::vector<TokenId> encode_piece(std::string_view piece) const;

    TokenizerDefinition definition() const;

private:
    struct PairHash {
        std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept;
    };
    struct LiteralMatch {
        std::string content;
        TokenId id;
    };

    void append_symbol_ids(std::string_view symbol, std::vector<TokenId>& out) const;

    ByteAlphabet alphabet_ = ByteAlphabet::ByteToCharTable;
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, TokenId> by_surface_;
    std::vector<MergeRule> merges_;
    std::unordered_map<std::pair<std::string, std::string>, int, PairHash> ranks_;
    std::string pattern_;
    std::shared_ptr<const PreTokenizer> pre_tokenizer_;
    std::vector<AddedToken> added_;
    std::vector<int> added_index_;  // id -> index into added_, or -1
    // Added-token literals bucketed by first byte, longest first.
    std::vector<std::vector<LiteralMatch>> literals_;
    std::vector<TokenRecord> records_;
    bool ignore_merges_ = false;
    std::vector<std::string> warnings_;
};

// GPT-2 byte <-> printable code point table.
const std::string& byte_to_symbol(unsigned char b);
std::optional<unsigned char> symbol_to_byte(char32_t cp);

// "<0xNN>" -> byte value.
std::optional<unsigned char> parse_byte_token(std::string_view surface);

inline constexpr std::string_view kSpaceMarker = "\xE2\x96\x81";  // U+2581
inline constexpr std::string_view kGpt2Pattern =
    R"('s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+)";

// Accepts the portable schema or a BPE tokenizer.json.
TokenizerModel load_tokenizer(std::string_view document);
TokenizerModel load_tokenizer_file(const std::filesystem::path& path);
TokenizerDefinition parse_portable(std::string_view document);
TokenizerDefinition import_tokenizer_json(std::string_view document);
std::string to_portable_json(const TokenizerModel& model);

}  // namespace glitch
