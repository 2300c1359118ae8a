#include "glitch/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <queue>
#include <unordered_set>

#include "glitch/error.hpp"
#include "glitch/utf8.hpp"
#include "pretokenizer.hpp"

namespace glitch {

std::string_view to_string(ByteAlphabet alphabet) {
    return alphabet == ByteAlphabet::ByteToCharTable ? "byte_to_char" : "byte_fallback";
}

std::string_view to_string(TokenSource source) {
    switch (source) {
        case TokenSource::Trained: return "trained";
        case TokenSource::Added: return "added";
        case TokenSource::Special: return "special";
    }
    return "?";
}

namespace {

struct ByteTable {
    std::array<std::string, 256> symbol;
    std::unordered_map<char32_t, unsigned char> inverse;

    ByteTable() {
        std::array<char32_t, 256> cps{};
        std::array<bool, 256> direct{};
        for (int b = 0; b < 256; ++b) {
            direct[b] = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
        }
        char32_t next = 256;
        for (int b = 0; b < 256; ++b) {
            cps[b] = direct[b] ? static_cast<char32_t>(b) : next++;
            symbol[b] = utf8::encode(cps[b]);
            inverse.emplace(cps[b], static_cast<unsigned char>(b));
        }
    }
};

const ByteTable& byte_table() {
    static const ByteTable table;
    return table;
}

std::string replace_all(std::string_view s, std::string_view from, std::string_view to) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t hit = s.find(from, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit - pos));
        out.append(to);
        pos = hit + from.size();
    }
    out.append(s.substr(pos));
    return out;
}

std::string byte_token_surface(unsigned char b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", b);
    return buf;
}

}  // namespace

const std::string& byte_to_symbol(unsigned char b) { return byte_table().symbol[b]; }

std::optional<unsigned char> symbol_to_byte(char32_t cp) {
    const auto& inv = byte_table().inverse;
    const auto it = inv.find(cp);
    if (it == inv.end()) return std::nullopt;
    return it->second;
}

std::optional<unsigned char> parse_byte_token(std::string_view s) {
    if (s.size() != 6 || s.substr(0, 3) != "<0x" || s.back() != '>') return std::nullopt;
    const auto bytes = utf8::from_hex(s.substr(3, 2));
    if (!bytes) return std::nullopt;
    return static_cast<unsigned char>((*bytes)[0]);
}

std::size_t TokenizerModel::PairHash::operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h1 = std::hash<std::string>{}(p.first);
    const std::size_t h2 = std::hash<std::string>{}(p.second);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
}

TokenizerModel TokenizerModel::build(TokenizerDefinition def) {
    TokenizerModel m;
    m.alphabet_ = def.byte_alphabet;
    m.ignore_merges_ = def.ignore_merges;
    m.warnings_ = std::move(def.warnings);

    // ids: vocab entries plus added tokens, dense and without collisions
    TokenId max_id = -1;
    std::unordered_map<TokenId, std::string> id_surface;
    id_surface.reserve(def.vocab.size() + def.added_tokens.size());
    for (auto& [surface, id] : def.vocab) {
        if (id < 0) throw Error(ErrorCode::MalformedConfig, "negative token id for '" + surface + "'");
        if (!m.by_surface_.emplace(surface, id).second) {
            throw Error(ErrorCode::DuplicateTokenId, "surface '" + surface + "' listed twice");
        }
        if (!id_surface.emplace(id, surface).second) {
            throw Error(ErrorCode::DuplicateTokenId, "id " + std::to_string(id) + " assigned to '" +
                                                         id_surface[id] + "' and '" + surface + "'");
        }
        max_id = std::max(max_id, id);
    }
    std::unordered_set<TokenId> added_ids;
    for (const auto& tok : def.added_tokens) {
        if (tok.id < 0) throw Error(ErrorCode::MalformedConfig, "negative added token id");
        if (!added_ids.insert(tok.id).second) {
            throw Error(ErrorCode::DuplicateTokenId, "added token id " + std::to_string(tok.id) + " listed twice");
        }
        id_surface.emplace(tok.id, tok.content);
        max_id = std::max(max_id, tok.id);
    }
    if (static_cast<std::size_t>(max_id + 1) != id_surface.size()) {
        throw Error(ErrorCode::MalformedConfig, "token ids are not dense: " + std::to_string(id_surface.size()) +
                                                    " ids with maximum " + std::to_string(max_id));
    }

    const auto n = static_cast<std::size_t>(max_id + 1);
    m.surfaces_.resize(n);
    for (auto& [id, surface] : id_surface) m.surfaces_[static_cast<std::size_t>(id)] = std::move(surface);

    m.added_ = std::move(def.added_tokens);
    m.added_index_.assign(n, -1);
    for (std::size_t i = 0; i < m.added_.size(); ++i) {
        m.added_index_[static_cast<std::size_t>(m.added_[i].id)] = static_cast<int>(i);
        // added tokens always own their id's surface
        m.surfaces_[static_cast<std::size_t>(m.added_[i].id)] = m.added_[i].content;
    }

    m.merges_ = std::move(def.merges);
    m.ranks_.reserve(m.merges_.size());
    for (std::size_t r = 0; r < m.merges_.size(); ++r) {
        const auto& rule = m.merges_[r];
        if (!m.by_surface_.contains(rule.left + rule.right)) {
            throw Error(ErrorCode::MalformedConfig,
                        "merge '" + rule.left + " " + rule.right + "' produces a symbol missing from vocab");
        }
        // a repeated rule keeps its first (lowest) rank
        m.ranks_.emplace(std::make_pair(rule.left, rule.right), static_cast<int>(r));
    }

    m.pattern_ = std::move(def.pre_tokenizer_pattern);
    if (!m.pattern_.empty()) m.pre_tokenizer_ = std::make_shared<const PreTokenizer>(m.pattern_);

    // Literal matcher. A literal that is also a trained surface resolves to
    // the trained id.
    m.literals_.assign(256, {});
    for (const auto& tok : m.added_) {
        if (tok.content.empty()) continue;
        TokenId resolved = tok.id;
        if (const auto it = m.by_surface_.find(tok.content); it != m.by_surface_.end()) resolved = it->second;
        auto& bucket = m.literals_[static_cast<unsigned char>(tok.content[0])];
        const bool seen = std::any_of(bucket.begin(), bucket.end(),
                                      [&](const LiteralMatch& l) { return l.content == tok.content; });
        if (!seen) bucket.push_back({tok.content, resolved});
    }
    for (auto& bucket : m.literals_) {
        std::stable_sort(bucket.begin(), bucket.end(), [](const LiteralMatch& a, const LiteralMatch& b) {
            return a.content.size() > b.content.size();
        });
    }

    // token records
    m.records_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        TokenRecord& rec = m.records_[i];
        rec.id = static_cast<TokenId>(i);
        const std::string& surface = m.surfaces_[i];
        if (const AddedToken* added = m.added_token(rec.id)) {
            rec.source = added->special ? TokenSource::Special : TokenSource::Added;
            rec.raw_bytes = added->content;
        } else if (m.alphabet_ == ByteAlphabet::ByteFallback) {
            if (const auto b = parse_byte_token(surface)) {
                rec.raw_bytes.assign(1, static_cast<char>(*b));
            } else {
                rec.raw_bytes = replace_all(surface, kSpaceMarker, " ");
            }
        } else {
            std::size_t pos = 0;
            while (pos < surface.size()) {
                const std::size_t len = utf8::valid_sequence_length(surface, pos);
                if (len == 0) {
                    rec.raw_bytes += surface[pos++];
                    continue;
                }
                const auto cp = *utf8::decode_at(surface, pos);
                if (const auto b = symbol_to_byte(cp)) {
                    rec.raw_bytes += static_cast<char>(*b);
                } else {
                    rec.raw_bytes.append(surface, pos, len);
                }
                pos += len;
            }
        }
        if (rec.raw_bytes.empty()) {
            throw Error(ErrorCode::MalformedConfig, "token " + std::to_string(i) + " decodes to an empty string");
        }
        if (utf8::is_valid(rec.raw_bytes)) rec.decoded_text = rec.raw_bytes;
    }
    return m;
}

const std::string& TokenizerModel::surface(TokenId id) const {
    if (id < 0 || id >= vocab_size()) {
        throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id));
    }
    return surfaces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> TokenizerModel::find(std::string_view s) const {
    const auto it = by_surface_.find(std::string(s));
    if (it == by_surface_.end()) return std::nullopt;
    return it->second;
}

const AddedToken* TokenizerModel::added_token(TokenId id) const {
    if (id < 0 || id >= vocab_size()) return nullptr;
    const int idx = added_index_[static_cast<std::size_t>(id)];
    return idx < 0 ? nullptr : &added_[static_cast<std::size_t>(idx)];
}

std::optional<int> TokenizerModel::merge_rank(std::string_view left, std::string_view right) const {
    const auto it = ranks_.find(std::make_pair(std::string(left), std::string(right)));
    if (it == ranks_.end()) return std::nullopt;
    return it->second;
}

const TokenRecord& TokenizerModel::decode_token(TokenId id) const {
    if (id < 0 || id >= vocab_size()) {
        throw Error(ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " outside [0, " +
                                                 std::to_string(vocab_size()) + ")");
    }
    return records_[static_cast<std::size_t>(id)];
}

std::string TokenizerModel::decode_sequence(std::span<const TokenId> ids) const {
    std::string out;
    for (const TokenId id : ids) out += decode_token(id).raw_bytes;
    return out;
}

std::vector<std::string_view> TokenizerModel::pre_tokenize(std::string_view text) const {
    if (text.empty()) return {};
    if (!pre_tokenizer_) return {text};
    return pre_tokenizer_->split(text);
}

std::vector<std::string> TokenizerModel::to_symbols(std::string_view piece) const {
    std::vector<std::string> symbols;
    if (alphabet_ == ByteAlphabet::ByteToCharTable) {
        symbols.reserve(piece.size());
        for (const char c : piece) symbols.push_back(byte_to_symbol(static_cast<unsigned char>(c)));
    } else {
        for (const auto ch : utf8::split_chars(piece)) {
            symbols.emplace_back(ch == " " ? std::string(kSpaceMarker) : std::string(ch));
        }
    }
    return symbols;
}

void TokenizerModel::append_symbol_ids(std::string_view symbol, std::vector<TokenId>& out) const {
    if (const auto id = find(symbol)) {
        out.push_back(*id);
        return;
    }
    if (alphabet_ == ByteAlphabet::ByteFallback) {
        const std::string raw = replace_all(symbol, kSpaceMarker, " ");
        for (const char c : raw) {
            const auto b = static_cast<unsigned char>(c);
            const auto id = find(byte_token_surface(b));
            if (!id) {
                throw Error(ErrorCode::SymbolNotInVocab, "missing byte token " + byte_token_surface(b));
            }
            out.push_back(*id);
        }
        return;
    }
    throw Error(ErrorCode::SymbolNotInVocab, "symbol '" + std::string(symbol) + "' has no vocabulary entry");
}

std::vector<TokenId> TokenizerModel::encode_piece(std::string_view piece) const {
    std::vector<TokenId> out;
    std::vector<std::string> symbols = to_symbols(piece);
    if (symbols.empty()) return out;

    if (ignore_merges_) {
        std::string whole;
        for (const auto& s : symbols) whole += s;
        if (const auto id = find(whole)) return {*id};
    }

    // Merge loop over a linked list of symbols. Candidates are ordered by
    // (rank, left position); stale entries are detected via version stamps.
    struct Node {
        std::string text;
        int prev;
        int next;
        unsigned version = 0;
        bool alive = true;
    };
    struct Candidate {
        int rank;
        int left;
        int right;
        unsigned left_version;
        unsigned right_version;
        bool operator>(const Candidate& o) const {
            return rank != o.rank ? rank > o.rank : left > o.left;
        }
    };

    const int count = static_cast<int>(symbols.size());
    std::vector<Node> nodes(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        nodes[static_cast<std::size_t>(i)] = Node{std::move(symbols[static_cast<std::size_t>(i)]), i - 1,
                                                  i + 1 < count ? i + 1 : -1};
    }

    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> queue;
    auto consider = [&](int left, int right) {
        if (left < 0 || right < 0) return;
        const Node& l = nodes[static_cast<std::size_t>(left)];
        const Node& r = nodes[static_cast<std::size_t>(right)];
        if (const auto rank = merge_rank(l.text, r.text)) {
            queue.push(Candidate{*rank, left, right, l.version, r.version});
        }
    };
    for (int i = 0; i + 1 < count; ++i) consider(i, i + 1);

    while (!queue.empty()) {
        const Candidate c = queue.top();
        queue.pop();
        Node& l = nodes[static_cast<std::size_t>(c.left)];
        Node& r = nodes[static_cast<std::size_t>(c.right)];
        if (!l.alive || !r.alive || l.next != c.right || l.version != c.left_version ||
            r.version != c.right_version) {
            continue;
        }
        l.text += r.text;
        ++l.version;
        r.alive = false;
        l.next = r.next;
        if (r.next >= 0) nodes[static_cast<std::size_t>(r.next)].prev = c.left;
        consider(l.prev, c.left);
        consider(c.left, l.next);
    }

    for (int i = 0; i >= 0; i = nodes[static_cast<std::size_t>(i)].next) {
        append_symbol_ids(nodes[static_cast<std::size_t>(i)].text, out);
    }
    return out;
}

std::vector<TokenId> TokenizerModel::encode(std::string_view text) const {
    std::vector<TokenId> out;
    auto encode_plain = [&](std::string_view segment) {
        for (const auto piece : pre_tokenize(segment)) {
            const auto ids = encode_piece(piece);
            out.insert(out.end(), ids.begin(), ids.end());
        }
    };

    std::size_t segment_start = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const LiteralMatch* hit = nullptr;
        for (const auto& lit : literals_[static_cast<unsigned char>(text[pos])]) {
            if (text.compare(pos, lit.content.size(), lit.content) == 0) {
                hit = &lit;
                break;
            }
        }
        if (!hit) {
            ++pos;
            continue;
        }
        encode_plain(text.substr(segment_start, pos - segment_start));
        out.push_back(hit->id);
        pos += hit->content.size();
        segment_start = pos;
    }
    encode_plain(text.substr(segment_start));
    return out;
}

TokenizerDefinition TokenizerModel::definition() const {
    TokenizerDefinition def;
    def.byte_alphabet = alphabet_;
    def.vocab.reserve(by_surface_.size());
    for (const auto& [surface, id] : by_surface_) def.vocab.emplace_back(surface, id);
    std::sort(def.vocab.begin(), def.vocab.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    def.merges = merges_;
    def.pre_tokenizer_pattern = pattern_;
    def.added_tokens = added_;
    def.ignore_merges = ignore_merges_;
    def.warnings = warnings_;
    return def;
}

}  // namespace glitch
