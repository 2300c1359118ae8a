#include <fstream>
#include <sstream>

#include "json.hpp"

#include "glitch/error.hpp"
#include "glitch/tokenizer.hpp"

namespace glitch {

using json = nlohmann::json;

namespace {

json parse_document(std::string_view document) {
    try {
        return json::parse(document);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedConfig, std::string("invalid JSON: ") + e.what());
    }
}

MergeRule parse_merge(const json& entry) {
    if (entry.is_string()) {
        const auto& s = entry.get_ref<const std::string&>();
        const auto space = s.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= s.size() ||
            s.find(' ', space + 1) != std::string::npos) {
            throw Error(ErrorCode::MalformedConfig, "merge rule '" + s + "' is not of the form 'A B'");
        }
        return {s.substr(0, space), s.substr(space + 1)};
    }
    if (entry.is_array() && entry.size() == 2 && entry[0].is_string() && entry[1].is_string()) {
        return {entry[0].get<std::string>(), entry[1].get<std::string>()};
    }
    throw Error(ErrorCode::MalformedConfig, "merge rule must be \"A B\" or [\"A\", \"B\"]");
}

void read_vocab(const json& vocab, TokenizerDefinition& def) {
    if (!vocab.is_object()) throw Error(ErrorCode::MalformedConfig, "vocab must be an object");
    def.vocab.reserve(vocab.size());
    for (const auto& [surface, id] : vocab.items()) {
        if (!id.is_number_integer()) throw Error(ErrorCode::MalformedConfig, "vocab id for '" + surface + "'");
        def.vocab.emplace_back(surface, id.get<TokenId>());
    }
}

void read_merges(const json& merges, TokenizerDefinition& def) {
    if (merges.is_null()) return;
    if (!merges.is_array()) throw Error(ErrorCode::MalformedConfig, "merges must be an array");
    def.merges.reserve(merges.size());
    for (const auto& m : merges) def.merges.push_back(parse_merge(m));
}

void read_added(const json& added, TokenizerDefinition& def) {
    if (added.is_null()) return;
    if (!added.is_array()) throw Error(ErrorCode::MalformedConfig, "added_tokens must be an array");
    for (const auto& a : added) {
        if (!a.is_object() || !a.contains("id") || !a.contains("content") || !a["id"].is_number_integer() ||
            !a["content"].is_string()) {
            throw Error(ErrorCode::MalformedConfig, "added token needs integer 'id' and string 'content'");
        }
        def.added_tokens.push_back(
            AddedToken{a["id"].get<TokenId>(), a["content"].get<std::string>(), a.value("special", false)});
    }
}

std::string escape_regex_literal(std::string_view s) {
    std::string out;
    for (const char c : s) {
        if (std::string_view(R"(\^$.|?*+()[]{}-/)").find(c) != std::string_view::npos) out += '\\';
        out += c;
    }
    return out;
}

// Pre-tokenizer chain flattened to at most one Split and one ByteLevel.
struct PreTokenizerChain {
    std::optional<std::string> split_pattern;
    bool byte_level = false;
    bool byte_level_regex = false;
    bool metaspace = false;
};

void add_stage(const json& stage, PreTokenizerChain& chain, TokenizerDefinition& def) {
    const std::string type = stage.value("type", "");
    if (type == "ByteLevel") {
        if (chain.byte_level) throw Error(ErrorCode::UnsupportedModelType, "more than one ByteLevel pre-tokenizer");
        chain.byte_level = true;
        chain.byte_level_regex = stage.value("use_regex", true);
        if (stage.value("add_prefix_space", false)) def.warnings.emplace_back("ByteLevel add_prefix_space ignored");
    } else if (type == "Split") {
        if (chain.split_pattern) throw Error(ErrorCode::UnsupportedModelType, "more than one Split pre-tokenizer");
        if (stage.value("behavior", "Isolated") != "Isolated" || stage.value("invert", false)) {
            throw Error(ErrorCode::UnsupportedModelType, "Split pre-tokenizer must be Isolated and not inverted");
        }
        const json& pattern = stage.value("pattern", json::object());
        if (pattern.contains("Regex")) {
            chain.split_pattern = pattern["Regex"].get<std::string>();
        } else if (pattern.contains("String")) {
            chain.split_pattern = escape_regex_literal(pattern["String"].get<std::string>());
        } else {
            throw Error(ErrorCode::MalformedConfig, "Split pre-tokenizer without pattern");
        }
    } else if (type == "Metaspace") {
        if (chain.metaspace) throw Error(ErrorCode::UnsupportedModelType, "more than one Metaspace pre-tokenizer");
        chain.metaspace = true;
        if (stage.value("replacement", std::string(kSpaceMarker)) != kSpaceMarker) {
            throw Error(ErrorCode::UnsupportedModelType, "Metaspace replacement other than U+2581");
        }
        if (stage.value("split", true)) {
            if (chain.split_pattern) throw Error(ErrorCode::UnsupportedModelType, "Metaspace split plus Split");
            // each space starts a new piece
            chain.split_pattern = " ?[^ ]+| ";
        }
        def.warnings.emplace_back("Metaspace prefix space ignored");
    } else {
        throw Error(ErrorCode::UnsupportedModelType, "pre-tokenizer type '" + type + "'");
    }
}

void check_normalizer(const json& normalizer, TokenizerDefinition& def) {
    if (normalizer.is_null()) return;
    const std::string type = normalizer.value("type", "");
    if (type == "Sequence") {
        for (const auto& n : normalizer.value("normalizers", json::array())) check_normalizer(n, def);
    } else if (type == "NFC") {
        def.warnings.emplace_back("NFC normalizer treated as identity");
    } else if (type == "Prepend") {
        def.warnings.emplace_back("Prepend normalizer ignored");
    } else if (type == "Replace") {
        const json& pattern = normalizer.value("pattern", json::object());
        if (pattern.value("String", "") != " " || normalizer.value("content", "") != kSpaceMarker) {
            throw Error(ErrorCode::UnsupportedModelType, "Replace normalizer other than space -> U+2581");
        }
    } else {
        throw Error(ErrorCode::UnsupportedModelType, "normalizer type '" + type + "'");
    }
}

}  // namespace

TokenizerDefinition parse_portable(std::string_view document) {
    const json j = parse_document(document);
    if (!j.is_object()) throw Error(ErrorCode::MalformedConfig, "document must be a JSON object");
    TokenizerDefinition def;
    const std::string alphabet = j.value("byte_alphabet", "");
    if (alphabet == "byte_to_char") {
        def.byte_alphabet = ByteAlphabet::ByteToCharTable;
    } else if (alphabet == "byte_fallback") {
        def.byte_alphabet = ByteAlphabet::ByteFallback;
    } else {
        throw Error(ErrorCode::UnsupportedModelType, "byte_alphabet '" + alphabet + "'");
    }
    if (!j.contains("vocab")) throw Error(ErrorCode::MalformedConfig, "missing vocab");
    read_vocab(j["vocab"], def);
    read_merges(j.value("merges", json::array()), def);
    const json& pattern = j.value("pre_tokenizer_pattern", json(""));
    if (!pattern.is_string()) throw Error(ErrorCode::MalformedConfig, "pre_tokenizer_pattern must be a string");
    def.pre_tokenizer_pattern = pattern.get<std::string>();
    read_added(j.value("added_tokens", json::array()), def);
    def.ignore_merges = j.value("ignore_merges", false);
    return def;
}

TokenizerDefinition import_tokenizer_json(std::string_view document) {
    const json j = parse_document(document);
    if (!j.is_object() || !j.contains("model") || !j["model"].is_object()) {
        throw Error(ErrorCode::MalformedConfig, "tokenizer.json without a model object");
    }
    const json& model = j["model"];
    const std::string type = model.value("type", "BPE");
    if (type != "BPE") throw Error(ErrorCode::UnsupportedModelType, "model type '" + type + "'");

    TokenizerDefinition def;
    if (!model.contains("vocab")) throw Error(ErrorCode::MalformedConfig, "model without vocab");
    read_vocab(model["vocab"], def);
    read_merges(model.value("merges", json::array()), def);
    read_added(j.value("added_tokens", json::array()), def);
    def.ignore_merges = model.value("ignore_merges", false);
    check_normalizer(j.value("normalizer", json()), def);

    PreTokenizerChain chain;
    const json& pre = j.value("pre_tokenizer", json());
    if (!pre.is_null()) {
        if (pre.value("type", "") == "Sequence") {
            const json& stages = pre.value("pretokenizers", json::array());
            if (stages.size() > 2) throw Error(ErrorCode::UnsupportedModelType, "pre-tokenizer chain deeper than 2");
            for (const auto& stage : stages) add_stage(stage, chain, def);
        } else {
            add_stage(pre, chain, def);
        }
    }
    if (chain.byte_level && chain.metaspace) {
        throw Error(ErrorCode::UnsupportedModelType, "ByteLevel combined with Metaspace");
    }
    if (chain.byte_level && chain.byte_level_regex && chain.split_pattern) {
        throw Error(ErrorCode::UnsupportedModelType, "Split followed by a regex-splitting ByteLevel stage");
    }

    const bool byte_fallback = model.value("byte_fallback", false);
    const json& decoder = j.value("decoder", json());
    const bool byte_level_decoder = decoder.is_object() && decoder.value("type", "") == "ByteLevel";
    if (byte_fallback || chain.metaspace) {
        if (chain.byte_level) throw Error(ErrorCode::UnsupportedModelType, "byte_fallback with ByteLevel");
        def.byte_alphabet = ByteAlphabet::ByteFallback;
    } else if (chain.byte_level || byte_level_decoder) {
        def.byte_alphabet = ByteAlphabet::ByteToCharTable;
    } else {
        bool has_marker = false;
        for (const auto& [surface, id] : def.vocab) {
            if (surface.find(kSpaceMarker) != std::string::npos) {
                has_marker = true;
                break;
            }
        }
        if (!has_marker) throw Error(ErrorCode::UnsupportedModelType, "cannot determine the byte alphabet");
        def.byte_alphabet = ByteAlphabet::ByteFallback;
    }

    if (chain.split_pattern) {
        def.pre_tokenizer_pattern = *chain.split_pattern;
    } else if (chain.byte_level && chain.byte_level_regex) {
        def.pre_tokenizer_pattern = std::string(kGpt2Pattern);
    }
    return def;
}

TokenizerModel load_tokenizer(std::string_view document) {
    const json j = parse_document(document);
    if (j.is_object() && j.contains("model")) return TokenizerModel::build(import_tokenizer_json(document));
    if (j.is_object() && j.contains("byte_alphabet")) return TokenizerModel::build(parse_portable(document));
    throw Error(ErrorCode::MalformedConfig, "neither the portable schema nor a tokenizer.json document");
}

TokenizerModel load_tokenizer_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::LoadFailure, "cannot open tokenizer file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_tokenizer(buf.str());
}

std::string to_portable_json(const TokenizerModel& model) {
    const TokenizerDefinition def = model.definition();
    json j;
    j["byte_alphabet"] = std::string(to_string(def.byte_alphabet));
    json vocab = json::object();
    for (const auto& [surface, id] : def.vocab) vocab[surface] = id;
    j["vocab"] = std::move(vocab);
    json merges = json::array();
    for (const auto& m : def.merges) {
        if (m.left.find(' ') == std::string::npos && m.right.find(' ') == std::string::npos) {
            merges.push_back(m.left + " " + m.right);
        } else {
            merges.push_back(json::array({m.left, m.right}));
        }
    }
    j["merges"] = std::move(merges);
    j["pre_tokenizer_pattern"] = def.pre_tokenizer_pattern;
    json added = json::array();
    for (const auto& a : def.added_tokens) added.push_back({{"id", a.id}, {"content", a.content}, {"special", a.special}});
    j["added_tokens"] = std::move(added);
    if (def.ignore_merges) j["ignore_merges"] = true;
    return j.dump(1);
}

}  // namespace glitch
