#include "glitch/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "glitch/report.hpp"
#include "glitch/safetensors.hpp"
#include "glitch/utf8.hpp"
#include "json.hpp"

namespace glitch {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_atomic(const fs::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::IoFailure, "write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot move " + tmp.string() + " into place");
    }
}

std::string read_file(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::MissingInput, path.string() + " does not exist");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read from " + path.string() + " failed");
    return ss.str();
}

std::string fingerprint_file(const fs::path& path) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw Error(ErrorCode::LoadFailure, "cannot stat " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::LoadFailure, "cannot open " + path.string());

    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const char* p, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            h ^= static_cast<unsigned char>(p[k]);
            h *= 0x100000001b3ULL;
        }
    };
    std::uint64_t limit = size;
    if (path.extension() == ".safetensors" && size >= 8) {
        unsigned char len[8];
        in.read(reinterpret_cast<char*>(len), 8);
        std::uint64_t header = 0;
        for (int k = 7; k >= 0; --k) header = (header << 8) | len[k];
        limit = std::min<std::uint64_t>(size, 8 + header);
        in.seekg(0);
    }
    std::vector<char> buf(1 << 16);
    for (std::uint64_t done = 0; done < limit;) {
        const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(buf.size(), limit - done));
        in.read(buf.data(), want);
        const auto got = in.gcount();
        if (got <= 0) break;
        mix(buf.data(), static_cast<std::size_t>(got));
        done += static_cast<std::uint64_t>(got);
    }
    // Sampled blocks of tensor data, so equal shapes with different values differ.
    if (limit < size) {
        constexpr std::uint64_t kBlocks = 64, kBlock = 4096;
        const std::uint64_t data = size - limit;
        in.clear();
        for (std::uint64_t b = 0; b < kBlocks; ++b) {
            const std::uint64_t offset = limit + data * b / kBlocks;
            const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(kBlock, size - offset));
            in.seekg(static_cast<std::streamoff>(offset));
            in.read(buf.data(), want);
            const auto got = in.gcount();
            if (got <= 0) break;
            mix(buf.data(), static_cast<std::size_t>(got));
        }
    }
    const std::string size_text = std::to_string(size);
    mix(size_text.data(), size_text.size());
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void check_fingerprint(const Fingerprint& expected, const Fingerprint& found, std::string_view artifact) {
    auto differs = [](const std::string& a, const std::string& b) { return !a.empty() && !b.empty() && a != b; };
    if (differs(expected.tokenizer, found.tokenizer)) {
        throw Error(ErrorCode::MismatchedRuns, std::string(artifact) + " was produced from a different tokenizer");
    }
    if (differs(expected.weights, found.weights)) {
        throw Error(ErrorCode::MismatchedRuns, std::string(artifact) + " was produced from different weights");
    }
}

namespace {

void put_fingerprint(json& doc, const Fingerprint& fp) {
    doc["tokenizer_fingerprint"] = fp.tokenizer;
    doc["weights_fingerprint"] = fp.weights;
}

Fingerprint get_fingerprint(const json& doc) {
    return Fingerprint{doc.value("tokenizer_fingerprint", ""), doc.value("weights_fingerprint", "")};
}

json parse_json(std::string_view document, std::string_view what) {
    try {
        return json::parse(document);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedConfig, std::string(what) + ": " + e.what());
    }
}

template <typename Fn>
auto guarded(std::string_view what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedConfig, std::string(what) + ": " + e.what());
    }
}

constexpr TokenFlag kFlags[] = {TokenFlag::PartialUtf8, TokenFlag::Unreachable, TokenFlag::Special,
                                TokenFlag::ByteToken, TokenFlag::OkForTesting};

IndicatorName indicator_named(const std::string& name) {
    const auto parsed = parse_indicator(name);
    if (!parsed) throw Error(ErrorCode::MalformedConfig, "unknown indicator '" + name + "'");
    return *parsed;
}

void put_token(json& j, const TokenizerModel& model, TokenId id) {
    const std::string& bytes = model.decode_token(id).raw_bytes;
    j["display"] = utf8::display(bytes);
    j["bytes_hex"] = utf8::to_hex(bytes);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string taxonomy_to_json(const TokenizerModel& model, const TaxonomyArtifact& artifact) {
    json doc;
    put_fingerprint(doc, artifact.fingerprint);
    doc["vocab_size"] = artifact.categories.size();
    json counts = json::object();
    for (const TokenFlag f : kFlags) {
        std::size_t n = 0;
        for (const auto& c : artifact.categories) n += c.has(f) ? 1 : 0;
        counts[std::string(to_string(f))] = n;
    }
    doc["counts"] = std::move(counts);
    json tokens = json::array();
    for (const auto& c : artifact.categories) {
        json t{{"id", c.id}, {"flags", c.flag_names()}};
        put_token(t, model, c.id);
        tokens.push_back(std::move(t));
    }
    doc["tokens"] = std::move(tokens);
    return doc.dump(1) + "\n";
}

TaxonomyArtifact taxonomy_from_json(std::string_view document) {
    const json doc = parse_json(document, "taxonomy artifact");
    return guarded("taxonomy artifact", [&] {
        TaxonomyArtifact a;
        a.fingerprint = get_fingerprint(doc);
        for (const auto& t : doc.at("tokens")) {
            TokenCategory c;
            c.id = t.at("id").get<TokenId>();
            for (const auto& name : t.at("flags")) {
                bool known = false;
                for (const TokenFlag f : kFlags) {
                    if (to_string(f) == name.get<std::string>()) {
                        c.set(f);
                        known = true;
                    }
                }
                if (!known) throw Error(ErrorCode::MalformedConfig, "unknown token flag " + name.dump());
            }
            if (c.id != static_cast<TokenId>(a.categories.size())) {
                throw Error(ErrorCode::MalformedConfig, "taxonomy ids must be dense and ordered");
            }
            a.categories.push_back(c);
        }
        return a;
    });
}

// ---------------------------------------------------------------------------

const IndicatorVector& IndicatorsArtifact::get(IndicatorName name) const {
    for (const auto& v : indicators) {
        if (v.name == name) return v;
    }
    throw Error(ErrorCode::MissingInput, "indicator " + std::string(to_string(name)) + " was not computed");
}

void write_indicators(const fs::path& dir, const IndicatorsArtifact& a) {
    std::vector<TensorData> tensors;
    json doc;
    put_fingerprint(doc, a.fingerprint);
    doc["input_tensor"] = a.input_tensor;
    doc["output_tensor"] = a.output_tensor;
    doc["tied"] = a.tied;
    doc["chosen"] = to_string(a.chosen);
    json prov = json::array();
    for (const auto p : a.reference.provenance) prov.push_back(to_string(p));
    doc["reference"] = {{"ids", a.reference.ids}, {"provenance", prov}, {"u_ref", a.reference.u_ref}};
    doc["warnings"] = a.warnings;
    json list = json::array();
    for (const auto& v : a.indicators) {
        json j{{"name", to_string(v.name)}, {"n_rows", v.scores.size()}, {"degenerate_rows", v.degenerate_rows}};
        j["histogram"] = make_histogram(v.name, v.scores).counts;
        if (v.scores.size() <= kInlineScoreLimit) j["scores"] = v.scores;
        list.push_back(std::move(j));
        tensors.push_back(TensorData{std::string(to_string(v.name)), DType::F64,
                                     {static_cast<std::int64_t>(v.scores.size())}, v.scores});
    }
    doc["indicators"] = std::move(list);
    write_atomic(dir / kIndicatorsBinFile, write_safetensors(tensors));
    write_atomic(dir / kIndicatorsFile, doc.dump(1) + "\n");
}

IndicatorsArtifact read_indicators(const fs::path& dir) {
    const json doc = parse_json(read_file(dir / kIndicatorsFile), "indicators artifact");
    const fs::path bin_path = dir / kIndicatorsBinFile;
    std::error_code ec;
    const bool have_bin = fs::is_regular_file(bin_path, ec);
    std::optional<SafeTensorsFile> bin;
    if (have_bin) bin = SafeTensorsFile::open(bin_path);

    return guarded("indicators artifact", [&] {
        IndicatorsArtifact a;
        a.fingerprint = get_fingerprint(doc);
        a.input_tensor = doc.at("input_tensor").get<std::string>();
        a.output_tensor = doc.at("output_tensor").get<std::string>();
        a.tied = doc.at("tied").get<bool>();
        a.chosen = indicator_named(doc.at("chosen").get<std::string>());
        const json& ref = doc.at("reference");
        a.reference.ids = ref.at("ids").get<std::vector<std::size_t>>();
        for (const auto& p : ref.at("provenance")) {
            bool known = false;
            for (const auto v : {RefProvenance::PaddingRow, RefProvenance::UnusedUtf8Byte, RefProvenance::PatternMatch,
                                 RefProvenance::UserSupplied}) {
                if (to_string(v) == p.get<std::string>()) {
                    a.reference.provenance.push_back(v);
                    known = true;
                }
            }
            if (!known) throw Error(ErrorCode::MalformedConfig, "unknown reference provenance " + p.dump());
        }
        a.reference.u_ref = ref.at("u_ref").get<std::vector<double>>();
        a.warnings = doc.at("warnings").get<std::vector<std::string>>();
        for (const auto& j : doc.at("indicators")) {
            IndicatorVector v;
            v.name = indicator_named(j.at("name").get<std::string>());
            v.degenerate_rows = j.at("degenerate_rows").get<std::vector<std::size_t>>();
            const std::string key(to_string(v.name));
            if (bin && bin->contains(key)) {
                v.scores = bin->values(key);
            } else if (j.contains("scores")) {
                v.scores = j.at("scores").get<std::vector<double>>();
            } else {
                throw Error(ErrorCode::MissingInput, "scores for " + key + " are missing from " + bin_path.string());
            }
            if (v.scores.size() != j.at("n_rows").get<std::size_t>()) {
                throw Error(ErrorCode::ShapeMismatch, "stored " + key + " scores have the wrong length");
            }
            a.indicators.push_back(std::move(v));
        }
        return a;
    });
}

// ---------------------------------------------------------------------------

std::string candidates_to_json(const TokenizerModel& model, const CandidatesArtifact& a) {
    json doc;
    put_fingerprint(doc, a.fingerprint);
    json sets = json::array();
    for (const auto& s : a.sets) {
        json list = json::array();
        for (std::size_t k = 0; k < s.ids.size(); ++k) {
            json c{{"id", s.ids[k]}, {"score", s.scores[k]}};
            put_token(c, model, s.ids[k]);
            list.push_back(std::move(c));
        }
        sets.push_back({{"indicator", to_string(s.indicator)},
                        {"fraction", s.fraction},
                        {"vocab_size", s.vocab_size},
                        {"window", s.window},
                        {"candidates", std::move(list)}});
    }
    doc["sets"] = std::move(sets);
    return doc.dump(1) + "\n";
}

CandidatesArtifact candidates_from_json(std::string_view document) {
    const json doc = parse_json(document, "candidates artifact");
    return guarded("candidates artifact", [&] {
        CandidatesArtifact a;
        a.fingerprint = get_fingerprint(doc);
        for (const auto& j : doc.at("sets")) {
            CandidateSet s;
            s.indicator = indicator_named(j.at("indicator").get<std::string>());
            s.fraction = j.at("fraction").get<double>();
            s.vocab_size = j.at("vocab_size").get<TokenId>();
            s.window = j.at("window").get<std::size_t>();
            for (const auto& c : j.at("candidates")) {
                s.ids.push_back(c.at("id").get<TokenId>());
                s.scores.push_back(c.at("score").get<double>());
            }
            a.sets.push_back(std::move(s));
        }
        if (a.sets.empty()) throw Error(ErrorCode::MalformedConfig, "candidates artifact holds no sets");
        return a;
    });
}

// ---------------------------------------------------------------------------

std::string verification_to_json(const TokenizerModel& model, const VerificationArtifact& a) {
    json doc;
    put_fingerprint(doc, a.fingerprint);
    doc["threshold"] = a.threshold;
    const auto s = summarize(a.results);
    doc["summary"] = {{"candidates", s.candidates},
                      {"tested", s.tested},
                      {"confirmed", s.confirmed},
                      {"inconclusive", s.inconclusive}};
    json list = json::array();
    for (const auto& r : a.results) {
        json j{{"id", r.token_id}};
        put_token(j, model, r.token_id);
        j["verdict"] = to_string(r.verdict);
        j["max_probability"] = r.max_probability;
        json per = json::object();
        for (const auto& [p, v] : r.per_prompt_max) per[std::string(to_string(p))] = v;
        j["per_prompt"] = std::move(per);
        j["error_code"] = r.error_code ? json(to_string(*r.error_code)) : json(nullptr);
        j["error"] = r.error;
        list.push_back(std::move(j));
    }
    doc["results"] = std::move(list);
    return doc.dump(1) + "\n";
}

VerificationArtifact verification_from_json(std::string_view document) {
    const json doc = parse_json(document, "verification artifact");
    return guarded("verification artifact", [&] {
        VerificationArtifact a;
        a.fingerprint = get_fingerprint(doc);
        a.threshold = doc.at("threshold").get<double>();
        for (const auto& j : doc.at("results")) {
            VerificationResult r;
            r.token_id = j.at("id").get<TokenId>();
            const auto verdict = parse_verdict(j.at("verdict").get<std::string>());
            if (!verdict) throw Error(ErrorCode::MalformedConfig, "unknown verdict " + j.at("verdict").dump());
            r.verdict = *verdict;
            r.max_probability = j.at("max_probability").get<double>();
            for (const auto& [key, value] : j.at("per_prompt").items()) {
                bool known = false;
                for (const PromptId p : kVerificationPrompts) {
                    if (to_string(p) == key) {
                        r.per_prompt_max[p] = value.get<double>();
                        known = true;
                    }
                }
                if (!known) throw Error(ErrorCode::MalformedConfig, "unknown prompt " + key);
            }
            if (!j.at("error_code").is_null()) r.error_code = parse_error_code(j.at("error_code").get<std::string>());
            r.error = j.at("error").get<std::string>();
            a.results.push_back(std::move(r));
        }
        return a;
    });
}

}  // namespace glitch
