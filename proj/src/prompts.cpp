#include "glitch/prompts.hpp"

#include <cstdio>

#include "glitch/error.hpp"
#include "glitch/utf8.hpp"

namespace glitch {

namespace resources {
extern const std::string_view repeater_device;
extern const std::string_view meaning_assistant;
extern const std::string_view repeated_phrase;
extern const std::string_view api_password_probe;
}  // namespace resources

std::string_view to_string(PromptId id) {
    switch (id) {
        case PromptId::RepeaterDevice: return "RepeaterDevice";
        case PromptId::MeaningAssistant: return "MeaningAssistant";
        case PromptId::RepeatedPhrase: return "RepeatedPhrase";
        case PromptId::ApiPasswordProbe: return "ApiPasswordProbe";
    }
    return "?";
}

const PromptTemplate& prompt_template(PromptId id) {
    static const PromptTemplate templates[] = {
        {PromptId::RepeaterDevice, resources::repeater_device},
        {PromptId::MeaningAssistant, resources::meaning_assistant},
        {PromptId::RepeatedPhrase, resources::repeated_phrase},
        {PromptId::ApiPasswordProbe, resources::api_password_probe},
    };
    return templates[static_cast<int>(id)];
}

std::string render_prompt(const PromptTemplate& tmpl, std::string_view token_bytes) {
    if (token_bytes.empty() || !utf8::is_valid(token_bytes)) {
        throw Error(ErrorCode::UndecodableToken, "token bytes '" + utf8::display(token_bytes) + "' cannot be rendered");
    }
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t hit = tmpl.body.find(kTokenPlaceholder, pos);
        if (hit == std::string_view::npos) break;
        out.append(tmpl.body.substr(pos, hit - pos));
        out.append(token_bytes);
        pos = hit + kTokenPlaceholder.size();
    }
    out.append(tmpl.body.substr(pos));
    return out;
}

namespace {

std::string python_string(std::string_view s) {
    std::string out = "\"";
    char buf[8];
    for (const char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '"' || c == '\\') {
            out += '\\';
            out += c;
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\r') {
            out += "\\r";
        } else if (u < 0x20 || u == 0x7F) {
            std::snprintf(buf, sizeof buf, "\\x%02x", u);
            out += buf;
        } else {
            out += c;
        }
    }
    out += '"';
    return out;
}

}  // namespace

std::string build_api_probe(const std::vector<ProbeEntry>& entries, std::size_t per_line) {
    if (entries.empty()) throw Error(ErrorCode::EmptyProbe, "API probe needs at least one token");
    if (per_line == 0) per_line = 1;

    std::string list = "[\n  [";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0) list += (i % per_line == 0) ? ",\n  " : ", ";
        list += python_string(entries[i].label + entries[i].token);
    }
    list += " ]\n]";

    constexpr std::string_view slot = "<list of strings with multiple elements per line>";
    const std::string_view body = prompt_template(PromptId::ApiPasswordProbe).body;
    const std::size_t hit = body.find(slot);
    std::string out(body.substr(0, hit));
    out += list;
    out.append(body.substr(hit + slot.size()));
    return out;
}

}  // namespace glitch
