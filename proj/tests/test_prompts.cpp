#include "doctest.h"
#include "glitch/error.hpp"
#include "glitch/prompts.hpp"
#include "oracles.hpp"

using namespace glitch;

namespace {

std::size_t count(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

constexpr std::string_view kToken = " SolidGoldMagikarp";

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("rendered prompts match golden digests") {
    CHECK(oracle::sha256_hex(render_prompt(prompt_template(PromptId::RepeaterDevice), kToken)) ==
          "19a691f030cd1d6e40b3480596e7cf549eb7ec034a19727f1e056890a38c1249");
    CHECK(oracle::sha256_hex(render_prompt(prompt_template(PromptId::MeaningAssistant), kToken)) ==
          "ebf9204209c5b40c2fa8d791b3079de9ea2216df7ff9dbabed014d2b419ad491");
    CHECK(oracle::sha256_hex(render_prompt(prompt_template(PromptId::RepeatedPhrase), kToken)) ==
          "e563c99d0c68c4bf97e3d57bc270ddd44a4388c0701b0f15c5f9302e162d85e1");
}

TEST_CASE("repeat counts") {
    const auto phrase = render_prompt(prompt_template(PromptId::RepeatedPhrase), "x");
    CHECK(count(phrase, "x") - count(prompt_template(PromptId::RepeatedPhrase).body, "x") == 100);
    CHECK(phrase.ends_with(std::string(100, 'x')));
    CHECK(count(prompt_template(PromptId::RepeatedPhrase).body, kTokenPlaceholder) == 100);

    const auto device = render_prompt(prompt_template(PromptId::RepeaterDevice), " the");
    CHECK(count(device, "\nInput: \u00AB the\u00BB\n") == 20);
    CHECK(count(device, "\nOutput: \u00AB the\u00BB") == 19);
    CHECK(device.ends_with("\nOutput:"));
    CHECK(count(device, kTokenPlaceholder) == 0);

    const auto meaning = render_prompt(prompt_template(PromptId::MeaningAssistant), "x");
    CHECK(meaning.ends_with("User: what does 'x' mean?\nAssistant:"));
}

TEST_CASE("only the token bytes change") {
    for (const auto id : kVerificationPrompts) {
        const auto& t = prompt_template(id);
        const auto rendered = render_prompt(t, kTokenPlaceholder);
        CHECK(rendered == t.body);
    }
}

TEST_CASE("undecodable tokens are rejected") {
    const auto& t = prompt_template(PromptId::RepeaterDevice);
    CHECK(code_of([&] { render_prompt(t, ""); }) == ErrorCode::UndecodableToken);
    CHECK(code_of([&] { render_prompt(t, "\xF5"); }) == ErrorCode::UndecodableToken);
    CHECK(code_of([&] { render_prompt(t, "\xE2\x82"); }) == ErrorCode::UndecodableToken);
}

TEST_CASE("API probe") {
    const std::vector<ProbeEntry> entries{{"Llama2:", " Mediabestanden"}, {"Llama2:", " Portály"},
                                          {"Llama2:", "oreferer"},        {"Mistral:", " febbra"},
                                          {"Mistral:", "IMdEx"},          {"Mistral:", "q"}};
    const auto probe = build_api_probe(entries);
    CHECK(probe.find("\"Llama2: Mediabestanden\"") != std::string::npos);
    CHECK(oracle::sha256_hex(probe) == "bd9ba3a2b2f5ec0a82277bdcdbf5454c5618763fd57f2fdf4729c208686c56d9");

    const auto two = build_api_probe({{"A:", " x"}, {"B:", "y"}}, 1);
    CHECK(two.find("[\n  [\"A: x\",\n  \"B:y\" ]\n]") != std::string::npos);

    const auto escaped = build_api_probe({{"C:", "\"\t\\"}});
    CHECK(escaped.find(R"("C:\"\t\\")") != std::string::npos);

    CHECK(code_of([] { build_api_probe({}); }) == ErrorCode::EmptyProbe);
}

}
