#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "glitch/backend.hpp"
#include "glitch/error.hpp"

namespace glitch {

using json = nlohmann::json;

HttpCompletionBackend::HttpCompletionBackend(std::shared_ptr<const TokenizerModel> model, HttpBackendOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
    if (!model_) throw Error(ErrorCode::MissingInput, "HTTP backend needs a tokenizer");
    const std::string& url = options_.url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "backend URL needs a scheme: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorCode::InvalidArgument, "unsupported backend URL scheme '" + scheme + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    base_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/completions" : url.substr(path_start);
    if (options_.top_logprobs < 1) throw Error(ErrorCode::InvalidArgument, "top_logprobs must be positive");
    if (options_.retries < 0) throw Error(ErrorCode::InvalidArgument, "retries must be non-negative");
}

std::vector<CompletionStep> HttpCompletionBackend::parse_response(std::string_view body, int n_steps,
                                                                  TokenId target) const {
    const std::string& target_text = model_->decode_token(target).raw_bytes;
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, std::string("response is not JSON: ") + e.what());
    }
    try {
        const json& logprobs = doc.at("choices").at(0).at("logprobs");
        const json& tokens = logprobs.at("tokens");
        const json& top = logprobs.at("top_logprobs");
        const std::size_t n = std::min({tokens.size(), top.size(), static_cast<std::size_t>(n_steps)});
        if (n == 0) throw Error(ErrorCode::ProtocolError, "response carries no generated tokens");

        std::vector<CompletionStep> steps;
        for (std::size_t k = 0; k < n; ++k) {
            const json& alternatives = top.at(k);
            const auto hit = alternatives.find(target_text);
            if (hit == alternatives.end()) {
                throw Error(ErrorCode::ProtocolError,
                            "target token outside the returned top-" + std::to_string(alternatives.size()) +
                                " at position " + std::to_string(k));
            }
            CompletionStep step;
            step.position = static_cast<int>(k);
            step.target_probability = std::exp(hit->get<double>());
            const auto text = tokens.at(k).get<std::string>();
            try {
                const auto ids = model_->encode(text);
                if (ids.size() == 1) step.chosen_id = ids[0];
            } catch (const Error&) {
            }
            steps.push_back(step);
        }
        return steps;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, std::string("unexpected response layout: ") + e.what());
    }
}

std::vector<CompletionStep> HttpCompletionBackend::complete_greedy(std::string_view prompt, int n_steps,
                                                                   TokenId target) const {
    if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "n_steps must be at least 1");
    json request = {{"prompt", std::string(prompt)},
                    {"max_tokens", n_steps},
                    {"temperature", 0},
                    {"logprobs", options_.top_logprobs}};
    if (!options_.model_name.empty()) request["model"] = options_.model_name;
    const std::string payload = request.dump();

    httplib::Headers headers;
    if (!options_.auth_env.empty()) {
        if (const char* token = std::getenv(options_.auth_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    const auto seconds = std::chrono::duration<double>(options_.timeout_seconds);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(seconds);
    double backoff = options_.backoff_initial_seconds;
    ErrorCode last_code = ErrorCode::BackendUnavailable;
    std::string last_message;

    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
        httplib::Client client(base_);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            const auto err = res.error();
            last_code = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                            ? ErrorCode::Timeout
                            : ErrorCode::BackendUnavailable;
            last_message = httplib::to_string(err);
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_code = ErrorCode::BackendUnavailable;
            last_message = "HTTP status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(ErrorCode::ProtocolError, "HTTP status " + std::to_string(res->status));
        }
        return parse_response(res->body, n_steps, target);
    }
    throw Error(last_code, base_ + path_ + ": " + last_message);
}

}  // namespace glitch
