#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "glitch/error.hpp"
#include "glitch/verification.hpp"

using namespace glitch;
using json = nlohmann::json;

namespace {

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit LocalServer(httplib::Server::Handler handler) {
        server.Post("/v1/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/completions"; }
};

std::shared_ptr<const TokenizerModel> model() {
    return std::make_shared<const TokenizerModel>(load_tokenizer(
        R"({"byte_alphabet": "byte_fallback", "vocab": {"a": 0, "b": 1, "▁": 2, "▁a": 3}, "merges": ["▁ a"]})"));
}

std::string completion(const std::vector<std::pair<std::string, std::map<std::string, double>>>& steps) {
    json tokens = json::array(), top = json::array();
    for (const auto& [tok, alts] : steps) {
        tokens.push_back(tok);
        top.push_back(alts);
    }
    return json{{"choices", {{{"text", ""}, {"logprobs", {{"tokens", tokens}, {"top_logprobs", top}}}}}}}.dump();
}

HttpBackendOptions fast(const std::string& url) {
    HttpBackendOptions o;
    o.url = url;
    o.retries = 2;
    o.backoff_initial_seconds = 0.01;
    o.timeout_seconds = 2.0;
    return o;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("http") {

TEST_CASE("request shape and parsed probabilities") {
    json seen;
    std::string auth;
    LocalServer srv([&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(completion({{" a", {{" a", -0.05}, {"b", -3.0}}},
                                    {"b", {{"b", -0.1}, {" a", -2.5}}},
                                    {"b", {{"b", -0.2}, {" a", -4.0}}}}),
                        "application/json");
    });
    setenv("GLITCH_TEST_TOKEN", "sekrit", 1);
    auto opts = fast(srv.url());
    opts.model_name = "tiny";
    opts.top_logprobs = 5;
    opts.auth_env = "GLITCH_TEST_TOKEN";
    const HttpCompletionBackend b(model(), opts);
    const auto steps = b.complete_greedy("prompt text", 3, 3);
    REQUIRE(steps.size() == 3);
    CHECK(steps[0].target_probability == doctest::Approx(std::exp(-0.05)).epsilon(1e-15));
    CHECK(steps[1].target_probability == doctest::Approx(std::exp(-2.5)).epsilon(1e-15));
    CHECK(steps[0].chosen_id == 3);
    CHECK(steps[1].chosen_id == 1);
    CHECK(steps[2].position == 2);
    CHECK(seen["prompt"] == "prompt text");
    CHECK(seen["max_tokens"] == 3);
    CHECK(seen["temperature"] == 0);
    CHECK(seen["logprobs"] == 5);
    CHECK(seen["model"] == "tiny");
    CHECK(auth == "Bearer sekrit");
}

TEST_CASE("server errors are retried") {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 500;
            return;
        }
        res.set_content(completion({{"a", {{"a", -0.5}}}}), "application/json");
    });
    const HttpCompletionBackend b(model(), fast(srv.url()));
    const auto steps = b.complete_greedy("x", 1, 0);
    CHECK(calls == 2);
    CHECK(steps[0].target_probability == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("persistent overload ends in BackendUnavailable") {
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 429;
    });
    const HttpCompletionBackend b(model(), fast(srv.url()));
    CHECK(code_of([&] { b.complete_greedy("x", 3, 0); }) == ErrorCode::BackendUnavailable);
    CHECK(calls == 3);
}

TEST_CASE("nothing listening") {
    auto opts = fast("http://127.0.0.1:1");
    opts.retries = 1;
    const HttpCompletionBackend b(model(), opts);
    CHECK(code_of([&] { b.complete_greedy("x", 3, 0); }) == ErrorCode::BackendUnavailable);
}

TEST_CASE("slow responses time out") {
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(800));
        res.set_content(completion({{"a", {{"a", -0.5}}}}), "application/json");
    });
    auto opts = fast(srv.url());
    opts.timeout_seconds = 0.2;
    opts.retries = 0;
    const HttpCompletionBackend b(model(), opts);
    CHECK(code_of([&] { b.complete_greedy("x", 1, 0); }) == ErrorCode::Timeout);
}

TEST_CASE("protocol errors") {
    std::string body;
    int status = 200;
    std::atomic<int> calls{0};
    LocalServer srv([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = status;
        res.set_content(body, "application/json");
    });
    const HttpCompletionBackend b(model(), fast(srv.url()));

    body = R"({"choices": [{"text": "abc"}]})";
    CHECK(code_of([&] { b.complete_greedy("x", 3, 0); }) == ErrorCode::ProtocolError);
    body = "<html>";
    CHECK(code_of([&] { b.complete_greedy("x", 3, 0); }) == ErrorCode::ProtocolError);
    body = completion({{"b", {{"b", -0.01}}}});
    CHECK(code_of([&] { b.complete_greedy("x", 1, 0); }) == ErrorCode::ProtocolError);
    status = 404;
    calls = 0;
    CHECK(code_of([&] { b.complete_greedy("x", 1, 0); }) == ErrorCode::ProtocolError);
    CHECK(calls == 1);

    // a target outside the top-K is never counted as a low probability
    status = 200;
    const auto r = verify_candidate(b, *model(), 0);
    CHECK(r.verdict == Verdict::Inconclusive);
    CHECK(r.error_code == ErrorCode::ProtocolError);
}

TEST_CASE("endpoint validation") {
    CHECK(code_of([] { HttpCompletionBackend(model(), fast("127.0.0.1:80")); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { HttpCompletionBackend(model(), fast("ftp://host/x")); }) == ErrorCode::InvalidArgument);
    auto o = fast("http://host");
    o.top_logprobs = 0;
    CHECK(code_of([&] { HttpCompletionBackend(model(), o); }) == ErrorCode::InvalidArgument);
}

}
