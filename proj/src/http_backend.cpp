#include "evidex/http_backend.hpp"

#include <future>

#include "httplib.h"
#include "json.hpp"

#include "evidex/errors.hpp"

namespace evidex {

using nlohmann::json;

std::string make_completion_request_body(const GenerationRequest& request) {
    json body;
    body["prompt"] = request.prompt;
    body["n"] = request.num_samples;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_new_tokens;
    body["stop"] = request.stop_sequences;
    body["logprobs"] = request.return_logprobs;
    if (request.seed) {
        body["seed"] = *request.seed;
    }
    return body.dump();
}

std::vector<GenerationResult> parse_completion_reply(const std::string& body, int expected_choices) {
    json reply;
    try {
        reply = json::parse(body);
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed backend reply: ") + e.what());
    }
    auto choices = reply.find("choices");
    if (choices == reply.end() || !choices->is_array()) {
        throw BackendError("malformed backend reply: no choices array");
    }
    if (static_cast<int>(choices->size()) != expected_choices) {
        throw BackendError("malformed backend reply: expected " + std::to_string(expected_choices) + " choices, got " +
                           std::to_string(choices->size()));
    }
    std::vector<GenerationResult> out;
    for (const auto& c : *choices) {
        try {
            GenerationResult r;
            r.text = c.at("text").get<std::string>();
            r.tokens = c.value("tokens", std::vector<std::string>{});
            r.token_logprobs = c.value("token_logprobs", std::vector<double>{});
            if (!r.token_logprobs.empty() && r.token_logprobs.size() != r.tokens.size()) {
                throw BackendError("malformed backend reply: tokens and token_logprobs differ in length");
            }
            const auto finish = c.value("finish_reason", std::string("length"));
            r.finish_reason = finish == "stop" ? FinishReason::stop : FinishReason::length;
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed backend reply: ") + e.what());
        }
    }
    return out;
}

HttpBackend::Endpoint HttpBackend::split_endpoint(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("endpoint must be an absolute http URL: " + url);
    }
    if (url.compare(0, scheme, "http") != 0) {
        throw ConfigError("only plain http endpoints are supported: " + url);
    }
    const auto path = url.find('/', scheme + 3);
    if (path == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path), url.substr(path)};
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), endpoint_(split_endpoint(config_.endpoint)), in_flight_(std::max(1, config_.max_in_flight)) {
    if (config_.max_in_flight < 1 || config_.max_in_flight > 1024) {
        throw ConfigError("max_in_flight must lie in [1, 1024]");
    }
}

HttpBackend::~HttpBackend() = default;

std::vector<GenerationResult> HttpBackend::generate(const GenerationRequest& request) {
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    httplib::Client client(endpoint_.base);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
    }

    auto res = client.Post(endpoint_.path, headers, make_completion_request_body(request), "application/json");
    if (!res) {
        throw BackendError("backend unreachable at " + config_.endpoint + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        const bool overflow = res->status == 413 || res->body.find("context") != std::string::npos;
        throw BackendError((overflow ? "context overflow: " : "backend error: ") + std::string("HTTP ") +
                           std::to_string(res->status) + " " + res->body);
    }
    return parse_completion_reply(res->body, request.num_samples);
}

std::vector<double> HttpBackend::score(std::string_view, std::string_view) {
    throw BackendError("the HTTP backend does not support teacher-forced scoring");
}

std::vector<std::vector<GenerationResult>> HttpBackend::generate_batch(std::span<const GenerationRequest> requests) {
    std::vector<std::future<std::vector<GenerationResult>>> pending;
    pending.reserve(requests.size());
    for (const auto& r : requests) {
        pending.push_back(std::async(std::launch::async, [this, &r] { return generate(r); }));
    }
    std::vector<std::vector<GenerationResult>> out;
    out.reserve(requests.size());
    for (auto& f : pending) {
        out.push_back(f.get());
    }
    return out;
}

}  // namespace evidex
