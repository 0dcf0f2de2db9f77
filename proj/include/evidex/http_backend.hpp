#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include "evidex/policy_backend.hpp"

namespace evidex {

struct HttpBackendConfig {
    /// Full URL of the completion endpoint, e.g. http://127.0.0.1:8000/v1/completions
    std::string endpoint;
    /// Sent as "Authorization: Bearer <token>" when non-empty.
    std::string auth_token;
    int max_in_flight = 4;
    double timeout_seconds = 120.0;
};

/// Client for a remote inference server speaking the completion wire format:
///   request  {prompt, n, temperature, max_tokens, stop[], logprobs: true}
///   reply    {choices[]: {text, tokens[], token_logprobs[], finish_reason}}
class HttpBackend : public GenerationBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    std::vector<GenerationResult> generate(const GenerationRequest& request) override;

    /// The wire format carries no teacher-forcing call; always throws BackendError.
    std::vector<double> score(std::string_view prompt, std::string_view completion) override;

    /// Issues the requests concurrently, at most max_in_flight at a time.
    std::vector<std::vector<GenerationResult>> generate_batch(std::span<const GenerationRequest> requests) override;

    const HttpBackendConfig& config() const noexcept { return config_; }

private:
    struct Endpoint {
        std::string base;  // scheme://host:port
        std::string path;
    };
    static Endpoint split_endpoint(const std::string& url);

    HttpBackendConfig config_;
    Endpoint endpoint_;
    std::counting_semaphore<1024> in_flight_;
};

/// JSON body for one request. Exposed for tests of the wire format.
std::string make_completion_request_body(const GenerationRequest& request);
/// Parses a reply body; throws BackendError on malformed replies.
std::vector<GenerationResult> parse_completion_reply(const std::string& body, int expected_choices);

}  // namespace evidex
