#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evidex {

struct GenerationRequest {
    std::string prompt;
    int num_samples = 1;
    /// 0 selects greedy decoding.
    double temperature = 1.0;
    int max_new_tokens = 256;
    std::vector<std::string> stop_sequences;
    bool return_logprobs = true;
    std::optional<std::uint64_t> seed;
};

enum class FinishReason { stop, length };

std::string_view to_string(FinishReason reason);

struct GenerationResult {
    /// Decoded continuation. Backends may or may not keep a matched stop
    /// sequence at the end; use strip_stop() before treating it as an answer.
    std::string text;
    std::vector<int> token_ids;
    std::vector<std::string> tokens;
    /// Per-token log-probabilities under the untempered policy.
    std::vector<double> token_logprobs;
    FinishReason finish_reason = FinishReason::length;
};

/// Sampler and teacher-forced scorer over prompts. Implementations must be
/// safe for concurrent generate()/score() calls.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;

    virtual std::vector<GenerationResult> generate(const GenerationRequest& request) = 0;

    /// Log-probability of each completion token given prompt and prefix.
    virtual std::vector<double> score(std::string_view prompt, std::string_view completion) = 0;

    /// Runs independent requests. The default runs them in order.
    virtual std::vector<std::vector<GenerationResult>> generate_batch(std::span<const GenerationRequest> requests);
};

/// Drops a trailing stop sequence (and surrounding whitespace) from `text`.
std::string strip_stop(std::string_view text, std::span<const std::string> stop_sequences);

}  // namespace evidex
