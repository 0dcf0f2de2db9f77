#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evidex/config.hpp"
#include "evidex/context_masking.hpp"
#include "evidex/corpus.hpp"
#include "evidex/grpo_core.hpp"
#include "evidex/policy_backend.hpp"

namespace evidex {

struct RolloutSettings {
    int group_size = 8;
    double temperature = 1.0;
    int max_new_tokens = 32;
    /// Sampling stops once the in-line answer is closed.
    std::vector<std::string> stop = {"</answer>"};
    double answer_temperature = 0.0;
    int answer_max_new_tokens = 8;
    std::vector<std::string> answer_stop = {"</answer>"};
    double eps_std = 0.1;
    std::uint64_t seed = 0;

    static RolloutSettings from(const RunConfig& config, std::uint64_t seed);
};

struct CollectedGroup {
    RolloutGroup group;
    /// Set when eps_std = 0 met a zero-variance group; advantages are zeroed.
    bool degenerate = false;
};

/// Samples G responses from the extraction prompt, regenerates o_r and o_e
/// from hard-masked contexts, scores every response and fills advantages.
/// `reference`, when given, supplies logp_ref; otherwise logp_ref = logp_old.
/// Backend failures propagate as BackendError and no group is returned.
CollectedGroup collect_rollout_group(const QAInstance& instance,
                                     GenerationBackend& backend,
                                     GenerationBackend* reference,
                                     const RolloutSettings& settings,
                                     const RewardConfig& rewards,
                                     const TemplateSet& templates);

/// Greedy answer from a masked context, or "" when the response lacks the
/// segment the mode needs.
std::string regenerate_answer(ContextMode mode,
                              const QAInstance& instance,
                              const ParsedResponse& parsed,
                              GenerationBackend& backend,
                              const RolloutSettings& settings,
                              const TemplateSet& templates);

}  // namespace evidex
