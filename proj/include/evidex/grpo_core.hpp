#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evidex/response_schema.hpp"
#include "evidex/reward_engine.hpp"

namespace evidex {

struct GrpoConfig {
    double clip_eps = 0.2;
    double kl_beta = 1e-2;
    double eps_std = 0.1;
    int group_size = 8;
    /// Optimization passes over each sampled group. 1 keeps training on-policy.
    int inner_epochs = 1;

    void validate() const;
};

/// One sampled response. Token arrays cover the self-contained sequence
/// (rationale, evidence and in-line answer); the masked regenerations o_r
/// and o_e are kept as text only and never scored.
struct GroupMember {
    std::string completion;
    ParsedResponse parsed;
    std::vector<int> token_ids;
    std::vector<double> logp_current;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::string o_r;
    std::string o_e;
    RewardBreakdown reward;
};

struct RolloutGroup {
    std::string instance_id;
    std::string prompt;
    std::vector<GroupMember> members;
    std::vector<double> rewards;
    std::optional<std::vector<double>> advantages;

    std::size_t size() const noexcept { return members.size(); }
};

/// (R_i - mean) / max(std, eps_std) with the population standard deviation.
/// Throws DegenerateGroupError for singleton groups, and for zero-variance
/// groups when eps_std is 0.
std::vector<double> group_advantages(std::span<const double> rewards, double eps_std);

double token_ratio(double logp_current, double logp_old);
double clipped_surrogate(double ratio, double advantage, double clip_eps);

/// r - ln r - 1 with r = pi_ref / pi_theta, for one token.
double kl_estimate(double logp_current, double logp_ref);
/// Sequence mean of kl_estimate.
double kl_penalty(std::span<const double> logp_current, std::span<const double> logp_ref);

struct ObjectiveResult {
    double objective = 0.0;
    double surrogate = 0.0;      // group mean of per-sequence surrogate means
    double kl = 0.0;             // group mean of per-sequence KL means
    double clip_fraction = 0.0;  // share of tokens whose ratio was clipped
    std::size_t tokens = 0;
    /// dJ / d logp_current, shaped like the members' token arrays.
    std::vector<std::vector<double>> grad_logp;
};

/// J = 1/G sum_i [mean_t min(rho A, clip(rho) A) - beta mean_t KL].
ObjectiveResult grpo_objective(const RolloutGroup& group, const GrpoConfig& config);

}  // namespace evidex
