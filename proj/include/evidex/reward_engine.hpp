#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "evidex/corpus.hpp"
#include "evidex/response_schema.hpp"

namespace evidex {

struct RewardConfig {
    double tau = 0.5;     // rationale length temperature
    double gamma = 0.5;   // evidence length skewness
    double omega = 0.9;   // evidence compression plateau threshold
    double alpha_ans = 0.8;
    double alpha_len = 0.1;
    double alpha_fmt = 0.1;
    double eps_std = 0.1;

    /// Throws ConfigError when a field is out of its domain.
    void validate() const;
};

struct AnswerRewards {
    double ans_r = 0.0;
    double ans_e = 0.0;
    double ans_f = 0.0;
    double mean = 0.0;
};

/// Sub-rewards before weighting.
struct RewardParts {
    double ans_r = 0.0;
    double ans_e = 0.0;
    double ans_f = 0.0;
    double len_r = 0.0;
    double len_e = 0.0;
    double fmt = 0.0;
};

struct RewardBreakdown {
    double ans_r = 0.0;
    double ans_e = 0.0;
    double ans_f = 0.0;
    double ans_mean = 0.0;
    double len_r = 0.0;
    double len_e = 0.0;
    double len_mean = 0.0;
    double fmt = 0.0;
    double final = 0.0;
    /// False when the format reward is zero.
    bool valid = false;
};

AnswerRewards answer_rewards(std::span<const std::string> golds,
                             std::string_view o_r,
                             std::string_view o_e,
                             std::string_view o_f);

/// Sigmoid of the relative rationale/evidence length, centred at equal length.
double rationale_length_reward(std::size_t len_r, std::size_t len_e, double tau);

/// 1 once the evidence removes at least `omega` of the passage words,
/// (1 - len_e/len_p)^gamma below that, 0 when the evidence is longer than the
/// passages.
double evidence_length_reward(std::size_t len_e, std::size_t len_p, double gamma, double omega);

double format_reward(std::string_view raw);

RewardBreakdown final_reward(const RewardParts& parts, const RewardConfig& config);

/// Full reward for one response. Missing segments count as empty text.
RewardBreakdown score_response(const QAInstance& instance,
                               const ParsedResponse& parsed,
                               std::string_view o_r,
                               std::string_view o_e,
                               const RewardConfig& config);

}  // namespace evidex
