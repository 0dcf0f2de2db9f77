#include "evidex/reward_engine.hpp"

#include <cmath>

#include "evidex/errors.hpp"
#include "evidex/text_metrics.hpp"

namespace evidex {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(std::string("sub-reward ") + name + " outside [0, 1]: " + std::to_string(v));
    }
}

}  // namespace

void RewardConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega must lie in [0, 1]");
    if (!(alpha_ans >= 0.0 && alpha_len >= 0.0 && alpha_fmt >= 0.0)) {
        throw ConfigError("reward weights must be non-negative");
    }
    if (!(eps_std >= 0.0)) throw ConfigError("eps_std must be non-negative");
}

AnswerRewards answer_rewards(std::span<const std::string> golds,
                             std::string_view o_r,
                             std::string_view o_e,
                             std::string_view o_f) {
    AnswerRewards out;
    out.ans_r = unigram_f1(o_r, golds);
    out.ans_e = unigram_f1(o_e, golds);
    out.ans_f = unigram_f1(o_f, golds);
    out.mean = (out.ans_r + out.ans_e + out.ans_f) / 3.0;
    return out;
}

double rationale_length_reward(std::size_t len_r, std::size_t len_e, double tau) {
    if (!(tau > 0.0)) {
        throw Error("tau must be positive");
    }
    // Zero lengths take the limits of the two branches.
    if (len_r == 0 && len_e == 0) return 0.5;
    if (len_r == 0) return 0.0;
    if (len_e == 0) return 1.0;

    const double r = static_cast<double>(len_r);
    const double e = static_cast<double>(len_e);
    if (len_r >= len_e) {
        return sigmoid((r / e - 1.0) / tau);
    }
    return sigmoid((1.0 - e / r) / tau);
}

double evidence_length_reward(std::size_t len_e, std::size_t len_p, double gamma, double omega) {
    if (len_p == 0) {
        throw Error("passage length must be positive");
    }
    const double x = 1.0 - static_cast<double>(len_e) / static_cast<double>(len_p);
    if (x >= omega) {
        return 1.0;
    }
    if (x <= 0.0) {
        return x == 0.0 && gamma == 0.0 ? 1.0 : 0.0;
    }
    return std::pow(x, gamma);
}

double format_reward(std::string_view raw) { return check_format(raw) ? 1.0 : 0.0; }

RewardBreakdown final_reward(const RewardParts& parts, const RewardConfig& config) {
    check_unit(parts.ans_r, "ans_r");
    check_unit(parts.ans_e, "ans_e");
    check_unit(parts.ans_f, "ans_f");
    check_unit(parts.len_r, "len_r");
    check_unit(parts.len_e, "len_e");
    if (parts.fmt != 0.0 && parts.fmt != 1.0) {
        throw Error("format reward must be 0 or 1");
    }

    RewardBreakdown b;
    b.ans_r = parts.ans_r;
    b.ans_e = parts.ans_e;
    b.ans_f = parts.ans_f;
    b.ans_mean = (parts.ans_r + parts.ans_e + parts.ans_f) / 3.0;
    b.len_r = parts.len_r;
    b.len_e = parts.len_e;
    b.len_mean = (parts.len_r + parts.len_e) / 2.0;
    b.fmt = parts.fmt;
    b.final = config.alpha_ans * b.ans_mean + config.alpha_len * b.len_mean + config.alpha_fmt * b.fmt;
    b.valid = b.fmt == 1.0;
    return b;
}

RewardBreakdown score_response(const QAInstance& instance,
                               const ParsedResponse& parsed,
                               std::string_view o_r,
                               std::string_view o_e,
                               const RewardConfig& config) {
    const std::string_view rationale = parsed.rationale ? std::string_view(*parsed.rationale) : std::string_view{};
    const std::string_view evidence = parsed.evidence ? std::string_view(*parsed.evidence) : std::string_view{};
    const std::string_view o_f = parsed.answer ? std::string_view(*parsed.answer) : std::string_view{};

    const auto ans = answer_rewards(instance.gold_answers, o_r, o_e, o_f);
    const auto len_r = word_count(rationale);
    const auto len_e = word_count(evidence);

    RewardParts parts;
    parts.ans_r = ans.ans_r;
    parts.ans_e = ans.ans_e;
    parts.ans_f = ans.ans_f;
    parts.len_r = rationale_length_reward(len_r, len_e, config.tau);
    parts.len_e = evidence_length_reward(len_e, passage_word_count(instance.passages), config.gamma, config.omega);
    parts.fmt = parsed.well_formed ? 1.0 : 0.0;
    return final_reward(parts, config);
}

}  // namespace evidex
