#include "evidex/grpo_core.hpp"

#include <algorithm>
#include <cmath>

#include "evidex/errors.hpp"

namespace evidex {

void GrpoConfig::validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
    if (!(kl_beta >= 0.0)) throw ConfigError("kl_beta must be non-negative");
    if (!(eps_std >= 0.0)) throw ConfigError("eps_std must be non-negative");
    if (group_size < 2) throw ConfigError("group_size must be at least 2");
    if (inner_epochs < 1) throw ConfigError("inner_epochs must be at least 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps_std) {
    if (rewards.size() < 2) {
        throw DegenerateGroupError("group advantages need at least two rewards");
    }
    if (eps_std < 0.0) {
        throw Error("eps_std must be non-negative");
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double std_dev = std::sqrt(var / n);
    const double denom = std::max(std_dev, eps_std);
    if (denom == 0.0) {
        throw DegenerateGroupError("zero reward variance with eps_std = 0");
    }
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) {
        out.push_back((r - mean) / denom);
    }
    return out;
}

double token_ratio(double logp_current, double logp_old) {
    if (!std::isfinite(logp_current) || !std::isfinite(logp_old)) {
        throw Error("non-finite log-probability in ratio");
    }
    return std::exp(logp_current - logp_old);
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    return std::min(ratio * advantage, clipped * advantage);
}

double kl_estimate(double logp_current, double logp_ref) {
    if (!std::isfinite(logp_current) || !std::isfinite(logp_ref)) {
        throw Error("non-finite log-probability in KL estimate");
    }
    const double log_r = logp_ref - logp_current;
    return std::exp(log_r) - log_r - 1.0;
}

double kl_penalty(std::span<const double> logp_current, std::span<const double> logp_ref) {
    if (logp_current.size() != logp_ref.size()) {
        throw Error("token array length mismatch");
    }
    if (logp_current.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < logp_current.size(); ++t) {
        sum += kl_estimate(logp_current[t], logp_ref[t]);
    }
    return sum / static_cast<double>(logp_current.size());
}

ObjectiveResult grpo_objective(const RolloutGroup& group, const GrpoConfig& config) {
    if (!group.advantages) {
        throw Error("grpo_objective called before advantages were populated");
    }
    const auto& adv = *group.advantages;
    if (adv.size() != group.members.size() || group.members.empty()) {
        throw Error("advantage count does not match group size");
    }

    ObjectiveResult out;
    out.grad_logp.resize(group.members.size());
    const double inv_g = 1.0 / static_cast<double>(group.members.size());
    std::size_t clipped_tokens = 0;

    for (std::size_t i = 0; i < group.members.size(); ++i) {
        const auto& m = group.members[i];
        const auto len = m.logp_current.size();
        if (m.logp_old.size() != len || m.logp_ref.size() != len ||
            (!m.token_ids.empty() && m.token_ids.size() != len)) {
            throw Error("token array length mismatch in response " + std::to_string(i));
        }
        auto& grad = out.grad_logp[i];
        grad.assign(len, 0.0);
        if (len == 0) {
            continue;
        }
        const double inv_len = 1.0 / static_cast<double>(len);
        const double a = adv[i];
        double surrogate = 0.0;
        double kl = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            const double rho = token_ratio(m.logp_current[t], m.logp_old[t]);
            const double clipped = std::clamp(rho, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
            const double unclipped_term = rho * a;
            const double clipped_term = clipped * a;
            double d_surrogate = 0.0;
            if (unclipped_term <= clipped_term) {
                surrogate += unclipped_term;
                d_surrogate = unclipped_term;  // d(rho A)/d logp = rho A
            } else {
                surrogate += clipped_term;
                ++clipped_tokens;
            }
            const double r = std::exp(m.logp_ref[t] - m.logp_current[t]);
            kl += kl_estimate(m.logp_current[t], m.logp_ref[t]);
            // d(r - ln r - 1)/d logp_current = 1 - r
            grad[t] = inv_g * inv_len * (d_surrogate - config.kl_beta * (1.0 - r));
        }
        out.surrogate += inv_g * inv_len * surrogate;
        out.kl += inv_g * inv_len * kl;
        out.tokens += len;
    }
    out.objective = out.surrogate - config.kl_beta * out.kl;
    out.clip_fraction = out.tokens == 0 ? 0.0 : static_cast<double>(clipped_tokens) / static_cast<double>(out.tokens);
    return out;
}

}  // namespace evidex
