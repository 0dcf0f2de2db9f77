#include "evidex/rollout.hpp"

#include "evidex/errors.hpp"
#include "evidex/random.hpp"
#include "evidex/reward_engine.hpp"

namespace evidex {

RolloutSettings RolloutSettings::from(const RunConfig& config, std::uint64_t seed) {
    RolloutSettings s;
    s.group_size = config.grpo.group_size;
    s.temperature = config.decoding.rollout_temperature;
    s.max_new_tokens = config.decoding.rollout_max_new_tokens;
    s.answer_temperature = config.decoding.answer_temperature;
    s.answer_max_new_tokens = config.decoding.answer_max_new_tokens;
    s.answer_stop = config.decoding.answer_stop;
    s.eps_std = config.grpo.eps_std;
    s.seed = seed;
    return s;
}

std::string regenerate_answer(ContextMode mode,
                              const QAInstance& instance,
                              const ParsedResponse& parsed,
                              GenerationBackend& backend,
                              const RolloutSettings& settings,
                              const TemplateSet& templates) {
    MaskedContext ctx;
    try {
        ctx = build_context(mode, instance, parsed, templates);
    } catch (const MissingSegmentError&) {
        return {};
    }
    GenerationRequest req;
    req.prompt = std::move(ctx.prompt);
    req.num_samples = 1;
    req.temperature = settings.answer_temperature;
    req.max_new_tokens = settings.answer_max_new_tokens;
    req.stop_sequences = settings.answer_stop;
    req.return_logprobs = false;
    req.seed = mix_seed(settings.seed, static_cast<std::uint64_t>(mode) + 101);
    auto out = backend.generate(req);
    if (out.size() != 1) {
        throw BackendError("expected one regenerated answer");
    }
    return strip_stop(out.front().text, settings.answer_stop);
}

CollectedGroup collect_rollout_group(const QAInstance& instance,
                                     GenerationBackend& backend,
                                     GenerationBackend* reference,
                                     const RolloutSettings& settings,
                                     const RewardConfig& rewards,
                                     const TemplateSet& templates) {
    if (settings.group_size < 2) {
        throw Error("rollout groups need at least two responses");
    }
    CollectedGroup out;
    auto& group = out.group;
    group.instance_id = instance.id;
    group.prompt = render_prompt(templates.rational_extraction, instance);

    GenerationRequest req;
    req.prompt = group.prompt;
    req.num_samples = settings.group_size;
    req.temperature = settings.temperature;
    req.max_new_tokens = settings.max_new_tokens;
    req.stop_sequences = settings.stop;
    req.return_logprobs = true;
    req.seed = settings.seed;
    auto samples = backend.generate(req);
    if (static_cast<int>(samples.size()) != settings.group_size) {
        throw BackendError("backend returned " + std::to_string(samples.size()) + " samples, expected " +
                           std::to_string(settings.group_size));
    }

    for (auto& s : samples) {
        GroupMember m;
        m.completion = std::move(s.text);
        m.parsed = parse_response(m.completion);
        m.token_ids = std::move(s.token_ids);
        m.logp_old = std::move(s.token_logprobs);
        m.logp_current = m.logp_old;
        m.logp_ref = reference ? reference->score(group.prompt, m.completion) : m.logp_old;
        if (m.logp_ref.size() != m.logp_old.size()) {
            throw BackendError("reference scoring returned a different token count");
        }
        m.o_r = regenerate_answer(ContextMode::rationale_only, instance, m.parsed, backend, settings, templates);
        m.o_e = regenerate_answer(ContextMode::evidence_only, instance, m.parsed, backend, settings, templates);
        m.reward = score_response(instance, m.parsed, m.o_r, m.o_e, rewards);
        group.rewards.push_back(m.reward.final);
        group.members.push_back(std::move(m));
    }

    try {
        group.advantages = group_advantages(group.rewards, settings.eps_std);
    } catch (const DegenerateGroupError&) {
        out.degenerate = true;
        group.advantages = std::vector<double>(group.members.size(), 0.0);
    }
    return out;
}

}  // namespace evidex
