#include "evidex/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "evidex/errors.hpp"
#include "evidex/random.hpp"
#include "evidex/rollout.hpp"
#include "evidex/text_metrics.hpp"

namespace evidex {

using nlohmann::json;

std::string to_json_line(const DynamicsRecord& r) {
    json j;
    j["step"] = r.step;
    j["mean_final"] = r.mean_final;
    j["mean_ans_r"] = r.mean_ans_r;
    j["mean_ans_e"] = r.mean_ans_e;
    j["mean_ans_f"] = r.mean_ans_f;
    j["mean_len_r"] = r.mean_len_r;
    j["mean_len_e"] = r.mean_len_e;
    j["mean_len_answer"] = r.mean_len_answer;
    j["format_rate"] = r.format_rate;
    j["clip_fraction"] = r.clip_fraction;
    j["mean_kl"] = r.mean_kl;
    j["objective"] = r.objective;
    j["grad_norm"] = r.grad_norm;
    j["max_abs_advantage"] = r.max_abs_advantage;
    j["reward_min"] = r.reward_min;
    j["reward_max"] = r.reward_max;
    j["degenerate_groups"] = r.degenerate_groups;
    j["failed_groups"] = r.failed_groups;
    return j.dump();
}

DynamicsRecord dynamics_from_json_line(const std::string& line) {
    const auto j = json::parse(line);
    DynamicsRecord r;
    r.step = j.at("step").get<int>();
    r.mean_final = j.at("mean_final").get<double>();
    r.mean_ans_r = j.at("mean_ans_r").get<double>();
    r.mean_ans_e = j.at("mean_ans_e").get<double>();
    r.mean_ans_f = j.at("mean_ans_f").get<double>();
    r.mean_len_r = j.at("mean_len_r").get<double>();
    r.mean_len_e = j.at("mean_len_e").get<double>();
    r.mean_len_answer = j.at("mean_len_answer").get<double>();
    r.format_rate = j.value("format_rate", 0.0);
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.mean_kl = j.at("mean_kl").get<double>();
    r.objective = j.value("objective", 0.0);
    r.grad_norm = j.value("grad_norm", 0.0);
    r.max_abs_advantage = j.value("max_abs_advantage", 0.0);
    r.reward_min = j.value("reward_min", 0.0);
    r.reward_max = j.value("reward_max", 0.0);
    r.degenerate_groups = j.value("degenerate_groups", 0);
    r.failed_groups = j.value("failed_groups", 0);
    return r;
}

std::vector<DynamicsRecord> read_dynamics_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dynamics log " + path.string());
    }
    std::vector<DynamicsRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(dynamics_from_json_line(line));
    }
    return out;
}

double clip_gradient(ToyParameters& gradient, double max_norm) {
    double sq = 0.0;
    for (double g : gradient) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& g : gradient) g *= scale;
    }
    return norm;
}

std::vector<QAInstance> config_split(const RunConfig& config, Split split) {
    const std::string& path = split == Split::train ? config.train_path
                              : split == Split::dev ? config.dev_path
                                                    : config.test_path;
    if (!path.empty()) {
        return load_dataset(path, split);
    }
    const int count = split == Split::train ? config.toy.train_instances
                      : split == Split::dev ? config.toy.dev_instances
                                            : config.toy.test_instances;
    return make_toy_dataset(config.toy.task, count, split, mix_seed(config.seed, 7000 + static_cast<int>(split)));
}

TemplateSet config_templates(const RunConfig& config) {
    return config.template_dir.empty() ? TemplateSet{} : TemplateSet::from_directory(config.template_dir);
}

double dev_reward(const ToyPolicy& policy,
                  std::span<const QAInstance> dev,
                  const RunConfig& config,
                  const TemplateSet& templates) {
    if (dev.empty()) return 0.0;
    SnapshotView live(policy, Snapshot::live);
    auto settings = RolloutSettings::from(config, config.seed);
    double total = 0.0;
    for (const auto& inst : dev) {
        GenerationRequest req;
        req.prompt = render_prompt(templates.rational_extraction, inst);
        req.temperature = 0.0;
        req.max_new_tokens = settings.max_new_tokens;
        req.stop_sequences = settings.stop;
        const auto text = live.generate(req).front().text;
        const auto parsed = parse_response(text);
        const auto o_r = regenerate_answer(ContextMode::rationale_only, inst, parsed, live, settings, templates);
        const auto o_e = regenerate_answer(ContextMode::evidence_only, inst, parsed, live, settings, templates);
        total += score_response(inst, parsed, o_r, o_e, config.reward).final;
    }
    return total / static_cast<double>(dev.size());
}

TrainResult train(const RunConfig& config,
                  std::span<const QAInstance> train_set,
                  std::span<const QAInstance> dev_set,
                  std::ostream* log) {
    config.validate();
    if (config.backend.kind != "toy") {
        throw ConfigError("only the toy backend is trainable");
    }
    if (train_set.empty()) {
        throw Error("training set is empty");
    }
    const auto templates = config_templates(config);

    ToyPolicy policy(config.toy.task, config.toy.max_slot);
    if (!config.backend.checkpoint.empty()) {
        policy = ToyPolicy::load(config.backend.checkpoint, config.toy.task);
    }
    policy.sync_old();
    policy.reset_reference();
    SnapshotView reference(policy, Snapshot::reference);

    const auto n = train_set.size();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    const int steps_per_epoch = static_cast<int>((n + batch - 1) / batch);
    const int total_steps = config.steps > 0 ? config.steps : config.epochs * steps_per_epoch;

    TrainResult result{policy, policy, {}, -1.0, 0};
    result.best_dev_reward = dev_set.empty() ? 0.0 : dev_reward(policy, dev_set, config, templates);

    std::vector<std::size_t> order(n);
    std::size_t cursor = n;  // forces a shuffle before the first step
    int epoch = 0;
    std::uint64_t group_counter = 0;

    for (int step = 1; step <= total_steps; ++step) {
        ToyParameters gradient(policy.num_parameters(), 0.0);
        DynamicsRecord rec;
        rec.step = step;
        rec.reward_min = std::numeric_limits<double>::infinity();
        rec.reward_max = -std::numeric_limits<double>::infinity();
        std::size_t members = 0;
        int groups = 0;

        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor >= n) {
                std::iota(order.begin(), order.end(), std::size_t{0});
                Rng(mix_seed(config.seed, 5000 + static_cast<std::uint64_t>(epoch))).shuffle(std::span<std::size_t>(order));
                cursor = 0;
                ++epoch;
            }
            const auto& inst = train_set[order[cursor++]];
            const auto settings = RolloutSettings::from(config, mix_seed(config.seed, group_counter++));

            CollectedGroup collected;
            try {
                collected = collect_rollout_group(inst, policy, &reference, settings, config.reward, templates);
            } catch (const BackendError& e) {
                spdlog::warn("step {}: group for '{}' aborted: {}", step, inst.id, e.what());
                ++rec.failed_groups;
                continue;
            }
            auto& group = collected.group;
            if (collected.degenerate) ++rec.degenerate_groups;

            ObjectiveResult obj;
            for (int inner = 0; inner < config.grpo.inner_epochs; ++inner) {
                if (inner > 0) {
                    for (auto& m : group.members) {
                        m.logp_current = policy.score(group.prompt, m.completion);
                    }
                }
                obj = grpo_objective(group, config.grpo);
                if (!std::isfinite(obj.objective)) {
                    throw Error("non-finite objective at step " + std::to_string(step) + " on '" + inst.id + "'");
                }
                if (config.grpo.inner_epochs > 1) {
                    ToyParameters g(policy.num_parameters(), 0.0);
                    for (std::size_t i = 0; i < group.members.size(); ++i) {
                        policy.accumulate_gradient(group.prompt, group.members[i].completion, obj.grad_logp[i], g);
                    }
                    for (auto& x : g) x /= static_cast<double>(batch);
                    rec.grad_norm = std::max(rec.grad_norm, clip_gradient(g, config.max_grad_norm));
                    toy_gradient_step(policy, g, config.learning_rate);
                }
            }
            if (config.grpo.inner_epochs == 1) {
                for (std::size_t i = 0; i < group.members.size(); ++i) {
                    policy.accumulate_gradient(group.prompt, group.members[i].completion, obj.grad_logp[i], gradient);
                }
            }

            ++groups;
            rec.objective += obj.objective;
            rec.clip_fraction += obj.clip_fraction;
            rec.mean_kl += obj.kl;
            for (double a : *group.advantages) {
                rec.max_abs_advantage = std::max(rec.max_abs_advantage, std::abs(a));
            }
            for (const auto& m : group.members) {
                ++members;
                rec.mean_final += m.reward.final;
                rec.mean_ans_r += m.reward.ans_r;
                rec.mean_ans_e += m.reward.ans_e;
                rec.mean_ans_f += m.reward.ans_f;
                rec.mean_len_r += static_cast<double>(word_count(m.parsed.rationale.value_or("")));
                rec.mean_len_e += static_cast<double>(word_count(m.parsed.evidence.value_or("")));
                rec.mean_len_answer += static_cast<double>(word_count(m.parsed.answer.value_or("")));
                rec.format_rate += m.reward.fmt;
                rec.reward_min = std::min(rec.reward_min, m.reward.final);
                rec.reward_max = std::max(rec.reward_max, m.reward.final);
            }
        }

        if (config.grpo.inner_epochs == 1 && groups > 0) {
            for (auto& g : gradient) g /= static_cast<double>(groups);
            rec.grad_norm = clip_gradient(gradient, config.max_grad_norm);
            toy_gradient_step(policy, gradient, config.learning_rate);
        }
        policy.sync_old();

        if (groups > 0) {
            const double g = static_cast<double>(groups);
            const double m = static_cast<double>(members);
            rec.objective /= g;
            rec.clip_fraction /= g;
            rec.mean_kl /= g;
            rec.mean_final /= m;
            rec.mean_ans_r /= m;
            rec.mean_ans_e /= m;
            rec.mean_ans_f /= m;
            rec.mean_len_r /= m;
            rec.mean_len_e /= m;
            rec.mean_len_answer /= m;
            rec.format_rate /= m;
        } else {
            rec.reward_min = rec.reward_max = 0.0;
        }
        result.dynamics.push_back(rec);
        if (log) {
            *log << to_json_line(rec) << '\n';
            log->flush();
        }

        const bool eval_now = config.eval_every > 0 && (step % config.eval_every == 0 || step == total_steps);
        if (eval_now && !dev_set.empty()) {
            const double dev = dev_reward(policy, dev_set, config, templates);
            spdlog::info("step {}: train R={:.4f} fmt={:.3f} dev R={:.4f}", step, rec.mean_final, rec.format_rate, dev);
            if (dev > result.best_dev_reward) {
                result.best_dev_reward = dev;
                result.best_step = step;
                result.best_policy = policy;
            }
        }
    }

    result.final_policy = policy;
    if (dev_set.empty()) {
        result.best_policy = policy;
        result.best_step = total_steps;
    }
    if (!config.checkpoint_path.empty()) {
        result.best_policy.save(config.checkpoint_path, config.hash());
    }
    return result;
}

}  // namespace evidex
