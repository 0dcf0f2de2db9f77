#include "evidex/config.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "evidex/errors.hpp"
#include "evidex/random.hpp"

namespace evidex {

using nlohmann::json;

void RunConfig::validate() const {
    reward.validate();
    grpo.validate();
    if (reward.eps_std != grpo.eps_std) {
        throw ConfigError("reward.eps_std and grpo.eps_std disagree");
    }
    if (backend.kind != "toy" && backend.kind != "http") {
        throw ConfigError("backend.kind must be 'toy' or 'http'");
    }
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (!std::isfinite(max_grad_norm) || max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be >= 0");
    if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
    if (decoding.rollout_temperature < 0.0 || decoding.answer_temperature < 0.0) {
        throw ConfigError("temperatures must be non-negative");
    }
    if (toy.train_instances < 1) throw ConfigError("toy.train_instances must be positive");
}

RunConfig toy_run_config() {
    RunConfig cfg;
    cfg.grpo.group_size = 128;
    cfg.steps = 500;
    cfg.batch_size = 1;
    cfg.learning_rate = kToyLearningRate;
    cfg.eval_every = 50;
    return cfg;
}

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["train_path"] = c.train_path;
    j["dev_path"] = c.dev_path;
    j["test_path"] = c.test_path;
    j["template_dir"] = c.template_dir;
    j["reward"] = {{"tau", c.reward.tau},           {"gamma", c.reward.gamma},         {"omega", c.reward.omega},
                   {"alpha_ans", c.reward.alpha_ans}, {"alpha_len", c.reward.alpha_len}, {"alpha_fmt", c.reward.alpha_fmt},
                   {"eps_std", c.reward.eps_std}};
    j["grpo"] = {{"clip_eps", c.grpo.clip_eps},
                 {"kl_beta", c.grpo.kl_beta},
                 {"eps_std", c.grpo.eps_std},
                 {"group_size", c.grpo.group_size},
                 {"inner_epochs", c.grpo.inner_epochs}};
    j["backend"] = {{"kind", c.backend.kind},
                    {"checkpoint", c.backend.checkpoint},
                    {"endpoint", c.backend.http.endpoint},
                    {"max_in_flight", c.backend.http.max_in_flight},
                    {"timeout_seconds", c.backend.http.timeout_seconds},
                    {"auth_env", c.backend.auth_env}};
    j["decoding"] = {{"rollout_temperature", c.decoding.rollout_temperature},
                     {"rollout_max_new_tokens", c.decoding.rollout_max_new_tokens},
                     {"answer_temperature", c.decoding.answer_temperature},
                     {"answer_max_new_tokens", c.decoding.answer_max_new_tokens},
                     {"answer_stop", c.decoding.answer_stop},
                     {"extraction_temperature", c.decoding.extraction_temperature},
                     {"extraction_max_new_tokens", c.decoding.extraction_max_new_tokens}};
    j["toy"] = {{"num_keys", c.toy.task.num_keys},
                {"num_values", c.toy.task.num_values},
                {"num_fillers", c.toy.task.num_fillers},
                {"passages_per_instance", c.toy.task.passages_per_instance},
                {"passage_words", c.toy.task.passage_words},
                {"distractor_rate", c.toy.task.distractor_rate},
                {"train_instances", c.toy.train_instances},
                {"dev_instances", c.toy.dev_instances},
                {"test_instances", c.toy.test_instances},
                {"max_slot", c.toy.max_slot}};
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["max_grad_norm"] = c.max_grad_norm;
    j["eval_every"] = c.eval_every;
    j["log_path"] = c.log_path;
    j["checkpoint_path"] = c.checkpoint_path;
    return j;
}

template <class T>
void read(const json& obj, const char* key, T& field) {
    if (auto it = obj.find(key); it != obj.end()) {
        field = it->get<T>();
    }
}

RunConfig from_json(const json& j) {
    RunConfig c;
    read(j, "train_path", c.train_path);
    read(j, "dev_path", c.dev_path);
    read(j, "test_path", c.test_path);
    read(j, "template_dir", c.template_dir);

    std::optional<double> reward_eps, grpo_eps;
    if (auto r = j.find("reward"); r != j.end()) {
        read(*r, "tau", c.reward.tau);
        read(*r, "gamma", c.reward.gamma);
        read(*r, "omega", c.reward.omega);
        read(*r, "alpha_ans", c.reward.alpha_ans);
        read(*r, "alpha_len", c.reward.alpha_len);
        read(*r, "alpha_fmt", c.reward.alpha_fmt);
        if (r->contains("eps_std")) reward_eps = r->at("eps_std").get<double>();
    }
    if (auto g = j.find("grpo"); g != j.end()) {
        read(*g, "clip_eps", c.grpo.clip_eps);
        read(*g, "kl_beta", c.grpo.kl_beta);
        read(*g, "group_size", c.grpo.group_size);
        read(*g, "inner_epochs", c.grpo.inner_epochs);
        if (g->contains("eps_std")) grpo_eps = g->at("eps_std").get<double>();
    }
    if (reward_eps && grpo_eps && *reward_eps != *grpo_eps) {
        throw ConfigError("reward.eps_std and grpo.eps_std disagree");
    }
    if (auto eps = grpo_eps ? grpo_eps : reward_eps) {
        c.reward.eps_std = *eps;
        c.grpo.eps_std = *eps;
    }
    if (auto b = j.find("backend"); b != j.end()) {
        read(*b, "kind", c.backend.kind);
        read(*b, "checkpoint", c.backend.checkpoint);
        read(*b, "endpoint", c.backend.http.endpoint);
        read(*b, "max_in_flight", c.backend.http.max_in_flight);
        read(*b, "timeout_seconds", c.backend.http.timeout_seconds);
        read(*b, "auth_env", c.backend.auth_env);
    }
    if (auto d = j.find("decoding"); d != j.end()) {
        read(*d, "rollout_temperature", c.decoding.rollout_temperature);
        read(*d, "rollout_max_new_tokens", c.decoding.rollout_max_new_tokens);
        read(*d, "answer_temperature", c.decoding.answer_temperature);
        read(*d, "answer_max_new_tokens", c.decoding.answer_max_new_tokens);
        read(*d, "answer_stop", c.decoding.answer_stop);
        read(*d, "extraction_temperature", c.decoding.extraction_temperature);
        read(*d, "extraction_max_new_tokens", c.decoding.extraction_max_new_tokens);
    }
    if (auto t = j.find("toy"); t != j.end()) {
        read(*t, "num_keys", c.toy.task.num_keys);
        read(*t, "num_values", c.toy.task.num_values);
        read(*t, "num_fillers", c.toy.task.num_fillers);
        read(*t, "passages_per_instance", c.toy.task.passages_per_instance);
        read(*t, "passage_words", c.toy.task.passage_words);
        read(*t, "distractor_rate", c.toy.task.distractor_rate);
        read(*t, "train_instances", c.toy.train_instances);
        read(*t, "dev_instances", c.toy.dev_instances);
        read(*t, "test_instances", c.toy.test_instances);
        read(*t, "max_slot", c.toy.max_slot);
    }
    read(j, "seed", c.seed);
    read(j, "epochs", c.epochs);
    read(j, "steps", c.steps);
    read(j, "batch_size", c.batch_size);
    if (j.contains("learning_rate")) {
        c.learning_rate = j.at("learning_rate").get<double>();
    } else {
        c.learning_rate = c.backend.kind == "http" ? kLlmLearningRate : kToyLearningRate;
    }
    read(j, "max_grad_norm", c.max_grad_norm);
    read(j, "eval_every", c.eval_every);
    read(j, "log_path", c.log_path);
    read(j, "checkpoint_path", c.checkpoint_path);
    return c;
}

}  // namespace

std::uint64_t RunConfig::hash() const { return fnv1a(to_json(*this).dump()); }

std::string to_json_string(const RunConfig& config) { return to_json(config).dump(2); }

RunConfig run_config_from_json_string(const std::string& text) {
    try {
        auto cfg = from_json(json::parse(text));
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid run configuration: ") + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open configuration file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return run_config_from_json_string(ss.str());
}

}  // namespace evidex
