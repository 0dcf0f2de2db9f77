#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evidex/config.hpp"
#include "evidex/corpus.hpp"
#include "evidex/toy_policy.hpp"

namespace evidex {

/// One line of the training-dynamics log.
struct DynamicsRecord {
    int step = 0;
    double mean_final = 0.0;
    double mean_ans_r = 0.0;
    double mean_ans_e = 0.0;
    double mean_ans_f = 0.0;
    double mean_len_r = 0.0;       // words in <reason>
    double mean_len_e = 0.0;       // words in <extract>
    double mean_len_answer = 0.0;  // words in <answer>
    double format_rate = 0.0;
    double clip_fraction = 0.0;
    double mean_kl = 0.0;
    double objective = 0.0;
    double grad_norm = 0.0;  // before clipping
    double max_abs_advantage = 0.0;
    double reward_min = 0.0;
    double reward_max = 0.0;
    int degenerate_groups = 0;
    int failed_groups = 0;
};

std::string to_json_line(const DynamicsRecord& record);
DynamicsRecord dynamics_from_json_line(const std::string& line);
std::vector<DynamicsRecord> read_dynamics_log(const std::filesystem::path& path);

struct TrainResult {
    ToyPolicy final_policy;
    ToyPolicy best_policy;
    std::vector<DynamicsRecord> dynamics;
    double best_dev_reward = 0.0;
    int best_step = 0;
};

/// Rescales `gradient` to L2 norm `max_norm` when it is larger (max_norm <= 0
/// leaves it alone). Returns the norm before rescaling.
double clip_gradient(ToyParameters& gradient, double max_norm);

/// Mean final reward of greedy responses (one per instance) under `policy`.
double dev_reward(const ToyPolicy& policy,
                  std::span<const QAInstance> dev,
                  const RunConfig& config,
                  const TemplateSet& templates);

/// GRPO on the toy policy. Each step collects one group per instance in the
/// batch, ascends the clipped objective and refreshes the old-policy snapshot.
/// Dynamics lines are also written to `log` when non-null. Throws Error if the
/// objective turns non-finite.
TrainResult train(const RunConfig& config,
                  std::span<const QAInstance> train_set,
                  std::span<const QAInstance> dev_set,
                  std::ostream* log = nullptr);

/// Datasets named by the config, or synthetic toy splits when paths are empty.
std::vector<QAInstance> config_split(const RunConfig& config, Split split);

TemplateSet config_templates(const RunConfig& config);

}  // namespace evidex
