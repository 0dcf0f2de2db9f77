#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evidex/grpo_core.hpp"
#include "evidex/http_backend.hpp"
#include "evidex/reward_engine.hpp"
#include "evidex/toy_task.hpp"

namespace evidex {

inline constexpr double kToyLearningRate = 100.0;
inline constexpr double kToyMaxGradNorm = 0.05;
inline constexpr double kLlmLearningRate = 1e-6;

struct DecodingConfig {
    double rollout_temperature = 1.0;
    int rollout_max_new_tokens = 32;
    /// Masked regenerations of o_r / o_e and evaluation answers.
    double answer_temperature = 0.0;
    int answer_max_new_tokens = 8;
    std::vector<std::string> answer_stop = {"</answer>"};
    /// Deployment-time extraction (stops at "</extract>").
    double extraction_temperature = 0.0;
    int extraction_max_new_tokens = 768;
};

struct BackendDescriptor {
    std::string kind = "toy";  // "toy" or "http"
    std::string checkpoint;    // toy: optional parameter dump
    HttpBackendConfig http;
    /// Environment variable holding the bearer token for the http backend.
    std::string auth_env = "EVIDEX_API_TOKEN";
};

struct ToySettings {
    ToyTaskSpec task;
    int train_instances = 200;
    int dev_instances = 50;
    int test_instances = 200;
    int max_slot = 8;
};

struct RunConfig {
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string template_dir;

    RewardConfig reward;
    GrpoConfig grpo;
    BackendDescriptor backend;
    DecodingConfig decoding;
    ToySettings toy;

    std::uint64_t seed = 0;
    int epochs = 1;
    /// Optimizer steps; 0 means epochs * ceil(train size / batch_size).
    int steps = 0;
    int batch_size = 1;
    double learning_rate = kToyLearningRate;
    /// Global L2 bound on each step's gradient; 0 disables clipping.
    double max_grad_norm = kToyMaxGradNorm;
    int eval_every = 50;

    std::string log_path;
    std::string checkpoint_path;

    void validate() const;
    /// Stable hash of the serialized configuration.
    std::uint64_t hash() const;
};

/// The configuration used for the desk-scale toy training run.
RunConfig toy_run_config();

std::string to_json_string(const RunConfig& config);
RunConfig run_config_from_json_string(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace evidex
