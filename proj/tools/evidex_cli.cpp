// evidex command line: toy training, rollouts, scoring, evaluation and plots.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "evidex/config.hpp"
#include "evidex/corpus.hpp"
#include "evidex/dynamics_plot.hpp"
#include "evidex/errors.hpp"
#include "evidex/evaluation.hpp"
#include "evidex/http_backend.hpp"
#include "evidex/random.hpp"
#include "evidex/rollout.hpp"
#include "evidex/toy_policy.hpp"
#include "evidex/trainer.hpp"

using namespace evidex;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string endpoint;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_path, "run configuration (JSON)");
    cmd->add_option("--seed", c.seed, "override the run seed");
    cmd->add_option("--endpoint", c.endpoint, "use the HTTP backend at this completion endpoint");
    cmd->add_option("--checkpoint", c.checkpoint, "toy policy checkpoint to load");
}

RunConfig resolve(const Common& c, bool toy_run) {
    RunConfig cfg = c.config_path.empty() ? (toy_run ? toy_run_config() : RunConfig{}) : load_run_config(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.endpoint.empty()) {
        cfg.backend.kind = "http";
        cfg.backend.http.endpoint = c.endpoint;
    }
    if (!c.checkpoint.empty()) cfg.backend.checkpoint = c.checkpoint;
    if (cfg.backend.kind == "http" && !cfg.backend.auth_env.empty()) {
        if (const char* token = std::getenv(cfg.backend.auth_env.c_str())) cfg.backend.http.auth_token = token;
    }
    cfg.validate();
    return cfg;
}

std::unique_ptr<GenerationBackend> make_backend(const RunConfig& cfg) {
    if (cfg.backend.kind == "http") {
        return std::make_unique<HttpBackend>(cfg.backend.http);
    }
    if (!cfg.backend.checkpoint.empty()) {
        return std::make_unique<ToyPolicy>(ToyPolicy::load(cfg.backend.checkpoint, cfg.toy.task));
    }
    return std::make_unique<ToyPolicy>(cfg.toy.task, cfg.toy.max_slot);
}

std::vector<QAInstance> dataset_or_split(const RunConfig& cfg, const std::string& path, const std::string& split) {
    const Split s = parse_split(split);
    return path.empty() ? config_split(cfg, s) : load_dataset(path, s);
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw Error("cannot write " + path);
    return file;
}

json breakdown_json(const RewardBreakdown& b) {
    return {{"ans_r", b.ans_r}, {"ans_e", b.ans_e}, {"ans_f", b.ans_f}, {"len_r", b.len_r},
            {"len_e", b.len_e}, {"fmt", b.fmt},     {"final", b.final}, {"valid", b.valid}};
}

std::vector<Passage> read_noise_pool(const std::string& path, const RunConfig& cfg) {
    if (path.empty()) {
        return make_toy_noise_pool(cfg.toy.task, 200, mix_seed(cfg.seed, 9001));
    }
    std::vector<Passage> pool;
    for (auto& inst : load_dataset(path, Split::train)) {
        for (auto& p : inst.passages) pool.push_back(std::move(p));
    }
    return pool;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rational evidence extraction: GRPO training and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    // train-toy
    Common train_c;
    std::string train_log, train_svg;
    std::optional<int> train_steps;
    auto* train_cmd = app.add_subcommand("train-toy", "GRPO on the toy policy and synthetic task");
    add_common(train_cmd, train_c);
    train_cmd->add_option("--log", train_log, "dynamics log (JSONL)");
    train_cmd->add_option("--steps", train_steps, "override the number of steps");
    train_cmd->add_option("--save", train_c.checkpoint, "write the best-on-dev checkpoint here");
    train_cmd->add_option("--plot", train_svg, "also render the dynamics as SVG");

    // rollout
    Common roll_c;
    std::string roll_data, roll_split = "train", roll_out;
    int roll_count = 4;
    std::optional<int> roll_group;
    auto* roll_cmd = app.add_subcommand("rollout", "dump rollout groups with rewards and advantages");
    add_common(roll_cmd, roll_c);
    roll_cmd->add_option("--data", roll_data, "dataset JSONL (default: synthetic split)");
    roll_cmd->add_option("--split", roll_split)->capture_default_str();
    roll_cmd->add_option("-n,--count", roll_count, "instances to roll out")->capture_default_str();
    roll_cmd->add_option("-G,--group-size", roll_group);
    roll_cmd->add_option("-o,--out", roll_out, "output JSONL (default stdout)");

    // score
    Common score_c;
    std::string score_data, score_split = "test", score_responses, score_out;
    auto* score_cmd = app.add_subcommand("score", "reward breakdowns for a response file");
    add_common(score_cmd, score_c);
    score_cmd->add_option("--data", score_data, "dataset JSONL (default: synthetic split)");
    score_cmd->add_option("--split", score_split)->capture_default_str();
    score_cmd->add_option("responses", score_responses, "JSONL lines {id, response[, o_r, o_e]}")->required();
    score_cmd->add_option("-o,--out", score_out);

    // eval
    Common eval_c;
    std::string eval_data, eval_split = "test", eval_out;
    bool eval_instances = false;
    auto* eval_cmd = app.add_subcommand("eval", "EM/F1/AR/CR of an extractor + generator");
    add_common(eval_cmd, eval_c);
    eval_cmd->add_option("--data", eval_data, "dataset JSONL (default: synthetic split)");
    eval_cmd->add_option("--split", eval_split)->capture_default_str();
    eval_cmd->add_flag("--instances", eval_instances, "include per-instance rows");
    eval_cmd->add_option("-o,--out", eval_out);

    // noise-eval
    Common noise_c;
    std::string noise_data, noise_split = "test", noise_pool, noise_out;
    std::vector<int> noise_levels = kDefaultNoiseLevels;
    auto* noise_cmd = app.add_subcommand("noise-eval", "evaluation with injected noise passages");
    add_common(noise_cmd, noise_c);
    noise_cmd->add_option("--data", noise_data, "dataset JSONL (default: synthetic split)");
    noise_cmd->add_option("--split", noise_split)->capture_default_str();
    noise_cmd->add_option("--pool", noise_pool, "JSONL dataset whose passages form the noise pool");
    noise_cmd->add_option("--levels", noise_levels, "noise passages per instance")->capture_default_str();
    noise_cmd->add_option("-o,--out", noise_out);

    // latency
    Common lat_c;
    std::string lat_data, lat_split = "test";
    int lat_batch = 64, lat_tokens = 768, lat_sample = 256;
    auto* lat_cmd = app.add_subcommand("latency", "seconds per query of batched extraction");
    add_common(lat_cmd, lat_c);
    lat_cmd->add_option("--data", lat_data, "dataset JSONL (default: synthetic split)");
    lat_cmd->add_option("--split", lat_split)->capture_default_str();
    lat_cmd->add_option("--batch-size", lat_batch)->capture_default_str();
    lat_cmd->add_option("--max-new-tokens", lat_tokens)->capture_default_str();
    lat_cmd->add_option("--sample", lat_sample, "instances timed")->capture_default_str();

    // plot-dynamics
    std::string plot_log, plot_out;
    int plot_window = 10;
    auto* plot_cmd = app.add_subcommand("plot-dynamics", "answer-reward and length curves from a dynamics log");
    plot_cmd->add_option("log", plot_log)->required();
    plot_cmd->add_option("-o,--out", plot_out, "SVG path (default stdout)");
    plot_cmd->add_option("-w,--window", plot_window, "moving-average window")->capture_default_str();

    // toy-data
    Common data_c;
    std::string data_split = "train", data_out;
    int data_count = 200;
    auto* data_cmd = app.add_subcommand("toy-data", "write a synthetic toy dataset as JSONL");
    add_common(data_cmd, data_c);
    data_cmd->add_option("--split", data_split)->capture_default_str();
    data_cmd->add_option("-n,--count", data_count)->capture_default_str();
    data_cmd->add_option("-o,--out", data_out)->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*train_cmd) {
            std::string save = train_c.checkpoint;
            train_c.checkpoint.clear();
            auto cfg = resolve(train_c, true);
            if (train_steps) cfg.steps = *train_steps;
            if (!train_log.empty()) cfg.log_path = train_log;
            if (!save.empty()) cfg.checkpoint_path = save;
            if (cfg.backend.kind != "toy") throw ConfigError("train-toy needs the toy backend");
            const auto train_set = config_split(cfg, Split::train);
            const auto dev_set = config_split(cfg, Split::dev);
            std::ofstream log_file;
            if (!cfg.log_path.empty()) {
                log_file.open(cfg.log_path);
                if (!log_file) throw Error("cannot write " + cfg.log_path);
            }
            const auto result = train(cfg, train_set, dev_set, cfg.log_path.empty() ? nullptr : &log_file);
            const auto& last = result.dynamics.back();
            std::cout << json{{"steps", result.dynamics.size()},
                              {"initial_mean_final", result.dynamics.front().mean_final},
                              {"final_mean_final", last.mean_final},
                              {"final_format_rate", last.format_rate},
                              {"best_dev_reward", result.best_dev_reward},
                              {"best_step", result.best_step}}
                             .dump(2)
                      << '\n';
            if (!train_svg.empty()) {
                std::ofstream(train_svg) << render_dynamics_svg(result.dynamics);
            }
        } else if (*roll_cmd) {
            auto cfg = resolve(roll_c, false);
            if (roll_group) cfg.grpo.group_size = *roll_group;
            auto backend = make_backend(cfg);
            const auto data = dataset_or_split(cfg, roll_data, roll_split);
            const auto templates = config_templates(cfg);
            std::ofstream file;
            auto& out = open_out(roll_out, file);
            for (int i = 0; i < roll_count && i < static_cast<int>(data.size()); ++i) {
                const auto settings = RolloutSettings::from(cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
                const auto collected = collect_rollout_group(data[i], *backend, nullptr, settings, cfg.reward, templates);
                json members = json::array();
                const auto& g = collected.group;
                for (std::size_t k = 0; k < g.members.size(); ++k) {
                    const auto& m = g.members[k];
                    members.push_back({{"response", m.completion},
                                       {"o_r", m.o_r},
                                       {"o_e", m.o_e},
                                       {"reward", breakdown_json(m.reward)},
                                       {"advantage", (*g.advantages)[k]}});
                }
                out << json{{"id", g.instance_id}, {"degenerate", collected.degenerate}, {"members", members}}.dump()
                    << '\n';
            }
        } else if (*score_cmd) {
            auto cfg = resolve(score_c, false);
            auto backend = make_backend(cfg);
            const auto data = dataset_or_split(cfg, score_data, score_split);
            const auto templates = config_templates(cfg);
            std::map<std::string, const QAInstance*> by_id;
            for (const auto& inst : data) by_id[inst.id] = &inst;
            std::ifstream in(score_responses);
            if (!in) throw Error("cannot open " + score_responses);
            std::ofstream file;
            auto& out = open_out(score_out, file);
            auto settings = RolloutSettings::from(cfg, cfg.seed);
            std::string line;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::exception& e) {
                    throw DatasetError(e.what(), line_no);
                }
                const auto id = j.at("id").get<std::string>();
                const auto it = by_id.find(id);
                if (it == by_id.end()) throw DatasetError("unknown instance id '" + id + "'", line_no);
                const auto& inst = *it->second;
                const auto parsed = parse_response(j.at("response").get<std::string>());
                const auto o_r = j.contains("o_r") ? j["o_r"].get<std::string>()
                                                   : regenerate_answer(ContextMode::rationale_only, inst, parsed,
                                                                       *backend, settings, templates);
                const auto o_e = j.contains("o_e") ? j["o_e"].get<std::string>()
                                                   : regenerate_answer(ContextMode::evidence_only, inst, parsed,
                                                                       *backend, settings, templates);
                auto row = breakdown_json(score_response(inst, parsed, o_r, o_e, cfg.reward));
                row["id"] = id;
                row["o_r"] = o_r;
                row["o_e"] = o_e;
                out << row.dump() << '\n';
            }
        } else if (*eval_cmd) {
            auto cfg = resolve(eval_c, false);
            auto backend = make_backend(cfg);
            const auto data = dataset_or_split(cfg, eval_data, eval_split);
            MetricsReport report;
            report.datasets.push_back(
                evaluate(data, *backend, *backend, cfg.decoding, config_templates(cfg), eval_data.empty() ? "toy-" + eval_split : eval_data));
            std::ofstream file;
            open_out(eval_out, file) << report.to_json(eval_instances) << '\n';
        } else if (*noise_cmd) {
            auto cfg = resolve(noise_c, false);
            auto backend = make_backend(cfg);
            const auto data = dataset_or_split(cfg, noise_data, noise_split);
            const auto pool = read_noise_pool(noise_pool, cfg);
            MetricsReport report;
            report.noise_sweep =
                noise_sweep(data, *backend, *backend, pool, noise_levels, cfg.seed, cfg.decoding, config_templates(cfg));
            std::ofstream file;
            open_out(noise_out, file) << report.to_json() << '\n';
        } else if (*lat_cmd) {
            auto cfg = resolve(lat_c, false);
            auto backend = make_backend(cfg);
            auto data = dataset_or_split(cfg, lat_data, lat_split);
            if (static_cast<int>(data.size()) > lat_sample) data.resize(static_cast<std::size_t>(lat_sample));
            MetricsReport report;
            report.latency = latency_bench(data, *backend, lat_batch, lat_tokens, config_templates(cfg));
            std::cout << report.to_json() << '\n';
        } else if (*plot_cmd) {
            const auto records = read_dynamics_log(plot_log);
            std::ofstream file;
            open_out(plot_out, file) << render_dynamics_svg(records, plot_window);
        } else if (*data_cmd) {
            auto cfg = resolve(data_c, false);
            const Split split = parse_split(data_split);
            const auto data = make_toy_dataset(cfg.toy.task, data_count, split,
                                               mix_seed(cfg.seed, 7000 + static_cast<int>(split)));
            write_dataset(data_out, data);
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
