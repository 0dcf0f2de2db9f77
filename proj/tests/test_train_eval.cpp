#include <cmath>
#include <functional>
#include <sstream>

#include "doctest.h"

#include "evidex/dynamics_plot.hpp"
#include "evidex/errors.hpp"
#include "evidex/evaluation.hpp"
#include "evidex/rollout.hpp"
#include "evidex/text_metrics.hpp"
#include "evidex/trainer.hpp"

using namespace evidex;

namespace {

// Backend whose reply is a function of the prompt.
class FakeBackend : public GenerationBackend {
public:
    explicit FakeBackend(std::function<std::string(const std::string&)> reply) : reply_(std::move(reply)) {}

    std::vector<GenerationResult> generate(const GenerationRequest& request) override {
        ++calls;
        std::vector<GenerationResult> out(static_cast<std::size_t>(request.num_samples));
        for (auto& r : out) {
            r.text = reply_(request.prompt);
            r.finish_reason = FinishReason::stop;
        }
        return out;
    }
    std::vector<double> score(std::string_view, std::string_view) override { throw BackendError("no scoring"); }

    int calls = 0;

private:
    std::function<std::string(const std::string&)> reply_;
};

RunConfig small_config(int steps = 12) {
    auto cfg = toy_run_config();
    cfg.steps = steps;
    cfg.grpo.group_size = 16;
    cfg.eval_every = 6;
    cfg.toy.train_instances = 20;
    cfg.toy.dev_instances = 5;
    return cfg;
}

// Toy questions repeat across instances; tag each with its id so fake
// backends can tell prompts apart.
std::vector<QAInstance> toy_data(int n, std::uint64_t seed = 3) {
    auto data = make_toy_dataset(ToyTaskSpec{}, n, Split::test, seed);
    for (auto& inst : data) inst.question += " [" + inst.id + "]";
    return data;
}

// Answers with the gold of whichever instance's question is in the prompt.
std::function<std::string(const std::string&)> oracle_answers(const std::vector<QAInstance>& data) {
    return [&data](const std::string& prompt) {
        for (const auto& inst : data) {
            if (prompt.find(inst.question) != std::string::npos) return inst.gold_answers.front() + " </answer>";
        }
        return std::string("unknown");
    };
}

}  // namespace

TEST_SUITE("train_eval") {

TEST_CASE("rollout groups have size G and zero-sum advantages") {
    ToyPolicy policy(ToyTaskSpec{});
    SnapshotView ref(policy, Snapshot::reference);
    const auto inst = toy_data(1).front();
    RolloutSettings settings;
    settings.group_size = 8;
    settings.seed = 5;
    const auto collected = collect_rollout_group(inst, policy, &ref, settings, RewardConfig{}, TemplateSet{});
    const auto& g = collected.group;
    REQUIRE(g.size() == 8);
    REQUIRE(g.advantages);
    double sum = 0.0;
    for (double a : *g.advantages) sum += a;
    CHECK(std::abs(sum) < 1e-9);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& m = g.members[i];
        CHECK(m.logp_current.size() == m.token_ids.size());
        CHECK(m.logp_old == m.logp_current);
        CHECK(m.logp_ref == m.logp_current);
        CHECK(g.rewards[i] == m.reward.final);
    }
}

TEST_CASE("truncated responses still form a full group") {
    ToyPolicy policy(ToyTaskSpec{});
    const auto inst = toy_data(1).front();
    RolloutSettings settings;
    settings.group_size = 8;
    settings.max_new_tokens = 3;  // too short to reach </answer>
    const auto collected = collect_rollout_group(inst, policy, nullptr, settings, RewardConfig{}, TemplateSet{});
    REQUIRE(collected.group.size() == 8);
    for (const auto& m : collected.group.members) {
        CHECK_FALSE(m.parsed.well_formed);
        CHECK(m.reward.fmt == 0.0);
        CHECK(std::isfinite(m.reward.final));
    }
}

TEST_CASE("masked regenerations see only their own context") {
    std::vector<std::string> prompts;
    FakeBackend backend([&](const std::string& p) {
        prompts.push_back(p);
        return std::string("v1 </answer>");
    });
    const auto inst = toy_data(1).front();
    const auto parsed = parse_response(render_response("RATIONALE-MARK", "EVIDENCE-MARK", "v1"));
    RolloutSettings settings;
    CHECK(regenerate_answer(ContextMode::evidence_only, inst, parsed, backend, settings, TemplateSet{}) == "v1");
    CHECK(prompts.back().find("EVIDENCE-MARK") != std::string::npos);
    CHECK(prompts.back().find("RATIONALE-MARK") == std::string::npos);
    CHECK(regenerate_answer(ContextMode::rationale_only, inst, parsed, backend, settings, TemplateSet{}) == "v1");
    CHECK(prompts.back().find("EVIDENCE-MARK") == std::string::npos);
    CHECK(prompts.back().find("RATIONALE-MARK") != std::string::npos);

    const auto broken = parse_response("<reason>r</reason>");
    const int before = backend.calls;
    CHECK(regenerate_answer(ContextMode::evidence_only, inst, broken, backend, settings, TemplateSet{}).empty());
    CHECK(backend.calls == before);
}

TEST_CASE("zero learning rate keeps the policy and the reference identical") {
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    const auto train_set = config_split(cfg, Split::train);
    const auto dev_set = config_split(cfg, Split::dev);
    const auto result = train(cfg, train_set, dev_set);
    CHECK(result.final_policy.parameters() == ToyParameters(result.final_policy.num_parameters(), 0.0));
    REQUIRE(result.dynamics.size() == 12);
    for (const auto& r : result.dynamics) {
        CHECK(r.mean_kl == 0.0);
        CHECK(r.clip_fraction == 0.0);
        CHECK(std::abs(r.objective) < 1e-12);
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto cfg = small_config();
    const auto train_set = config_split(cfg, Split::train);
    const auto dev_set = config_split(cfg, Split::dev);
    std::ostringstream a, b;
    const auto ra = train(cfg, train_set, dev_set, &a);
    const auto rb = train(cfg, train_set, dev_set, &b);
    CHECK(a.str() == b.str());
    CHECK(!a.str().empty());
    CHECK(ra.final_policy.parameters() == rb.final_policy.parameters());

    auto other = cfg;
    other.seed = 99;
    std::ostringstream c;
    train(other, train_set, dev_set, &c);
    CHECK(c.str() != a.str());
}

TEST_CASE("clip_gradient") {
    ToyParameters g{3.0, 4.0};
    CHECK(clip_gradient(g, 10.0) == 5.0);
    CHECK(g == ToyParameters{3.0, 4.0});
    CHECK(clip_gradient(g, 1.0) == 5.0);
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
    ToyParameters h{3.0, 4.0};
    clip_gradient(h, 0.0);
    CHECK(h == ToyParameters{3.0, 4.0});
}

TEST_CASE("evaluation leaves the policy untouched") {
    ToyPolicy policy(ToyTaskSpec{});
    ToyParameters params(policy.num_parameters());
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = std::sin(static_cast<double>(i));
    policy.set_parameters(params);
    policy.sync_old();
    const auto data = toy_data(10);
    DecodingConfig decoding;
    decoding.extraction_max_new_tokens = 24;
    const auto m = evaluate(data, policy, policy, decoding, TemplateSet{});
    CHECK(m.count + m.failures == 10);
    CHECK(policy.parameters() == params);
    CHECK(policy.parameters(Snapshot::old) == params);
}

TEST_CASE("copying every passage gives compression ratio 1") {
    const auto data = toy_data(6);
    FakeBackend extractor([&](const std::string& prompt) {
        for (const auto& inst : data) {
            if (prompt.find(inst.question) == std::string::npos) continue;
            std::string all;
            for (const auto& p : inst.passages) all += p.title + " " + p.body + " ";
            return "<reason> copy </reason> <extract> " + all + "</extract>";
        }
        return std::string();
    });
    FakeBackend generator(oracle_answers(data));
    const auto m = evaluate(data, extractor, generator, DecodingConfig{}, TemplateSet{}, "identity");
    CHECK(m.count == 6);
    CHECK(m.cr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.cr_count == 6);
    CHECK(m.em == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.ar == 1.0);
    CHECK(m.name == "identity");
}

TEST_CASE("empty evidence leaves compression undefined but keeps the instance") {
    const auto data = toy_data(4);
    FakeBackend extractor([](const std::string&) { return std::string("<reason> none </reason> <extract> </extract>"); });
    FakeBackend generator([](const std::string&) { return std::string("v0"); });
    const auto m = evaluate(data, extractor, generator, DecodingConfig{}, TemplateSet{});
    CHECK(m.count == 4);
    CHECK(m.cr_undefined == 4);
    CHECK(m.cr_count == 0);
    CHECK(m.ar == 0.0);
    for (const auto& e : m.instances) CHECK_FALSE(e.cr.has_value());
}

TEST_CASE("backend failures are counted and skipped") {
    const auto data = toy_data(3);
    FakeBackend extractor([&](const std::string& prompt) -> std::string {
        if (prompt.find(data[1].question) != std::string::npos) throw BackendError("boom");
        return "<extract> x </extract>";
    });
    FakeBackend generator([](const std::string&) { return std::string("v0"); });
    const auto m = evaluate(data, extractor, generator, DecodingConfig{}, TemplateSet{});
    CHECK(m.count == 2);
    CHECK(m.failures == 1);
}

TEST_CASE("noise sweep") {
    const auto data = toy_data(8);
    const auto pool = make_toy_noise_pool(ToyTaskSpec{}, 40, 17);
    std::vector<std::string> seen;
    FakeBackend extractor([&](const std::string& prompt) {
        seen.push_back(prompt);
        return std::string("<extract> k1 v1 </extract>");
    });
    FakeBackend generator(oracle_answers(data));
    const auto table = noise_sweep(data, extractor, generator, pool, kDefaultNoiseLevels, 3, DecodingConfig{}, TemplateSet{});
    REQUIRE(table.size() == 5);
    const auto plain = evaluate(data, extractor, generator, DecodingConfig{}, TemplateSet{});
    CHECK(table.at(0).em == plain.em);
    CHECK(table.at(0).cr == plain.cr);
    CHECK(table.at(0).name == "noise-0");
    // More passages, same one-span evidence: compression grows with the level.
    for (int level : {2, 4, 6, 8}) CHECK(table.at(level).cr > table.at(level - 2).cr);

    const auto again = noise_sweep(data, extractor, generator, pool, kDefaultNoiseLevels, 3, DecodingConfig{}, TemplateSet{});
    for (const auto& [level, m] : table) {
        CHECK(again.at(level).cr == m.cr);
        CHECK(again.at(level).em == m.em);
    }
    const auto sweeps = seen.size();
    CHECK(sweeps == 8 * 5 * 2 + 8);
}

TEST_CASE("deterministic backend gives stable output lengths") {
    ToyPolicy policy(ToyTaskSpec{});
    const auto data = toy_data(1);
    std::vector<QAInstance> repeated(12, data.front());
    const auto stats = latency_bench(repeated, policy, 4, 16, TemplateSet{});
    CHECK(stats.queries == 12);
    CHECK(stats.output_words_std == 0.0);
    CHECK(stats.mean_seconds >= 0.0);
    CHECK_THROWS(latency_bench(repeated, policy, 0, 16, TemplateSet{}));
}

TEST_CASE("metrics report serializes") {
    MetricsReport report;
    DatasetMetrics d;
    d.name = "toy";
    d.count = 2;
    d.em = 0.5;
    d.instances.push_back({"a", "ev", "ans", 1, 1.0, 1, 3.0});
    report.datasets.push_back(d);
    report.latency = LatencyStats{10, 0.01, 0.001, 0.0, 4.0};
    const auto slim = report.to_json(false);
    const auto full = report.to_json(true);
    CHECK(slim.find("\"toy\"") != std::string::npos);
    CHECK(slim.find("\"ev\"") == std::string::npos);
    CHECK(full.find("\"ev\"") != std::string::npos);
}

TEST_CASE("run config round-trips through JSON") {
    auto cfg = toy_run_config();
    cfg.seed = 1234;
    cfg.reward.tau = 0.2;
    cfg.grpo.kl_beta = 0.03;
    cfg.backend.kind = "http";
    cfg.backend.http.endpoint = "http://127.0.0.1:8000/v1/completions";
    cfg.decoding.answer_stop = {"</answer>", "\n"};
    const auto back = run_config_from_json_string(to_json_string(cfg));
    CHECK(to_json_string(back) == to_json_string(cfg));
    CHECK(back.hash() == cfg.hash());
    auto changed = cfg;
    changed.seed = 1235;
    CHECK(changed.hash() != cfg.hash());

    auto bad = cfg;
    bad.grpo.group_size = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.max_grad_norm = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS(run_config_from_json_string("{not json"));
}

TEST_CASE("dynamics records round-trip") {
    DynamicsRecord r;
    r.step = 7;
    r.mean_final = 0.123456789012345;
    r.mean_ans_e = 0.5;
    r.grad_norm = 3.25;
    r.degenerate_groups = 2;
    const auto back = dynamics_from_json_line(to_json_line(r));
    CHECK(back.step == 7);
    CHECK(back.mean_final == r.mean_final);
    CHECK(back.grad_norm == 3.25);
    CHECK(back.degenerate_groups == 2);
    CHECK(to_json_line(back) == to_json_line(r));
}

TEST_CASE("moving average and plot") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(moving_average(v, 1) == v);
    const auto m = moving_average(v, 2);
    CHECK(m == std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5});
    CHECK(moving_average(std::vector<double>{}, 3).empty());

    std::vector<DynamicsRecord> recs(30);
    for (int i = 0; i < 30; ++i) {
        recs[i].step = i;
        recs[i].mean_ans_r = i / 30.0;
        recs[i].mean_len_e = 10.0 - i / 5.0;
    }
    const auto svg = render_dynamics_svg(recs, 5);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

}  // TEST_SUITE
