// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "oracles.hpp"

#include "evidex/context_masking.hpp"
#include "evidex/errors.hpp"
#include "evidex/grpo_core.hpp"
#include "evidex/response_schema.hpp"
#include "evidex/reward_engine.hpp"
#include "evidex/text_metrics.hpp"
#include "evidex/toy_policy.hpp"
#include "evidex/trainer.hpp"

using namespace evidex;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1 ---------------------------------------------------------------------

Outcome reward_closed_forms() {
    const auto t0 = Clock::now();
    bool ok = true;
    const double s2 = rationale_length_reward(200, 100, 0.5);
    const double e1 = std::abs(static_cast<long double>(s2) - oracle::kSigmoid2);
    const double sq = evidence_length_reward(250, 500, 0.5, 0.9);
    const double e2 = std::abs(static_cast<long double>(sq) - oracle::kSqrtHalf);
    ok = ok && e1 <= 1e-9 && e2 <= 1e-9;

    std::mt19937_64 rng(1);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t L = 1 + rng() % 100000;
        worst = std::max(worst, std::abs(rationale_length_reward(L, L, 0.5) - 0.5));
    }
    ok = ok && worst < 1e-12;
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 1.0;
    return {ok, fmt::format("|sigmoid(2) err| {:.2e}, |sqrt(0.5) err| {:.2e}, continuity max {:.2e}, {:.4f} s", e1, e2,
                            worst, elapsed)};
}

// 2 ---------------------------------------------------------------------

Outcome advantage_example() {
    const auto t0 = Clock::now();
    const std::vector<double> r{0.49, 0.51};
    const auto raw = group_advantages(r, 0.0);
    const auto clipped = group_advantages(r, 0.1);
    const auto flat = group_advantages(std::vector<double>{0.5, 0.5, 0.5, 0.5}, 0.1);
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
    bool ok = near(raw[0], -1.0) && near(raw[1], 1.0) && near(clipped[0], -0.1) && near(clipped[1], 0.1);
    for (double a : flat) ok = ok && a == 0.0;
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 1.0;
    return {ok, fmt::format("eps 0 -> {{{:+.12f}, {:+.12f}}}, eps 0.1 -> {{{:+.12f}, {:+.12f}}}, flat group zero, {:.4f} s",
                            raw[0], raw[1], clipped[0], clipped[1], elapsed)};
}

// 3 ---------------------------------------------------------------------

Outcome format_table() {
    const std::string R = "<reason>r</reason>", E = "<extract>e</extract>", A = "<answer>a</answer>";
    const std::vector<std::pair<std::string, bool>> cases = {
        {R + E + A, true},
        {R + "\n" + E + "\n\n" + A + "\n", true},
        {"Sure. " + R + E + A, true},
        {R + E + A + " done", true},
        {R + " then " + E + " so " + A, true},
        {"<reason></reason><extract></extract><answer></answer>", true},
        {"<reason>line one\nline two</reason>" + E + A, true},
        {R + E, false},
        {R + A, false},
        {E + A, false},
        {R + E + "<answer>a", false},
        {R + E + "a</answer>", false},
        {"", false},
        {"just an answer", false},
        {R + R + E + A, false},
        {R + E + E + A, false},
        {R + E + A + A, false},
        {R + E + A + "</answer>", false},
        {R + E + A + "<reason>", false},
        {E + R + A, false},
        {R + A + E, false},
        {A + R + E, false},
        {A + E + R, false},
        {E + A + R, false},
        {"<reason>r" + E + "</reason>" + A, false},
        {R + "<extract>e" + A + "</extract>", false},
        {"<reason>r<extract>e</reason></extract>" + A, false},
        {"<reason><reason>r</reason></reason>" + E + A, false},
        {"<REASON>r</REASON>" + E + A, false},
        {"<reason >r</reason>" + E + A, false},
    };
    int matched = 0;
    std::string misses;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (check_format(cases[i].first) == cases[i].second) {
            ++matched;
        } else {
            misses += fmt::format(" #{}", i + 1);
        }
    }
    const bool ok = matched == 30 && cases.size() == 30;
    return {ok, fmt::format("{}/{} cases match{}", matched, cases.size(), misses.empty() ? "" : ", missed:" + misses)};
}

// 4 ---------------------------------------------------------------------

Outcome masking_non_leakage() {
    const ToyTaskSpec spec;
    ToyPolicy policy(spec);
    const auto data = make_toy_dataset(spec, 125, Split::train, 404);
    const TemplateSet templates;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 1.0);

    int rollouts = 0, r_contexts = 0, e_contexts = 0, leaks = 0, length_violations = 0, compared = 0;
    for (const auto& inst : data) {
        // Fresh random logits per instance, tilted the way a partly trained
        // policy is (open outside segments, close inside them, few literal
        // tags) so most rollouts carry the segments the contexts need.
        ToyParameters params(policy.num_parameters());
        for (auto& v : params) v = noise(rng);
        const int vocab = policy.vocab().size();
        for (int row = 0; row < policy.num_rows(); ++row) {
            double* logits = params.data() + static_cast<std::size_t>(row) * vocab;
            const bool outside = row < policy.max_slot();
            const bool has_content = row % policy.max_slot() > 0;
            if (outside) logits[ToyVocab::kOpenPointer] += 4.0;
            if (!outside && has_content) logits[ToyVocab::kClosePointer] += 2.0;
            for (int t = 0; t < ToyVocab::kNumTags; ++t) logits[t] -= 2.0;
        }
        policy.set_parameters(params);

        GenerationRequest req;
        req.prompt = render_prompt(templates.rational_extraction, inst);
        req.num_samples = 8;
        req.temperature = 1.0;
        req.max_new_tokens = 32;
        req.stop_sequences = {"</answer>"};
        req.seed = rng();
        for (const auto& sample : policy.generate(req)) {
            ++rollouts;
            const auto parsed = parse_response(sample.text);
            std::optional<MaskedContext> full, e;
            if (parsed.rationale) {
                const auto ctx = build_context(ContextMode::rationale_only, inst, parsed, templates);
                ++r_contexts;
                if (!assert_no_leakage(ctx)) ++leaks;
            }
            if (parsed.evidence) {
                e = build_context(ContextMode::evidence_only, inst, parsed, templates);
                ++e_contexts;
                if (!assert_no_leakage(*e)) ++leaks;
            }
            if (parsed.rationale && parsed.evidence) {
                full = build_context(ContextMode::full, inst, parsed, templates);
                ++compared;
                if (!(word_count(e->prompt) < word_count(full->prompt))) ++length_violations;
            }
        }
    }
    // A run where almost nothing had segments would prove nothing.
    const bool enough = r_contexts >= 500 && e_contexts >= 500 && compared >= 500;
    const bool ok = rollouts == 1000 && leaks == 0 && length_violations == 0 && enough;
    return {ok, fmt::format("{} rollouts, {} o_r and {} o_e contexts, {} leaks, {} o_e/o_f length violations of {}",
                            rollouts, r_contexts, e_contexts, leaks, length_violations, compared)};
}

// 5 ---------------------------------------------------------------------

struct ToyGroup {
    std::string prompt;
    std::vector<std::string> completions;
    std::vector<std::vector<double>> logp_old, logp_ref;
    std::vector<double> advantages;
};

double objective_at(const ToyPolicy& policy, const ToyGroup& tg, const GrpoConfig& cfg, ObjectiveResult* full = nullptr) {
    RolloutGroup g;
    for (std::size_t i = 0; i < tg.completions.size(); ++i) {
        GroupMember m;
        m.completion = tg.completions[i];
        m.logp_current = policy.score_under(Snapshot::live, tg.prompt, tg.completions[i]);
        m.logp_old = tg.logp_old[i];
        m.logp_ref = tg.logp_ref[i];
        g.members.push_back(std::move(m));
    }
    g.advantages = tg.advantages;
    auto res = grpo_objective(g, cfg);
    if (full) *full = res;
    return res.objective;
}

Outcome gradient_check() {
    const ToyTaskSpec spec;
    const auto data = make_toy_dataset(spec, 20, Split::train, 505);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrpoConfig cfg;
    cfg.kl_beta = 0.05;  // large enough that the KL term matters in the check
    const double h = 1e-5;
    double worst = 0.0;

    for (const auto& inst : data) {
        ToyPolicy policy(spec);
        ToyParameters live(policy.num_parameters()), old(policy.num_parameters()), ref(policy.num_parameters());
        for (std::size_t i = 0; i < live.size(); ++i) {
            old[i] = noise(rng);
            live[i] = old[i] + 0.3 * noise(rng);
            ref[i] = old[i] + 0.3 * noise(rng);
        }
        policy.set_parameters(live, Snapshot::live);
        policy.set_parameters(old, Snapshot::old);
        policy.set_parameters(ref, Snapshot::reference);

        ToyGroup tg;
        tg.prompt = render_prompt(TemplateSet{}.rational_extraction, inst);
        GenerationRequest req;
        req.prompt = tg.prompt;
        req.num_samples = 4;
        req.temperature = 1.0;
        req.max_new_tokens = 12;
        req.stop_sequences = {"</answer>"};
        req.seed = rng();
        std::vector<double> rewards;
        for (const auto& s : policy.generate_from(Snapshot::old, req)) {
            tg.completions.push_back(s.text);
            tg.logp_old.push_back(s.token_logprobs);
            tg.logp_ref.push_back(policy.score_under(Snapshot::reference, tg.prompt, s.text));
            rewards.push_back(u(rng));
        }
        tg.advantages = group_advantages(rewards, 0.1);

        ObjectiveResult res;
        objective_at(policy, tg, cfg, &res);
        ToyParameters analytic;
        for (std::size_t i = 0; i < tg.completions.size(); ++i) {
            policy.accumulate_gradient(tg.prompt, tg.completions[i], res.grad_logp[i], analytic);
        }

        ToyParameters numeric(live.size(), 0.0);
        for (std::size_t k = 0; k < live.size(); ++k) {
            if (analytic[k] == 0.0) {
                // Rows the group never visits; check a sample of them anyway.
                if (rng() % 20 != 0) continue;
            }
            auto plus = live, minus = live;
            plus[k] += h;
            minus[k] -= h;
            policy.set_parameters(plus);
            const double jp = objective_at(policy, tg, cfg);
            policy.set_parameters(minus);
            const double jm = objective_at(policy, tg, cfg);
            numeric[k] = (jp - jm) / (2 * h);
        }
        policy.set_parameters(live);

        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t k = 0; k < live.size(); ++k) {
            diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
            na += analytic[k] * analytic[k];
            nn += numeric[k] * numeric[k];
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
        worst = std::max(worst, rel);
    }
    return {worst <= 1e-4, fmt::format("20 groups, h = 1e-5, max relative error {:.3e} (bound 1e-4)", worst)};
}

// 6, 7, 9 ---------------------------------------------------------------

struct Run {
    TrainResult result;
    std::string log;
    double seconds = 0.0;
};

Run run_training(const RunConfig& cfg) {
    const auto train_set = config_split(cfg, Split::train);
    const auto dev_set = config_split(cfg, Split::dev);
    std::ostringstream log;
    const auto t0 = Clock::now();
    auto result = train(cfg, train_set, dev_set, &log);
    return {std::move(result), log.str(), seconds_since(t0)};
}

double window_mean(const std::vector<DynamicsRecord>& recs, bool first, std::size_t w, double DynamicsRecord::*field) {
    const std::size_t n = std::min(w, recs.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += recs[first ? i : recs.size() - n + i].*field;
    return n ? s / static_cast<double>(n) : 0.0;
}

Outcome end_to_end(const Run& run, const RunConfig& cfg) {
    const auto& d = run.result.dynamics;
    constexpr std::size_t w = 10;
    if (d.empty()) return {false, "no dynamics recorded"};
    const double final0 = window_mean(d, true, w, &DynamicsRecord::mean_final);
    const double final1 = window_mean(d, false, w, &DynamicsRecord::mean_final);
    const double fmt1 = window_mean(d, false, w, &DynamicsRecord::format_rate);
    bool improving = true;
    std::string series;
    for (auto [name, field] : {std::pair{"o_r", &DynamicsRecord::mean_ans_r}, std::pair{"o_e", &DynamicsRecord::mean_ans_e},
                               std::pair{"o_f", &DynamicsRecord::mean_ans_f}}) {
        const double a = window_mean(d, true, w, field), b = window_mean(d, false, w, field);
        improving = improving && b > a;
        series += fmt::format(", ans {} {:.3f}->{:.3f}", name, a, b);
    }
    const bool ok = static_cast<int>(d.size()) == cfg.steps && final1 >= 0.8 && final1 > final0 && fmt1 >= 0.95 &&
                    improving && run.seconds < 300.0;
    return {ok, fmt::format("{} steps, G = {}, R_final {:.3f}->{:.3f}, format rate {:.3f}{}, {:.1f} s", d.size(),
                            cfg.grpo.group_size, final0, final1, fmt1, series, run.seconds)};
}

Outcome ablation(const Run& clipped, const Run& unclipped) {
    double peak = 0.0;
    int step = -1;
    for (const auto& r : unclipped.result.dynamics) {
        if (r.max_abs_advantage > peak) {
            peak = r.max_abs_advantage;
            step = r.step;
        }
    }
    int violations = 0;
    double tightest = 0.0;
    for (const auto& r : clipped.result.dynamics) {
        const double bound = (r.reward_max - r.reward_min) / 0.1;
        if (r.max_abs_advantage > bound + 1e-9) ++violations;
        tightest = std::max(tightest, r.max_abs_advantage - bound);
    }
    const bool ok = peak > 10.0 && violations == 0 && !clipped.result.dynamics.empty();
    return {ok, fmt::format("eps_std 0: max |A| {:.3f} at step {}; eps_std 0.1: {} steps over (max R - min R)/0.1, "
                            "max excess {:.3e}",
                            peak, step, violations, tightest)};
}

Outcome determinism(const Run& a, const Run& b) {
    const bool ok = !a.log.empty() && a.log == b.log;
    return {ok, fmt::format("{} bytes vs {} bytes, {}", a.log.size(), b.log.size(), ok ? "identical" : "different")};
}

// 8 ---------------------------------------------------------------------

Outcome metrics_oracle() {
    oracle::TextGen gen(808);
    int em_bad = 0, ar_bad = 0, f1_bad = 0, cr_bad = 0;
    double f1_worst = 0.0, cr_worst = 0.0;
    for (int n = 0; n < 500; ++n) {
        const auto pred = gen.text(12);
        std::vector<std::string> golds;
        const int aliases = 1 + gen.below(3);
        for (int i = 0; i < aliases; ++i) golds.push_back(gen.text(4));
        std::vector<Passage> passages;
        std::size_t passage_words = 0;
        const int np = 1 + gen.below(5);
        for (int i = 0; i < np; ++i) {
            auto title = gen.text(3);
            auto body = gen.text(30);
            if (oracle::words(body) == 0) body = "filler";
            passage_words += oracle::words(title) + oracle::words(body);
            passages.push_back({"d" + std::to_string(i), title, body, i + 1});
        }

        if (exact_match(pred, golds) != oracle::em(pred, golds)) ++em_bad;
        if (answer_recall(pred, golds) != oracle::recall(pred, golds)) ++ar_bad;
        const double f1_err = std::abs(unigram_f1(pred, golds) - static_cast<double>(oracle::f1(pred, golds)));
        f1_worst = std::max(f1_worst, f1_err);
        if (f1_err > 1e-9) ++f1_bad;

        const auto ew = oracle::words(pred);
        if (ew == 0) {
            bool threw = false;
            try {
                compression_ratio(passages, pred);
            } catch (const MetricError&) {
                threw = true;
            }
            if (!threw) ++cr_bad;
        } else {
            const long double expected = static_cast<long double>(passage_words) / static_cast<long double>(ew);
            const double cr_err = std::abs(static_cast<long double>(compression_ratio(passages, pred)) - expected);
            cr_worst = std::max(cr_worst, cr_err);
            if (cr_err > 1e-9) ++cr_bad;
        }
    }
    const bool ok = em_bad == 0 && ar_bad == 0 && f1_bad == 0 && cr_bad == 0;
    return {ok, fmt::format("500 pairs: EM mismatches {}, AR mismatches {}, F1 max err {:.2e}, CR max err {:.2e}", em_bad,
                            ar_bad, f1_worst, cr_worst)};
}

void report(int id, const std::string& name, const Outcome& o, int& failures) {
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    int failures = 0;

    auto guarded = [](const std::function<Outcome()>& f) {
        try {
            return f();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };

    report(1, "reward closed forms", guarded(reward_closed_forms), failures);
    report(2, "advantage example", guarded(advantage_example), failures);
    report(3, "format predicate table", guarded(format_table), failures);
    report(4, "masking non-leakage", guarded(masking_non_leakage), failures);
    report(5, "gradient correctness", guarded(gradient_check), failures);

    const auto cfg = toy_run_config();
    auto cfg_unclipped = cfg;
    cfg_unclipped.grpo.eps_std = 0.0;
    cfg_unclipped.reward.eps_std = 0.0;

    std::optional<Run> main_run, repeat_run, unclipped_run;
    Outcome e2e, abl, det;
    try {
        main_run = run_training(cfg);
        e2e = end_to_end(*main_run, cfg);
    } catch (const std::exception& e) {
        e2e = {false, std::string("exception: ") + e.what()};
    }
    report(6, "end-to-end toy training", e2e, failures);

    try {
        unclipped_run = run_training(cfg_unclipped);
        abl = main_run ? ablation(*main_run, *unclipped_run) : Outcome{false, "criterion 6 run did not complete"};
    } catch (const std::exception& e) {
        abl = {false, std::string("exception: ") + e.what()};
    }
    report(7, "std clipping ablation", abl, failures);

    report(8, "metrics oracle", guarded(metrics_oracle), failures);

    try {
        repeat_run = run_training(cfg);
        det = main_run ? determinism(*main_run, *repeat_run) : Outcome{false, "criterion 6 run did not complete"};
    } catch (const std::exception& e) {
        det = {false, std::string("exception: ") + e.what()};
    }
    report(9, "determinism", det, failures);

    std::printf("%d/9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
