#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "evidex/errors.hpp"
#include "evidex/reward_engine.hpp"

using namespace evidex;

namespace {

bool close(double a, long double b, double tol = 1e-12) { return std::abs(static_cast<long double>(a) - b) <= tol; }

QAInstance instance_with(int passage_words, std::vector<std::string> golds) {
    std::string body;
    for (int i = 0; i < passage_words; ++i) body += (i ? " p" : "p") + std::to_string(i);
    return QAInstance{"q", "question?", std::move(golds), {{"d1", "", body, 1}}, Split::train};
}

std::string words(int n, const std::string& w = "w") {
    std::string out;
    for (int i = 0; i < n; ++i) out += (i ? " " : "") + w;
    return out;
}

}  // namespace

TEST_SUITE("reward_engine") {

TEST_CASE("answer reward examples") {
    const std::vector<std::string> g{"paris"};
    auto r = answer_rewards(g, "paris", "paris", "paris");
    CHECK(r.ans_r == 1.0);
    CHECK(r.ans_e == 1.0);
    CHECK(r.ans_f == 1.0);
    CHECK(r.mean == 1.0);

    r = answer_rewards(g, "paris", "", "paris");
    CHECK(r.ans_e == 0.0);
    CHECK(close(r.mean, 2.0L / 3.0L, 1e-15));

    r = answer_rewards(g, "paris", "paris", "paris france");
    CHECK(close(r.ans_f, 2.0L / 3.0L, 1e-15));
    CHECK(close(r.mean, 8.0L / 9.0L, 1e-15));

    CHECK_THROWS_AS(answer_rewards({}, "a", "b", "c"), MetricError);
}

TEST_CASE("rationale length closed forms") {
    CHECK(rationale_length_reward(7, 7, 0.5) == 0.5);
    CHECK(close(rationale_length_reward(20, 10, 0.5), oracle::kSigmoid2));
    CHECK(close(rationale_length_reward(5, 10, 0.5), oracle::kSigmoidMinus2));
    CHECK(rationale_length_reward(0, 5, 0.5) == 0.0);
    CHECK(rationale_length_reward(5, 0, 0.5) == 1.0);
    CHECK(rationale_length_reward(0, 0, 0.5) == 0.5);
    CHECK_THROWS(rationale_length_reward(1, 1, 0.0));
}

TEST_CASE("evidence length closed forms") {
    CHECK(evidence_length_reward(40, 500, 0.5, 0.9) == 1.0);
    CHECK(close(evidence_length_reward(250, 500, 0.5, 0.9), oracle::kSqrtHalf));
    for (double gamma : {0.1, 0.3, 0.5, 0.8, 1.0}) CHECK(evidence_length_reward(500, 500, gamma, 0.9) == 0.0);
    CHECK(evidence_length_reward(600, 500, 0.5, 0.9) == 0.0);
    CHECK(evidence_length_reward(0, 500, 0.5, 0.9) == 1.0);
    CHECK_THROWS(evidence_length_reward(1, 0, 0.5, 0.9));
}

TEST_CASE("format reward examples") {
    CHECK(format_reward("<reason>r</reason><extract>e</extract><answer>a</answer>") == 1.0);
    CHECK(format_reward("<reason>r</reason><extract>e</extract><answer>a") == 0.0);
    CHECK(format_reward("<extract>e</extract><reason>r</reason><answer>a</answer>") == 0.0);
}

TEST_CASE("final reward examples") {
    const RewardConfig cfg;
    auto b = final_reward({1, 1, 1, 1, 1, 1}, cfg);
    CHECK(b.final == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(b.valid);

    // ans mean 0.5, len mean 0.75, fmt 1
    b = final_reward({0.5, 0.5, 0.5, 0.5, 1.0, 1.0}, cfg);
    CHECK(close(b.final, 0.575L, 1e-15));

    b = final_reward({1, 1, 1, 1, 1, 0}, cfg);
    CHECK(close(b.final, 0.9L, 1e-15));
    CHECK_FALSE(b.valid);

    CHECK_THROWS(final_reward({1.5, 0, 0, 0, 0, 0}, cfg));
    CHECK_THROWS(final_reward({0, 0, 0, 0, 0, 0.5}, cfg));
}

TEST_CASE("config validation") {
    RewardConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tau = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.omega = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.alpha_len = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("score_response treats missing segments as empty") {
    const auto inst = instance_with(100, {"paris"});
    const RewardConfig cfg;

    const auto good = parse_response(render_response("because " + words(9), "paris", "Paris"));
    auto b = score_response(inst, good, "paris", "paris", cfg);
    CHECK(b.ans_mean == 1.0);
    CHECK(close(b.len_r, oracle::sigmoid(18.0L)));  // 10 vs 1 words, tau 0.5
    CHECK(b.len_e == 1.0);
    CHECK(b.fmt == 1.0);

    const auto bad = parse_response("<reason>r r</reason> no evidence <answer>paris</answer>");
    b = score_response(inst, bad, "paris", "", cfg);
    CHECK(b.fmt == 0.0);
    CHECK_FALSE(b.valid);
    CHECK(b.ans_e == 0.0);
    CHECK(b.len_e == 1.0);  // zero evidence words sits on the plateau
    CHECK(b.len_r == 1.0);
}

TEST_CASE("rationale length is continuous at equality and monotone in len_r") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 300; ++n) {
        const std::size_t le = 1 + rng() % 200;
        const double tau = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
        CHECK(rationale_length_reward(le, le, tau) == 0.5);
        double previous = 0.0;
        for (std::size_t lr = 0; lr <= 3 * le; ++lr) {
            const double v = rationale_length_reward(lr, le, tau);
            CHECK(v >= previous);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            previous = v;
        }
    }
}

TEST_CASE("evidence length is non-increasing in len_e with a flat plateau") {
    std::mt19937_64 rng(6);
    for (int n = 0; n < 200; ++n) {
        const std::size_t lp = 1 + rng() % 600;
        const double gamma = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        const double omega = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double previous = 2.0;
        for (std::size_t le = 0; le <= lp + 5; ++le) {
            const double v = evidence_length_reward(le, lp, gamma, omega);
            CHECK(v <= previous);
            if (1.0 - static_cast<double>(le) / static_cast<double>(lp) >= omega) CHECK(v == 1.0);
            previous = v;
        }
    }
}

TEST_CASE("smaller tau steepens the rationale reward") {
    std::mt19937_64 rng(7);
    for (int n = 0; n < 500; ++n) {
        const std::size_t le = 5 + rng() % 11;
        std::size_t lr = 5 + rng() % 11;
        if (lr == le) ++lr;
        // Length ratios within [1/3, 3] keep both sigmoids clear of saturation.
        const double t2 = std::uniform_real_distribution<double>(1.0, 2.0)(rng);
        const double t1 = t2 * std::uniform_real_distribution<double>(0.3, 0.9)(rng);
        CAPTURE(lr);
        CAPTURE(le);
        CHECK(std::abs(rationale_length_reward(lr, le, t1) - 0.5) > std::abs(rationale_length_reward(lr, le, t2) - 0.5));
    }
}

TEST_CASE("final reward is linear and bounded") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
        RewardConfig cfg;
        cfg.alpha_ans = u(rng);
        cfg.alpha_len = u(rng);
        cfg.alpha_fmt = u(rng);
        RewardParts p{u(rng), u(rng), u(rng), u(rng), u(rng), static_cast<double>(rng() % 2)};
        const double base = final_reward(p, cfg).final;
        CHECK(base >= 0.0);
        CHECK(base <= cfg.alpha_ans + cfg.alpha_len + cfg.alpha_fmt + 1e-12);

        // Moving ans_r by d moves final by alpha_ans * d / 3.
        const double d = u(rng) * (1.0 - p.ans_r);
        RewardParts q = p;
        q.ans_r += d;
        CHECK(final_reward(q, cfg).final - base == doctest::Approx(cfg.alpha_ans * d / 3.0).epsilon(1e-9));
        q = p;
        const double e = u(rng) * (1.0 - p.len_e);
        q.len_e += e;
        CHECK(final_reward(q, cfg).final - base == doctest::Approx(cfg.alpha_len * e / 2.0).epsilon(1e-9));
    }
}

TEST_CASE("reward functions are pure") {
    const auto inst = instance_with(80, {"ulm"});
    const auto parsed = parse_response(render_response("born in ulm in 1879", "born in ulm", "Ulm"));
    const auto a = score_response(inst, parsed, "ulm", "in ulm", RewardConfig{});
    const auto b = score_response(inst, parsed, "ulm", "in ulm", RewardConfig{});
    CHECK(std::memcmp(&a.final, &b.final, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.len_r, &b.len_r, sizeof(double)) == 0);
}

}  // TEST_SUITE
