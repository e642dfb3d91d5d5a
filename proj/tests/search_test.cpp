#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "optbeam/scoring.hpp"
#include "optbeam/search.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace optbeam;

namespace {

bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

std::vector<TokenId> ids(std::initializer_list<std::uint32_t> values) {
    std::vector<TokenId> out;
    for (auto v : values) out.push_back(TokenId{v});
    return out;
}

SearchConfig config_for(Strategy strategy, std::size_t b, double r = 0.0,
                        double ratio = 1.0, std::size_t max_steps = 10) {
    SearchConfig config;
    config.beam_size = b;
    config.strategy = strategy;
    config.reward = r;
    config.length_ratio = ratio;
    config.max_steps = max_steps;
    return config;
}

const char* kStationaryJson = R"({
  "vocab": ["a", "b", "</s>"],
  "eos": "</s>",
  "default": [0.6, 0.3, 0.1]
})";

} // namespace

TEST_CASE("estimate_length is the real-valued ratio times source length") {
    CHECK(estimate_length(4, 1.0).l == 4.0);
    CHECK(close(estimate_length(3, 1.27).l, 3.81, 1e-12));
    CHECK(close(estimate_length(7, 0.5).l, 3.5, 1e-12));
}

TEST_CASE("revised_score caps the reward at the length estimate") {
    const LengthEstimate l{3.0};
    CHECK(close(revised_score(-6.5, 4, 1.0, l), -3.5, 1e-12));
    CHECK(close(revised_score(-6.5, 2, 1.0, l), -4.5, 1e-12));
    CHECK(close(revised_score(-6.5, 3, 1.0, l), -3.5, 1e-12));
    CHECK(revised_score(-6.5, 4, 0.0, l) == -6.5);

    Hypothesis h;
    h.tokens = ids({0, 1, 2});
    h.score = -2.0;
    h.completed = true; // |y| = 2
    CHECK(close(revised_score(h, 0.5, l), -1.0, 1e-12));
}

TEST_CASE("bounded_full_lhs collapses to the simplified form on partial tops") {
    Hypothesis partial;
    partial.tokens = ids({0, 1});
    partial.score = -1.25;
    const LengthEstimate l{3.7};
    // |y| == step: both sides must be bitwise equal, not just close
    CHECK(bounded_full_lhs(partial, 2, 0.8, l) == -1.25 + 0.8 * 3.7);

    Hypothesis completed;
    completed.tokens = ids({0, 2});
    completed.score = -1.25;
    completed.completed = true; // |y| = 1 at step 2
    // min{3.7, 1} + max{3.7 - 2, 0} = 1 + 1.7
    CHECK(close(bounded_full_lhs(completed, 2, 0.8, l), -1.25 + 0.8 * 2.7, 1e-12));
}

TEST_CASE("beam_step expands partials and keeps the best k candidates") {
    const TableModel model = load_table_model(kStationaryJson);
    Beam root{0, {Hypothesis{}}, 2};

    const BeamStep s1 = beam_step(model, {}, root, 2);
    CHECK(s1.scored == 3);
    CHECK(s1.beam.step == 1);
    REQUIRE(s1.beam.items.size() == 2);
    CHECK(s1.beam.items[0].tokens == ids({0}));
    CHECK(close(s1.beam.items[0].score, std::log(0.6), 1e-12));
    CHECK(s1.beam.items[1].tokens == ids({1}));

    const BeamStep s2 = beam_step(model, {}, s1.beam, 3);
    CHECK(s2.scored == 6);
    REQUIRE(s2.beam.items.size() == 3);
    // aa = 2 ln 0.6, then the exact tie ab / ba resolves lexicographically
    CHECK(s2.beam.items[0].tokens == ids({0, 0}));
    CHECK(close(s2.beam.items[0].score, 2 * std::log(0.6), 1e-12));
    CHECK(s2.beam.items[1].tokens == ids({0, 1}));
    CHECK(s2.beam.items[2].tokens == ids({1, 0}));
    CHECK(close(s2.beam.items[1].score, std::log(0.6) + std::log(0.3), 1e-12));
    CHECK(s2.beam.items[1].score == s2.beam.items[2].score);
}

TEST_CASE("beam_step skips completed items and drops forbidden tokens") {
    const std::string json = R"({
      "vocab": ["a", "</s>"],
      "eos": "</s>",
      "default": [0.4, 0.6],
      "contexts": {"a": [0.0, 1.0]}
    })";
    const TableModel model = load_table_model(json);
    Beam root{0, {Hypothesis{}}, 2};

    const BeamStep s1 = beam_step(model, {}, root, 2);
    CHECK(s1.scored == 2);
    REQUIRE(s1.beam.items.size() == 2);
    CHECK(s1.beam.items[0].completed); // eos at 0.6 outranks a at 0.4

    const BeamStep s2 = beam_step(model, {}, s1.beam, 2);
    // only the partial "a" expands, and its row forbids "a a"
    CHECK(s2.scored == 2);
    REQUIRE(s2.beam.items.size() == 1);
    CHECK(s2.beam.items[0].tokens == ids({0, 1}));
    CHECK(s2.beam.items[0].completed);
}

TEST_CASE("optimal stop on the stationary fixture") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    const DecodeResult result = decode(model, {}, config_for(Strategy::Optimal, 3));

    CHECK(result.hypothesis.tokens == ids({2}));
    CHECK(result.completed);
    CHECK(close(result.plain_score, std::log(0.1), 1e-9));
    CHECK(result.revised_score == result.plain_score);
    CHECK(result.stop_step == 5);
    CHECK(result.items_expanded == 36);
    CHECK(result.reason == StopReason::Certificate);
    CHECK(result.length_estimate == 0.0);
}

TEST_CASE("default stop never fires on the stationary fixture") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    const DecodeResult result = decode(model, {}, config_for(Strategy::Default, 3));

    // the top item is always the partial aaaa..., so the budget runs out
    CHECK(result.reason == StopReason::MaxSteps);
    CHECK(result.stop_step == 10);
    CHECK(result.items_expanded == 81);
    // the fallback still returns the best completed hypothesis seen
    CHECK(result.completed);
    CHECK(result.hypothesis.tokens == ids({2}));
}

TEST_CASE("beam size 1 equals greedy decoding") {
    const std::string json = R"({
      "vocab": ["a", "b", "</s>"],
      "eos": "</s>",
      "default": [0.9, 0.05, 0.05],
      "contexts": {"a a": [0.0, 0.0, 1.0]}
    })";
    const TableModel model = load_table_model(json);
    const DecodeResult result = decode(model, {}, config_for(Strategy::Optimal, 1));

    CHECK(result.hypothesis.tokens == ids({0, 0, 2}));
    CHECK(close(result.plain_score, 2 * std::log(0.9), 1e-12));
    CHECK(result.stop_step == 3);
    CHECK(result.reason == StopReason::Certificate);
}

TEST_CASE("bounded strategies stop when the beam has no partials left") {
    const std::string json = R"({
      "vocab": ["a", "</s>"],
      "eos": "</s>",
      "default": [0.4, 0.6],
      "contexts": {"a": [0.0, 1.0]}
    })";
    const TableModel model = load_table_model(json);
    const auto source = ids({0, 0});
    const DecodeResult result =
        decode(model, source, config_for(Strategy::OptimalBoundedSimplified, 2, 1.0));

    // reward-inflated partials keep the criterion from firing, but once
    // every continuation is exhausted the tracker best is provably final
    CHECK(result.hypothesis.tokens == ids({0, 1}));
    CHECK(result.completed);
    CHECK(result.stop_step == 2);
    CHECK(result.reason == StopReason::Certificate);
    CHECK(close(result.plain_score, std::log(0.4), 1e-12));
    CHECK(close(result.revised_score, std::log(0.4) + 1.0, 1e-12));
    CHECK(result.length_estimate == 2.0);
}

TEST_CASE("max_steps fallback without any completion returns a partial") {
    const std::string json = R"({
      "vocab": ["a", "</s>"],
      "eos": "</s>",
      "default": [1.0, 0.0]
    })";
    const TableModel model = load_table_model(json);
    const DecodeResult result = decode(model, {}, config_for(Strategy::Optimal, 1, 0.0, 1.0, 6));

    CHECK(!result.completed);
    CHECK(result.reason == StopReason::MaxSteps);
    CHECK(result.stop_step == 6);
    CHECK(result.hypothesis.tokens == std::vector<TokenId>(6, TokenId{0}));
}

TEST_CASE("decode rejects shrinking strategies and empty-source copy models") {
    const TableModel model = TableModel::stationary({0.6, 0.4});
    CHECK_THROWS_AS(decode(model, {}, config_for(Strategy::ShrinkLenNorm, 2)), InputError);

    const auto copy = make_model("copy:base=table:stationary,0.6,0.4,bias=1.0,slack=0");
    CHECK_THROWS_AS(decode(*copy, {}, config_for(Strategy::Optimal, 2)), InputError);
    CHECK_NOTHROW(decode(*copy, ids({0}), config_for(Strategy::Optimal, 2)));
}

TEST_CASE("shrinking beam stops after the first completion at width 1") {
    const std::string json = R"({
      "vocab": ["a", "b", "</s>"],
      "eos": "</s>",
      "default": [0.1, 0.1, 0.8]
    })";
    const TableModel model = load_table_model(json);
    const DecodeResult result =
        shrinking_decode(model, {}, config_for(Strategy::ShrinkLenNorm, 1), PoolRescorer::LengthNorm);

    CHECK(result.hypothesis.tokens == ids({2}));
    CHECK(result.stop_step == 1);
    CHECK(result.reason == StopReason::ShrunkToZero);
}

TEST_CASE("shrinking pool rescoring picks different hypotheses per rescorer") {
    const std::string json = R"({
      "vocab": ["a", "b", "</s>"],
      "eos": "</s>",
      "default": [0.45, 0.45, 0.1],
      "contexts": {
        "a": [0.0, 0.0, 1.0],
        "b": [1.0, 0.0, 0.0],
        "b a": [0.0, 0.0, 1.0]
      }
    })";
    const TableModel model = load_table_model(json);
    // pool fills with [a </s>] (|y|=1) and [b a </s>] (|y|=2), equal plain scores

    SearchConfig lennorm = config_for(Strategy::ShrinkLenNorm, 2);
    const DecodeResult by_len = shrinking_decode(model, {}, lennorm, PoolRescorer::LengthNorm);
    CHECK(by_len.hypothesis.tokens == ids({1, 0, 2}));
    CHECK(by_len.stop_step == 3);
    CHECK(by_len.reason == StopReason::ShrunkToZero);

    SearchConfig rewarded = config_for(Strategy::ShrinkReward, 2, 1.0);
    const DecodeResult by_reward =
        shrinking_decode(model, {}, rewarded, PoolRescorer::UnboundedReward);
    CHECK(by_reward.hypothesis.tokens == ids({1, 0, 2}));

    // with r = 0 the unbounded keys tie and the earlier completion wins
    SearchConfig zero = config_for(Strategy::ShrinkReward, 2, 0.0);
    const DecodeResult by_zero = shrinking_decode(model, {}, zero, PoolRescorer::UnboundedReward);
    CHECK(by_zero.hypothesis.tokens == ids({0, 2}));
}

TEST_CASE("run dispatches strategies to the right driver") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});

    const DecodeResult optimal = run(model, {}, config_for(Strategy::Optimal, 3));
    CHECK(optimal.stop_step == 5);
    CHECK(optimal.reason == StopReason::Certificate);

    const DecodeResult def = run(model, {}, config_for(Strategy::Default, 3));
    CHECK(def.reason == StopReason::MaxSteps);

    // eos outranks everything here, so the shrinking pool drains the width
    const TableModel eager = TableModel::stationary({0.1, 0.1, 0.8});
    const DecodeResult shrink = run(eager, {}, config_for(Strategy::ShrinkLenNorm, 2));
    CHECK(shrink.reason == StopReason::ShrunkToZero);
    CHECK(shrink.hypothesis.tokens == ids({2}));

    // a width-2 beam on the stationary model never admits a completion
    const DecodeResult starved = run(model, {}, config_for(Strategy::ShrinkLenNorm, 2));
    CHECK(starved.reason == StopReason::MaxSteps);
    CHECK(!starved.completed);
}

TEST_CASE("full and simplified bounded criteria agree when the top stays partial") {
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t v = 3 + gen() % 3;
        const SeededModel model(v, gen());
        std::vector<TokenId> source;
        const std::size_t slen = 2 + gen() % 4;
        for (std::size_t j = 0; j < slen; ++j) {
            source.push_back(TokenId{static_cast<std::uint32_t>(gen() % (v - 1))});
        }
        const double r = 0.2 + 0.2 * static_cast<double>(gen() % 5);
        const double ratio = 0.8 + 0.1 * static_cast<double>(gen() % 6);
        const std::size_t b = 1 + gen() % 5;

        const DecodeResult full =
            decode(model, source, config_for(Strategy::OptimalBoundedFull, b, r, ratio, 12));
        const DecodeResult simp = decode(
            model, source, config_for(Strategy::OptimalBoundedSimplified, b, r, ratio, 12));

        // the full criterion can only fire earlier via a completed top;
        // otherwise the two runs are step-for-step identical
        CHECK(full.stop_step <= simp.stop_step);
        if (full.stop_step == simp.stop_step) {
            CHECK(full.hypothesis.tokens == simp.hypothesis.tokens);
            CHECK(full.revised_score == simp.revised_score);
        }
    }
}
