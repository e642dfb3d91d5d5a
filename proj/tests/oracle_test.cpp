#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "optbeam/oracle.hpp"

#include <cmath>
#include <map>
#include <random>
#include <set>
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

// Beam of width 2 finds [a </s>] at score ln 0.22 in second position at
// step 2; the first completed *top* arrives at step 3 with the strictly
// worse ln 0.189, so the default stop returns a suboptimal hypothesis.
const char* kStrictGapJson = R"({
  "vocab": ["a", "b", "</s>"],
  "eos": "</s>",
  "default": [0.55, 0.35, 0.10],
  "contexts": {
    "a": [0.3, 0.3, 0.4],
    "b": [0.9, 0.05, 0.05],
    "b a": [0.2, 0.2, 0.6]
  }
})";

} // namespace

TEST_CASE("exhaustive_best finds the eos-only output on the stationary model") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    const Hypothesis best = exhaustive_best(model, {}, 4, ScorerSpec::plain());
    CHECK(best.tokens == ids({2}));
    CHECK(best.completed);
    CHECK(close(best.score, std::log(0.1), 1e-12));

    // max_len 0 leaves only the immediate completion
    const Hypothesis only = exhaustive_best(model, {}, 0, ScorerSpec::plain());
    CHECK(only.tokens == ids({2}));
}

TEST_CASE("exhaustive_best on a single-token vocab") {
    const SeededModel model(1, 5);
    const Hypothesis best = exhaustive_best(model, {}, 3, ScorerSpec::plain());
    CHECK(best.tokens.size() == 1);
    CHECK(best.score == 0.0);
}

TEST_CASE("exhaustive_best throws when nothing can complete") {
    const TableModel model(default_vocab(2), {1.0, 0.0});
    CHECK_THROWS_AS(exhaustive_best(model, {}, 4, ScorerSpec::plain()), InputError);
}

TEST_CASE("a large reward makes the longest output optimal") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    // each extra "a" costs ln 0.6 but earns r = 1.0 up to l = 4
    const Hypothesis best = exhaustive_best(model, {}, 4, ScorerSpec{1.0, 4.0});
    CHECK(best.tokens == ids({0, 0, 0, 0, 2}));
    CHECK(best.output_length() == 4);
    CHECK(close(best.score, 4 * std::log(0.6) + std::log(0.1), 1e-9));
}

TEST_CASE("pruning never changes the exhaustive argmax") {
    std::mt19937_64 gen(47);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t v = 3 + gen() % 3;
        const SeededModel model(v, gen());
        std::vector<TokenId> source;
        const std::size_t slen = 1 + gen() % 4;
        for (std::size_t j = 0; j < slen; ++j) {
            source.push_back(TokenId{static_cast<std::uint32_t>(gen() % (v - 1))});
        }
        const std::size_t max_len = 3 + gen() % 3;
        const double r = 0.5 * static_cast<double>(gen() % 3);
        const double l = 0.5 * static_cast<double>(gen() % 10);

        const Hypothesis pruned = exhaustive_best(model, source, max_len, {r, l}, true);
        const Hypothesis plain = exhaustive_best(model, source, max_len, {r, l}, false);
        CHECK(pruned.tokens == plain.tokens);
        CHECK(pruned.score == plain.score);
    }
}

TEST_CASE("beam_trace on the stationary fixture records the hand-traced run") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    const TraceReport trace = beam_trace(model, {}, 3, 10);

    REQUIRE(trace.steps.size() == 10);
    CHECK(trace.steps[0].step == 1);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(close(trace.steps[i].top_score, static_cast<double>(i + 1) * std::log(0.6), 1e-9));
        CHECK(!trace.steps[i].top_completed);
        CHECK(!trace.steps[i].fire_default);
    }
    REQUIRE(trace.completed.size() == 1);
    CHECK(trace.completed[0].hypothesis.tokens == ids({2}));
    CHECK(close(trace.best_plain_key, std::log(0.1), 1e-12));

    CHECK(trace.first_fire(Strategy::Optimal) == 5);
    CHECK(!trace.steps[3].fire_optimal);
    CHECK(trace.steps[4].fire_optimal);
    CHECK(!trace.first_fire(Strategy::Default).has_value());
    CHECK(!trace.first_fire(Strategy::ShrinkLenNorm).has_value());
}

TEST_CASE("an exhaustive-width trace collects every completion") {
    std::mt19937_64 gen(53);
    for (int trial = 0; trial < 10; ++trial) {
        const SeededModel model(3, gen());
        const std::size_t max_steps = 4;
        const TraceReport trace = beam_trace(model, {}, 81, max_steps);
        CHECK(!trace.duplicate_completion);

        // enumerate {a,b}^k + eos for k <= 3 directly
        std::map<std::vector<TokenId>, double> expected;
        std::vector<std::vector<TokenId>> frontier{{}};
        std::vector<double> scores{0.0};
        for (std::size_t len = 0; len < max_steps; ++len) {
            std::vector<std::vector<TokenId>> next;
            std::vector<double> next_scores;
            for (std::size_t i = 0; i < frontier.size(); ++i) {
                const auto row = model.next_logprobs({}, frontier[i]);
                std::vector<TokenId> done = frontier[i];
                done.push_back(TokenId{2});
                expected[done] = scores[i] + row[2];
                if (len + 1 < max_steps) {
                    for (std::uint32_t t = 0; t < 2; ++t) {
                        std::vector<TokenId> ext = frontier[i];
                        ext.push_back(TokenId{t});
                        next.push_back(std::move(ext));
                        next_scores.push_back(scores[i] + row[t]);
                    }
                }
            }
            frontier = std::move(next);
            scores = std::move(next_scores);
        }
        REQUIRE(expected.size() == 15);
        REQUIRE(trace.completed.size() == 15);
        for (const CompletedEntry& entry : trace.completed) {
            auto it = expected.find(entry.hypothesis.tokens);
            REQUIRE(it != expected.end());
            CHECK(entry.plain == it->second);
        }
    }
}

TEST_CASE("a longer trace extends a shorter one without rewriting it") {
    std::mt19937_64 gen(59);
    for (int trial = 0; trial < 20; ++trial) {
        const SeededModel model(4, gen());
        const TraceReport short_trace = beam_trace(model, {}, 3, 5);
        const TraceReport long_trace = beam_trace(model, {}, 3, 9);

        REQUIRE(long_trace.steps.size() >= short_trace.steps.size());
        for (std::size_t i = 0; i < short_trace.steps.size(); ++i) {
            CHECK(long_trace.steps[i].top_score == short_trace.steps[i].top_score);
            CHECK(long_trace.steps[i].fire_optimal == short_trace.steps[i].fire_optimal);
            CHECK(long_trace.steps[i].fire_default == short_trace.steps[i].fire_default);
        }
        REQUIRE(long_trace.completed.size() >= short_trace.completed.size());
        for (std::size_t i = 0; i < short_trace.completed.size(); ++i) {
            CHECK(long_trace.completed[i].hypothesis.tokens ==
                  short_trace.completed[i].hypothesis.tokens);
        }
        CHECK(!long_trace.duplicate_completion);
    }
}

TEST_CASE("a width-1 trace ends at its first completion") {
    std::mt19937_64 gen(61);
    for (int trial = 0; trial < 20; ++trial) {
        const SeededModel model(5, gen());
        const TraceReport trace = beam_trace(model, {}, 1, 8);
        // a completed singleton beam has nothing left to expand
        CHECK(trace.completed.size() <= 1);
        CHECK(!trace.duplicate_completion);
        if (!trace.completed.empty()) {
            CHECK(trace.steps.back().top_completed);
        }
    }
}

TEST_CASE("verify_optimality passes for the plain certificate on random models") {
    std::mt19937_64 gen(67);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t v = 3 + gen() % 4;
        const SeededModel model(v, gen());
        std::vector<TokenId> source;
        const std::size_t slen = 3 + gen() % 6;
        for (std::size_t j = 0; j < slen; ++j) {
            source.push_back(TokenId{static_cast<std::uint32_t>(gen() % (v - 1))});
        }
        const SearchConfig config =
            config_for(Strategy::Optimal, 1 + gen() % 8, 0.0, 1.0, 6 + gen() % 5);

        const Verdict verdict = verify_optimality(model, source, config);
        CHECK(verdict.pass);
        CHECK(verdict.score_matches);
        CHECK(verdict.early_stop_ok);
        if (verdict.default_fire) {
            CHECK(verdict.stop_step <= *verdict.default_fire);
        }
    }
}

TEST_CASE("verify_optimality passes for bounded strategies on random models") {
    std::mt19937_64 gen(71);
    const double rewards[] = {0.3, 1.0, 1.2};
    const double ratios[] = {0.8, 1.27};
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t v = 3 + gen() % 3;
        const SeededModel model(v, gen());
        std::vector<TokenId> source;
        const std::size_t slen = 3 + gen() % 5;
        for (std::size_t j = 0; j < slen; ++j) {
            source.push_back(TokenId{static_cast<std::uint32_t>(gen() % (v - 1))});
        }
        const Strategy strategy = trial % 2 == 0 ? Strategy::OptimalBoundedSimplified
                                                 : Strategy::OptimalBoundedFull;
        const SearchConfig config = config_for(strategy, 1 + gen() % 6, rewards[trial % 3],
                                               ratios[trial % 2], 8 + gen() % 4);

        const Verdict verdict = verify_optimality(model, source, config);
        CHECK(verdict.pass);
        CHECK(verdict.score_matches);
    }
}

TEST_CASE("verify_optimality rejects non-certificate strategies") {
    const TableModel model = TableModel::stationary({0.6, 0.4});
    CHECK_THROWS_AS(verify_optimality(model, {}, config_for(Strategy::Default, 2)), InputError);
    CHECK_THROWS_AS(verify_optimality(model, {}, config_for(Strategy::ShrinkLenNorm, 2)),
                    InputError);
}

TEST_CASE("pinned fixture: the default stop returns a strictly worse score") {
    const TableModel model = load_table_model(kStrictGapJson);

    const DecodeResult optimal = decode(model, {}, config_for(Strategy::Optimal, 2));
    const DecodeResult fallback = decode(model, {}, config_for(Strategy::Default, 2));

    CHECK(optimal.hypothesis.tokens == ids({0, 2}));
    CHECK(close(optimal.plain_score, std::log(0.55) + std::log(0.4), 1e-9));
    CHECK(optimal.stop_step == 3);
    CHECK(optimal.reason == StopReason::Certificate);

    CHECK(fallback.hypothesis.tokens == ids({1, 0, 2}));
    CHECK(close(fallback.plain_score, std::log(0.35) + std::log(0.9) + std::log(0.6), 1e-9));
    CHECK(fallback.stop_step == 3);
    CHECK(fallback.reason == StopReason::DefaultTopCompleted);

    // the strict dominance gap this fixture exists for
    CHECK(optimal.plain_score > fallback.plain_score + 0.1);

    const Verdict verdict = verify_optimality(model, {}, config_for(Strategy::Optimal, 2));
    CHECK(verdict.pass);

    const TraceReport trace = beam_trace(model, {}, 2, 10);
    CHECK(trace.first_fire(Strategy::Optimal) == 3);
    CHECK(trace.first_fire(Strategy::Default) == 3);
    REQUIRE(trace.completed.size() >= 2);
    CHECK(trace.completed[0].hypothesis.tokens == ids({0, 2}));
    CHECK(trace.completed[1].hypothesis.tokens == ids({1, 0, 2}));
}

TEST_CASE("trace step records expose the exact criterion left sides") {
    const TableModel model = TableModel::stationary({0.6, 0.3, 0.1});
    const double r = 0.7;
    const double l = 2.5;
    const TraceReport trace = beam_trace(model, {}, 3, 6, r, l);

    for (const StepRecord& rec : trace.steps) {
        if (!rec.top_completed) {
            // partial top: both criteria see the same left side, bitwise
            CHECK(rec.lhs_full == rec.lhs_simplified);
            CHECK(rec.lhs_full == rec.top_score + r * l);
        } else {
            CHECK(rec.lhs_full <= rec.lhs_simplified);
        }
        // firing is exactly "lhs <= tracker key" once a completion exists
        if (rec.best_revised != kNegInf) {
            CHECK(rec.fire_full == (rec.lhs_full <= rec.best_revised));
            CHECK(rec.fire_simplified == (rec.lhs_simplified <= rec.best_revised));
        } else {
            CHECK(!rec.fire_full);
            CHECK(!rec.fire_simplified);
        }
    }
}
