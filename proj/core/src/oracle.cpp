#include "optbeam/oracle.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>

namespace optbeam {

namespace {

bool lex_less(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

} // namespace

Hypothesis exhaustive_best(const ScoringModel& model, std::span<const TokenId> source,
                           std::size_t max_len, ScorerSpec scorer, bool prune) {
    const Vocab& vocab = model.vocab();
    const TokenId eos = vocab.eos();
    // Any completion grown from a partial with score sc has scorer value
    // at most sc + max_reward: log-probs only subtract, the reward caps.
    const double max_reward =
        scorer.r * std::min(scorer.l, static_cast<double>(max_len));

    std::optional<Hypothesis> best;
    double best_key = kNegInf;
    auto consider = [&](Hypothesis h) {
        const double key = scorer(h);
        if (!best || key > best_key || (key == best_key && lex_less(h.tokens, best->tokens))) {
            best = std::move(h);
            best_key = key;
        }
    };

    std::vector<TokenId> prefix;
    auto dfs = [&](auto&& self, double sc, std::size_t depth) -> void {
        const std::vector<double> logps = model.next_logprobs(source, prefix);
        if (logps[eos.value] != kNegInf) {
            Hypothesis h;
            h.tokens = prefix;
            h.tokens.push_back(eos);
            h.score = sc + logps[eos.value];
            h.completed = true;
            consider(std::move(h));
        }
        if (depth == max_len) return;
        for (std::uint32_t t = 0; t < vocab.size(); ++t) {
            if (TokenId{t} == eos || logps[t] == kNegInf) continue;
            const double next_sc = sc + logps[t];
            if (prune && best && next_sc + max_reward < best_key) continue;
            prefix.push_back(TokenId{t});
            self(self, next_sc, depth + 1);
            prefix.pop_back();
        }
    };
    dfs(dfs, 0.0, 0);

    if (!best) throw InputError("no completed hypothesis within the length bound");
    return *best;
}

std::optional<std::size_t> TraceReport::first_fire(Strategy strategy) const {
    for (const StepRecord& rec : steps) {
        const bool fired = [&] {
            switch (strategy) {
            case Strategy::Default: return rec.fire_default;
            case Strategy::Optimal: return rec.fire_optimal;
            case Strategy::OptimalBoundedFull: return rec.fire_full;
            case Strategy::OptimalBoundedSimplified: return rec.fire_simplified;
            default: return false;
            }
        }();
        if (fired) return rec.step;
    }
    return std::nullopt;
}

TraceReport beam_trace(const ScoringModel& model, std::span<const TokenId> source,
                       std::size_t b, std::size_t max_steps, double r, double l) {
    assert(b >= 1);
    const LengthEstimate le{l};
    TraceReport trace;
    Beam beam{0, {Hypothesis{}}, b};
    BestTracker plain_tracker;
    BestTracker revised_tracker;
    std::set<std::vector<TokenId>> seen;

    for (std::size_t i = 1; i <= max_steps; ++i) {
        if (!beam.any_partial()) break;
        BeamStep step = beam_step(model, source, beam, b);
        beam = std::move(step.beam);
        if (beam.empty()) break;

        for (const Hypothesis& h : beam.items) {
            if (!h.completed) continue;
            if (!seen.insert(h.tokens).second) {
                trace.duplicate_completion = true;
                continue;
            }
            trace.completed.push_back({h, h.score, revised_score(h, r, le)});
            plain_tracker =
                best_update(plain_tracker, h, [](const Hypothesis& x) { return x.score; });
            revised_tracker = best_update(revised_tracker, h, [&](const Hypothesis& x) {
                return revised_score(x, r, le);
            });
        }

        StepRecord rec;
        rec.step = i;
        rec.top_score = beam.top().score;
        rec.top_completed = beam.top().completed;
        rec.best_plain = plain_tracker.best_key;
        rec.best_revised = revised_tracker.best_key;
        rec.lhs_full = bounded_full_lhs(beam.top(), i, r, le);
        rec.lhs_simplified = beam.top().score + r * l;
        rec.fire_default = stop_default(beam).stop;
        rec.fire_optimal = stop_optimal(beam, plain_tracker).stop;
        rec.fire_full = stop_bounded_full(beam, i, r, le, revised_tracker).stop;
        rec.fire_simplified = stop_bounded_simplified(beam, r, le, revised_tracker).stop;
        trace.steps.push_back(rec);
    }
    trace.best_plain = plain_tracker.best;
    trace.best_revised = revised_tracker.best;
    trace.best_plain_key = plain_tracker.best_key;
    trace.best_revised_key = revised_tracker.best_key;
    return trace;
}

Verdict verify_optimality(const ScoringModel& model, std::span<const TokenId> source,
                          const SearchConfig& config) {
    if (!is_certificate(config.strategy)) {
        throw InputError("verify_optimality requires a certificate strategy");
    }
    const DecodeResult result = decode(model, source, config);
    const bool bounded = is_bounded(config.strategy);
    const double r = bounded ? config.reward : 0.0;
    const TraceReport trace =
        beam_trace(model, source, config.beam_size, config.max_steps, r, result.length_estimate);

    Verdict verdict;
    verdict.strategy = config.strategy;
    verdict.stop_step = result.stop_step;
    verdict.decode_completed = result.completed;
    verdict.trace_has_completion = !trace.completed.empty();
    verdict.decode_score = bounded ? result.revised_score : result.plain_score;
    verdict.trace_best = bounded ? trace.best_revised_key : trace.best_plain_key;
    verdict.default_fire = trace.first_fire(Strategy::Default);

    if (trace.completed.empty()) {
        verdict.score_matches = !result.completed;
    } else {
        verdict.score_matches =
            result.completed && std::abs(verdict.decode_score - verdict.trace_best) <= 1e-9;
    }
    // Bounded criteria may legitimately fire after the default rule, so
    // the early-stop clause binds the plain certificate only.
    verdict.early_stop_ok = config.strategy != Strategy::Optimal || !verdict.default_fire ||
                            verdict.stop_step <= *verdict.default_fire;
    verdict.pass = verdict.score_matches && verdict.early_stop_ok;
    return verdict;
}

} // namespace optbeam
