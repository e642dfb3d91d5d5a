#include "optbeam/search.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace optbeam {

LengthEstimate estimate_length(std::size_t source_len, double ratio) {
    assert(source_len >= 1);
    assert(ratio > 0.0);
    return {ratio * static_cast<double>(source_len)};
}

double revised_score(double sc, std::size_t len, double r, LengthEstimate l) {
    return sc + r * std::min(l.l, static_cast<double>(len));
}

double revised_score(const Hypothesis& h, double r, LengthEstimate l) {
    return revised_score(h.score, h.output_length(), r, l);
}

BeamStep beam_step(const ScoringModel& model, std::span<const TokenId> source,
                   const Beam& beam, std::size_t width) {
    assert(!beam.empty());
    assert(beam.any_partial());
    assert(width >= 1);

    const TokenId eos = model.vocab().eos();
    const std::size_t v = model.vocab().size();
    BeamStep out;
    std::vector<Hypothesis> candidates;
    candidates.reserve(beam.items.size() * v);
    for (const Hypothesis& h : beam.items) {
        if (h.completed) continue;
        const std::vector<double> logps = model.next_logprobs(source, h.tokens);
        out.scored += v;
        for (std::uint32_t t = 0; t < v; ++t) {
            if (logps[t] == kNegInf) continue;
            candidates.push_back(extend(h, TokenId{t}, logps[t], eos));
        }
    }
    out.beam = top_k(candidates, width);
    out.beam.step = beam.step + 1;
    return out;
}

StoppingDecision stop_default(const Beam& beam) {
    assert(!beam.empty());
    return {beam.top().completed, StopReason::DefaultTopCompleted};
}

StoppingDecision stop_optimal(const Beam& beam, const BestTracker& tracker) {
    assert(!beam.empty());
    const bool stop = tracker.defined() && beam.top().score <= tracker.best_key;
    return {stop, StopReason::Certificate};
}

double bounded_full_lhs(const Hypothesis& top, std::size_t step, double r, LengthEstimate l) {
    const std::size_t len = top.output_length();
    // A partial top has len == step and min{l, len} + max{l - step, 0}
    // is exactly l, so compute it that way to keep the full and
    // simplified left sides bitwise equal on partial tops.
    const double factor =
        len == step ? l.l
                    : std::min(l.l, static_cast<double>(len)) +
                          std::max(l.l - static_cast<double>(step), 0.0);
    return top.score + r * factor;
}

StoppingDecision stop_bounded_full(const Beam& beam, std::size_t step, double r,
                                   LengthEstimate l, const BestTracker& tracker) {
    assert(!beam.empty());
    const double lhs = bounded_full_lhs(beam.top(), step, r, l);
    const bool stop = tracker.defined() && lhs <= tracker.best_key;
    return {stop, StopReason::Certificate};
}

StoppingDecision stop_bounded_simplified(const Beam& beam, double r, LengthEstimate l,
                                         const BestTracker& tracker) {
    assert(!beam.empty());
    const double lhs = beam.top().score + r * l.l;
    const bool stop = tracker.defined() && lhs <= tracker.best_key;
    return {stop, StopReason::Certificate};
}

namespace {

DecodeResult finish(const SearchConfig& config, LengthEstimate l, const Hypothesis& chosen,
                    std::size_t stop_step, std::size_t items_expanded, StopReason reason) {
    DecodeResult result;
    result.hypothesis = chosen;
    result.plain_score = chosen.score;
    result.revised_score = revised_score(chosen, config.reward, l);
    result.stop_step = stop_step;
    result.items_expanded = items_expanded;
    result.completed = chosen.completed;
    result.reason = reason;
    result.config = config;
    result.length_estimate = l.l;
    return result;
}

DecodeResult fallback(const SearchConfig& config, LengthEstimate l, const BestTracker& tracker,
                      const Beam& beam, std::size_t stop_step, std::size_t items_expanded) {
    if (tracker.defined()) {
        return finish(config, l, *tracker.best, stop_step, items_expanded,
                      StopReason::MaxSteps);
    }
    Hypothesis top_partial;
    top_partial.score = kNegInf;
    for (const Hypothesis& h : beam.items) {
        if (!h.completed) {
            top_partial = h;
            break;
        }
    }
    return finish(config, l, top_partial, stop_step, items_expanded, StopReason::MaxSteps);
}

void check_source(const ScoringModel& model, std::span<const TokenId> source) {
    if (source.empty() && model.requires_source()) {
        throw InputError("model requires a non-empty source sentence");
    }
}

} // namespace

DecodeResult decode(const ScoringModel& model, std::span<const TokenId> source,
                    const SearchConfig& config) {
    validate(config);
    if (is_shrinking(config.strategy)) {
        throw InputError("decode does not handle shrinking strategies; use shrinking_decode");
    }
    check_source(model, source);

    const LengthEstimate l =
        source.empty() ? LengthEstimate{0.0} : estimate_length(source.size(), config.length_ratio);
    const double r = config.reward;
    const bool bounded = is_bounded(config.strategy);
    const auto tracker_key = [&](const Hypothesis& h) {
        return bounded ? revised_score(h, r, l) : h.score;
    };

    Beam beam{0, {Hypothesis{}}, config.beam_size};
    BestTracker tracker;
    std::size_t items_expanded = 0;

    for (std::size_t i = 1; i <= config.max_steps; ++i) {
        BeamStep step = beam_step(model, source, beam, config.beam_size);
        items_expanded += step.scored;
        beam = std::move(step.beam);
        if (beam.empty()) return fallback(config, l, tracker, beam, i, items_expanded);

        for (const Hypothesis& h : beam.items) {
            if (h.completed) tracker = best_update(tracker, h, tracker_key);
        }

        StoppingDecision decision;
        switch (config.strategy) {
        case Strategy::Default:
            decision = stop_default(beam);
            break;
        case Strategy::Optimal:
            decision = stop_optimal(beam, tracker);
            break;
        case Strategy::OptimalBoundedFull:
            decision = stop_bounded_full(beam, i, r, l, tracker);
            break;
        case Strategy::OptimalBoundedSimplified:
            decision = stop_bounded_simplified(beam, r, l, tracker);
            break;
        default:
            assert(false);
        }
        if (decision.stop) {
            const Hypothesis& chosen =
                config.strategy == Strategy::Default ? beam.top() : *tracker.best;
            return finish(config, l, chosen, i, items_expanded, decision.reason);
        }
        if (!beam.any_partial()) {
            // Nothing left to expand, so the tracker best is final even
            // though the bounded criteria never fired.
            return finish(config, l, *tracker.best, i, items_expanded, StopReason::Certificate);
        }
    }
    return fallback(config, l, tracker, beam, config.max_steps, items_expanded);
}

DecodeResult shrinking_decode(const ScoringModel& model, std::span<const TokenId> source,
                              const SearchConfig& config, PoolRescorer rescorer) {
    validate(config);
    if (!is_shrinking(config.strategy)) {
        throw InputError("shrinking_decode requires a shrinking strategy");
    }
    check_source(model, source);

    const LengthEstimate l =
        source.empty() ? LengthEstimate{0.0} : estimate_length(source.size(), config.length_ratio);
    const auto pool_key = [&](const Hypothesis& h) {
        const auto len = static_cast<double>(h.output_length());
        if (rescorer == PoolRescorer::LengthNorm) {
            // max(1, len) keeps the empty output (just eos) comparable.
            return h.score / std::max(1.0, len);
        }
        return h.score + config.reward * len;
    };

    Beam beam{0, {Hypothesis{}}, config.beam_size};
    BestTracker pool;
    std::size_t width = config.beam_size;
    std::size_t items_expanded = 0;
    std::size_t last_step = 0;

    for (std::size_t i = 1; i <= config.max_steps && width > 0; ++i) {
        BeamStep step = beam_step(model, source, beam, width);
        items_expanded += step.scored;
        beam = std::move(step.beam);
        last_step = i;
        if (beam.empty()) break;

        for (const Hypothesis& h : beam.items) {
            if (!h.completed) continue;
            pool = best_update(pool, h, pool_key);
            if (width > 0) --width;
        }
        if (width == 0) {
            return finish(config, l, *pool.best, i, items_expanded, StopReason::ShrunkToZero);
        }
        if (!beam.any_partial()) break;
    }
    if (pool.defined()) {
        return finish(config, l, *pool.best, std::max(last_step, std::size_t{1}), items_expanded,
                      StopReason::MaxSteps);
    }
    return fallback(config, l, pool, beam, config.max_steps, items_expanded);
}

DecodeResult run(const ScoringModel& model, std::span<const TokenId> source,
                 const SearchConfig& config) {
    switch (config.strategy) {
    case Strategy::ShrinkLenNorm:
        return shrinking_decode(model, source, config, PoolRescorer::LengthNorm);
    case Strategy::ShrinkReward:
        return shrinking_decode(model, source, config, PoolRescorer::UnboundedReward);
    default:
        return decode(model, source, config);
    }
}

} // namespace optbeam
