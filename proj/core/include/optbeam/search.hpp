#pragma once

// Beam-search driver and stopping rules. The driver forms beam B_i, feeds
// every newly completed item to the best tracker, then evaluates the
// configured stopping rule; this order makes the certificate rules sound
// at the step where the top item itself completes.

#include "optbeam/core.hpp"
#include "optbeam/scoring.hpp"

#include <span>

namespace optbeam {

struct StoppingDecision {
    bool stop = false;
    StopReason reason = StopReason::MaxSteps;
};

/// Target output length in tokens, real-valued on purpose: rounding would
/// shift the bounded-criterion thresholds.
struct LengthEstimate {
    double l = 0.0;
};

/// l = ratio * source_len.
LengthEstimate estimate_length(std::size_t source_len, double ratio);

/// sc + r * min{l, len}; len is the output length excluding eos.
double revised_score(double sc, std::size_t len, double r, LengthEstimate l);
double revised_score(const Hypothesis& h, double r, LengthEstimate l);

struct BeamStep {
    Beam beam;
    std::size_t scored = 0; // candidates scored while forming the beam
};

/// Expands every partial item of `beam` by one token and keeps the top
/// `width` candidates. Completed items are not expanded and do not carry
/// over; a candidate that just generated eos competes for a slot like any
/// other. Candidates with score -inf are dropped.
BeamStep beam_step(const ScoringModel& model, std::span<const TokenId> source,
                   const Beam& beam, std::size_t width);

/// Stop iff the top item is completed (the OpenNMT-style baseline).
StoppingDecision stop_default(const Beam& beam);

/// Stop iff a completed hypothesis exists and the top item cannot beat it:
/// sc(B_{i,1}) <= best key. Tracker must hold plain scores.
StoppingDecision stop_optimal(const Beam& beam, const BestTracker& tracker);

/// Left side of the full bounded criterion,
/// sc(top) + r * (min{l, |y|} + max{l - step, 0}).
/// For a partial top |y| == step and the factor collapses to exactly l,
/// making the full and simplified left sides bitwise equal there.
double bounded_full_lhs(const Hypothesis& top, std::size_t step, double r, LengthEstimate l);

/// Bounded-reward certificate, full form:
/// revised(B_{i,1}) + r * max{l - i, 0} <= best key.
/// Tracker must hold revised scores.
StoppingDecision stop_bounded_full(const Beam& beam, std::size_t step, double r,
                                   LengthEstimate l, const BestTracker& tracker);

/// Bounded-reward certificate, simplified form:
/// sc(B_{i,1}) + r * l <= best key. Tracker must hold revised scores.
StoppingDecision stop_bounded_simplified(const Beam& beam, double r, LengthEstimate l,
                                         const BestTracker& tracker);

/// Runs beam search under one of the non-shrinking strategies. On a stop
/// the rule's designated hypothesis is returned (the beam top for the
/// default rule, the tracker best for certificate rules). If no rule fires
/// by max_steps, returns the tracker best when defined, else the top
/// partial with completed=false.
DecodeResult decode(const ScoringModel& model, std::span<const TokenId> source,
                    const SearchConfig& config);

enum class PoolRescorer {
    LengthNorm,      // sc(y) / |y|
    UnboundedReward, // sc(y) + r * |y|
};

/// Shrinking-beam baseline: each completion entering a beam moves to a
/// pool and permanently decrements the width; at width zero (or max_steps)
/// the pool argmax under the rescorer is returned.
DecodeResult shrinking_decode(const ScoringModel& model, std::span<const TokenId> source,
                              const SearchConfig& config, PoolRescorer rescorer);

/// Dispatches to decode or shrinking_decode based on config.strategy.
DecodeResult run(const ScoringModel& model, std::span<const TokenId> source,
                 const SearchConfig& config);

} // namespace optbeam
