#pragma once

// Brute-force references the certificate strategies are tested against:
// a global exhaustive maximizer and a stop-free beam trace that records
// every completed hypothesis any beam ever admitted.

#include "optbeam/core.hpp"
#include "optbeam/scoring.hpp"
#include "optbeam/search.hpp"

#include <optional>

namespace optbeam {

/// Completed-hypothesis scorer for the oracles: sc + r * min{l, |y|},
/// plain when r == 0.
struct ScorerSpec {
    double r = 0.0;
    double l = 0.0;

    static ScorerSpec plain() { return {}; }
    static ScorerSpec revised(double reward, LengthEstimate estimate) {
        return {reward, estimate.l};
    }

    double operator()(const Hypothesis& h) const {
        return revised_score(h, r, LengthEstimate{l});
    }
};

/// Depth-first enumeration of every completed hypothesis with output
/// length <= max_len (tokens visited in ascending id order); returns the
/// scorer argmax, ties to the lexicographically smaller token sequence.
/// Pruning drops branches whose score bound cannot beat the incumbent and
/// never changes the result. Throws InputError when no completion exists
/// within the bound.
Hypothesis exhaustive_best(const ScoringModel& model, std::span<const TokenId> source,
                           std::size_t max_len, ScorerSpec scorer, bool prune = true);

/// Everything observable about one beam step, for criterion comparisons.
struct StepRecord {
    std::size_t step = 0;
    double top_score = kNegInf; // plain sc of the top item
    bool top_completed = false;
    double best_plain = kNegInf;   // plain tracker key after this step's updates
    double best_revised = kNegInf; // revised tracker key, same point
    double lhs_full = kNegInf;     // full bounded-criterion left side
    double lhs_simplified = kNegInf;
    bool fire_default = false;
    bool fire_optimal = false;
    bool fire_full = false;
    bool fire_simplified = false;
};

struct CompletedEntry {
    Hypothesis hypothesis;
    double plain = kNegInf;
    double revised = kNegInf;
};

/// Record of a beam run to max_steps with every stopping rule evaluated
/// passively. `completed` holds each completed hypothesis at the step it
/// first entered a beam; a repeat entry would break the expansion rules,
/// so it is flagged rather than silently dropped.
struct TraceReport {
    std::vector<StepRecord> steps;
    std::vector<CompletedEntry> completed;
    std::optional<Hypothesis> best_plain;
    std::optional<Hypothesis> best_revised;
    double best_plain_key = kNegInf;
    double best_revised_key = kNegInf;
    bool duplicate_completion = false;

    /// First step where the given strategy's criterion held, if any.
    std::optional<std::size_t> first_fire(Strategy strategy) const;
};

/// Runs the beam to max_steps (or until no partial item remains) with the
/// same expansion code as decode but no stopping.
TraceReport beam_trace(const ScoringModel& model, std::span<const TokenId> source,
                       std::size_t b, std::size_t max_steps, double r = 0.0, double l = 0.0);

/// Machine-readable outcome of checking one decode against the trace.
struct Verdict {
    bool pass = false;
    bool score_matches = false; // decode score == trace max, matching scorer
    bool early_stop_ok = false; // stop step <= default first fire (optimal only)
    double decode_score = kNegInf;
    double trace_best = kNegInf;
    bool decode_completed = false;
    bool trace_has_completion = false;
    std::size_t stop_step = 0;
    std::optional<std::size_t> default_fire;
    Strategy strategy = Strategy::Optimal;
};

/// Decodes under a certificate strategy and compares against beam_trace.
/// Failures are reported in the verdict, never thrown.
Verdict verify_optimality(const ScoringModel& model, std::span<const TokenId> source,
                          const SearchConfig& config);

} // namespace optbeam
