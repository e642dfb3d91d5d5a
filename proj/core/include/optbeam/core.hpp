#pragma once

// Core value types for beam decoding: vocabulary, scored hypotheses,
// step-indexed beams, and the running best-completed tracker.
//
// Ordering is fully deterministic everywhere: hypotheses compare by score
// descending, with exact score ties broken by the lexicographically smaller
// token-id sequence. Every beam, every top-k selection, and every tracker
// update follows this one comparator, so repeated runs are bit-identical.

#include <cassert>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optbeam {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Recoverable bad-input condition (malformed files, invalid configs,
/// unknown symbols). Contract violations use assert instead.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Index into a Vocab.
struct TokenId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(const TokenId&, const TokenId&) = default;
};

/// Ordered set of distinct symbols plus a designated end-of-sequence token.
class Vocab {
public:
    Vocab(std::vector<std::string> symbols, const std::string& eos_symbol);

    std::size_t size() const { return symbols_.size(); }
    TokenId eos() const { return eos_; }
    const std::string& symbol(TokenId t) const;
    std::optional<TokenId> find(const std::string& symbol) const;
    /// Like find() but throws InputError for unknown symbols.
    TokenId require(const std::string& symbol) const;
    bool contains(TokenId t) const { return t.value < symbols_.size(); }

private:
    std::vector<std::string> symbols_;
    std::map<std::string, std::uint32_t> index_;
    TokenId eos_;
};

/// Generated symbol set for synthetic models: single letters for small
/// vocabularies ("a", "b", ...), "t<i>" beyond that, eos ("</s>") last.
Vocab default_vocab(std::size_t size);

/// A candidate output sequence with its cumulative log-probability.
/// Scores never increase along an extension chain (each factor is a
/// probability <= 1), which is what makes the stopping certificate sound.
struct Hypothesis {
    std::vector<TokenId> tokens;
    double score = 0.0;     // sum of next-token natural-log probabilities, <= 0
    bool completed = false; // true iff tokens ends with eos

    /// Step index at which this hypothesis was created; equals the token
    /// count (eos included for completed hypotheses).
    std::size_t step_created() const { return tokens.size(); }

    /// Output length |y|: tokens excluding eos. A partial item in the
    /// step-i beam has output_length() == i.
    std::size_t output_length() const {
        return completed ? tokens.size() - 1 : tokens.size();
    }
};

/// Appends one token. The new score is h.score + logp; the result is
/// completed iff t == eos. Extending a completed hypothesis is a
/// programming error.
Hypothesis extend(const Hypothesis& h, TokenId t, double logp, TokenId eos);

/// Deterministic order among equal scores. Only one policy is defined:
/// the lexicographically smaller token-id sequence ranks first.
enum class TieBreak { Lexicographic };

/// Strict "ranks ahead of" comparator: score descending, ties by token
/// sequence ascending. A strict total order on distinct sequences.
inline bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

/// Step-indexed, descending-sorted, capacity-bounded set of hypotheses.
/// Every item carries step_created() == step.
struct Beam {
    std::size_t step = 0;
    std::vector<Hypothesis> items; // sorted by hyp_before
    std::size_t capacity = 0;

    bool empty() const { return items.empty(); }
    const Hypothesis& top() const {
        assert(!items.empty());
        return items.front();
    }
    bool any_partial() const {
        for (const auto& h : items)
            if (!h.completed) return true;
        return false;
    }
};

/// Bounded selector keeping the k best hypotheses under hyp_before.
/// Heap-organized while filling; take() yields them descending-sorted.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

    void push(Hypothesis h);
    std::size_t size() const { return heap_.size(); }

    /// Sorted result, best first. Leaves the selector empty.
    std::vector<Hypothesis> take();

private:
    // heap root is the worst kept item
    static bool heap_order(const Hypothesis& a, const Hypothesis& b) {
        return hyp_before(a, b);
    }
    std::size_t k_;
    std::vector<Hypothesis> heap_;
};

/// The k highest-ranked candidates as a beam. All candidates must share
/// one step_created; k == 0 yields an empty beam (shrinking strategies
/// end there). Deterministic: equal inputs give identical beams.
Beam top_k(const std::vector<Hypothesis>& candidates, std::size_t k,
           TieBreak tie_break = TieBreak::Lexicographic);

/// Running best completed hypothesis under the active scorer. best_key is
/// the maximum scorer value over every completed hypothesis submitted so
/// far; undefined (best empty, key -inf) until the first completion.
struct BestTracker {
    std::optional<Hypothesis> best;
    double best_key = kNegInf;

    bool defined() const { return best.has_value(); }
};

/// Improvement-only update: replaces best iff scorer(h) strictly exceeds
/// best_key, so on an exact tie the earlier-found hypothesis is kept.
template <class ScoreFn>
BestTracker best_update(BestTracker tracker, const Hypothesis& h, ScoreFn&& scorer) {
    assert(h.completed);
    const double key = scorer(h);
    if (!tracker.best || key > tracker.best_key) {
        tracker.best = h;
        tracker.best_key = key;
    }
    return tracker;
}

enum class Strategy {
    Default,                  // stop when the top beam item is completed
    ShrinkLenNorm,            // shrinking beam, pool rescored by sc/|y|
    ShrinkReward,             // shrinking beam, pool rescored by sc + r*|y|
    Optimal,                  // certificate stop on plain scores
    OptimalBoundedFull,       // certificate with bounded reward, full form
    OptimalBoundedSimplified, // certificate with bounded reward, simplified form
};

const char* to_string(Strategy s);
std::optional<Strategy> strategy_from_string(const std::string& name);

inline bool is_shrinking(Strategy s) {
    return s == Strategy::ShrinkLenNorm || s == Strategy::ShrinkReward;
}
inline bool is_bounded(Strategy s) {
    return s == Strategy::OptimalBoundedFull || s == Strategy::OptimalBoundedSimplified;
}
/// Strategies whose stop is an optimality certificate.
inline bool is_certificate(Strategy s) {
    return s == Strategy::Optimal || is_bounded(s);
}
/// The per-token reward only affects bounded-certificate and
/// shrinking-reward runs; everywhere else it is ignored.
inline bool uses_reward(Strategy s) {
    return is_bounded(s) || s == Strategy::ShrinkReward;
}

struct SearchConfig {
    std::size_t beam_size = 1;
    Strategy strategy = Strategy::Optimal;
    double reward = 0.0;       // log-prob units per generated token, >= 0
    double length_ratio = 1.0; // target length per source token, > 0
    std::size_t max_steps = 50;
    TieBreak tie_break = TieBreak::Lexicographic;
};

/// Throws InputError on hard violations (zero beam, zero steps, negative
/// reward, non-positive ratio); returns human-readable warnings for legal
/// but ignored settings (e.g. a reward on a strategy that never reads it).
std::vector<std::string> validate(const SearchConfig& config);

enum class StopReason {
    Certificate,         // optimality certificate established
    DefaultTopCompleted, // top beam item completed (baseline criterion)
    ShrunkToZero,        // shrinking beam ran out of width
    MaxSteps,            // step budget exhausted, fallback result
};

const char* to_string(StopReason r);

/// Outcome of one decode. plain_score is sc(y); revised_score is
/// sc(y) + r*min{l, |y|} under the run's active reward and length
/// estimate (identical to plain_score when the reward is zero or ignored).
struct DecodeResult {
    Hypothesis hypothesis;
    double plain_score = kNegInf;
    double revised_score = kNegInf;
    std::size_t stop_step = 0;
    std::size_t items_expanded = 0; // candidates scored across all steps
    bool completed = false;         // false only on a no-completion fallback
    StopReason reason = StopReason::MaxSteps;
    SearchConfig config;            // echo of the driving configuration
    double length_estimate = 0.0;   // l = length_ratio * |source|

    Strategy strategy() const { return config.strategy; }
};

} // namespace optbeam
