#include "optbeam/core.hpp"

#include <algorithm>
#include <map>

namespace optbeam {

namespace {

std::map<std::string, std::uint32_t> build_index(const std::vector<std::string>& symbols) {
    std::map<std::string, std::uint32_t> index;
    for (std::uint32_t i = 0; i < symbols.size(); ++i) {
        auto [it, inserted] = index.emplace(symbols[i], i);
        if (!inserted)
            throw InputError("vocab: duplicate symbol '" + symbols[i] + "'");
    }
    return index;
}

} // namespace

Vocab::Vocab(std::vector<std::string> symbols, const std::string& eos_symbol)
    : symbols_(std::move(symbols)), index_(build_index(symbols_)) {
    if (symbols_.empty()) throw InputError("vocab: empty symbol list");
    auto it = index_.find(eos_symbol);
    if (it == index_.end())
        throw InputError("vocab: eos symbol '" + eos_symbol + "' not in symbol list");
    eos_ = TokenId{it->second};
}

const std::string& Vocab::symbol(TokenId t) const {
    assert(t.value < symbols_.size());
    return symbols_[t.value];
}

std::optional<TokenId> Vocab::find(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) return std::nullopt;
    return TokenId{it->second};
}

TokenId Vocab::require(const std::string& symbol) const {
    if (auto t = find(symbol)) return *t;
    throw InputError("unknown symbol '" + symbol + "'");
}

Vocab default_vocab(std::size_t size) {
    if (size == 0) throw InputError("vocab size must be >= 1");
    std::vector<std::string> symbols;
    symbols.reserve(size);
    for (std::size_t i = 0; i + 1 < size; ++i) {
        if (size <= 27)
            symbols.push_back(std::string(1, static_cast<char>('a' + i)));
        else
            symbols.push_back("t" + std::to_string(i));
    }
    symbols.push_back("</s>");
    return Vocab(std::move(symbols), "</s>");
}

Hypothesis extend(const Hypothesis& h, TokenId t, double logp, TokenId eos) {
    assert(!h.completed);       // extending a finished hypothesis is a bug
    assert(!(logp > 0.0));      // log of a probability; -inf is legal
    Hypothesis out;
    out.tokens.reserve(h.tokens.size() + 1);
    out.tokens = h.tokens;
    out.tokens.push_back(t);
    out.score = h.score + logp;
    out.completed = (t == eos);
    return out;
}

void TopK::push(Hypothesis h) {
    if (k_ == 0) return;
    if (heap_.size() < k_) {
        heap_.push_back(std::move(h));
        std::push_heap(heap_.begin(), heap_.end(), heap_order);
        return;
    }
    // replace the worst kept item if the candidate ranks ahead of it
    if (hyp_before(h, heap_.front())) {
        std::pop_heap(heap_.begin(), heap_.end(), heap_order);
        heap_.back() = std::move(h);
        std::push_heap(heap_.begin(), heap_.end(), heap_order);
    }
}

std::vector<Hypothesis> TopK::take() {
    std::sort(heap_.begin(), heap_.end(), hyp_before);
    return std::exchange(heap_, {});
}

Beam top_k(const std::vector<Hypothesis>& candidates, std::size_t k, TieBreak tie_break) {
    (void)tie_break; // single policy; kept in the signature for intent
#ifndef NDEBUG
    for (const auto& c : candidates)
        assert(c.step_created() == candidates.front().step_created());
#endif
    Beam beam;
    beam.step = candidates.empty() ? 0 : candidates.front().step_created();
    beam.capacity = k;
    TopK selector(k);
    for (const auto& c : candidates) selector.push(c);
    beam.items = selector.take();
    return beam;
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::Default: return "default";
        case Strategy::ShrinkLenNorm: return "shrink_lennorm";
        case Strategy::ShrinkReward: return "shrink_reward";
        case Strategy::Optimal: return "optimal";
        case Strategy::OptimalBoundedFull: return "optimal_bounded_full";
        case Strategy::OptimalBoundedSimplified: return "optimal_bounded_simplified";
    }
    return "unknown";
}

std::optional<Strategy> strategy_from_string(const std::string& name) {
    for (Strategy s : {Strategy::Default, Strategy::ShrinkLenNorm, Strategy::ShrinkReward,
                       Strategy::Optimal, Strategy::OptimalBoundedFull,
                       Strategy::OptimalBoundedSimplified}) {
        if (name == to_string(s)) return s;
    }
    return std::nullopt;
}

const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::Certificate: return "certificate";
        case StopReason::DefaultTopCompleted: return "default_top_completed";
        case StopReason::ShrunkToZero: return "shrunk_to_zero";
        case StopReason::MaxSteps: return "max_steps";
    }
    return "unknown";
}

std::vector<std::string> validate(const SearchConfig& config) {
    if (config.beam_size == 0) throw InputError("config: beam_size must be >= 1");
    if (config.max_steps == 0) throw InputError("config: max_steps must be >= 1");
    if (!(config.reward >= 0.0)) throw InputError("config: reward must be >= 0");
    if (!(config.length_ratio > 0.0)) throw InputError("config: length_ratio must be > 0");

    std::vector<std::string> warnings;
    if (config.reward > 0.0 && !uses_reward(config.strategy)) {
        warnings.push_back(std::string("reward ") + std::to_string(config.reward) +
                           " is ignored by strategy " + to_string(config.strategy));
    }
    return warnings;
}

} // namespace optbeam
