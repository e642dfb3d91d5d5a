#pragma once

// Locally-normalized next-token scorers. Every model returns, for a
// (source, prefix) pair, one natural-log probability per vocab entry:
// finite entries log-sum to zero, every entry is <= 0, -inf marks a
// forbidden token, and identical inputs always produce identical vectors.

#include "optbeam/core.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <span>

namespace optbeam {

/// log(sum(exp(x))) over the finite entries, max-shifted; -inf if none.
double log_sum_exp(std::span<const double> logps);

/// Next-token distribution contract shared by all scorers.
class ScoringModel {
public:
    virtual ~ScoringModel() = default;

    virtual const Vocab& vocab() const = 0;

    /// True for models whose distribution reads the source sentence;
    /// decodes of such models reject an empty source.
    virtual bool requires_source() const { return false; }

    /// Log-probability vector over the vocab for the next token after
    /// `prefix`. The prefix must not contain eos; unknown token ids in
    /// source or prefix raise InputError.
    std::vector<double> next_logprobs(std::span<const TokenId> source,
                                      std::span<const TokenId> prefix) const;

protected:
    virtual std::vector<double> eval(std::span<const TokenId> source,
                                     std::span<const TokenId> prefix) const = 0;
};

/// Hand-specified distributions: one default row plus optional rows keyed
/// by the full prefix (no backoff). Rows are stored as log probabilities.
class TableModel : public ScoringModel {
public:
    TableModel(Vocab vocab, std::vector<double> default_probs,
               std::map<std::vector<TokenId>, std::vector<double>> context_probs = {});

    /// One row for every context, same distribution everywhere.
    static TableModel stationary(std::vector<double> probs);

    const Vocab& vocab() const override { return vocab_; }
    std::size_t context_count() const { return context_probs_.size(); }

    /// Linear-probability rows, for serialization.
    const std::vector<double>& default_probs() const { return default_probs_; }
    const std::map<std::vector<TokenId>, std::vector<double>>& context_probs() const {
        return context_probs_;
    }

protected:
    std::vector<double> eval(std::span<const TokenId> source,
                             std::span<const TokenId> prefix) const override;

private:
    Vocab vocab_;
    std::vector<double> default_probs_;
    std::vector<double> default_logps_;
    std::map<std::vector<TokenId>, std::vector<double>> context_probs_;
    std::map<std::vector<TokenId>, std::vector<double>> context_logps_;
};

/// Parses the table-model JSON schema:
///   {"vocab": [...], "eos": "</s>", "default": [...], "contexts": {"a b": [...]}}
/// Probabilities are linear; every row must sum to 1 within 1e-9, entries
/// in [0, 1]. Duplicate keys and unknown symbols are validation errors.
TableModel load_table_model(const std::string& json_text);
TableModel load_table_model_file(const std::string& path);
std::string table_model_to_json(const TableModel& model);

/// Hash-seeded random scorer. The distribution is a pure function of
/// (seed, source, prefix); eos probability follows a schedule that rises
/// with prefix length when eos_growth > 0, so decodes terminate.
class SeededModel : public ScoringModel {
public:
    SeededModel(std::size_t vocab_size, std::uint64_t seed,
                double concentration = 1.5, double eos_growth = 0.35);

    const Vocab& vocab() const override { return vocab_; }
    std::uint64_t seed() const { return seed_; }

    /// P(eos) after a prefix of the given length; depends on length only.
    double eos_probability(std::size_t prefix_len) const;

protected:
    std::vector<double> eval(std::span<const TokenId> source,
                             std::span<const TokenId> prefix) const override;

private:
    Vocab vocab_;
    std::uint64_t seed_;
    double concentration_;
    double eos_growth_;
    double eos_base_;
};

/// Parses "seeded:v=<int>,seed=<int>[,conc=<float>][,eosg=<float>]".
/// Malformed specs raise InputError naming the byte offset.
SeededModel make_seeded_model(const std::string& spec);

/// Token sequences of one corpus plus the vocab built from it
/// (symbols sorted, eos appended last).
struct Corpus {
    Vocab vocab;
    std::vector<std::vector<TokenId>> sentences; // without eos
};

/// One sentence per line, whitespace-tokenized; blank lines skipped.
Corpus load_corpus(std::istream& in);
Corpus load_corpus_file(const std::string& path);

/// Add-k smoothed n-gram scorer:
///   P(w | ctx) = (count(ctx, w) + k) / (count(ctx) + k*V)
/// with ctx the last n-1 prefix tokens (shorter near the start). Unseen
/// contexts give the uniform 1/V row.
class NgramModel : public ScoringModel {
public:
    const Vocab& vocab() const override { return vocab_; }
    int order() const { return order_; }
    double smoothing() const { return smoothing_; }

protected:
    std::vector<double> eval(std::span<const TokenId> source,
                             std::span<const TokenId> prefix) const override;

private:
    friend NgramModel train_ngram(const Corpus& corpus, int order, double smoothing);

    struct ContextCounts {
        std::vector<std::uint64_t> word; // per-token counts
        std::uint64_t total = 0;
    };

    NgramModel(Vocab vocab, int order, double smoothing)
        : vocab_(std::move(vocab)), order_(order), smoothing_(smoothing) {}

    Vocab vocab_;
    int order_;
    double smoothing_;
    std::map<std::vector<TokenId>, ContextCounts> counts_;
};

/// Counts every (context, word) event with eos appended to each sentence.
NgramModel train_ngram(const Corpus& corpus, int order, double smoothing);

/// Wraps a base scorer and boosts the source tokens near the diagonal
/// alignment position (output position +/- slack), renormalizing after
/// the boost. Output length then tracks source length, which makes
/// length-targeted decoding observable on synthetic models.
class CopyChannelModel : public ScoringModel {
public:
    CopyChannelModel(std::shared_ptr<const ScoringModel> base, double copy_bias,
                     std::size_t slack);

    const Vocab& vocab() const override { return base_->vocab(); }
    bool requires_source() const override { return true; }

protected:
    std::vector<double> eval(std::span<const TokenId> source,
                             std::span<const TokenId> prefix) const override;

private:
    std::shared_ptr<const ScoringModel> base_;
    double copy_bias_;
    std::size_t slack_;
};

/// Resolves a model reference: a spec string ("seeded:...", "copy:...",
/// "ngram:...", "table:...") or a path to a table-model JSON file.
std::shared_ptr<ScoringModel> make_model(const std::string& spec_or_path);

/// Builds a TableModel from an inline spec ("table:stationary,p...") or by
/// materializing another spec's distributions for prefixes up to `depth`
/// against a fixed source.
TableModel materialize_table_model(const std::string& spec, std::size_t depth = 3,
                                   std::span<const TokenId> source = {});

} // namespace optbeam
