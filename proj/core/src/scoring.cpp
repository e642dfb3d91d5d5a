#include "optbeam/scoring.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace optbeam {

namespace {

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

std::string join_symbols(const Vocab& vocab, const std::vector<TokenId>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += vocab.symbol(tokens[i]);
    }
    return out;
}

std::vector<double> probs_to_logps(const std::vector<double>& probs, std::size_t vocab_size,
                                   const std::string& where) {
    if (probs.size() != vocab_size) {
        throw InputError("row for " + where + " has " + std::to_string(probs.size()) +
                         " entries, vocab has " + std::to_string(vocab_size));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !(p <= 1.0)) {
            throw InputError("row for " + where + " has probability " + fmt_double(p) +
                             " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InputError("row for " + where + " sums to " + fmt_double(sum) + ", expected 1");
    }
    std::vector<double> logps(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        logps[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
    }
    return logps;
}

void check_token_ids(std::span<const TokenId> tokens, std::size_t vocab_size,
                     const char* what) {
    for (TokenId t : tokens) {
        if (t.value >= vocab_size) {
            throw InputError(std::string("unknown token id ") + std::to_string(t.value) +
                             " in " + what);
        }
    }
}

// splitmix64 finalizer; the avalanche makes short token chains decorrelate.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_chain(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

constexpr std::uint64_t kSpanBreak = 0x517cc1b727220a95ULL;

nlohmann::json parse_json_checked(const std::string& text, const std::string& what) {
    // The callback rejects duplicate keys per object scope; nlohmann's
    // parser would otherwise keep the last occurrence silently.
    std::vector<std::set<std::string>> scopes;
    std::string duplicate;
    auto cb = [&](int, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
        using Event = nlohmann::json::parse_event_t;
        if (event == Event::object_start) {
            scopes.emplace_back();
        } else if (event == Event::object_end) {
            scopes.pop_back();
        } else if (event == Event::key) {
            const auto key = parsed.get<std::string>();
            if (!scopes.back().insert(key).second && duplicate.empty()) duplicate = key;
        }
        return true;
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text, cb);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(what + ": " + e.what());
    }
    if (!duplicate.empty()) throw InputError(what + ": duplicate key '" + duplicate + "'");
    return doc;
}

} // namespace

double log_sum_exp(std::span<const double> logps) {
    double m = kNegInf;
    for (double x : logps) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double sum = 0.0;
    for (double x : logps) {
        if (x != kNegInf) sum += std::exp(x - m);
    }
    return m + std::log(sum);
}

std::vector<double> ScoringModel::next_logprobs(std::span<const TokenId> source,
                                                std::span<const TokenId> prefix) const {
    const std::size_t v = vocab().size();
    check_token_ids(source, v, "source");
    check_token_ids(prefix, v, "prefix");
    for (TokenId t : prefix) assert(t != vocab().eos());
    return eval(source, prefix);
}

TableModel::TableModel(Vocab vocab, std::vector<double> default_probs,
                       std::map<std::vector<TokenId>, std::vector<double>> context_probs)
    : vocab_(std::move(vocab)),
      default_probs_(std::move(default_probs)),
      context_probs_(std::move(context_probs)) {
    default_logps_ = probs_to_logps(default_probs_, vocab_.size(), "default");
    for (const auto& [key, probs] : context_probs_) {
        check_token_ids(key, vocab_.size(), "context key");
        context_logps_.emplace(
            key, probs_to_logps(probs, vocab_.size(),
                                "context '" + join_symbols(vocab_, key) + "'"));
    }
}

TableModel TableModel::stationary(std::vector<double> probs) {
    const std::size_t size = probs.size();
    return TableModel(default_vocab(size), std::move(probs));
}

std::vector<double> TableModel::eval(std::span<const TokenId>,
                                     std::span<const TokenId> prefix) const {
    auto it = context_logps_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
    if (it != context_logps_.end()) return it->second;
    return default_logps_;
}

TableModel load_table_model(const std::string& json_text) {
    nlohmann::json doc = parse_json_checked(json_text, "table model");
    if (!doc.is_object()) throw InputError("table model: top level must be an object");
    for (const char* field : {"vocab", "eos", "default"}) {
        if (!doc.contains(field)) {
            throw InputError(std::string("table model: missing field '") + field + "'");
        }
    }
    std::vector<std::string> symbols;
    try {
        symbols = doc.at("vocab").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("table model: 'vocab' must be an array of strings");
    }
    if (!doc.at("eos").is_string()) throw InputError("table model: 'eos' must be a string");
    Vocab vocab(std::move(symbols), doc.at("eos").get<std::string>());

    auto read_row = [&](const nlohmann::json& node, const std::string& where) {
        std::vector<double> probs;
        try {
            probs = node.get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw InputError("table model: row for " + where + " must be an array of numbers");
        }
        return probs;
    };

    std::vector<double> default_probs = read_row(doc.at("default"), "default");
    std::map<std::vector<TokenId>, std::vector<double>> contexts;
    if (doc.contains("contexts")) {
        const auto& ctx_node = doc.at("contexts");
        if (!ctx_node.is_object()) throw InputError("table model: 'contexts' must be an object");
        for (const auto& [key, row] : ctx_node.items()) {
            std::vector<TokenId> tokens;
            std::istringstream words(key);
            std::string word;
            while (words >> word) tokens.push_back(vocab.require(word));
            if (!contexts.emplace(std::move(tokens), read_row(row, "context '" + key + "'"))
                     .second) {
                throw InputError("table model: duplicate context '" + key + "'");
            }
        }
    }
    return TableModel(std::move(vocab), std::move(default_probs), std::move(contexts));
}

TableModel load_table_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return load_table_model(text.str());
}

std::string table_model_to_json(const TableModel& model) {
    const Vocab& vocab = model.vocab();
    nlohmann::ordered_json doc;
    auto& symbols = doc["vocab"] = nlohmann::ordered_json::array();
    for (std::uint32_t i = 0; i < vocab.size(); ++i) symbols.push_back(vocab.symbol(TokenId{i}));
    doc["eos"] = vocab.symbol(vocab.eos());
    doc["default"] = model.default_probs();
    auto& contexts = doc["contexts"] = nlohmann::ordered_json::object();
    for (const auto& [key, probs] : model.context_probs()) {
        contexts[join_symbols(vocab, key)] = probs;
    }
    return doc.dump(2) + "\n";
}

SeededModel::SeededModel(std::size_t vocab_size, std::uint64_t seed, double concentration,
                         double eos_growth)
    : vocab_(default_vocab(vocab_size)),
      seed_(seed),
      concentration_(concentration),
      eos_growth_(eos_growth),
      eos_base_(1.0 / (static_cast<double>(vocab_size) + 1.0)) {
    if (!(concentration > 0.0)) throw InputError("seeded model: conc must be positive");
    if (!(eos_growth >= 0.0)) throw InputError("seeded model: eosg must be non-negative");
}

double SeededModel::eos_probability(std::size_t prefix_len) const {
    return 1.0 - (1.0 - eos_base_) *
                     std::exp(-eos_growth_ * static_cast<double>(prefix_len));
}

std::vector<double> SeededModel::eval(std::span<const TokenId> source,
                                      std::span<const TokenId> prefix) const {
    const std::size_t v = vocab_.size();
    if (v == 1) return {0.0};

    std::uint64_t h = mix64(seed_);
    for (TokenId t : source) h = hash_chain(h, t.value + 1);
    h = hash_chain(h, kSpanBreak);
    for (TokenId t : prefix) h = hash_chain(h, t.value + 1);

    std::mt19937_64 gen(h);
    const TokenId eos = vocab_.eos();
    std::vector<double> weights(v, 0.0);
    double total = 0.0;
    for (std::uint32_t i = 0; i < v; ++i) {
        if (TokenId{i} == eos) continue;
        // u in (0, 1], so u^conc keeps every weight strictly positive.
        const double u = static_cast<double>((gen() >> 11) + 1) * 0x1.0p-53;
        weights[i] = std::pow(u, concentration_);
        total += weights[i];
    }
    const double p_eos = eos_probability(prefix.size());
    std::vector<double> logps(v);
    for (std::uint32_t i = 0; i < v; ++i) {
        logps[i] = TokenId{i} == eos ? std::log(p_eos)
                                     : std::log((1.0 - p_eos) * weights[i] / total);
    }
    return logps;
}

namespace {

[[noreturn]] void spec_error(const std::string& spec, std::size_t offset,
                             const std::string& message) {
    throw InputError("model spec '" + spec + "': " + message + " at offset " +
                     std::to_string(offset));
}

// key=value fields separated by commas, starting at `pos`.
std::vector<std::pair<std::string, std::pair<std::string, std::size_t>>>
parse_fields(const std::string& spec, std::size_t pos) {
    std::vector<std::pair<std::string, std::pair<std::string, std::size_t>>> fields;
    while (pos < spec.size()) {
        const std::size_t eq = spec.find('=', pos);
        const std::size_t comma = spec.find(',', pos);
        if (eq == std::string::npos || (comma != std::string::npos && comma < eq)) {
            spec_error(spec, pos, "expected key=value");
        }
        const std::string key = spec.substr(pos, eq - pos);
        if (key.empty()) spec_error(spec, pos, "empty key");
        const std::size_t end = comma == std::string::npos ? spec.size() : comma;
        fields.emplace_back(key, std::make_pair(spec.substr(eq + 1, end - eq - 1), eq + 1));
        if (comma != std::string::npos && comma + 1 == spec.size()) {
            spec_error(spec, comma + 1, "trailing comma");
        }
        pos = end == spec.size() ? end : end + 1;
    }
    return fields;
}

std::uint64_t parse_u64(const std::string& spec, const std::string& text, std::size_t offset) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        spec_error(spec, offset, "expected integer, got '" + text + "'");
    }
    return value;
}

double parse_f64(const std::string& spec, const std::string& text, std::size_t offset) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        spec_error(spec, offset, "expected number, got '" + text + "'");
    }
    return value;
}

} // namespace

SeededModel make_seeded_model(const std::string& spec) {
    constexpr std::string_view kPrefix = "seeded:";
    if (!spec.starts_with(kPrefix)) spec_error(spec, 0, "expected 'seeded:' prefix");

    std::optional<std::uint64_t> v, seed;
    std::optional<double> conc, eosg;
    for (const auto& [key, value] : parse_fields(spec, kPrefix.size())) {
        const auto& [text, offset] = value;
        if (key == "v") {
            if (v) spec_error(spec, offset, "duplicate field 'v'");
            v = parse_u64(spec, text, offset);
            if (*v == 0) spec_error(spec, offset, "v must be >= 1");
        } else if (key == "seed") {
            if (seed) spec_error(spec, offset, "duplicate field 'seed'");
            seed = parse_u64(spec, text, offset);
        } else if (key == "conc") {
            if (conc) spec_error(spec, offset, "duplicate field 'conc'");
            conc = parse_f64(spec, text, offset);
        } else if (key == "eosg") {
            if (eosg) spec_error(spec, offset, "duplicate field 'eosg'");
            eosg = parse_f64(spec, text, offset);
        } else {
            spec_error(spec, offset, "unknown field '" + key + "'");
        }
    }
    if (!v) spec_error(spec, spec.size(), "missing field 'v'");
    if (!seed) spec_error(spec, spec.size(), "missing field 'seed'");
    return SeededModel(*v, *seed, conc.value_or(1.5), eosg.value_or(0.35));
}

Corpus load_corpus(std::istream& in) {
    std::vector<std::vector<std::string>> sentences;
    std::set<std::string> symbols;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream words(line);
        std::vector<std::string> sentence;
        std::string word;
        while (words >> word) {
            symbols.insert(word);
            sentence.push_back(std::move(word));
        }
        if (!sentence.empty()) sentences.push_back(std::move(sentence));
    }
    std::vector<std::string> ordered(symbols.begin(), symbols.end());
    ordered.emplace_back("</s>");
    Corpus corpus{Vocab(std::move(ordered), "</s>"), {}};
    for (const auto& sentence : sentences) {
        std::vector<TokenId> tokens;
        tokens.reserve(sentence.size());
        for (const auto& word : sentence) tokens.push_back(corpus.vocab.require(word));
        corpus.sentences.push_back(std::move(tokens));
    }
    return corpus;
}

Corpus load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus file '" + path + "'");
    return load_corpus(in);
}

std::vector<double> NgramModel::eval(std::span<const TokenId>,
                                     std::span<const TokenId> prefix) const {
    const std::size_t v = vocab_.size();
    const std::size_t ctx_len =
        std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), prefix.size());
    const std::vector<TokenId> ctx(prefix.end() - static_cast<std::ptrdiff_t>(ctx_len),
                                   prefix.end());
    const auto it = counts_.find(ctx);
    const double total = it == counts_.end() ? 0.0 : static_cast<double>(it->second.total);
    const double denom = total + smoothing_ * static_cast<double>(v);
    std::vector<double> logps(v);
    for (std::uint32_t i = 0; i < v; ++i) {
        const double count =
            it == counts_.end() ? 0.0 : static_cast<double>(it->second.word[i]);
        logps[i] = std::log((count + smoothing_) / denom);
    }
    return logps;
}

NgramModel train_ngram(const Corpus& corpus, int order, double smoothing) {
    if (corpus.sentences.empty()) throw InputError("n-gram training corpus is empty");
    if (order < 1) throw InputError("n-gram order must be >= 1");
    if (!(smoothing > 0.0)) throw InputError("n-gram smoothing must be positive");

    NgramModel model(corpus.vocab, order, smoothing);
    const std::size_t v = corpus.vocab.size();
    for (const auto& sentence : corpus.sentences) {
        std::vector<TokenId> tokens = sentence;
        tokens.push_back(corpus.vocab.eos());
        for (std::size_t j = 0; j < tokens.size(); ++j) {
            const std::size_t ctx_len = std::min<std::size_t>(static_cast<std::size_t>(order - 1), j);
            std::vector<TokenId> ctx(tokens.begin() + static_cast<std::ptrdiff_t>(j - ctx_len),
                                     tokens.begin() + static_cast<std::ptrdiff_t>(j));
            auto& counts = model.counts_[std::move(ctx)];
            if (counts.word.empty()) counts.word.resize(v, 0);
            ++counts.word[tokens[j].value];
            ++counts.total;
        }
    }
    return model;
}

CopyChannelModel::CopyChannelModel(std::shared_ptr<const ScoringModel> base, double copy_bias,
                                   std::size_t slack)
    : base_(std::move(base)), copy_bias_(copy_bias), slack_(slack) {
    if (!base_) throw InputError("copy channel: base model is null");
    if (!(copy_bias >= 0.0)) throw InputError("copy channel: bias must be non-negative");
}

std::vector<double> CopyChannelModel::eval(std::span<const TokenId> source,
                                           std::span<const TokenId> prefix) const {
    std::vector<double> logps = base_->next_logprobs(source, prefix);
    const std::size_t pos = prefix.size();
    const std::size_t lo = pos > slack_ ? pos - slack_ : 0;
    const std::size_t hi = std::min(source.size(), pos + slack_ + 1);
    std::vector<bool> boosted(logps.size(), false);
    bool any = false;
    for (std::size_t p = lo; p < hi; ++p) {
        const TokenId t = source[p];
        if (t == vocab().eos() || boosted[t.value]) continue;
        boosted[t.value] = true;
        logps[t.value] += copy_bias_;
        any = true;
    }
    if (any) {
        const double norm = log_sum_exp(logps);
        for (double& x : logps) {
            if (x != kNegInf) x -= norm;
        }
    }
    return logps;
}

namespace {

TableModel make_table_from_spec(const std::string& spec) {
    constexpr std::string_view kPrefix = "table:";
    std::size_t pos = kPrefix.size();
    const std::size_t comma = spec.find(',', pos);
    const std::string kind = spec.substr(pos, comma - pos);
    if (kind != "stationary") spec_error(spec, pos, "unknown table kind '" + kind + "'");
    if (comma == std::string::npos) spec_error(spec, spec.size(), "missing probabilities");
    std::vector<double> probs;
    pos = comma + 1;
    while (pos <= spec.size()) {
        const std::size_t end = std::min(spec.find(',', pos), spec.size());
        probs.push_back(parse_f64(spec, spec.substr(pos, end - pos), pos));
        pos = end + 1;
    }
    return TableModel::stationary(std::move(probs));
}

std::shared_ptr<ScoringModel> make_copy_model(const std::string& spec) {
    // base specs contain commas, so bias/slack are anchored from the right.
    constexpr std::string_view kPrefix = "copy:base=";
    if (!spec.starts_with(kPrefix)) spec_error(spec, 5, "expected 'base=' field");
    const std::size_t slack_pos = spec.rfind(",slack=");
    if (slack_pos == std::string::npos) spec_error(spec, spec.size(), "missing field 'slack'");
    const std::size_t bias_pos = spec.rfind(",bias=", slack_pos);
    if (bias_pos == std::string::npos) spec_error(spec, spec.size(), "missing field 'bias'");
    const std::string base = spec.substr(kPrefix.size(), bias_pos - kPrefix.size());
    if (base.empty()) spec_error(spec, kPrefix.size(), "empty base spec");
    const double bias =
        parse_f64(spec, spec.substr(bias_pos + 6, slack_pos - bias_pos - 6), bias_pos + 6);
    const std::uint64_t slack =
        parse_u64(spec, spec.substr(slack_pos + 7), slack_pos + 7);
    return std::make_shared<CopyChannelModel>(make_model(base), bias,
                                              static_cast<std::size_t>(slack));
}

std::shared_ptr<ScoringModel> make_ngram_model(const std::string& spec) {
    constexpr std::string_view kPrefix = "ngram:";
    std::optional<std::string> corpus_path;
    std::optional<std::uint64_t> order;
    std::optional<double> smoothing;
    for (const auto& [key, value] : parse_fields(spec, kPrefix.size())) {
        const auto& [text, offset] = value;
        if (key == "corpus") {
            corpus_path = text;
        } else if (key == "n") {
            order = parse_u64(spec, text, offset);
        } else if (key == "k") {
            smoothing = parse_f64(spec, text, offset);
        } else {
            spec_error(spec, offset, "unknown field '" + key + "'");
        }
    }
    if (!corpus_path) spec_error(spec, spec.size(), "missing field 'corpus'");
    const Corpus corpus = load_corpus_file(*corpus_path);
    return std::make_shared<NgramModel>(
        train_ngram(corpus, static_cast<int>(order.value_or(2)), smoothing.value_or(1.0)));
}

} // namespace

std::shared_ptr<ScoringModel> make_model(const std::string& spec_or_path) {
    if (spec_or_path.starts_with("seeded:")) {
        return std::make_shared<SeededModel>(make_seeded_model(spec_or_path));
    }
    if (spec_or_path.starts_with("copy:")) return make_copy_model(spec_or_path);
    if (spec_or_path.starts_with("table:")) {
        return std::make_shared<TableModel>(make_table_from_spec(spec_or_path));
    }
    if (spec_or_path.starts_with("ngram:")) return make_ngram_model(spec_or_path);
    return std::make_shared<TableModel>(load_table_model_file(spec_or_path));
}

TableModel materialize_table_model(const std::string& spec, std::size_t depth,
                                   std::span<const TokenId> source) {
    const auto model = make_model(spec);
    if (const auto* table = dynamic_cast<const TableModel*>(model.get())) return *table;

    const Vocab& vocab = model->vocab();
    const std::size_t v = vocab.size();
    auto row_for = [&](const std::vector<TokenId>& prefix) {
        std::vector<double> logps = model->next_logprobs(source, prefix);
        std::vector<double> probs(logps.size());
        for (std::size_t i = 0; i < logps.size(); ++i) {
            probs[i] = logps[i] == kNegInf ? 0.0 : std::exp(logps[i]);
        }
        return probs;
    };

    std::map<std::vector<TokenId>, std::vector<double>> contexts;
    std::vector<std::vector<TokenId>> frontier{{}};
    for (std::size_t len = 1; len <= depth; ++len) {
        std::vector<std::vector<TokenId>> next;
        for (const auto& prefix : frontier) {
            for (std::uint32_t i = 0; i < v; ++i) {
                if (TokenId{i} == vocab.eos()) continue;
                std::vector<TokenId> extended = prefix;
                extended.push_back(TokenId{i});
                contexts.emplace(extended, row_for(extended));
                next.push_back(std::move(extended));
            }
        }
        frontier = std::move(next);
        if (contexts.size() > 20000) {
            throw InputError("materializing '" + spec + "' exceeds the context budget");
        }
    }
    Vocab vocab_copy = vocab;
    return TableModel(std::move(vocab_copy), row_for({}), std::move(contexts));
}

} // namespace optbeam
