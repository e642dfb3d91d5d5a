#include "optbeam/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace optbeam {

namespace {

std::string fmt6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

struct SourceFile {
    std::vector<std::string> raw;
    std::vector<std::vector<TokenId>> tokens;
};

SourceFile load_sources(const std::string& path, const Vocab& vocab) {
    if (path.empty()) throw InputError("a source file is required");
    SourceFile file;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        try {
            file.tokens.push_back(tokenize_line(vocab, line));
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        file.raw.push_back(line);
    }
    return file;
}

LineRecord decode_line(const ScoringModel& model, const std::string& raw,
                       std::span<const TokenId> source, const SearchConfig& config) {
    LineRecord record;
    record.source = raw;
    record.source_len = source.size();
    record.result = run(model, source, config);
    const Vocab& vocab = model.vocab();
    for (TokenId t : record.result.hypothesis.tokens) {
        if (t == vocab.eos()) continue;
        record.tokens.push_back(vocab.symbol(t));
    }
    return record;
}

std::vector<Strategy> sorted_strategies(std::vector<Strategy> strategies) {
    std::sort(strategies.begin(), strategies.end(), [](Strategy a, Strategy b) {
        return std::string_view(to_string(a)) < std::string_view(to_string(b));
    });
    strategies.erase(std::unique(strategies.begin(), strategies.end()), strategies.end());
    return strategies;
}

template <class T>
std::vector<T> sorted_unique(std::vector<T> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

void emit_warnings(const SearchConfig& config, std::set<std::string>& seen, std::ostream& err) {
    for (const std::string& warning : validate(config)) {
        if (seen.insert(warning).second) err << "warning: " << warning << "\n";
    }
}

struct GridCell {
    CompareRow row;
    std::vector<LineRecord> records;
};

std::vector<GridCell> run_grid(const RunSpec& spec, std::ostream& err) {
    const auto model = make_model(spec.model);
    const SourceFile sources = load_sources(spec.source_path, model->vocab());
    std::set<std::string> warned;
    std::vector<GridCell> cells;
    for (Strategy strategy : sorted_strategies(spec.strategies)) {
        for (std::size_t b : sorted_unique(spec.beam_sizes)) {
            for (double r : sorted_unique(spec.rewards)) {
                SearchConfig config;
                config.beam_size = b;
                config.strategy = strategy;
                config.reward = r;
                config.length_ratio = spec.length_ratio;
                config.max_steps = spec.max_steps;
                emit_warnings(config, warned, err);
                GridCell cell;
                for (std::size_t i = 0; i < sources.raw.size(); ++i) {
                    cell.records.push_back(
                        decode_line(*model, sources.raw[i], sources.tokens[i], config));
                }
                cell.row = aggregate(strategy, b, r, cell.records);
                cells.push_back(std::move(cell));
            }
        }
    }
    return cells;
}

void emit_cells(const std::vector<GridCell>& cells, Format format, std::ostream& out) {
    if (format == Format::Jsonl) {
        for (const GridCell& cell : cells) {
            for (const LineRecord& record : cell.records) out << to_jsonl(record) << "\n";
        }
        return;
    }
    out << csv_header() << "\n";
    for (const GridCell& cell : cells) {
        if (cell.row.lines > 0) out << to_csv(cell.row) << "\n";
    }
}

} // namespace

std::vector<TokenId> tokenize_line(const Vocab& vocab, const std::string& line) {
    std::istringstream words(line);
    std::string word;
    std::vector<TokenId> tokens;
    while (words >> word) tokens.push_back(vocab.require(word));
    return tokens;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open source file '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
    }
    return lines;
}

std::string to_jsonl(const LineRecord& record) {
    nlohmann::ordered_json obj;
    obj["source"] = record.source;
    obj["tokens"] = record.tokens;
    obj["score"] = record.result.plain_score;
    obj["revised_score"] = record.result.revised_score;
    obj["stop_step"] = record.result.stop_step;
    obj["items_expanded"] = record.result.items_expanded;
    obj["completed"] = record.result.completed;
    obj["strategy"] = to_string(record.result.strategy());
    obj["b"] = record.result.config.beam_size;
    obj["r"] = record.result.config.reward;
    obj["l"] = record.result.length_estimate;
    return obj.dump();
}

CompareRow aggregate(Strategy strategy, std::size_t b, double r,
                     const std::vector<LineRecord>& records) {
    CompareRow row;
    row.strategy = strategy;
    row.b = b;
    row.r = r;
    row.lines = records.size();
    if (records.empty()) return row;
    const auto n = static_cast<double>(records.size());
    for (const LineRecord& record : records) {
        row.mean_score += record.result.plain_score;
        row.mean_revised += record.result.revised_score;
        row.mean_stop_step += static_cast<double>(record.result.stop_step);
        row.mean_items_expanded += static_cast<double>(record.result.items_expanded);
        row.mean_len_ratio += static_cast<double>(record.result.hypothesis.output_length()) /
                              static_cast<double>(record.source_len);
        row.frac_completed += record.result.completed ? 1.0 : 0.0;
    }
    row.mean_score /= n;
    row.mean_revised /= n;
    row.mean_stop_step /= n;
    row.mean_items_expanded /= n;
    row.mean_len_ratio /= n;
    row.frac_completed /= n;
    return row;
}

std::string csv_header() {
    return "strategy,b,r,mean_score,mean_revised,mean_stop_step,mean_items_expanded,"
           "mean_len_ratio,frac_completed";
}

std::string to_csv(const CompareRow& row, const std::string& label) {
    std::string line = label.empty() ? to_string(row.strategy) : label;
    line += ',';
    line += std::to_string(row.b);
    for (double x : {row.r, row.mean_score, row.mean_revised, row.mean_stop_step,
                     row.mean_items_expanded, row.mean_len_ratio, row.frac_completed}) {
        line += ',';
        line += fmt6(x);
    }
    return line;
}

int run_decode(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    try {
        if (spec.strategies.size() != 1 || spec.beam_sizes.size() != 1 ||
            spec.rewards.size() != 1) {
            throw InputError("decode takes exactly one strategy, beam size, and reward");
        }
        emit_cells(run_grid(spec, err), spec.format, out);
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_compare(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    try {
        emit_cells(run_grid(spec, err), spec.format, out);
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_tune(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    try {
        for (Strategy strategy : spec.strategies) {
            if (!is_bounded(strategy)) {
                throw InputError(std::string("tune requires a bounded-reward strategy, got '") +
                                 to_string(strategy) + "'");
            }
        }
        const std::vector<GridCell> cells = run_grid(spec, err);
        if (spec.format == Format::Jsonl) {
            emit_cells(cells, Format::Jsonl, out);
            return 0;
        }
        out << csv_header() << "\n";
        for (const GridCell& cell : cells) {
            if (cell.row.lines > 0) out << to_csv(cell.row) << "\n";
        }
        // One summary row per (strategy, r): the b with the best mean
        // revised score, ties to the smaller b.
        std::vector<std::pair<std::string, double>> keys;
        for (const GridCell& cell : cells) {
            if (cell.row.lines == 0) continue;
            keys.emplace_back(to_string(cell.row.strategy), cell.row.r);
        }
        keys = sorted_unique(std::move(keys));
        for (const auto& [name, r] : keys) {
            const CompareRow* best = nullptr;
            for (const GridCell& cell : cells) {
                if (cell.row.lines == 0 || to_string(cell.row.strategy) != name ||
                    cell.row.r != r) {
                    continue;
                }
                if (!best || cell.row.mean_revised > best->mean_revised ||
                    (cell.row.mean_revised == best->mean_revised && cell.row.b < best->b)) {
                    best = &cell.row;
                }
            }
            if (best) out << to_csv(*best, name + ":best_b") << "\n";
        }
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err) {
    try {
        if (options.vocab_min < 2 || options.vocab_min > options.vocab_max) {
            throw InputError("verify needs 2 <= vocab_min <= vocab_max");
        }
        if (options.beam_min < 1 || options.beam_min > options.beam_max) {
            throw InputError("verify needs 1 <= beam_min <= beam_max");
        }
        if (options.steps_min < 1 || options.steps_min > options.steps_max) {
            throw InputError("verify needs 1 <= steps_min <= steps_max");
        }
        if (options.source_min < 1 || options.source_min > options.source_max) {
            throw InputError("verify needs 1 <= source_min <= source_max");
        }
        if (options.strategies.empty() || options.rewards.empty() || options.ratios.empty()) {
            throw InputError("verify needs at least one strategy, reward, and ratio");
        }
        for (Strategy strategy : options.strategies) {
            if (!is_certificate(strategy)) {
                throw InputError(std::string("verify requires certificate strategies, got '") +
                                 to_string(strategy) + "'");
            }
        }

        std::mt19937_64 gen(options.seed);
        auto pick = [&](std::size_t lo, std::size_t hi) {
            return lo + static_cast<std::size_t>(gen() % (hi - lo + 1));
        };

        std::size_t score_failures = 0;
        std::size_t early_failures = 0;
        std::size_t dominance_failures = 0;
        std::size_t work_failures = 0;
        std::size_t failures = 0;

        for (std::size_t t = 0; t < options.trials; ++t) {
            const std::size_t v = pick(options.vocab_min, options.vocab_max);
            const std::size_t steps = pick(options.steps_min, options.steps_max);
            const std::size_t b = pick(options.beam_min, options.beam_max);
            const std::size_t source_len = pick(options.source_min, options.source_max);
            const std::uint64_t model_seed = gen();
            const SeededModel model(v, model_seed);
            std::vector<TokenId> source(source_len);
            for (TokenId& token : source) {
                token = TokenId{static_cast<std::uint32_t>(gen() % (v - 1))};
            }

            SearchConfig config;
            config.beam_size = b;
            config.strategy = options.strategies[t % options.strategies.size()];
            config.reward = is_bounded(config.strategy)
                                ? options.rewards[t % options.rewards.size()]
                                : 0.0;
            config.length_ratio = options.ratios[t % options.ratios.size()];
            config.max_steps = steps;

            Verdict verdict = verify_optimality(model, source, config);
            if (options.flip_check) {
                verdict.score_matches = !verdict.score_matches;
                verdict.pass = verdict.score_matches && verdict.early_stop_ok;
            }

            bool dominance_ok = true;
            bool work_ok = true;
            if (config.strategy == Strategy::Optimal) {
                const DecodeResult optimal = decode(model, source, config);
                SearchConfig default_config = config;
                default_config.strategy = Strategy::Default;
                const DecodeResult baseline = decode(model, source, default_config);
                dominance_ok = optimal.plain_score >= baseline.plain_score;
                work_ok = optimal.items_expanded <= baseline.items_expanded;
            }

            const bool pass = verdict.pass && dominance_ok && work_ok;
            if (!verdict.score_matches) ++score_failures;
            if (!verdict.early_stop_ok) ++early_failures;
            if (!dominance_ok) ++dominance_failures;
            if (!work_ok) ++work_failures;
            if (!pass) ++failures;

            nlohmann::ordered_json obj;
            obj["trial"] = t;
            obj["strategy"] = to_string(config.strategy);
            obj["v"] = v;
            obj["b"] = b;
            obj["max_steps"] = steps;
            obj["source_len"] = source_len;
            obj["model_seed"] = model_seed;
            obj["r"] = config.reward;
            obj["ratio"] = config.length_ratio;
            obj["pass"] = pass;
            obj["score_matches"] = verdict.score_matches;
            obj["early_stop_ok"] = verdict.early_stop_ok;
            obj["dominance_ok"] = dominance_ok;
            obj["work_bound_ok"] = work_ok;
            obj["decode_score"] = verdict.decode_score;
            obj["trace_best"] = verdict.trace_best;
            obj["stop_step"] = verdict.stop_step;
            obj["default_fire"] = verdict.default_fire
                                      ? nlohmann::ordered_json(*verdict.default_fire)
                                      : nlohmann::ordered_json(nullptr);
            out << obj.dump() << "\n";
        }

        nlohmann::ordered_json summary;
        summary["summary"] = true;
        summary["trials"] = options.trials;
        summary["failures"] = failures;
        summary["score_failures"] = score_failures;
        summary["early_stop_failures"] = early_failures;
        summary["dominance_failures"] = dominance_failures;
        summary["work_bound_failures"] = work_failures;
        out << summary.dump() << "\n";
        return failures > 0 ? 1 : 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int run_make_model(const std::string& spec, const std::string& out_path, std::ostream& err) {
    try {
        const TableModel table = materialize_table_model(spec);
        std::ofstream file(out_path);
        if (!file) throw InputError("cannot open output file '" + out_path + "'");
        file << table_model_to_json(table);
        file.flush();
        if (!file) throw InputError("failed writing '" + out_path + "'");
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace optbeam
