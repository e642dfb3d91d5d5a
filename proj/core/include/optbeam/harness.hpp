#pragma once

// Experiment runners behind the CLI: per-line decode streams, grid
// aggregation, randomized theorem verification, and model materialization.
// All output is byte-deterministic for a fixed input and seed.

#include "optbeam/core.hpp"
#include "optbeam/oracle.hpp"
#include "optbeam/scoring.hpp"
#include "optbeam/search.hpp"

#include <cstdint>
#include <iosfwd>

namespace optbeam {

enum class Format { Csv, Jsonl };

/// Everything that determines a decode/compare/tune run.
struct RunSpec {
    std::string model;       // model spec string or table-model file path
    std::string source_path; // one sentence per line
    std::vector<Strategy> strategies{Strategy::Optimal};
    std::vector<std::size_t> beam_sizes{4};
    std::vector<double> rewards{0.0};
    double length_ratio = 1.0;
    std::size_t max_steps = 50;
    Format format = Format::Jsonl;
};

/// One decoded source line.
struct LineRecord {
    std::string source;              // raw line
    std::vector<std::string> tokens; // output words, eos excluded
    std::size_t source_len = 0;
    DecodeResult result;
};

/// {"source", "tokens", "score", "revised_score", "stop_step",
///  "items_expanded", "completed", "strategy", "b", "r", "l"}
std::string to_jsonl(const LineRecord& record);

/// Aggregate of one (strategy, b, r) grid cell over a source file.
struct CompareRow {
    Strategy strategy = Strategy::Optimal;
    std::size_t b = 0;
    double r = 0.0;
    std::size_t lines = 0;
    double mean_score = 0.0;
    double mean_revised = 0.0;
    double mean_stop_step = 0.0;
    double mean_items_expanded = 0.0;
    double mean_len_ratio = 0.0; // |y| / |x|
    double frac_completed = 0.0;
};

CompareRow aggregate(Strategy strategy, std::size_t b, double r,
                     const std::vector<LineRecord>& records);

/// "strategy,b,r,mean_score,..." per the CSV contract.
std::string csv_header();

/// One CSV line, reals fixed to 6 decimals. `label` overrides the
/// strategy column (used by the tune summary rows).
std::string to_csv(const CompareRow& row, const std::string& label = {});

/// Splits a line on whitespace and maps symbols through the vocab.
std::vector<TokenId> tokenize_line(const Vocab& vocab, const std::string& line);

/// Lines of `path` that contain at least one token.
std::vector<std::string> read_lines(const std::string& path);

/// Decodes every source line under a single-cell spec; JSONL by default,
/// CSV emits the one aggregate row.
int run_decode(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// Decodes the full strategy x b x r grid; CSV rows ordered by
/// (strategy name, b, r).
int run_compare(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// Compare over a bounded-reward grid plus one best-b summary row per
/// (strategy, r), selected by mean revised score.
int run_tune(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// Randomized verification sweep over seeded models.
struct VerifyOptions {
    std::size_t trials = 500;
    std::uint64_t seed = 1;
    std::size_t vocab_min = 3, vocab_max = 6;
    std::size_t steps_min = 6, steps_max = 10;
    std::size_t beam_min = 1, beam_max = 8;
    std::size_t source_min = 3, source_max = 8;
    std::vector<Strategy> strategies{Strategy::Optimal};
    std::vector<double> rewards{0.0};
    std::vector<double> ratios{1.0};
    // Self test: invert the score-equality clause so the failure path
    // (reporting plus exit code) is exercised end to end.
    bool flip_check = false;
};

/// One JSONL verdict per trial plus a final summary line. Returns 1 iff
/// any theorem-backed clause failed, 0 otherwise.
int run_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err);

/// Materializes `spec` as a table-model JSON file.
int run_make_model(const std::string& spec, const std::string& out_path, std::ostream& err);

} // namespace optbeam
