#include "optbeam/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
    std::string model;
    std::string source;
    std::string out;
    std::vector<std::string> strategies;
    std::vector<std::size_t> beams;
    std::vector<double> rewards;
    double length_ratio = 1.0;
    std::size_t max_steps = 50;
    std::uint64_t seed = 1;
    std::string format;
};

void add_run_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--model", args.model, "model spec string or table-model JSON path")
        ->required();
    cmd->add_option("--source", args.source, "source file, one sentence per line")->required();
    cmd->add_option("--strategy", args.strategies,
                    "stopping strategy: default, shrink_lennorm, shrink_reward, optimal, "
                    "optimal_bounded_full, optimal_bounded_simplified");
    cmd->add_option("--beam-size", args.beams, "beam width (repeatable)");
    cmd->add_option("--reward", args.rewards, "per-token length reward (repeatable)");
    cmd->add_option("--length-ratio", args.length_ratio, "target output tokens per source token");
    cmd->add_option("--max-steps", args.max_steps, "decoding step cap");
    cmd->add_option("--seed", args.seed, "seed (used by verify; decoding is deterministic)");
    cmd->add_option("--out", args.out, "output file (default: stdout)");
    cmd->add_option("--format", args.format, "output format")
        ->check(CLI::IsMember({"csv", "jsonl"}));
}

std::vector<optbeam::Strategy> parse_strategies(const std::vector<std::string>& names,
                                                optbeam::Strategy fallback) {
    if (names.empty()) return {fallback};
    std::vector<optbeam::Strategy> strategies;
    for (const std::string& name : names) {
        const auto strategy = optbeam::strategy_from_string(name);
        if (!strategy) throw optbeam::InputError("unknown strategy '" + name + "'");
        strategies.push_back(*strategy);
    }
    return strategies;
}

optbeam::RunSpec build_spec(const CommonArgs& args, optbeam::Strategy default_strategy,
                            optbeam::Format default_format) {
    optbeam::RunSpec spec;
    spec.model = args.model;
    spec.source_path = args.source;
    spec.strategies = parse_strategies(args.strategies, default_strategy);
    if (!args.beams.empty()) spec.beam_sizes = args.beams;
    if (!args.rewards.empty()) spec.rewards = args.rewards;
    spec.length_ratio = args.length_ratio;
    spec.max_steps = args.max_steps;
    spec.format = args.format.empty() ? default_format
                  : args.format == "csv" ? optbeam::Format::Csv
                                         : optbeam::Format::Jsonl;
    return spec;
}

} // namespace

int main(int argc, char** argv) {
    using optbeam::Format;
    using optbeam::Strategy;

    CLI::App app{"beam-search decoding with certificate-based stopping"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* decode_cmd = app.add_subcommand("decode", "decode each source line to JSONL");
    add_run_options(decode_cmd, args);
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "aggregate a strategy x beam x reward grid to CSV");
    add_run_options(compare_cmd, args);
    CLI::App* tune_cmd =
        app.add_subcommand("tune", "sweep the bounded length reward, with best-b summary rows");
    add_run_options(tune_cmd, args);

    optbeam::VerifyOptions verify;
    std::vector<std::string> verify_strategies;
    std::vector<double> verify_ratios;
    std::string verify_out;
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "randomized optimality checks against the beam-trace oracle");
    verify_cmd->add_option("--trials", verify.trials, "number of randomized trials");
    verify_cmd->add_option("--seed", verify.seed, "trial-generation seed");
    verify_cmd->add_option("--strategy", verify_strategies, "certificate strategies to verify");
    verify_cmd->add_option("--reward", verify.rewards, "rewards cycled across trials");
    verify_cmd->add_option("--length-ratio", verify_ratios, "length ratios cycled across trials");
    verify_cmd->add_option("--vocab-min", verify.vocab_min, "smallest vocab size");
    verify_cmd->add_option("--vocab-max", verify.vocab_max, "largest vocab size");
    verify_cmd->add_option("--beam-min", verify.beam_min, "smallest beam");
    verify_cmd->add_option("--beam-max", verify.beam_max, "largest beam");
    verify_cmd->add_option("--steps-min", verify.steps_min, "smallest step cap");
    verify_cmd->add_option("--steps-max", verify.steps_max, "largest step cap");
    verify_cmd->add_option("--source-min", verify.source_min, "shortest source");
    verify_cmd->add_option("--source-max", verify.source_max, "longest source");
    verify_cmd->add_flag("--self-test-flip", verify.flip_check,
                         "invert the score check to exercise failure reporting");
    verify_cmd->add_option("--out", verify_out, "output file (default: stdout)");

    std::string make_spec;
    std::string make_out;
    CLI::App* make_cmd =
        app.add_subcommand("make-model", "materialize a model spec as a table-model JSON file");
    make_cmd->add_option("--model", make_spec, "model spec to materialize")->required();
    make_cmd->add_option("--out", make_out, "output model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (make_cmd->parsed()) return optbeam::run_make_model(make_spec, make_out, std::cerr);

        const std::string& out_path = verify_cmd->parsed() ? verify_out : args.out;
        std::ofstream file;
        std::ostream* out = &std::cout;
        if (!out_path.empty()) {
            file.open(out_path);
            if (!file) {
                std::cerr << "error: cannot open output file '" << out_path << "'\n";
                return 2;
            }
            out = &file;
        }

        if (verify_cmd->parsed()) {
            verify.strategies = parse_strategies(verify_strategies, Strategy::Optimal);
            if (!verify_ratios.empty()) verify.ratios = verify_ratios;
            if (verify.rewards.empty()) verify.rewards = {0.0};
            return optbeam::run_verify(verify, *out, std::cerr);
        }
        if (decode_cmd->parsed()) {
            return optbeam::run_decode(build_spec(args, Strategy::Optimal, Format::Jsonl), *out,
                                       std::cerr);
        }
        if (compare_cmd->parsed()) {
            return optbeam::run_compare(build_spec(args, Strategy::Optimal, Format::Csv), *out,
                                        std::cerr);
        }
        if (tune_cmd->parsed()) {
            return optbeam::run_tune(
                build_spec(args, Strategy::OptimalBoundedSimplified, Format::Csv), *out,
                std::cerr);
        }
    } catch (const optbeam::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
