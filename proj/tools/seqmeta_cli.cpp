#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqmeta/experiment.hpp"
#include "seqmeta/parallel.hpp"
#include "seqmeta/serialization.hpp"

namespace fs = std::filesystem;
using namespace seqmeta;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> sequence_length;
    std::string head_mode;
    std::string objective;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "Output directory (overrides output.directory)");
    cmd->add_option("--seed", c.seed, "Meta-training seed; for evaluate, a single evaluation seed");
    cmd->add_option("--workers", c.workers, "Worker threads (default: SEQMETA_WORKERS or 1)");
    cmd->add_option("--sequence-length", c.sequence_length, "Meta-training sequence length L")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--head-mode", c.head_mode, "single or multi")->check(CLI::IsMember({"single", "multi"}));
    cmd->add_option("--objective", c.objective, "both_ends or end_only")
        ->check(CLI::IsMember({"both_ends", "end_only"}));
}

ExperimentConfig resolve(const Common& c) {
    auto cfg = load_experiment_config(c.config);
    Overrides o;
    if (!c.out.empty()) o.out = fs::path(c.out);
    o.seed = c.seed;
    o.sequence_length = c.sequence_length;
    if (!c.head_mode.empty()) o.head_mode = parse_head_mode(c.head_mode);
    if (!c.objective.empty()) o.objective = parse_objective(c.objective);
    apply_overrides(cfg, o);
    return cfg;
}

std::size_t workers_of(const Common& c) { return c.workers.value_or(default_workers()); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential meta-learning: meta-train, evaluate forgetting, fit decay curves, report"};
    app.require_subcommand(1);
    StageStreams io{std::cout, std::cerr};

    Common train_opts;
    auto* train = app.add_subcommand("meta-train", "Meta-train an initialization");
    add_common(train, train_opts);

    Common eval_opts;
    std::string init_path;
    auto* evaluate = app.add_subcommand("evaluate", "Sequential evaluation of a trained initialization");
    add_common(evaluate, eval_opts);
    evaluate->add_option("--init", init_path, "Initialization file (default: <out>/init/init.bin)");

    std::vector<std::string> fit_inputs;
    std::optional<double> chance;
    std::string model_name;
    std::string fit_out;
    std::string fit_config;
    auto* fit = app.add_subcommand("fit-decay", "Fit decay models to accuracy matrices");
    fit->add_option("inputs", fit_inputs, "Matrix CSVs, optionally labelled as <L>=<path>")->required();
    fit->add_option("--chance", chance, "Chance level (default: 1/ways from the sidecar)")->check(CLI::Range(0.0, 1.0));
    fit->add_option("--model", model_name, "aggregate_F or single_task_f")
        ->check(CLI::IsMember({"aggregate_F", "single_task_f"}));
    fit->add_option("--out", fit_out, "Directory receiving fits/ (default: the config's output directory, else .)");
    fit->add_option("--config", fit_config, "Experiment JSON supplying fit defaults")->check(CLI::ExistingFile);

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Write report.md for every run under a directory");
    report->add_option("dir", report_dir, "Directory to scan")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_meta_train(resolve(train_opts), workers_of(train_opts), io);
        if (*evaluate) {
            const auto cfg = resolve(eval_opts);
            const fs::path init = init_path.empty() ? cfg.output_dir / "init" / "init.bin" : fs::path(init_path);
            return cmd_evaluate(cfg, init, workers_of(eval_opts), io);
        }
        if (*fit) {
            DecayModel model = DecayModel::aggregate_F;
            if (!fit_config.empty()) {
                const auto cfg = load_experiment_config(fit_config);
                model = cfg.fit_model;
                if (!chance) chance = cfg.fit_chance;
                if (fit_out.empty()) fit_out = cfg.output_dir.string();
            }
            if (fit_out.empty()) fit_out = ".";
            if (model_name == "single_task_f") model = DecayModel::single_task_f;
            if (model_name == "aggregate_F") model = DecayModel::aggregate_F;
            std::vector<FitInput> inputs;
            for (const auto& a : fit_inputs) inputs.push_back(parse_fit_input(a));
            return cmd_fit_decay(inputs, chance, model, fit_out, io);
        }
        if (*report) return cmd_report(report_dir, io);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return 2;
    }
    return 2;
}
