#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqmeta/decay_fit.hpp"
#include "seqmeta/meta.hpp"
#include "seqmeta/network.hpp"
#include "seqmeta/tasks.hpp"

namespace seqmeta {

/// One JSON document driving every stage:
///   network  - NetworkSpec
///   data     - {"meta_train": <dist>, "meta_test": <dist>}
///   meta     - MetaConfig (missing keys keep defaults)
///   eval     - {"T", "runs", "seeds", "head_mode", "inner_lr", "inner_iterations"}
///   fit      - {"model": "aggregate_F" | "single_task_f", "chance"}
///   output   - {"directory"}
///   seed     - meta-training seed
/// A <dist> is {"kind": "synthetic_glyphs" | "image_classes" | "sine_regression", ...}.
struct ExperimentConfig {
    NetworkSpec network;
    nlohmann::json meta_train_data;
    nlohmann::json meta_test_data;
    MetaConfig meta;
    std::size_t eval_tasks = 20;
    std::vector<std::uint64_t> eval_seeds;
    HeadMode eval_head_mode = HeadMode::single;
    std::optional<double> eval_inner_lr;
    std::optional<std::size_t> eval_inner_iterations;
    DecayModel fit_model = DecayModel::aggregate_F;
    std::optional<double> fit_chance;
    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 0;
    /// Directory relative paths in the document are resolved against.
    std::filesystem::path base_dir = ".";
};

/// Parses and validates; relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical form of everything that affects results (the output directory
/// is excluded).
nlohmann::ordered_json canonical_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

TaskDistribution make_distribution(const nlohmann::json& spec, const std::filesystem::path& base_dir);

/// The T-task sequence evaluated for `seed`; shared by every evaluation path.
TaskSequence evaluation_sequence(const TaskDistribution& dist, std::size_t T, std::uint64_t seed);

struct Overrides {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> sequence_length;
    std::optional<HeadMode> head_mode;
    std::optional<ObjectiveVariant> objective;
};

/// `seed` replaces the meta-training seed and, for evaluation, the seed list;
/// `head_mode` sets both the meta-training and the evaluation head mode.
void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

struct StageStreams {
    std::ostream& out;
    std::ostream& err;
};

/// Writes <out>/init/{init.bin, init.json, log.csv}. On failure the log holds
/// the completed iterations and the status is nonzero.
int cmd_meta_train(const ExperimentConfig& cfg, std::size_t workers, StageStreams io);

/// Writes <out>/eval/<seed>/matrix.{csv,json}, eval/mean_matrix.{csv,json},
/// eval/curves.csv and eval/curves.svg.
int cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& init_path, std::size_t workers,
                 StageStreams io);

struct FitInput {
    std::filesystem::path csv;
    std::optional<std::size_t> sequence_length;  // explicit L label
};

/// Parses "path" or "L=path".
FitInput parse_fit_input(const std::string& arg);

/// Writes <out_dir>/fits/<name>.json per input and fits/correlation.json when
/// at least three inputs carry an L label (from the argument or the sidecar).
int cmd_fit_decay(const std::vector<FitInput>& inputs, std::optional<double> chance, DecayModel model,
                  const std::filesystem::path& out_dir, StageStreams io);

/// Scans `dir` for evaluation runs and writes <dir>/report.md plus SVGs under
/// <dir>/report/.
int cmd_report(const std::filesystem::path& dir, StageStreams io);

}  // namespace seqmeta
