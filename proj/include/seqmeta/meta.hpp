#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqmeta/errors.hpp"
#include "seqmeta/heads.hpp"
#include "seqmeta/network.hpp"
#include "seqmeta/optim.hpp"
#include "seqmeta/tasks.hpp"

namespace seqmeta {

enum class ObjectiveVariant { both_ends, end_only };
enum class HeadMode { single, multi };

std::string to_string(ObjectiveVariant v);
std::string to_string(HeadMode m);

struct MetaConfig {
    double inner_lr = 0.01;
    std::size_t inner_iterations = 5;
    std::size_t sequence_length = 1;
    std::size_t meta_batch_size = 5;
    double meta_lr = 0.001;
    std::size_t meta_iterations = 20000;
    ObjectiveVariant objective = ObjectiveVariant::both_ends;
    HeadMode head_mode = HeadMode::single;

    /// Rejects negative or non-finite rates and zero counts. Zero rates are
    /// allowed: they turn the corresponding loop into a no-op.
    void validate() const;
};

/// Parameters after each task of a sequence: snapshots[i] follows task i.
/// In multi-head mode snapshot i is the trunk followed by head i.
struct AdaptationTrace {
    std::vector<ParamVector> snapshots;
    std::vector<double> test_losses_after_task;  // L_i,test at snapshot i
    std::vector<double> test_losses_at_end;      // L_i,test at the final parameters
};

/// k plain gradient steps on the task's full train split.
ParamVector inner_train(const Model& model, const ParamVector& params, const Task& task, std::size_t k, double lr);

/// Gradient of the task's test loss at the adapted parameters; the update
/// Jacobian is taken to be the identity.
ParamVector fomaml_meta_gradient(const Model& model, const ParamVector& params, const Task& task,
                                 const MetaConfig& cfg);

struct SeqGradient {
    ParamVector grad;
    AdaptationTrace trace;
    double objective = 0.0;
};

/// First-order sequence meta-gradient: the mean over tasks of the test-loss
/// gradients at the end-of-sequence parameters and (both_ends only) at the
/// parameters right after each task.
SeqGradient seqfomaml_meta_gradient(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                                    const MetaConfig& cfg);

double seq_objective_value(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                           const MetaConfig& cfg);

/// Central finite differences of seq_objective_value, one coordinate at a
/// time. Test oracle for the exact (Jacobian-including) gradient; only
/// practical for small parameter counts.
ParamVector exact_seq_gradient_fd(const Model& model, const ParamVector& params, const TaskSequence& sequence,
                                  const MetaConfig& cfg, double step);

struct MultiHeadResult {
    AdaptationTrace trace;
    HeadBank bank;
};

/// Sequential adaptation where every task gets a fresh clone of `head_init`;
/// task i trains the trunk and head i only.
MultiHeadResult multi_head_adapt(const Model& model, const ParamVector& trunk_params, const ParamVector& head_init,
                                 const TaskSequence& sequence, const MetaConfig& cfg);

struct MetaTrainOptions {
    std::size_t workers = 1;
    /// Called after each outer step with (0-based iteration, mean objective).
    std::function<void(std::size_t, double)> on_iteration;
};

struct MetaTrainResult {
    ParamVector params;
    std::vector<double> objective_log;
    AdamState adam;
};

/// Raised when an outer step fails; carries the failing iteration and the
/// log up to it.
class MetaTrainError : public Error {
public:
    MetaTrainError(std::size_t iteration, std::vector<double> partial_log, const Error& cause);
    std::size_t iteration() const noexcept { return iteration_; }
    const std::vector<double>& partial_log() const noexcept { return log_; }
    ErrorKind cause_kind() const noexcept { return cause_; }

private:
    std::size_t iteration_;
    std::vector<double> log_;
    ErrorKind cause_;
};

/// Outer loop: each iteration samples meta_batch_size sequences from
/// streams keyed by (seed, iteration, index), averages their meta-gradients in
/// index order and takes one Adam step.
MetaTrainResult meta_train(const Model& model, const TaskDistribution& dist, const MetaConfig& cfg,
                           std::uint64_t seed, ParamVector init, const MetaTrainOptions& options = {});

/// Same, starting from init_params(net, seed).
MetaTrainResult meta_train(const Network& net, const TaskDistribution& dist, const MetaConfig& cfg,
                           std::uint64_t seed, const MetaTrainOptions& options = {});

}  // namespace seqmeta
