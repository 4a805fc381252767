#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqmeta/heads.hpp"
#include "seqmeta/meta.hpp"
#include "seqmeta/network.hpp"
#include "seqmeta/tasks.hpp"

namespace seqmeta {

/// Lower-triangular accuracy record: cell (t, i), 1 <= i <= t <= T, is the
/// accuracy on task i after training through task t. Cells can be absent.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    AccuracyMatrix(std::size_t tasks, std::size_t ways);

    std::size_t tasks() const noexcept { return tasks_; }
    std::size_t ways() const noexcept { return ways_; }
    double chance() const { return ways_ > 0 ? 1.0 / static_cast<double>(ways_) : 0.0; }

    std::optional<double> get(std::size_t t, std::size_t i) const;
    /// Throws when the cell is absent.
    double at(std::size_t t, std::size_t i) const;
    void set(std::size_t t, std::size_t i, double accuracy);

    std::vector<std::pair<std::size_t, std::size_t>> absent_cells() const;
    std::size_t occupied() const;

    friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

private:
    std::size_t index(std::size_t t, std::size_t i) const;

    std::size_t tasks_ = 0;
    std::size_t ways_ = 0;
    std::vector<std::optional<double>> cells_;
};

struct CellFailure {
    std::size_t t = 0;
    std::size_t i = 0;
    std::string message;
};

struct EvalResult {
    AccuracyMatrix matrix;
    std::vector<CellFailure> failures;
};

/// Accuracy of `params` on `batch`. Sees only data, never a task identity.
double accuracy_probe(const Network& net, const ParamVector& params, const Batch& batch);

/// Deployment protocol: plain SGD through the sequence (k steps of rate lr
/// per task), recording the accuracy on every earlier task after each one.
/// Multi-head mode clones the init's head for every new task and probes task
/// i with head i. Numerical failures leave cells absent and are listed.
EvalResult sequential_evaluate(const Network& net, const ParamVector& init, const TaskSequence& sequence,
                               std::size_t k, double lr, HeadMode mode);

/// (1/t) * sum_{i<=t} A[t][i] for t = 1..T.
std::vector<double> mean_prev_accuracy(const AccuracyMatrix& m);
/// A[t][1] for t = 1..T.
std::vector<double> first_task_curve(const AccuracyMatrix& m);
/// A[t][t] for t = 1..T.
std::vector<double> diagonal_curve(const AccuracyMatrix& m);
/// Cellwise mean; a cell absent in any run is absent in the result.
AccuracyMatrix average_matrices(const std::vector<AccuracyMatrix>& matrices);

struct MatrixSidecar {
    std::size_t tasks = 0;
    std::size_t ways = 0;
    std::optional<std::uint64_t> seed;
    std::string config_hash;
    std::optional<std::size_t> sequence_length;  // meta-training L, when known
    std::string head_mode = "single";
};

/// CSV with header `t,i,accuracy`, one row per occupied cell.
void write_matrix_csv(const std::filesystem::path& path, const AccuracyMatrix& m);
/// Reads a matrix CSV. T is taken from the sidecar when one exists next to
/// the CSV (same stem, .json), else from the largest t. Parse errors name the
/// file and line.
AccuracyMatrix read_matrix_csv(const std::filesystem::path& path);

void write_matrix_sidecar(const std::filesystem::path& path, const MatrixSidecar& sidecar);
std::optional<MatrixSidecar> read_matrix_sidecar(const std::filesystem::path& csv_path);

}  // namespace seqmeta
