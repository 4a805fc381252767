#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seqmeta/network.hpp"

namespace seqmeta {

using Rng = std::mt19937_64;

/// splitmix64-based mixing; used to derive independent streams from a base
/// seed and a tuple of indices.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Immutable store of labelled samples grouped by class. Implementations must
/// be safe for concurrent reads.
class ClassPool {
public:
    virtual ~ClassPool() = default;
    virtual std::size_t class_count() const = 0;
    virtual std::size_t samples_per_class(std::size_t cls) const = 0;
    virtual std::size_t feature_size() const = 0;
    virtual void sample(std::size_t cls, std::size_t index, std::span<double> out) const = 0;
    virtual std::string class_name(std::size_t cls) const { return std::to_string(cls); }
};

/// Grayscale images loaded from disk, one class per leaf directory.
class ImageClassPool final : public ClassPool {
public:
    ImageClassPool(std::size_t side, std::vector<std::string> names, std::vector<Matrix> images);

    std::size_t class_count() const override { return images_.size(); }
    std::size_t samples_per_class(std::size_t cls) const override;
    std::size_t feature_size() const override { return side_ * side_; }
    void sample(std::size_t cls, std::size_t index, std::span<double> out) const override;
    std::string class_name(std::size_t cls) const override { return names_.at(cls); }

private:
    std::size_t side_;
    std::vector<std::string> names_;
    std::vector<Matrix> images_;  // per class: samples x side*side
};

struct GlyphConfig {
    std::size_t class_count = 600;
    std::size_t image_side = 14;
    std::size_t samples_per_class = 20;
    std::size_t strokes = 3;
    double jitter = 0.04;
    std::uint64_t seed = 0;
};

/// Procedurally rendered stroke glyphs. Class `c` is a pure function of
/// (seed, c); sample `j` of class `c` adds a deterministic per-sample jitter.
class GlyphPool final : public ClassPool {
public:
    explicit GlyphPool(GlyphConfig config);

    std::size_t class_count() const override { return config_.class_count; }
    std::size_t samples_per_class(std::size_t) const override { return config_.samples_per_class; }
    std::size_t feature_size() const override { return config_.image_side * config_.image_side; }
    void sample(std::size_t cls, std::size_t index, std::span<double> out) const override;
    const GlyphConfig& config() const noexcept { return config_; }

private:
    GlyphConfig config_;
};

enum class TaskKind { image_classes, synthetic_glyphs, sine_regression };

std::string to_string(TaskKind kind);

struct SineRange {
    double amplitude_min = 0.1;
    double amplitude_max = 5.0;
    double phase_min = 0.0;
    double phase_max = 3.14159265358979323846;
    double x_min = -5.0;
    double x_max = 5.0;
};

struct TaskDistribution {
    TaskKind kind = TaskKind::synthetic_glyphs;
    std::shared_ptr<const ClassPool> pool;
    /// Half-open range of pool class indices this distribution draws from.
    std::size_t class_begin = 0;
    std::size_t class_end = 0;
    std::size_t ways = 5;
    /// For regression: number of train / test points per task.
    std::size_t train_per_class = 10;
    std::size_t test_per_class = 10;
    SineRange sine;

    std::size_t available_classes() const { return class_end - class_begin; }
    LossKind loss_kind() const {
        return kind == TaskKind::sine_regression ? LossKind::squared_error : LossKind::cross_entropy;
    }
    std::size_t input_size() const;
    std::size_t output_size() const;
};

struct SampleId {
    std::size_t cls = 0;
    std::size_t index = 0;
    friend bool operator==(const SampleId&, const SampleId&) = default;
    friend auto operator<=>(const SampleId&, const SampleId&) = default;
};

struct Task {
    std::size_t id = 0;
    std::size_t ways = 0;  // 0 for regression
    LossKind loss = LossKind::cross_entropy;
    Batch train;
    Batch test;
    /// Pool class indices; label j corresponds to classes[j].
    std::vector<std::size_t> classes;
    std::vector<SampleId> train_ids;
    std::vector<SampleId> test_ids;
    double amplitude = 0.0;
    double phase = 0.0;
};

struct TaskSequence {
    std::vector<Task> tasks;
    std::size_t size() const { return tasks.size(); }
};

Task sample_task(const TaskDistribution& dist, Rng& rng);
TaskSequence sample_sequence(const TaskDistribution& dist, std::size_t n, Rng& rng);

/// Loads root/<group>/<class>/*.png, resizing to side x side and scaling
/// pixels to [0, 1]. Classes are ordered lexicographically by path.
std::shared_ptr<ImageClassPool> load_image_classes(const std::filesystem::path& root, std::size_t image_side);

struct SyntheticConfig {
    TaskKind kind = TaskKind::synthetic_glyphs;
    GlyphConfig glyphs;
    /// Class range within the pool; class_end == 0 means "to the end".
    std::size_t class_begin = 0;
    std::size_t class_end = 0;
    std::size_t ways = 5;
    std::size_t train_per_class = 10;
    std::size_t test_per_class = 10;
    SineRange sine;
};

TaskDistribution make_synthetic_distribution(const SyntheticConfig& config);

/// Wraps an existing pool; validates the range and the per-class sample budget.
TaskDistribution make_pool_distribution(TaskKind kind, std::shared_ptr<const ClassPool> pool, std::size_t class_begin,
                                        std::size_t class_end, std::size_t ways, std::size_t train_per_class,
                                        std::size_t test_per_class);

}  // namespace seqmeta
