#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "seqmeta/param_vector.hpp"

namespace seqmeta {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { linear, relu, tanh };
enum class LossKind { cross_entropy, squared_error };
enum class Precision { f64, f32 };
enum class Padding { same, valid };

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::relu;
};

struct Conv2dLayer {
    std::size_t in_channels = 0;
    std::size_t filters = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    Activation activation = Activation::linear;
    Padding padding = Padding::same;
};

/// Normalizes with the statistics of the current batch only; there are no
/// running averages. `activation` is applied after the affine scale/shift so
/// a conv -> batchnorm(relu) -> maxpool chain expresses the usual block.
struct BatchNormLayer {
    std::size_t channels = 0;
    Activation activation = Activation::linear;
};

struct MaxPoolLayer {
    std::size_t window = 2;
};

struct FlattenLayer {};

/// Linear output layer producing logits; softmax lives in the loss.
struct SoftmaxHeadLayer {
    std::size_t in = 0;
    std::size_t ways = 0;
};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, BatchNormLayer, MaxPoolLayer, FlattenLayer,
                               SoftmaxHeadLayer>;

struct Shape3 {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t size() const { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct NetworkSpec {
    /// Per-sample input shape. Zero channels means "derive from the first layer",
    /// which works for everything except a leading conv2d.
    Shape3 input{0, 0, 0};
    std::vector<LayerSpec> layers;
    LossKind loss = LossKind::cross_entropy;
    Precision precision = Precision::f64;
};

std::string layer_name(const LayerSpec& layer);
std::string to_string(Activation a);
std::string to_string(LossKind k);

/// Samples are rows. Classification batches fill `labels`; regression batches
/// fill `targets` (samples x outputs).
struct Batch {
    Matrix inputs;
    std::vector<int> labels;
    Matrix targets;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// Anything the meta-learning engines can adapt: a differentiable loss over a
/// flat parameter vector.
class Model {
public:
    virtual ~Model() = default;
    virtual std::size_t param_count() const = 0;
    virtual LossGrad loss_and_grad(const ParamVector& params, const Batch& batch) const = 0;
    virtual double loss(const ParamVector& params, const Batch& batch) const = 0;
    /// Size of the trailing output head that multi-head adaptation clones per
    /// task; 0 when the model has no separable head.
    virtual std::size_t head_param_count() const { return 0; }
};

struct LayerLayout {
    std::size_t param_offset = 0;
    std::size_t param_count = 0;
    Shape3 in_shape;
    Shape3 out_shape;
};

class Network final : public Model {
public:
    /// Validates the spec; throws SpecError naming the offending layer pair.
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const noexcept { return spec_; }
    const std::vector<LayerLayout>& layout() const noexcept { return layout_; }
    std::size_t input_size() const noexcept { return input_.size(); }
    std::size_t output_size() const noexcept { return layout_.back().out_shape.size(); }

    std::size_t param_count() const override { return param_count_; }

    bool has_separable_head() const noexcept;
    /// First parameter index of the terminal softmax head; throws SpecError
    /// when the network has no such head.
    std::size_t head_offset() const;
    std::size_t head_param_count() const override;

    Matrix forward(const ParamVector& params, const Matrix& inputs) const;
    LossGrad loss_and_grad(const ParamVector& params, const Batch& batch) const override;
    double loss(const ParamVector& params, const Batch& batch) const override;

    /// Argmax prediction per sample; ties go to the lowest class index.
    std::vector<int> predict(const ParamVector& params, const Matrix& inputs) const;
    /// Fraction of samples whose prediction equals the label.
    double accuracy(const ParamVector& params, const Batch& batch) const;

private:
    void check_params(const ParamVector& params) const;
    void check_batch(const Batch& batch) const;

    NetworkSpec spec_;
    Shape3 input_;
    std::vector<LayerLayout> layout_;
    std::size_t param_count_ = 0;
};

/// Fan-in scaled uniform weights in +-sqrt(6 / fan_in), zero biases,
/// batchnorm scale 1 and shift 0. Deterministic in `seed`.
ParamVector init_params(const Network& net, std::uint64_t seed);
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace seqmeta
