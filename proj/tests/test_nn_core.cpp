#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "seqmeta/errors.hpp"
#include "seqmeta/network.hpp"
#include "seqmeta/optim.hpp"
#include "seqmeta/param_vector.hpp"
#include "support/oracles.hpp"

using namespace seqmeta;
using seqmeta::testing::finite_difference_grad;
using seqmeta::testing::max_relative_error;

namespace {

NetworkSpec dense_spec(std::size_t in, std::size_t out, Activation act, LossKind loss = LossKind::squared_error) {
    NetworkSpec s;
    s.layers = {DenseLayer{in, out, act}};
    s.loss = loss;
    return s;
}

Batch regression_batch(std::initializer_list<double> x, std::initializer_list<double> y) {
    Batch b;
    b.inputs = Matrix(1, static_cast<Eigen::Index>(x.size()));
    b.targets = Matrix(1, static_cast<Eigen::Index>(y.size()));
    Eigen::Index c = 0;
    for (double v : x) b.inputs(0, c++) = v;
    c = 0;
    for (double v : y) b.targets(0, c++) = v;
    return b;
}

}  // namespace

// ---------------------------------------------------------------- ParamVector

TEST(ParamVector, ArithmeticAndShapeChecks) {
    ParamVector a({1.0, 2.0, 3.0});
    ParamVector b({0.5, -1.0, 2.0});
    EXPECT_EQ(a + b, ParamVector({1.5, 1.0, 5.0}));
    EXPECT_EQ(a - b, ParamVector({0.5, 3.0, 1.0}));
    EXPECT_EQ(2.0 * a, ParamVector({2.0, 4.0, 6.0}));
    EXPECT_DOUBLE_EQ(dot(a, b), 0.5 - 2.0 + 6.0);
    EXPECT_DOUBLE_EQ(norm(ParamVector({3.0, 4.0})), 5.0);
    EXPECT_THROW(a + ParamVector({1.0}), ShapeError);
    EXPECT_THROW(dot(a, ParamVector({1.0})), ShapeError);
}

TEST(ParamVector, SliceConcatWriteSlice) {
    ParamVector a({1.0, 2.0, 3.0, 4.0});
    EXPECT_EQ(slice(a, 1, 2), ParamVector({2.0, 3.0}));
    EXPECT_EQ(concat(slice(a, 0, 2), slice(a, 2, 2)), a);
    ParamVector patch({9.0, 8.0});
    write_slice(a, 2, patch.span());
    EXPECT_EQ(a, ParamVector({1.0, 2.0, 9.0, 8.0}));
    EXPECT_THROW(slice(a, 3, 2), ShapeError);
    EXPECT_THROW(write_slice(a, 3, patch.span()), ShapeError);
}

TEST(ParamVector, BinaryLayoutIsLittleEndianWithMagic) {
    const auto bytes = encode_params(ParamVector({1.0}));
    ASSERT_EQ(bytes.size(), 20u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "SEQMETA1");
    EXPECT_EQ(bytes[8], 1);
    EXPECT_EQ(bytes[9], 0);
    EXPECT_EQ(bytes[10], 0);
    EXPECT_EQ(bytes[11], 0);
    // 1.0 = 0x3FF0000000000000, little endian.
    for (int i = 0; i < 6; ++i) EXPECT_EQ(bytes[12 + i], 0);
    EXPECT_EQ(bytes[18], 0xF0);
    EXPECT_EQ(bytes[19], 0x3F);
}

TEST(ParamVector, EncodeDecodeRoundTripIsBitExact) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = seqmeta::testing::random_params(static_cast<std::size_t>(trial * 7), rng, 1e3);
        if (!p.empty()) p[0] = -0.0;
        const auto back = decode_params(encode_params(p));
        ASSERT_EQ(back.size(), p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(p[i]));
    }
}

TEST(ParamVector, DecodeRejectsBadInput) {
    auto bytes = encode_params(ParamVector({1.0, 2.0}));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_params(bad_magic), Error);
    bytes.pop_back();
    EXPECT_THROW(decode_params(bytes), ShapeError);
}

TEST(ParamVector, SaveLoadFile) {
    const auto path = std::filesystem::temp_directory_path() / "seqmeta_params_test.bin";
    const ParamVector p({0.25, -7.5, 1e-300});
    save_params(path, p);
    EXPECT_EQ(load_params(path), p);
    std::filesystem::remove(path);
    try {
        load_params(path);
        FAIL() << "expected io error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
        EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
    }
}

// ---------------------------------------------------------------- init_params

TEST(InitParams, DeterministicInSeed) {
    const auto spec = dense_spec(2, 2, Activation::relu);
    EXPECT_EQ(init_params(spec, 7), init_params(spec, 7));
    EXPECT_NE(init_params(spec, 7), init_params(spec, 8));
}

TEST(InitParams, DenseWeightsWithinFanInBound) {
    const Network net(dense_spec(100, 100, Activation::relu));
    const auto p = init_params(net, 11);
    const double bound = std::sqrt(6.0 / 100.0);
    ASSERT_EQ(p.size(), 100u * 100u + 100u);
    double max_abs = 0.0;
    for (std::size_t j = 0; j < 100 * 100; ++j) max_abs = std::max(max_abs, std::abs(p[j]));
    EXPECT_LE(max_abs, bound);
    EXPECT_GT(max_abs, 0.9 * bound);
    for (std::size_t j = 100 * 100; j < p.size(); ++j) EXPECT_EQ(p[j], 0.0);
}

TEST(InitParams, BatchNormScaleOneShiftZero) {
    NetworkSpec s;
    s.layers = {DenseLayer{3, 8, Activation::linear}, BatchNormLayer{8}, SoftmaxHeadLayer{8, 2}};
    const Network net(s);
    const auto p = init_params(net, 5);
    const auto& bn = net.layout()[1];
    ASSERT_EQ(bn.param_count, 16u);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(p[bn.param_offset + j], 1.0);
    for (std::size_t j = 8; j < 16; ++j) EXPECT_EQ(p[bn.param_offset + j], 0.0);
}

TEST(InitParams, InvalidSpecNamesLayerPair) {
    NetworkSpec s;
    s.layers = {DenseLayer{4, 6}, DenseLayer{5, 2}};
    try {
        init_params(s, 1);
        FAIL() << "expected SpecError";
    } catch (const SpecError& e) {
        EXPECT_EQ(e.first_layer(), 0u);
        EXPECT_EQ(e.second_layer(), 1u);
        EXPECT_EQ(e.kind(), ErrorKind::invalid_spec);
    }
}

// ---------------------------------------------------------------- spec validation

TEST(NetworkSpecValidation, RejectsBadSpecs) {
    EXPECT_THROW(Network(NetworkSpec{}), SpecError);
    {
        NetworkSpec s;
        s.layers = {SoftmaxHeadLayer{4, 2}, DenseLayer{2, 2}};
        EXPECT_THROW(Network{s}, SpecError);
    }
    {
        NetworkSpec s;  // conv first without an input shape
        s.layers = {Conv2dLayer{1, 2}, FlattenLayer{}};
        EXPECT_THROW(Network{s}, SpecError);
    }
    {
        NetworkSpec s;
        s.input = {3, 4, 4};
        s.layers = {Conv2dLayer{1, 2}, FlattenLayer{}};
        try {
            Network net(s);
            FAIL();
        } catch (const SpecError& e) {
            EXPECT_EQ(e.second_layer(), 0u);
        }
    }
    {
        NetworkSpec s;
        s.input = {1, 4, 4};
        s.layers = {Conv2dLayer{1, 2}, BatchNormLayer{3}, FlattenLayer{}};
        try {
            Network net(s);
            FAIL();
        } catch (const SpecError& e) {
            EXPECT_EQ(e.first_layer(), 0u);
            EXPECT_EQ(e.second_layer(), 1u);
        }
    }
    {
        NetworkSpec s;  // cross-entropy requires a softmax head
        s.layers = {DenseLayer{2, 2}};
        EXPECT_THROW(Network{s}, SpecError);
    }
}

TEST(NetworkSpecValidation, LayoutAndHead) {
    NetworkSpec s;
    s.input = {1, 6, 6};
    s.layers = {Conv2dLayer{1, 4, 3, 1, Activation::linear, Padding::same}, BatchNormLayer{4, Activation::relu},
                MaxPoolLayer{2}, FlattenLayer{}, SoftmaxHeadLayer{36, 5}};
    const Network net(s);
    EXPECT_EQ(net.input_size(), 36u);
    EXPECT_EQ(net.output_size(), 5u);
    EXPECT_EQ(net.param_count(), (4u * 9u + 4u) + 8u + (36u * 5u + 5u));
    EXPECT_TRUE(net.has_separable_head());
    EXPECT_EQ(net.head_param_count(), 36u * 5u + 5u);
    EXPECT_EQ(net.head_offset() + net.head_param_count(), net.param_count());

    const Network reg(dense_spec(3, 2, Activation::linear));
    EXPECT_FALSE(reg.has_separable_head());
    EXPECT_EQ(reg.head_param_count(), 0u);
    EXPECT_THROW(reg.head_offset(), SpecError);
}

// ---------------------------------------------------------------- forward

TEST(Forward, ZeroParamsGiveUniformSoftmax) {
    NetworkSpec s;
    s.layers = {DenseLayer{4, 6, Activation::relu}, SoftmaxHeadLayer{6, 5}};
    const Network net(s);
    const ParamVector zero(net.param_count(), 0.0);
    std::mt19937_64 rng(2);
    const auto batch = seqmeta::testing::random_classification_batch(7, 4, 5, rng);
    const Matrix logits = net.forward(zero, batch.inputs);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Eigen::RowVectorXd e = logits.row(r).array().exp();
        const Eigen::RowVectorXd p = e / e.sum();
        for (Eigen::Index c = 0; c < p.size(); ++c) EXPECT_DOUBLE_EQ(p(c), 0.2);
    }
}

TEST(Forward, SingleDenseArithmetic) {
    const Network net(dense_spec(1, 1, Activation::linear));
    const Matrix out = net.forward(ParamVector({2.0, 1.0}), Matrix::Constant(1, 1, 3.0));
    ASSERT_EQ(out.size(), 1);
    EXPECT_DOUBLE_EQ(out(0, 0), 7.0);
}

TEST(Forward, ShapeMismatchReportsExpectedAndActual) {
    const Network net(dense_spec(3, 1, Activation::linear));
    try {
        net.forward(ParamVector(net.param_count(), 0.0), Matrix::Zero(2, 4));
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.expected(), 3u);
        EXPECT_EQ(e.actual(), 4u);
    }
    EXPECT_THROW(net.forward(ParamVector(2, 0.0), Matrix::Zero(1, 3)), ShapeError);
}

TEST(Forward, NeverMutatesParamsAndIsBitwiseRepeatable) {
    for (const auto& c : seqmeta::testing::gradient_check_cases()) {
        const Network net(c.spec);
        std::mt19937_64 rng(17);
        const auto params = seqmeta::testing::random_params(net.param_count(), rng);
        const auto copy = params;
        const auto batch = seqmeta::testing::random_batch_for(net, 5, rng);
        const Matrix first = net.forward(params, batch.inputs);
        const Matrix second = net.forward(params, batch.inputs);
        EXPECT_EQ(params, copy) << c.name;
        EXPECT_TRUE((first.array() == second.array()).all()) << c.name;
    }
}

TEST(Forward, BatchNormUsesOnlyCurrentBatch) {
    NetworkSpec s;
    s.layers = {DenseLayer{3, 4, Activation::linear}, BatchNormLayer{4, Activation::linear}, SoftmaxHeadLayer{4, 2}};
    const Network net(s);
    std::mt19937_64 rng(5);
    const auto params = seqmeta::testing::random_params(net.param_count(), rng);
    const auto a = seqmeta::testing::random_classification_batch(6, 3, 2, rng);
    const auto other = seqmeta::testing::random_classification_batch(9, 3, 2, rng);
    const Matrix before = net.forward(params, a.inputs);
    for (int i = 0; i < 3; ++i) {
        net.forward(params, other.inputs);
        net.loss_and_grad(params, other);
    }
    const Matrix after = net.forward(params, a.inputs);
    EXPECT_TRUE((before.array() == after.array()).all());

    // Normalized features have zero batch mean: with unit scale, zero shift and
    // a linear identity-like head, the logit column means equal the head bias.
    ParamVector p = init_params(net, 3);
    const Matrix logits = net.forward(p, other.inputs);
    const auto& head = net.layout()[2];
    for (Eigen::Index c = 0; c < 2; ++c)
        EXPECT_NEAR(logits.col(c).mean(), p[head.param_offset + head.param_count - 2 + static_cast<std::size_t>(c)], 1e-12);
}

TEST(Forward, Float32TracksFloat64) {
    for (const auto& c : seqmeta::testing::gradient_check_cases()) {
        NetworkSpec s32 = c.spec;
        s32.precision = Precision::f32;
        const Network n64(c.spec), n32(s32);
        std::mt19937_64 rng(23);
        const auto params = seqmeta::testing::random_params(n64.param_count(), rng);
        const auto batch = seqmeta::testing::random_batch_for(n64, 4, rng);
        const auto g64 = n64.loss_and_grad(params, batch);
        const auto g32 = n32.loss_and_grad(params, batch);
        EXPECT_NEAR(g32.loss, g64.loss, 1e-4 * std::max(1.0, std::abs(g64.loss))) << c.name;
        EXPECT_LT(norm(g32.grad - g64.grad), 1e-3 * std::max(1.0, norm(g64.grad))) << c.name;
    }
}

TEST(Forward, PredictBreaksTiesTowardLowestIndex) {
    NetworkSpec s;
    s.layers = {SoftmaxHeadLayer{2, 3}};
    const Network net(s);
    // Weights zero, biases [1, 1, 0.5]: classes 0 and 1 tie.
    ParamVector p(net.param_count(), 0.0);
    p[6] = 1.0;
    p[7] = 1.0;
    p[8] = 0.5;
    const auto pred = net.predict(p, Matrix::Random(4, 2));
    for (int label : pred) EXPECT_EQ(label, 0);
    Batch b;
    b.inputs = Matrix::Zero(4, 2);
    b.labels = {0, 1, 0, 2};
    EXPECT_DOUBLE_EQ(net.accuracy(p, b), 0.5);
}

// ---------------------------------------------------------------- loss_and_grad

TEST(LossAndGrad, AtOptimumIsZero) {
    const Network net(dense_spec(1, 1, Activation::linear));
    const auto lg = net.loss_and_grad(ParamVector({0.0, 0.0}), regression_batch({1.0}, {0.0}));
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(lg.grad, ParamVector({0.0, 0.0}));
}

TEST(LossAndGrad, SquaredErrorIsHalfSquaredNormPerSample) {
    const Network net(dense_spec(1, 2, Activation::linear));
    // Output = bias = [1, 2]; targets [0, 0] -> 0.5 * (1 + 4).
    const auto lg = net.loss_and_grad(ParamVector({0.0, 0.0, 1.0, 2.0}), regression_batch({5.0}, {0.0, 0.0}));
    EXPECT_DOUBLE_EQ(lg.loss, 2.5);
    EXPECT_EQ(lg.grad, ParamVector({5.0, 10.0, 1.0, 2.0}));
}

TEST(LossAndGrad, CrossEntropyOfUniformLogitsIsLogWays) {
    NetworkSpec s;
    s.layers = {SoftmaxHeadLayer{3, 5}};
    const Network net(s);
    std::mt19937_64 rng(1);
    const auto batch = seqmeta::testing::random_classification_batch(10, 3, 5, rng);
    EXPECT_NEAR(net.loss(ParamVector(net.param_count(), 0.0), batch), std::log(5.0), 1e-15);
}

TEST(LossAndGrad, LossMatchesLossAndGradLoss) {
    for (const auto& c : seqmeta::testing::gradient_check_cases()) {
        const Network net(c.spec);
        std::mt19937_64 rng(9);
        const auto params = seqmeta::testing::random_params(net.param_count(), rng);
        const auto batch = seqmeta::testing::random_batch_for(net, 5, rng);
        EXPECT_EQ(net.loss(params, batch), net.loss_and_grad(params, batch).loss) << c.name;
    }
}

TEST(LossAndGrad, NonFiniteValuesRaiseNumericalErrorWithLayer) {
    NetworkSpec s;
    s.layers = {DenseLayer{2, 3, Activation::tanh}, DenseLayer{3, 3, Activation::relu}, SoftmaxHeadLayer{3, 2}};
    const Network net(s);
    ParamVector p = init_params(net, 1);
    const auto& second = net.layout()[1];
    p[second.param_offset] = std::numeric_limits<double>::infinity();
    Batch b;
    b.inputs = Matrix::Ones(2, 2);
    b.labels = {0, 1};
    try {
        net.loss_and_grad(p, b);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.layer(), 1u);
        EXPECT_EQ(e.kind(), ErrorKind::numerical_failure);
    }
}

TEST(LossAndGrad, LabelOutOfRangeIsRejected) {
    NetworkSpec s;
    s.layers = {SoftmaxHeadLayer{2, 3}};
    const Network net(s);
    Batch b;
    b.inputs = Matrix::Zero(1, 2);
    b.labels = {3};
    EXPECT_THROW(net.loss(ParamVector(net.param_count(), 0.0), b), Error);
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
    const auto seed = static_cast<std::uint64_t>(GetParam());
    for (const auto& c : seqmeta::testing::gradient_check_cases()) {
        const Network net(c.spec);
        ASSERT_LE(net.param_count(), 500u) << c.name;
        std::mt19937_64 rng(seed * 7919 + 13);
        const auto params = seqmeta::testing::random_params(net.param_count(), rng);
        const auto batch = seqmeta::testing::random_batch_for(net, 6, rng);
        const auto analytic = net.loss_and_grad(params, batch).grad;
        const auto numeric = finite_difference_grad(net, params, batch, 1e-5);
        EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << c.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Range(0, 20));

TEST(GradientCheck, RandomSmallMlps) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const Network net(seqmeta::testing::random_mlp_spec(rng, 4, 3));
        const auto params = seqmeta::testing::random_params(net.param_count(), rng);
        const auto batch = seqmeta::testing::random_batch_for(net, 5, rng);
        EXPECT_LT(max_relative_error(net.loss_and_grad(params, batch).grad, finite_difference_grad(net, params, batch)),
                  1e-4);
    }
}

TEST(Determinism, IdenticalInputsGiveBitwiseIdenticalTrajectories) {
    NetworkSpec s;
    s.layers = {DenseLayer{4, 8, Activation::tanh}, BatchNormLayer{8}, SoftmaxHeadLayer{8, 3}};
    const Network net(s);
    std::mt19937_64 rng(4);
    const auto batch = seqmeta::testing::random_classification_batch(12, 4, 3, rng);
    auto run = [&] {
        ParamVector p = init_params(net, 21);
        for (int i = 0; i < 25; ++i) p = sgd_step(p, net.loss_and_grad(p, batch).grad, 0.1);
        return p;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t j = 0; j < a.size(); ++j)
        EXPECT_EQ(std::bit_cast<std::uint64_t>(a[j]), std::bit_cast<std::uint64_t>(b[j]));
}

// ---------------------------------------------------------------- optimizers

TEST(Sgd, Examples) {
    const auto out = sgd_step(ParamVector({1.0, -2.0}), ParamVector({0.5, 0.5}), 0.01);
    EXPECT_NEAR(out[0], 0.995, 1e-15);
    EXPECT_NEAR(out[1], -2.005, 1e-15);
    const ParamVector p({3.0, 4.0});
    EXPECT_EQ(sgd_step(p, ParamVector({0.0, 0.0}), 0.1), p);
    EXPECT_EQ(sgd_step(p, ParamVector({1.0, 1.0}), 0.0), p);
    EXPECT_THROW(sgd_step(p, ParamVector({1.0}), 0.1), ShapeError);
    EXPECT_THROW(sgd_step(p, ParamVector({1.0, 1.0}), -0.1), Error);
    EXPECT_THROW(sgd_step(p, ParamVector({1.0, 1.0}), std::nan("")), Error);
}

TEST(Adam, FirstStepIsLrTimesSign) {
    const auto r = adam_step(AdamState::zeros(1), ParamVector({0.0}), ParamVector({2.0}), 0.001);
    EXPECT_NEAR(r.params[0], -0.001, 1e-6);
    EXPECT_EQ(r.state.step_count, 1u);
    EXPECT_DOUBLE_EQ(r.state.first_moment[0], 0.2);
    EXPECT_NEAR(r.state.second_moment[0], 0.004, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    const ParamVector p({1.0, -3.0});
    EXPECT_EQ(adam_step(AdamState::zeros(2), p, ParamVector({0.0, 0.0}), 0.01).params, p);
}

TEST(Adam, FirstStepIsScaleInvariant) {
    std::mt19937_64 rng(8);
    const auto p = seqmeta::testing::random_params(10, rng);
    const auto g = seqmeta::testing::random_params(10, rng);
    const auto a = adam_step(AdamState::zeros(10), p, g, 0.001).params;
    const auto b = adam_step(AdamState::zeros(10), p, 10.0 * g, 0.001).params;
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_LT(std::abs(a[j] - b[j]), 1e-6);
}

TEST(Adam, MatchesHandComputedSecondStep) {
    auto r = adam_step(AdamState::zeros(1), ParamVector({0.0}), ParamVector({1.0}), 0.1);
    r = adam_step(r.state, r.params, ParamVector({-1.0}), 0.1);
    const double m = 0.9 * 0.1 + 0.1 * -1.0;
    const double v = 0.999 * 0.001 + 0.001 * 1.0;
    const double first = -0.1 / (1.0 + 1e-8);
    const double expected = first - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    EXPECT_NEAR(r.params[0], expected, 1e-15);
}

TEST(Adam, ShapeErrors) {
    EXPECT_THROW(adam_step(AdamState::zeros(2), ParamVector({0.0}), ParamVector({0.0}), 0.1), ShapeError);
    EXPECT_THROW(adam_step(AdamState::zeros(1), ParamVector({0.0}), ParamVector({0.0, 1.0}), 0.1), ShapeError);
}
