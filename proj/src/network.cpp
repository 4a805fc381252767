#include "seqmeta/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <type_traits>

#include "seqmeta/errors.hpp"

namespace seqmeta {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kBatchNormEps = 1e-5;

std::size_t conv_pad(const Conv2dLayer& c) { return c.padding == Padding::same ? c.kernel / 2 : 0; }

// Output extent of a strided window sweep; 0 when the window does not fit.
std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < kernel) return 0;
    return (in + 2 * pad - kernel) / stride + 1;
}

Shape3 derive_input(const NetworkSpec& spec) {
    if (spec.input.channels != 0) return spec.input;
    if (spec.layers.empty()) throw SpecError(0, 0, "network has no layers");
    return std::visit(
        overloaded{
            [](const DenseLayer& d) { return Shape3{d.in, 1, 1}; },
            [](const SoftmaxHeadLayer& h) { return Shape3{h.in, 1, 1}; },
            [](const BatchNormLayer& b) { return Shape3{b.channels, 1, 1}; },
            [](const auto& l) -> Shape3 {
                throw SpecError(0, 0, layer_name(LayerSpec{l}) +
                                          " as first layer requires an explicit input shape");
            },
        },
        spec.layers.front());
}

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
void apply_activation(Activation a, const Mat<S>& pre, Mat<S>& out) {
    switch (a) {
        case Activation::linear: out = pre; break;
        case Activation::relu: out = pre.cwiseMax(S(0)); break;
        case Activation::tanh: out = pre.array().tanh().matrix(); break;
    }
}

// dout -> dpre in place.
template <class S>
void activation_backward(Activation a, const Mat<S>& pre, const Mat<S>& out, Mat<S>& d) {
    switch (a) {
        case Activation::linear: break;
        case Activation::relu: d = (pre.array() > S(0)).select(d, S(0)); break;
        case Activation::tanh: d.array() *= (S(1) - out.array().square()); break;
    }
}

template <class S>
void im2col(const S* img, const Shape3& in, const Conv2dLayer& c, std::size_t out_h,
            std::size_t out_w, Mat<S>& cols) {
    const std::size_t k = c.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(conv_pad(c));
    cols.resize(static_cast<Eigen::Index>(in.channels * k * k), static_cast<Eigen::Index>(out_h * out_w));
    for (std::size_t ch = 0; ch < in.channels; ++ch)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                const auto row = static_cast<Eigen::Index>((ch * k + ki) * k + kj);
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * c.stride + ki) - pad;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * c.stride + kj) - pad;
                        const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(in.height) &&
                                            iw < static_cast<std::ptrdiff_t>(in.width);
                        cols(row, static_cast<Eigen::Index>(oh * out_w + ow)) =
                            inside ? img[(ch * in.height + static_cast<std::size_t>(ih)) * in.width +
                                         static_cast<std::size_t>(iw)]
                                   : S(0);
                    }
                }
            }
}

template <class S>
void col2im_add(const Mat<S>& cols, const Shape3& in, const Conv2dLayer& c, std::size_t out_h,
                std::size_t out_w, S* img) {
    const std::size_t k = c.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(conv_pad(c));
    for (std::size_t ch = 0; ch < in.channels; ++ch)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                const auto row = static_cast<Eigen::Index>((ch * k + ki) * k + kj);
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * c.stride + ki) - pad;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in.height)) continue;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * c.stride + kj) - pad;
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in.width)) continue;
                        img[(ch * in.height + static_cast<std::size_t>(ih)) * in.width + static_cast<std::size_t>(iw)] +=
                            cols(row, static_cast<Eigen::Index>(oh * out_w + ow));
                    }
                }
            }
}

// Runs the layer stack in precision S. Holds per-layer caches for one
// forward/backward pair; lives only for the duration of one call.
template <class S>
class Engine {
public:
    Engine(const Network& net, const ParamVector& params) : net_(net), p_(params.begin(), params.end()) {}

    Mat<S> forward(const Matrix& inputs, bool keep_caches) {
        const auto& layers = net_.spec().layers;
        const auto& layout = net_.layout();
        caches_.assign(keep_caches ? layers.size() : 0, {});
        Mat<S> x = inputs.template cast<S>();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Cache scratch;
            Cache& c = keep_caches ? caches_[i] : scratch;
            c.in = std::move(x);
            std::visit([&](const auto& l) { forward_layer(l, layout[i], c); }, layers[i]);
            if (!c.out.allFinite()) throw NumericalError(i, "forward output of " + layer_name(layers[i]));
            if (keep_caches)
                x = c.out;
            else
                x = std::move(c.out);
        }
        return x;
    }

    // Fills `grad` (param-count sized) from d(loss)/d(output).
    void backward(Mat<S> d, std::vector<S>& grad) {
        const auto& layers = net_.spec().layers;
        const auto& layout = net_.layout();
        grad.assign(p_.size(), S(0));
        for (std::size_t i = layers.size(); i-- > 0;) {
            const bool need_input_grad = i > 0;
            std::visit([&](const auto& l) { backward_layer(l, layout[i], caches_[i], d, grad, need_input_grad); },
                       layers[i]);
            const auto g = Eigen::Map<const Vec<S>>(grad.data() + layout[i].param_offset,
                                                    static_cast<Eigen::Index>(layout[i].param_count));
            if (!g.allFinite() || (need_input_grad && !d.allFinite()))
                throw NumericalError(i, "backward pass of " + layer_name(layers[i]));
        }
    }

private:
    struct Cache {
        Mat<S> in;
        Mat<S> pre;
        Mat<S> out;
        Mat<S> xhat;
        Vec<S> inv_std;
        std::vector<Eigen::Index> argmax;
    };

    Eigen::Map<const Mat<S>> weights(std::size_t offset, std::size_t rows, std::size_t cols) const {
        return {p_.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
    }
    Eigen::Map<const RowVec<S>> row(std::size_t offset, std::size_t n) const {
        return {p_.data() + offset, static_cast<Eigen::Index>(n)};
    }

    void dense_forward(std::size_t in, std::size_t out, Activation act, const LayerLayout& lay, Cache& c) {
        const auto w = weights(lay.param_offset, out, in);
        const auto b = row(lay.param_offset + out * in, out);
        c.pre.noalias() = c.in * w.transpose();
        c.pre.rowwise() += b;
        apply_activation(act, c.pre, c.out);
    }

    void dense_backward(std::size_t in, std::size_t out, Activation act, const LayerLayout& lay, Cache& c,
                        Mat<S>& d, std::vector<S>& grad, bool need_input) {
        activation_backward(act, c.pre, c.out, d);
        Eigen::Map<Mat<S>> gw(grad.data() + lay.param_offset, static_cast<Eigen::Index>(out),
                              static_cast<Eigen::Index>(in));
        Eigen::Map<RowVec<S>> gb(grad.data() + lay.param_offset + out * in, static_cast<Eigen::Index>(out));
        gw.noalias() = d.transpose() * c.in;
        gb = d.colwise().sum();
        if (need_input) {
            Mat<S> dx = d * weights(lay.param_offset, out, in);
            d = std::move(dx);
        }
    }

    void forward_layer(const DenseLayer& l, const LayerLayout& lay, Cache& c) {
        dense_forward(l.in, l.out, l.activation, lay, c);
    }
    void forward_layer(const SoftmaxHeadLayer& l, const LayerLayout& lay, Cache& c) {
        dense_forward(l.in, l.ways, Activation::linear, lay, c);
    }
    void backward_layer(const DenseLayer& l, const LayerLayout& lay, Cache& c, Mat<S>& d, std::vector<S>& g,
                        bool need) {
        dense_backward(l.in, l.out, l.activation, lay, c, d, g, need);
    }
    void backward_layer(const SoftmaxHeadLayer& l, const LayerLayout& lay, Cache& c, Mat<S>& d,
                        std::vector<S>& g, bool need) {
        dense_backward(l.in, l.ways, Activation::linear, lay, c, d, g, need);
    }

    void forward_layer(const Conv2dLayer& l, const LayerLayout& lay, Cache& c) {
        const std::size_t ckk = l.in_channels * l.kernel * l.kernel;
        const std::size_t spatial = lay.out_shape.height * lay.out_shape.width;
        const auto w = weights(lay.param_offset, l.filters, ckk);
        const auto b = Eigen::Map<const Vec<S>>(p_.data() + lay.param_offset + l.filters * ckk,
                                                static_cast<Eigen::Index>(l.filters));
        const auto n = c.in.rows();
        c.pre.resize(n, static_cast<Eigen::Index>(l.filters * spatial));
        Mat<S> cols;
        for (Eigen::Index s = 0; s < n; ++s) {
            im2col(c.in.row(s).data(), lay.in_shape, l, lay.out_shape.height, lay.out_shape.width, cols);
            Eigen::Map<Mat<S>> out(c.pre.row(s).data(), static_cast<Eigen::Index>(l.filters),
                                   static_cast<Eigen::Index>(spatial));
            out.noalias() = w * cols;
            out.colwise() += b;
        }
        apply_activation(l.activation, c.pre, c.out);
    }

    void backward_layer(const Conv2dLayer& l, const LayerLayout& lay, Cache& c, Mat<S>& d, std::vector<S>& grad,
                        bool need_input) {
        activation_backward(l.activation, c.pre, c.out, d);
        const std::size_t ckk = l.in_channels * l.kernel * l.kernel;
        const std::size_t spatial = lay.out_shape.height * lay.out_shape.width;
        const auto w = weights(lay.param_offset, l.filters, ckk);
        Eigen::Map<Mat<S>> gw(grad.data() + lay.param_offset, static_cast<Eigen::Index>(l.filters),
                              static_cast<Eigen::Index>(ckk));
        Eigen::Map<Vec<S>> gb(grad.data() + lay.param_offset + l.filters * ckk,
                              static_cast<Eigen::Index>(l.filters));
        const auto n = c.in.rows();
        Mat<S> dx;
        if (need_input) dx = Mat<S>::Zero(n, c.in.cols());
        Mat<S> cols;
        Mat<S> dcols;
        for (Eigen::Index s = 0; s < n; ++s) {
            im2col(c.in.row(s).data(), lay.in_shape, l, lay.out_shape.height, lay.out_shape.width, cols);
            Eigen::Map<const Mat<S>> dout(d.row(s).data(), static_cast<Eigen::Index>(l.filters),
                                          static_cast<Eigen::Index>(spatial));
            gw.noalias() += dout * cols.transpose();
            gb += dout.rowwise().sum();
            if (need_input) {
                dcols.noalias() = w.transpose() * dout;
                col2im_add(dcols, lay.in_shape, l, lay.out_shape.height, lay.out_shape.width, dx.row(s).data());
            }
        }
        if (need_input) d = std::move(dx);
    }

    void forward_layer(const BatchNormLayer& l, const LayerLayout& lay, Cache& c) {
        const auto n = c.in.rows();
        const auto hw = static_cast<Eigen::Index>(lay.in_shape.height * lay.in_shape.width);
        const auto count = static_cast<S>(n * hw);
        const auto gamma = row(lay.param_offset, l.channels);
        const auto beta = row(lay.param_offset + l.channels, l.channels);
        c.xhat.resize(n, c.in.cols());
        c.pre.resize(n, c.in.cols());
        c.inv_std.resize(static_cast<Eigen::Index>(l.channels));
        for (Eigen::Index ch = 0; ch < static_cast<Eigen::Index>(l.channels); ++ch) {
            auto block = c.in.middleCols(ch * hw, hw);
            const S mean = block.sum() / count;
            const S var = (block.array() - mean).square().sum() / count;
            const S inv = S(1) / std::sqrt(var + static_cast<S>(kBatchNormEps));
            c.inv_std(ch) = inv;
            c.xhat.middleCols(ch * hw, hw) = ((block.array() - mean) * inv).matrix();
            c.pre.middleCols(ch * hw, hw) = (c.xhat.middleCols(ch * hw, hw).array() * gamma(ch) + beta(ch)).matrix();
        }
        apply_activation(l.activation, c.pre, c.out);
    }

    void backward_layer(const BatchNormLayer& l, const LayerLayout& lay, Cache& c, Mat<S>& d,
                        std::vector<S>& grad, bool need_input) {
        activation_backward(l.activation, c.pre, c.out, d);
        const auto n = c.in.rows();
        const auto hw = static_cast<Eigen::Index>(lay.in_shape.height * lay.in_shape.width);
        const auto count = static_cast<S>(n * hw);
        const auto gamma = row(lay.param_offset, l.channels);
        for (Eigen::Index ch = 0; ch < static_cast<Eigen::Index>(l.channels); ++ch) {
            auto dy = d.middleCols(ch * hw, hw);
            auto xh = c.xhat.middleCols(ch * hw, hw);
            const S sum_dy = dy.sum();
            const S sum_dy_xh = (dy.array() * xh.array()).sum();
            grad[lay.param_offset + static_cast<std::size_t>(ch)] = sum_dy_xh;
            grad[lay.param_offset + l.channels + static_cast<std::size_t>(ch)] = sum_dy;
            if (need_input) {
                const S scale = gamma(ch) * c.inv_std(ch) / count;
                dy = (scale * (count * dy.array() - sum_dy - xh.array() * sum_dy_xh)).matrix();
            }
        }
    }

    void forward_layer(const MaxPoolLayer& l, const LayerLayout& lay, Cache& c) {
        const auto n = c.in.rows();
        const Shape3& in = lay.in_shape;
        const Shape3& out = lay.out_shape;
        c.out.resize(n, static_cast<Eigen::Index>(out.size()));
        c.argmax.resize(static_cast<std::size_t>(n) * out.size());
        for (Eigen::Index s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < in.channels; ++ch)
                for (std::size_t oh = 0; oh < out.height; ++oh)
                    for (std::size_t ow = 0; ow < out.width; ++ow) {
                        Eigen::Index best = -1;
                        S best_val = -std::numeric_limits<S>::infinity();
                        for (std::size_t i = 0; i < l.window; ++i)
                            for (std::size_t j = 0; j < l.window; ++j) {
                                const auto idx = static_cast<Eigen::Index>(
                                    (ch * in.height + oh * l.window + i) * in.width + ow * l.window + j);
                                if (best < 0 || c.in(s, idx) > best_val) {
                                    best = idx;
                                    best_val = c.in(s, idx);
                                }
                            }
                        const auto o = (ch * out.height + oh) * out.width + ow;
                        c.out(s, static_cast<Eigen::Index>(o)) = best_val;
                        c.argmax[static_cast<std::size_t>(s) * out.size() + o] = best;
                    }
    }

    void backward_layer(const MaxPoolLayer&, const LayerLayout& lay, Cache& c, Mat<S>& d, std::vector<S>&,
                        bool need_input) {
        if (!need_input) return;
        Mat<S> dx = Mat<S>::Zero(c.in.rows(), c.in.cols());
        const std::size_t out_size = lay.out_shape.size();
        for (Eigen::Index s = 0; s < dx.rows(); ++s)
            for (std::size_t o = 0; o < out_size; ++o)
                dx(s, c.argmax[static_cast<std::size_t>(s) * out_size + o]) += d(s, static_cast<Eigen::Index>(o));
        d = std::move(dx);
    }

    void forward_layer(const FlattenLayer&, const LayerLayout&, Cache& c) { c.out = c.in; }
    void backward_layer(const FlattenLayer&, const LayerLayout&, Cache&, Mat<S>&, std::vector<S>&, bool) {}

    const Network& net_;
    std::vector<S> p_;
    std::vector<Cache> caches_;
};

// Mean loss over samples and its gradient w.r.t. the network output.
template <class S>
S output_loss(LossKind kind, const Mat<S>& out, const Batch& batch, Mat<S>* dout) {
    const auto n = out.rows();
    const S inv_n = S(1) / static_cast<S>(n);
    S total = 0;
    if (dout) dout->resize(out.rows(), out.cols());
    if (kind == LossKind::cross_entropy) {
        for (Eigen::Index s = 0; s < n; ++s) {
            const S m = out.row(s).maxCoeff();
            const auto shifted = (out.row(s).array() - m).eval();
            const S sum_exp = shifted.exp().sum();
            const S lse = std::log(sum_exp);
            const auto label = static_cast<Eigen::Index>(batch.labels[static_cast<std::size_t>(s)]);
            total += lse - shifted(label);
            if (dout) {
                dout->row(s) = (shifted.exp() / sum_exp * inv_n).matrix();
                (*dout)(s, label) -= inv_n;
            }
        }
    } else {
        const Mat<S> diff = out - batch.targets.cast<S>();
        total = S(0.5) * diff.squaredNorm();
        if (dout) *dout = diff * inv_n;
    }
    return total * inv_n;
}

template <class S>
LossGrad run_loss_and_grad(const Network& net, const ParamVector& params, const Batch& batch) {
    Engine<S> engine(net, params);
    const Mat<S> out = engine.forward(batch.inputs, true);
    Mat<S> dout;
    const S loss = output_loss<S>(net.spec().loss, out, batch, &dout);
    const std::size_t last = net.spec().layers.size() - 1;
    if (!std::isfinite(static_cast<double>(loss))) throw NumericalError(last, "loss is not finite");
    std::vector<S> grad;
    engine.backward(std::move(dout), grad);
    LossGrad result;
    result.loss = static_cast<double>(loss);
    result.grad = ParamVector(std::vector<double>(grad.begin(), grad.end()));
    return result;
}

template <class S>
double run_loss(const Network& net, const ParamVector& params, const Batch& batch) {
    Engine<S> engine(net, params);
    const Mat<S> out = engine.forward(batch.inputs, false);
    const S loss = output_loss<S>(net.spec().loss, out, batch, nullptr);
    if (!std::isfinite(static_cast<double>(loss)))
        throw NumericalError(net.spec().layers.size() - 1, "loss is not finite");
    return static_cast<double>(loss);
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

std::string to_string(LossKind k) { return k == LossKind::cross_entropy ? "cross_entropy" : "squared_error"; }

std::string layer_name(const LayerSpec& layer) {
    return std::visit(
        overloaded{
            [](const DenseLayer& d) { return "dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")"; },
            [](const Conv2dLayer& c) {
                return "conv2d(" + std::to_string(c.in_channels) + "," + std::to_string(c.filters) + "," +
                       std::to_string(c.kernel) + "," + std::to_string(c.stride) + ")";
            },
            [](const BatchNormLayer& b) { return "batchnorm(" + std::to_string(b.channels) + ")"; },
            [](const MaxPoolLayer& m) { return "maxpool(" + std::to_string(m.window) + ")"; },
            [](const FlattenLayer&) { return std::string("flatten"); },
            [](const SoftmaxHeadLayer& h) {
                return "softmax_head(" + std::to_string(h.in) + "," + std::to_string(h.ways) + ")";
            },
        },
        layer);
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.layers.empty()) throw SpecError(0, 0, "network has no layers");
    input_ = derive_input(spec_);
    if (input_.size() == 0) throw SpecError(0, 0, "input shape has zero size");

    Shape3 shape = input_;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const std::size_t prev = i == 0 ? 0 : i - 1;
        const auto mismatch = [&](const std::string& what) {
            return SpecError(prev, i,
                             (i == 0 ? std::string("input") : layer_name(spec_.layers[prev])) + " feeding " +
                                 layer_name(spec_.layers[i]) + ": " + what);
        };
        LayerLayout lay;
        lay.param_offset = offset;
        lay.in_shape = shape;
        std::visit(
            overloaded{
                [&](const DenseLayer& d) {
                    if (d.in == 0 || d.out == 0) throw SpecError(i, i, "dense sizes must be positive");
                    if (shape.size() != d.in)
                        throw mismatch("produces " + std::to_string(shape.size()) + " features");
                    lay.param_count = d.out * d.in + d.out;
                    lay.out_shape = {d.out, 1, 1};
                },
                [&](const SoftmaxHeadLayer& h) {
                    if (h.in == 0 || h.ways == 0) throw SpecError(i, i, "softmax_head sizes must be positive");
                    if (i + 1 != spec_.layers.size()) throw SpecError(i, i + 1, "softmax_head must be the last layer");
                    if (shape.size() != h.in)
                        throw mismatch("produces " + std::to_string(shape.size()) + " features");
                    lay.param_count = h.ways * h.in + h.ways;
                    lay.out_shape = {h.ways, 1, 1};
                },
                [&](const Conv2dLayer& c) {
                    if (c.in_channels == 0 || c.filters == 0 || c.kernel == 0 || c.stride == 0)
                        throw SpecError(i, i, "conv2d sizes must be positive");
                    if (shape.channels != c.in_channels)
                        throw mismatch("produces " + std::to_string(shape.channels) + " channels");
                    const std::size_t pad = conv_pad(c);
                    const std::size_t h = conv_extent(shape.height, c.kernel, c.stride, pad);
                    const std::size_t w = conv_extent(shape.width, c.kernel, c.stride, pad);
                    if (h == 0 || w == 0) throw mismatch("spatial extent smaller than the kernel");
                    lay.param_count = c.filters * c.in_channels * c.kernel * c.kernel + c.filters;
                    lay.out_shape = {c.filters, h, w};
                },
                [&](const BatchNormLayer& b) {
                    if (b.channels == 0) throw SpecError(i, i, "batchnorm channels must be positive");
                    if (shape.channels != b.channels)
                        throw mismatch("produces " + std::to_string(shape.channels) + " channels");
                    lay.param_count = 2 * b.channels;
                    lay.out_shape = shape;
                },
                [&](const MaxPoolLayer& m) {
                    if (m.window == 0) throw SpecError(i, i, "maxpool window must be positive");
                    if (shape.height < m.window || shape.width < m.window)
                        throw mismatch("spatial extent smaller than the pooling window");
                    lay.param_count = 0;
                    lay.out_shape = {shape.channels, shape.height / m.window, shape.width / m.window};
                },
                [&](const FlattenLayer&) {
                    lay.param_count = 0;
                    lay.out_shape = {shape.size(), 1, 1};
                },
            },
            spec_.layers[i]);
        offset += lay.param_count;
        shape = lay.out_shape;
        layout_.push_back(lay);
    }
    param_count_ = offset;
    if (spec_.loss == LossKind::cross_entropy && !has_separable_head())
        throw SpecError(spec_.layers.size() - 1, spec_.layers.size() - 1,
                        "cross_entropy loss requires a terminal softmax_head");
}

bool Network::has_separable_head() const noexcept {
    return std::holds_alternative<SoftmaxHeadLayer>(spec_.layers.back());
}

std::size_t Network::head_offset() const {
    if (!has_separable_head())
        throw SpecError(spec_.layers.size() - 1, spec_.layers.size() - 1, "network has no separable softmax_head");
    return layout_.back().param_offset;
}

std::size_t Network::head_param_count() const {
    return has_separable_head() ? param_count_ - layout_.back().param_offset : 0;
}

void Network::check_params(const ParamVector& params) const {
    if (params.size() != param_count_) throw ShapeError("parameter count", param_count_, params.size());
}

void Network::check_batch(const Batch& batch) const {
    if (batch.size() == 0) throw invalid_argument("empty batch");
    if (static_cast<std::size_t>(batch.inputs.cols()) != input_size())
        throw ShapeError("input features", input_size(), static_cast<std::size_t>(batch.inputs.cols()));
    if (spec_.loss == LossKind::cross_entropy) {
        if (batch.labels.size() != batch.size()) throw ShapeError("label count", batch.size(), batch.labels.size());
        const auto ways = static_cast<int>(output_size());
        for (int label : batch.labels)
            if (label < 0 || label >= ways)
                throw invalid_argument("label " + std::to_string(label) + " outside [0, " + std::to_string(ways) + ")");
    } else {
        if (static_cast<std::size_t>(batch.targets.rows()) != batch.size())
            throw ShapeError("target rows", batch.size(), static_cast<std::size_t>(batch.targets.rows()));
        if (static_cast<std::size_t>(batch.targets.cols()) != output_size())
            throw ShapeError("target columns", output_size(), static_cast<std::size_t>(batch.targets.cols()));
    }
}

Matrix Network::forward(const ParamVector& params, const Matrix& inputs) const {
    check_params(params);
    if (static_cast<std::size_t>(inputs.cols()) != input_size())
        throw ShapeError("input features", input_size(), static_cast<std::size_t>(inputs.cols()));
    if (spec_.precision == Precision::f32) return Engine<float>(*this, params).forward(inputs, false).cast<double>();
    return Engine<double>(*this, params).forward(inputs, false);
}

LossGrad Network::loss_and_grad(const ParamVector& params, const Batch& batch) const {
    check_params(params);
    check_batch(batch);
    if (spec_.precision == Precision::f32) return run_loss_and_grad<float>(*this, params, batch);
    return run_loss_and_grad<double>(*this, params, batch);
}

double Network::loss(const ParamVector& params, const Batch& batch) const {
    check_params(params);
    check_batch(batch);
    if (spec_.precision == Precision::f32) return run_loss<float>(*this, params, batch);
    return run_loss<double>(*this, params, batch);
}

std::vector<int> Network::predict(const ParamVector& params, const Matrix& inputs) const {
    const Matrix out = forward(params, inputs);
    std::vector<int> labels(static_cast<std::size_t>(out.rows()));
    for (Eigen::Index s = 0; s < out.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < out.cols(); ++j)
            if (out(s, j) > out(s, best)) best = j;
        labels[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return labels;
}

double Network::accuracy(const ParamVector& params, const Batch& batch) const {
    if (batch.size() == 0) throw invalid_argument("empty batch");
    if (batch.labels.size() != batch.size()) throw ShapeError("label count", batch.size(), batch.labels.size());
    const auto predicted = predict(params, batch.inputs);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < predicted.size(); ++s) correct += predicted[s] == batch.labels[s] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

ParamVector init_params(const Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamVector params(net.param_count(), 0.0);
    const auto fill_uniform = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t j = 0; j < count; ++j) params[offset + j] = dist(rng);
    };
    const auto& layers = net.spec().layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::size_t off = net.layout()[i].param_offset;
        std::visit(overloaded{
                       [&](const DenseLayer& d) { fill_uniform(off, d.in * d.out, d.in); },
                       [&](const SoftmaxHeadLayer& h) { fill_uniform(off, h.in * h.ways, h.in); },
                       [&](const Conv2dLayer& c) {
                           const std::size_t fan_in = c.in_channels * c.kernel * c.kernel;
                           fill_uniform(off, c.filters * fan_in, fan_in);
                       },
                       [&](const BatchNormLayer& b) {
                           for (std::size_t j = 0; j < b.channels; ++j) params[off + j] = 1.0;
                       },
                       [](const auto&) {},
                   },
                   layers[i]);
    }
    return params;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) { return init_params(Network(spec), seed); }

}  // namespace seqmeta
