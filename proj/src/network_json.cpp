#include <variant>

#include "seqmeta/errors.hpp"
#include "seqmeta/serialization.hpp"

namespace seqmeta {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

Error parse_error(const std::string& what) { return Error(ErrorKind::parse, what); }

template <class T>
T required(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw parse_error(where + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw parse_error(where + ": bad \"" + key + "\": " + e.what());
    }
}

template <class T>
T optional_value(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw parse_error(where + ": bad \"" + key + "\": " + e.what());
    }
}

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw parse_error("unknown activation \"" + name + "\"");
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "cross_entropy") return LossKind::cross_entropy;
    if (name == "squared_error") return LossKind::squared_error;
    throw parse_error("unknown loss kind \"" + name + "\"");
}

HeadMode parse_head_mode(const std::string& name) {
    if (name == "single") return HeadMode::single;
    if (name == "multi") return HeadMode::multi;
    throw parse_error("unknown head mode \"" + name + "\" (expected single or multi)");
}

ObjectiveVariant parse_objective(const std::string& name) {
    if (name == "both_ends") return ObjectiveVariant::both_ends;
    if (name == "end_only") return ObjectiveVariant::end_only;
    throw parse_error("unknown objective variant \"" + name + "\"");
}

ordered_json network_spec_to_json(const NetworkSpec& spec) {
    ordered_json j;
    if (spec.input.channels != 0) j["input"] = {spec.input.channels, spec.input.height, spec.input.width};
    j["loss"] = to_string(spec.loss);
    j["precision"] = spec.precision == Precision::f64 ? "f64" : "f32";
    ordered_json layers = ordered_json::array();
    for (const auto& layer : spec.layers) {
        ordered_json l;
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            l["type"] = "dense";
            l["in"] = d->in;
            l["out"] = d->out;
            l["activation"] = to_string(d->activation);
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            l["type"] = "conv2d";
            l["in_channels"] = c->in_channels;
            l["filters"] = c->filters;
            l["kernel"] = c->kernel;
            l["stride"] = c->stride;
            l["padding"] = c->padding == Padding::same ? "same" : "valid";
            l["activation"] = to_string(c->activation);
        } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
            l["type"] = "batchnorm";
            l["channels"] = b->channels;
            l["activation"] = to_string(b->activation);
        } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer)) {
            l["type"] = "maxpool";
            l["window"] = m->window;
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            l["type"] = "flatten";
        } else if (const auto* h = std::get_if<SoftmaxHeadLayer>(&layer)) {
            l["type"] = "softmax_head";
            l["in"] = h->in;
            l["ways"] = h->ways;
        }
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    return j;
}

NetworkSpec network_spec_from_json(const json& j) {
    if (!j.is_object()) throw parse_error("network spec must be a JSON object");
    NetworkSpec spec;
    if (j.contains("input")) {
        const auto dims = required<std::vector<std::size_t>>(j, "input", "network");
        if (dims.empty() || dims.size() > 3) throw parse_error("network: \"input\" must have 1 to 3 dimensions");
        spec.input = {dims[0], dims.size() > 1 ? dims[1] : 1, dims.size() > 2 ? dims[2] : 1};
    }
    spec.loss = parse_loss_kind(optional_value<std::string>(j, "loss", "cross_entropy", "network"));
    const auto precision = optional_value<std::string>(j, "precision", "f64", "network");
    if (precision == "f64")
        spec.precision = Precision::f64;
    else if (precision == "f32")
        spec.precision = Precision::f32;
    else
        throw parse_error("network: unknown precision \"" + precision + "\"");
    if (!j.contains("layers") || !j["layers"].is_array()) throw parse_error("network: missing \"layers\" array");
    std::size_t index = 0;
    for (const auto& l : j["layers"]) {
        const std::string where = "network layer " + std::to_string(index++);
        const auto type = required<std::string>(l, "type", where);
        if (type == "dense") {
            spec.layers.emplace_back(DenseLayer{required<std::size_t>(l, "in", where), required<std::size_t>(l, "out", where),
                                                parse_activation(optional_value<std::string>(l, "activation", "relu", where))});
        } else if (type == "conv2d") {
            Conv2dLayer c;
            c.in_channels = required<std::size_t>(l, "in_channels", where);
            c.filters = required<std::size_t>(l, "filters", where);
            c.kernel = optional_value<std::size_t>(l, "kernel", 3, where);
            c.stride = optional_value<std::size_t>(l, "stride", 1, where);
            c.activation = parse_activation(optional_value<std::string>(l, "activation", "linear", where));
            const auto padding = optional_value<std::string>(l, "padding", "same", where);
            if (padding != "same" && padding != "valid") throw parse_error(where + ": padding must be same or valid");
            c.padding = padding == "same" ? Padding::same : Padding::valid;
            spec.layers.emplace_back(c);
        } else if (type == "batchnorm") {
            spec.layers.emplace_back(
                BatchNormLayer{required<std::size_t>(l, "channels", where),
                               parse_activation(optional_value<std::string>(l, "activation", "linear", where))});
        } else if (type == "maxpool") {
            spec.layers.emplace_back(MaxPoolLayer{optional_value<std::size_t>(l, "window", 2, where)});
        } else if (type == "flatten") {
            spec.layers.emplace_back(FlattenLayer{});
        } else if (type == "softmax_head") {
            spec.layers.emplace_back(
                SoftmaxHeadLayer{required<std::size_t>(l, "in", where), required<std::size_t>(l, "ways", where)});
        } else {
            throw parse_error(where + ": unknown layer type \"" + type + "\"");
        }
    }
    return spec;
}

ordered_json meta_config_to_json(const MetaConfig& cfg) {
    ordered_json j;
    j["inner_lr"] = cfg.inner_lr;
    j["inner_iterations"] = cfg.inner_iterations;
    j["sequence_length"] = cfg.sequence_length;
    j["meta_batch_size"] = cfg.meta_batch_size;
    j["meta_lr"] = cfg.meta_lr;
    j["meta_iterations"] = cfg.meta_iterations;
    j["objective"] = to_string(cfg.objective);
    j["head_mode"] = to_string(cfg.head_mode);
    return j;
}

MetaConfig meta_config_from_json(const json& j) {
    if (!j.is_object()) throw parse_error("meta section must be a JSON object");
    MetaConfig cfg;
    const std::string where = "meta";
    cfg.inner_lr = optional_value(j, "inner_lr", cfg.inner_lr, where);
    cfg.inner_iterations = optional_value(j, "inner_iterations", cfg.inner_iterations, where);
    cfg.sequence_length = optional_value(j, "sequence_length", cfg.sequence_length, where);
    cfg.meta_batch_size = optional_value(j, "meta_batch_size", cfg.meta_batch_size, where);
    cfg.meta_lr = optional_value(j, "meta_lr", cfg.meta_lr, where);
    cfg.meta_iterations = optional_value(j, "meta_iterations", cfg.meta_iterations, where);
    cfg.objective = parse_objective(optional_value<std::string>(j, "objective", "both_ends", where));
    cfg.head_mode = parse_head_mode(optional_value<std::string>(j, "head_mode", "single", where));
    return cfg;
}

ordered_json fit_to_json(const DecayFit& fit) {
    ordered_json j;
    j["a"] = fit.a;
    j["tau"] = fit.tau;
    j["chance"] = fit.chance;
    j["residual_sse"] = fit.residual_sse;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    return j;
}

DecayFit fit_from_json(const json& j) {
    DecayFit fit;
    fit.a = required<double>(j, "a", "fit");
    fit.tau = required<double>(j, "tau", "fit");
    fit.chance = required<double>(j, "chance", "fit");
    fit.residual_sse = required<double>(j, "residual_sse", "fit");
    fit.converged = required<bool>(j, "converged", "fit");
    fit.iterations = required<std::size_t>(j, "iterations", "fit");
    return fit;
}

ordered_json correlation_to_json(const Correlation& c) {
    ordered_json j;
    j["r"] = c.r;
    j["p"] = c.p;
    j["n"] = c.n;
    return j;
}

}  // namespace seqmeta
