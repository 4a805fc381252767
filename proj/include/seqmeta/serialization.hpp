#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "seqmeta/decay_fit.hpp"
#include "seqmeta/meta.hpp"
#include "seqmeta/network.hpp"

namespace seqmeta {

/// {"input": [c, h, w]?, "loss": ..., "precision": ..., "layers": [{"type": ...}, ...]}
nlohmann::ordered_json network_spec_to_json(const NetworkSpec& spec);
/// Throws Error(parse) on malformed documents; shape validation is left to Network.
NetworkSpec network_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json meta_config_to_json(const MetaConfig& cfg);
/// Missing keys keep their defaults.
MetaConfig meta_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json fit_to_json(const DecayFit& fit);
DecayFit fit_from_json(const nlohmann::json& j);

nlohmann::ordered_json correlation_to_json(const Correlation& c);

Activation parse_activation(const std::string& name);
LossKind parse_loss_kind(const std::string& name);
HeadMode parse_head_mode(const std::string& name);
ObjectiveVariant parse_objective(const std::string& name);

}  // namespace seqmeta
