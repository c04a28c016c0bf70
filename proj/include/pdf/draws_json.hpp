#pragma once

#include <json.hpp>

#include "pdf/inference.hpp"

namespace pdf {

inline constexpr int kDrawsSchemaVersion = 1;

/// Versioned document: {"version", "metadata", "draws": {name: [...]}} with
/// per-patient "v"/"k" stored as one array per draw.
nlohmann::json draws_to_json(const PosteriorDraws& draws);
PosteriorDraws draws_from_json(const nlohmann::json& doc);

nlohmann::json prior_to_json(const PriorSpec& prior);
PriorSpec prior_from_json(const nlohmann::json& doc);

nlohmann::json scalar_prior_to_json(const ScalarPrior& p);
ScalarPrior scalar_prior_from_json(const nlohmann::json& doc);

nlohmann::json obs_to_json(const std::vector<ConcentrationObs>& obs);
std::vector<ConcentrationObs> obs_from_json(const nlohmann::json& doc);

}  // namespace pdf
