#pragma once

// JSON (de)serialization shared between the archive and the experiment
// config. Not part of the public API.

#include <nlohmann/json.hpp>

#include "gwpdti/inference.hpp"

namespace gwpdti {

nlohmann::json mcmc_config_to_json(const McmcConfig& c);
/// Overlays the keys present in `j` on `base`; unknown keys are a usage error.
McmcConfig mcmc_config_from_json(const nlohmann::json& j, McmcConfig base);

}  // namespace gwpdti
