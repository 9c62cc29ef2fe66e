#pragma once

#include <string>

#include <json.hpp>

#include "feddah/federation.hpp"
#include "feddah/shapes.hpp"

namespace feddah {

struct ExperimentConfig {
    FederationConfig fed;
    DatasetConfig data;
    std::string out_dir = "out";

    std::string run_id() const;  // "<mode>-s<seed>"
    void validate() const;
};

// Every key optional; unknown keys are rejected by name.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace feddah
