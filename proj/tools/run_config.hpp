#pragma once

#include "trbsde/experiments.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace trbsde::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentInfo {
    std::string id;
    std::string summary;
};

const std::vector<ExperimentInfo>& experiments();

struct RunConfig {
    std::string experiment = "lq-sweep";
    std::string output = "results";
    std::uint64_t seed = 0;

    LqConfig lq;

    PendulumConfig pendulum = PendulumConfig::defaults();
    int pendulum_seeds = 1;

    FinetuneExperimentConfig finetune;
};

RunConfig default_config(const std::string& experiment);

/// Reads an INI file: a [run] section plus one section per experiment.
/// Unknown sections or keys are rejected.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

/// Throws ConfigError on out-of-range parameters.
void validate(const RunConfig& cfg);

struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
};

/// Every parameter of the selected experiment plus the [run] section, in file order.
std::vector<ConfigEntry> entries(const RunConfig& cfg);

/// INI text with every parameter of the selected experiment spelled out.
std::string to_ini(const RunConfig& cfg);

}  // namespace trbsde::cli
