#pragma once

// Line-oriented configuration: `[section]` headers, `key = value` lines and
// `#` comments. Keys carry their unit in the name (mass_kg, arm_m, ...).
// Every key has a default; unknown keys and out-of-range values are errors.

#include "spinhover/analysis.hpp"
#include "spinhover/harness.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinhover {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputSpec {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

struct Config {
  std::string scenario_name = "bicopter_circle";
  SimConfig sim;
  Scenario scenario;
  SweepSpec sweep;
  OutputSpec output;
};

/// Names accepted by scenario_preset, in a stable order.
const std::vector<std::string>& scenario_names();

/// Built-in scenario. Throws ConfigError for an unknown name.
Scenario scenario_preset(const std::string& name);

/// "ideal" or "realistic". Throws ConfigError otherwise.
NoiseSpec noise_preset(const std::string& name);

/// Defaults with the named scenario applied.
Config default_config(const std::string& scenario = "bicopter_circle");

/// Reads a config. The scenario preset is `scenario_override` if given,
/// else `[scenario] preset`, else the default; file keys are applied on top.
/// Errors carry `origin:line`.
Config parse_config(std::istream& is, const std::string& origin = "<config>",
                    const std::optional<std::string>& scenario_override = std::nullopt);

Config load_config(const std::filesystem::path& path,
                   const std::optional<std::string>& scenario_override = std::nullopt);

/// Range and consistency checks on a complete config. Throws ConfigError.
void validate_config(const Config& c);

/// Emits every key. Numeric values equal to the preset default carry a
/// provenance comment (published, calibrated or tuned); changed ones are marked
/// `override`. Reloading the output reproduces the same config.
void write_config(std::ostream& os, const Config& c);

/// Gyroscopic stability gate for every bicopter unit the scenario flies.
/// Throws std::invalid_argument citing the violated inequality.
void require_stable_config(const Config& c);

}  // namespace spinhover
