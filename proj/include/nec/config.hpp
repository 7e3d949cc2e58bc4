#pragma once

// Experiment configuration: flat `key = value` text with dotted section names.
// See docs/config.md for the full schema.

#include "nec/agent.hpp"
#include "nec/baselines.hpp"
#include "nec/envs.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nec {

enum class AgentKind { nec, mfec, tabular };
std::string_view to_string(AgentKind kind);
AgentKind parse_agent_kind(std::string_view name);

struct ExperimentConfig {
    AgentKind agent = AgentKind::nec;
    std::uint64_t steps = 10000;
    std::uint64_t eval_every = 1000;
    std::size_t eval_episodes = 5;
    double eval_gamma = 0.99;
    std::size_t reference_episodes = 1000;
    std::vector<std::uint64_t> seeds{0};
    std::string output;        // empty: NEC_OUTPUT_DIR, then "runs"
    bool checkpoint = false;   // write the final learner state per seed

    EnvSpec env;
    AgentConfig nec;
    MfecConfig mfec;
    TabularConfig tabular;

    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// Parses config text. Unknown keys, malformed values and duplicate keys raise
/// ConfigError with the line number. The result is validated.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Applies one `key = value` assignment (no validation).
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Every key with its current value, in schema order; parse_config of the
/// joined lines reproduces an equal configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);
std::string config_to_text(const ExperimentConfig& cfg);

/// Directory used when experiment.output is empty.
std::string default_output_dir();

}  // namespace nec
