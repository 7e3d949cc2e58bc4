#pragma once

// Seeded training runs with periodic greedy evaluation, run records in a frozen
// CSV schema, reference scores and normalized-score aggregation.

#include "nec/agent.hpp"
#include "nec/config.hpp"
#include "nec/envs.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace nec {

/// Agent for the config's agent kind, sized for `env`.
std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, const Environment& env, std::uint64_t seed);

struct EvalResult {
    std::vector<double> returns;      // discounted by the evaluation gamma
    std::vector<double> raw_returns;  // undiscounted
    double mean_return = 0.0;
    double mean_raw_return = 0.0;
};

/// Greedy (epsilon = 0) rollouts in fresh environments seeded from `seed`.
/// Ties are broken by an rng private to the evaluation; the agent is not
/// modified. Throws InputError if episodes == 0.
EvalResult evaluate_policy(const Agent& agent, const EnvSpec& spec, std::size_t episodes, std::uint64_t seed,
                           double gamma);

/// Greedy rollout of one episode returning the visited MDP states (start first).
std::vector<std::size_t> greedy_trajectory(const Agent& agent, const EnvSpec& spec, std::uint64_t seed);

/// One CSV row: env,agent,seed,step,metric,value.
struct MetricRow {
    std::string env;
    std::string agent;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::string metric;
    double value = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline constexpr const char* kCsvHeader = "env,agent,seed,step,metric,value";

struct RunRecord {
    std::string env;
    std::string agent;
    std::uint64_t seed = 0;
    std::vector<MetricRow> rows;
    double wall_seconds = 0.0;  // reported in the JSON summary, never in the CSV

    /// Values of one metric in step order.
    std::vector<std::pair<std::uint64_t, double>> series(const std::string& metric) const;
};

struct RunResult {
    RunRecord record;
    std::unique_ptr<Agent> agent;  // learner state after training
};

/// Optional per-evaluation hook (step, agent) for callers that need more than
/// the recorded metrics.
using EvalHook = std::function<void(std::uint64_t step, const Agent& agent)>;

/// Trains one seed: evaluation at step 0, every eval_every steps and at the
/// final step. Deterministic given (cfg, seed).
RunResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const EvalHook& hook = {});
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

void write_csv(std::ostream& os, const std::vector<RunRecord>& records);
std::string records_to_csv(const std::vector<RunRecord>& records);
/// Parses rows written by write_csv. Throws InputError on malformed input.
std::vector<MetricRow> parse_csv(std::istream& is);

struct Reference {
    double random_score = 0.0;
    double oracle_score = 0.0;
};
using ReferenceTable = std::map<std::string, Reference>;  // keyed by env label

/// Oracle: V*(start) under `gamma`. Random: mean discounted return of the
/// uniform policy over `episodes` episodes.
Reference compute_reference(const EnvSpec& spec, double gamma, std::size_t episodes, std::uint64_t seed);

std::string references_to_json(const ReferenceTable& refs);
ReferenceTable references_from_json(const std::string& text);

struct ScoreEntry {
    std::string agent;
    std::uint64_t step = 0;
    std::string env;
    double score = 0.0;       // mean over seeds
    double normalized = 0.0;  // percent
};

struct ScoreSummary {
    std::string agent;
    std::uint64_t step = 0;
    double median = 0.0;
    double mean = 0.0;
    std::size_t num_envs = 0;
};

struct ScoreTable {
    std::vector<ScoreEntry> entries;
    std::vector<ScoreSummary> summaries;
};

/// 100 (score - random) / (oracle - random), in percent.
double normalized_score(double score, const Reference& ref);
double median(std::vector<double> values);
/// Sum in sorted order, so the result is independent of input order.
double mean(std::vector<double> values);

/// Aggregates `metric` rows (default eval_return). Throws AggregationError on
/// a missing or degenerate reference.
ScoreTable aggregate_scores(const std::vector<MetricRow>& rows, const ReferenceTable& refs,
                            const std::string& metric = "eval_return");
/// CSV: agent,step,statistic,env,value with statistic in {score, normalized,
/// median, mean}; summary rows use env "all".
std::string score_table_to_csv(const ScoreTable& table);

/// JSON run summary: config snapshot, references and wall-clock per seed.
std::string run_summary_json(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                             const ReferenceTable& refs);

}  // namespace nec
