#include "nec/harness.hpp"

#include "nec/baselines.hpp"
#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

namespace nec {

namespace {

// splitmix64 finalizer: decorrelates derived seeds for episodes and evaluations.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = seed ^ (stream * 0x9e3779b97f4a7c15ULL) ^ (index * 0xbf58476d1ce4e5b9ULL);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum : std::uint64_t { kTrainEpisode = 1, kEvalRun = 2, kEvalEpisode = 3, kEvalTies = 4, kReference = 5 };

}  // namespace

std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, const Environment& env, std::uint64_t seed) {
    switch (cfg.agent) {
        case AgentKind::nec: return std::make_unique<NecAgent>(cfg.nec, env.obs_dim(), env.num_actions(), seed);
        case AgentKind::mfec: return std::make_unique<MfecAgent>(cfg.mfec, env.obs_dim(), env.num_actions(), seed);
        case AgentKind::tabular:
            return std::make_unique<TabularAgent>(cfg.tabular, env.num_states(), env.num_actions(), seed);
    }
    throw ConfigError("unknown agent kind");
}

EvalResult evaluate_policy(const Agent& agent, const EnvSpec& spec, std::size_t episodes, std::uint64_t seed,
                           double gamma) {
    if (episodes == 0) throw InputError("evaluate_policy: episodes must be >= 1");
    Environment env(spec);
    EvalResult result;
    for (std::size_t e = 0; e < episodes; ++e) {
        env.reset(derive_seed(seed, kEvalEpisode, e));
        std::mt19937_64 ties(derive_seed(seed, kEvalTies, e));
        double ret = 0.0, raw = 0.0, discount = 1.0;
        while (env.episode_active()) {
            const auto step = env.step(agent.greedy_action(env, ties));
            ret += discount * step.reward;
            raw += step.reward;
            discount *= gamma;
        }
        result.returns.push_back(ret);
        result.raw_returns.push_back(raw);
    }
    result.mean_return = mean(result.returns);
    result.mean_raw_return = mean(result.raw_returns);
    return result;
}

std::vector<std::size_t> greedy_trajectory(const Agent& agent, const EnvSpec& spec, std::uint64_t seed) {
    Environment env(spec);
    env.reset(derive_seed(seed, kEvalEpisode, 0));
    std::mt19937_64 ties(derive_seed(seed, kEvalTies, 0));
    std::vector<std::size_t> states{env.state()};
    while (env.episode_active()) {
        env.step(agent.greedy_action(env, ties));
        states.push_back(env.state());
    }
    return states;
}

std::vector<std::pair<std::uint64_t, double>> RunRecord::series(const std::string& metric) const {
    std::vector<std::pair<std::uint64_t, double>> out;
    for (const auto& r : rows)
        if (r.metric == metric) out.emplace_back(r.step, r.value);
    return out;
}

RunResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const EvalHook& hook) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    Environment env(cfg.env);
    RunResult out;
    out.agent = make_agent(cfg, env, seed);
    Agent& agent = *out.agent;
    RunRecord& rec = out.record;
    rec.env = cfg.env.display_label();
    rec.agent = std::string(to_string(cfg.agent));
    rec.seed = seed;
    auto emit = [&](std::uint64_t step, const char* metric, double value) {
        rec.rows.push_back({rec.env, rec.agent, seed, step, metric, value});
    };
    auto evaluate = [&](std::uint64_t step) {
        const auto ev = evaluate_policy(agent, cfg.env, cfg.eval_episodes, derive_seed(seed, kEvalRun, step),
                                        cfg.eval_gamma);
        emit(step, "eval_return", ev.mean_return);
        emit(step, "eval_raw_return", ev.mean_raw_return);
        if (hook) hook(step, agent);
    };

    std::uint64_t episode = 0;
    env.reset(derive_seed(seed, kTrainEpisode, episode));
    agent.begin_episode(env);
    double episode_return = 0.0;
    std::uint64_t episode_length = 0;
    evaluate(0);
    for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
        const auto step = agent.step(env);
        episode_return += step.reward;
        ++episode_length;
        if (step.done()) {
            emit(t, "episode_return", episode_return);
            emit(t, "episode_length", static_cast<double>(episode_length));
            episode_return = 0.0;
            episode_length = 0;
            env.reset(derive_seed(seed, kTrainEpisode, ++episode));
            agent.begin_episode(env);
        }
        if (t % cfg.eval_every == 0 || t == cfg.steps) evaluate(t);
    }
    emit(cfg.steps, "skipped_records", static_cast<double>(agent.skipped_records()));
    emit(cfg.steps, "rejected_updates", static_cast<double>(agent.rejected_updates()));
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RunRecord> records;
    for (auto seed : cfg.seeds) records.push_back(run_seed(cfg, seed).record);
    return records;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void check_field(const std::string& field) {
    if (field.find_first_of(",\"\n\r") != std::string::npos)
        throw InputError("CSV field contains a separator: '" + field + "'");
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        fields.push_back(line.substr(begin, comma - begin));
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    return fields;
}

}  // namespace

void write_csv(std::ostream& os, const std::vector<RunRecord>& records) {
    os << kCsvHeader << '\n';
    for (const auto& rec : records) {
        for (const auto& r : rec.rows) {
            check_field(r.env);
            check_field(r.agent);
            check_field(r.metric);
            os << r.env << ',' << r.agent << ',' << r.seed << ',' << r.step << ',' << r.metric << ','
               << io::format_double(r.value) << '\n';
        }
    }
}

std::string records_to_csv(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    write_csv(os, records);
    return os.str();
}

std::vector<MetricRow> parse_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InputError("CSV: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw InputError("CSV: unexpected header '" + line + "'");
    std::vector<MetricRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 6) throw InputError("CSV line " + std::to_string(lineno) + ": expected 6 fields");
        try {
            MetricRow r;
            r.env = f[0];
            r.agent = f[1];
            r.seed = io::parse_uint(f[2]);
            r.step = io::parse_uint(f[3]);
            r.metric = f[4];
            r.value = io::parse_double(f[5]);
            rows.push_back(std::move(r));
        } catch (const InputError& e) {
            throw InputError("CSV line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// References and aggregation

Reference compute_reference(const EnvSpec& spec, double gamma, std::size_t episodes, std::uint64_t seed) {
    if (episodes == 0) throw InputError("compute_reference: episodes must be >= 1");
    Environment env(spec);
    const auto q = optimal_q_oracle(spec, gamma);
    const std::size_t A = env.num_actions();
    const std::size_t s0 = env.mdp().start;
    Reference ref;
    ref.oracle_score = *std::max_element(q.begin() + static_cast<std::ptrdiff_t>(s0 * A),
                                         q.begin() + static_cast<std::ptrdiff_t>((s0 + 1) * A));
    std::mt19937_64 rng(derive_seed(seed, kReference, 0));
    std::uniform_int_distribution<std::size_t> pick(0, A - 1);
    std::vector<double> returns;
    returns.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        env.reset(derive_seed(seed, kReference, e + 1));
        double ret = 0.0, discount = 1.0;
        while (env.episode_active()) {
            ret += discount * env.step(pick(rng)).reward;
            discount *= gamma;
        }
        returns.push_back(ret);
    }
    ref.random_score = mean(std::move(returns));
    return ref;
}

std::string references_to_json(const ReferenceTable& refs) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [env, r] : refs) j[env] = {{"random", r.random_score}, {"oracle", r.oracle_score}};
    return nlohmann::json{{"references", j}}.dump(2) + "\n";
}

ReferenceTable references_from_json(const std::string& text) {
    ReferenceTable refs;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& [env, r] : j.at("references").items())
            refs[env] = {r.at("random").get<double>(), r.at("oracle").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("references JSON: ") + e.what());
    }
    return refs;
}

double normalized_score(double score, const Reference& ref) {
    const double span = ref.oracle_score - ref.random_score;
    if (!(std::abs(span) > 0.0) || !std::isfinite(span))
        throw AggregationError("oracle and random references coincide");
    return 100.0 * (score - ref.random_score) / span;
}

double median(std::vector<double> values) {
    if (values.empty()) throw AggregationError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(std::vector<double> values) {
    if (values.empty()) throw AggregationError("mean of an empty set");
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values) total += v;
    return total / static_cast<double>(values.size());
}

ScoreTable aggregate_scores(const std::vector<MetricRow>& rows, const ReferenceTable& refs,
                            const std::string& metric) {
    std::map<std::tuple<std::string, std::uint64_t, std::string>, std::vector<double>> by_cell;
    for (const auto& r : rows)
        if (r.metric == metric) by_cell[{r.agent, r.step, r.env}].push_back(r.value);
    if (by_cell.empty()) throw AggregationError("no '" + metric + "' rows to aggregate");

    ScoreTable table;
    std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> by_checkpoint;
    for (const auto& [cell, values] : by_cell) {
        const auto& [agent, step, env] = cell;
        const auto ref = refs.find(env);
        if (ref == refs.end()) throw AggregationError("missing reference scores for env '" + env + "'");
        ScoreEntry e{agent, step, env, mean(values), 0.0};
        e.normalized = normalized_score(e.score, ref->second);
        by_checkpoint[{agent, step}].push_back(e.normalized);
        table.entries.push_back(std::move(e));
    }
    for (const auto& [key, values] : by_checkpoint)
        table.summaries.push_back({key.first, key.second, median(values), mean(values), values.size()});
    return table;
}

std::string score_table_to_csv(const ScoreTable& table) {
    std::ostringstream os;
    os << "agent,step,statistic,env,value\n";
    for (const auto& e : table.entries) {
        os << e.agent << ',' << e.step << ",score," << e.env << ',' << io::format_double(e.score) << '\n';
        os << e.agent << ',' << e.step << ",normalized," << e.env << ',' << io::format_double(e.normalized) << '\n';
    }
    for (const auto& s : table.summaries) {
        os << s.agent << ',' << s.step << ",median,all," << io::format_double(s.median) << '\n';
        os << s.agent << ',' << s.step << ",mean,all," << io::format_double(s.mean) << '\n';
    }
    return os.str();
}

std::string run_summary_json(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                             const ReferenceTable& refs) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
    j["config"] = config;
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (const auto& [env, ref] : refs) r[env] = {{"random", ref.random_score}, {"oracle", ref.oracle_score}};
    j["references"] = r;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& rec : records) {
        std::size_t episodes = 0;
        for (const auto& row : rec.rows) episodes += row.metric == "episode_return";
        runs.push_back({{"env", rec.env},
                        {"agent", rec.agent},
                        {"seed", rec.seed},
                        {"episodes", episodes},
                        {"wall_seconds", rec.wall_seconds}});
    }
    j["runs"] = runs;
    return j.dump(2) + "\n";
}

}  // namespace nec
