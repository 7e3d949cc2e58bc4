#include "nec/config.hpp"
#include "nec/error.hpp"
#include "nec/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace nec;

namespace {

ExperimentConfig small_config(AgentKind kind) {
    auto cfg = parse_config(R"(
experiment.steps = 400
experiment.eval_every = 100
experiment.eval_episodes = 3
experiment.reference_episodes = 20
experiment.seeds = 0,1
env.name = gridworld
env.width = 4
env.height = 4
env.max_steps = 50
exploration.start = 1
exploration.end = 0.1
exploration.anneal_steps = 200
nec.train_every = 8
nec.batch_size = 8
)");
    cfg.agent = kind;
    return cfg;
}

std::string state_of(const Agent& agent) {
    std::ostringstream os;
    agent.save(os);
    return os.str();
}

}  // namespace

TEST_CASE("normalized score anchors") {
    const Reference ref{2.0, 10.0};
    CHECK(normalized_score(10.0, ref) == 100.0);
    CHECK(normalized_score(2.0, ref) == 0.0);
    CHECK(normalized_score(6.0, ref) == 50.0);
    CHECK_THROWS_AS(normalized_score(1.0, Reference{3.0, 3.0}), AggregationError);
    CHECK(median({10.0, 30.0, 20.0}) == 20.0);
    CHECK(median({1.0, 2.0, 3.0, 4.0}) == 2.5);
    CHECK_THROWS_AS(median({}), AggregationError);
}

TEST_CASE("evaluation leaves every agent kind untouched") {
    for (auto kind : {AgentKind::nec, AgentKind::mfec, AgentKind::tabular}) {
        auto cfg = small_config(kind);
        cfg.steps = 300;
        auto result = run_seed(cfg, 3);
        const auto before = state_of(*result.agent);
        const auto a = evaluate_policy(*result.agent, cfg.env, 4, 123, 0.99);
        const auto after = state_of(*result.agent);
        CHECK(before == after);
        const auto b = evaluate_policy(*result.agent, cfg.env, 4, 123, 0.99);
        CHECK(a.returns == b.returns);
        CHECK(a.raw_returns.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) CHECK(a.returns[i] <= a.raw_returns[i] + 1e-12);
        CHECK_THROWS_AS(evaluate_policy(*result.agent, cfg.env, 0, 1, 0.99), InputError);
    }
}

TEST_CASE("run records follow the schema and are deterministic") {
    const auto cfg = small_config(AgentKind::nec);
    const auto a = run_seed(cfg, 5).record;
    const auto b = run_seed(cfg, 5).record;
    CHECK(records_to_csv({a}) == records_to_csv({b}));
    CHECK(records_to_csv({a}) != records_to_csv({run_seed(cfg, 6).record}));
    const auto evals = a.series("eval_return");
    REQUIRE(evals.size() == 5);
    CHECK(evals.front().first == 0);
    CHECK(evals.back().first == 400);
    for (std::size_t i = 1; i < evals.size(); ++i) CHECK(evals[i].first > evals[i - 1].first);
    std::uint64_t prev = 0;
    for (const auto& row : a.rows) {
        CHECK(row.step >= prev);
        prev = row.step;
        CHECK(row.env == "gridworld_4x4");
        CHECK(row.agent == "nec");
    }
    CHECK(a.series("skipped_records").size() == 1);
    CHECK(a.series("rejected_updates").size() == 1);
}

TEST_CASE("tie-breaking in evaluation does not consume training randomness") {
    auto cfg = small_config(AgentKind::tabular);
    cfg.eval_every = 50;
    const auto frequent = run_seed(cfg, 2);
    cfg.eval_every = 400;
    const auto rare = run_seed(cfg, 2);
    CHECK(state_of(*frequent.agent) == state_of(*rare.agent));
    CHECK(frequent.record.series("episode_return") == rare.record.series("episode_return"));
}

TEST_CASE("csv round-trips every field exactly") {
    RunRecord rec;
    rec.env = "e";
    rec.agent = "nec";
    rec.seed = 18446744073709551615ull;
    const double awkward[] = {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 5e-324, -0.0, 123456789.125};
    std::uint64_t step = 0;
    for (double v : awkward) rec.rows.push_back({"e", "nec", rec.seed, step++, "eval_return", v});
    const auto csv = records_to_csv({rec});
    CHECK(csv.rfind(kCsvHeader, 0) == 0);
    std::istringstream in(csv);
    const auto rows = parse_csv(in);
    REQUIRE(rows.size() == rec.rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i] == rec.rows[i]);
        CHECK(std::signbit(rows[i].value) == std::signbit(rec.rows[i].value));
    }
}

TEST_CASE("csv parser rejects malformed input") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_csv(in);
    };
    CHECK_THROWS_AS(parse("wrong,header\n"), InputError);
    CHECK_THROWS_AS(parse(std::string(kCsvHeader) + "\na,b,1,2,m\n"), InputError);
    CHECK_THROWS_AS(parse(std::string(kCsvHeader) + "\na,b,x,2,m,1\n"), InputError);
    CHECK_THROWS_AS(parse(std::string(kCsvHeader) + "\na,b,1,2,m,1.5x\n"), InputError);
    CHECK(parse(std::string(kCsvHeader) + "\n").empty());
}

TEST_CASE("references: oracle and random anchors") {
    EnvSpec chain;
    chain.kind = EnvKind::chain;
    chain.length = 3;
    const auto ref = compute_reference(chain, 0.5, 200, 0);
    CHECK(ref.oracle_score == 0.5);
    CHECK(ref.random_score > 0.0);
    CHECK(ref.random_score < ref.oracle_score);
    const ReferenceTable table{{"chain_3", ref}, {"other", {1.0, 2.0}}};
    const auto back = references_from_json(references_to_json(table));
    CHECK(back.at("chain_3").oracle_score == ref.oracle_score);
    CHECK(back.at("chain_3").random_score == ref.random_score);
    CHECK(back.at("other").random_score == 1.0);
    CHECK_THROWS_AS(references_from_json("{\"nope\": 1}"), InputError);
}

TEST_CASE("aggregation is permutation-invariant") {
    std::mt19937_64 rng(1);
    std::vector<MetricRow> rows;
    ReferenceTable refs;
    for (int e = 0; e < 5; ++e) {
        const std::string env = "env" + std::to_string(e);
        refs[env] = {double(e), double(e) + 1.7};
        for (std::uint64_t seed = 0; seed < 7; ++seed)
            for (std::uint64_t step : {0u, 100u})
                rows.push_back({env, "nec", seed, step, "eval_return",
                                std::uniform_real_distribution<double>(-3, 9)(rng)});
    }
    rows.push_back({"env0", "nec", 0, 50, "episode_return", 1.0});
    const auto base = score_table_to_csv(aggregate_scores(rows, refs));
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(rows.begin(), rows.end(), rng);
        CHECK(score_table_to_csv(aggregate_scores(rows, refs)) == base);
    }
    const auto table = aggregate_scores(rows, refs);
    CHECK(table.summaries.size() == 2);
    CHECK(table.summaries[0].num_envs == 5);
    CHECK(table.entries.size() == 10);
    refs.erase("env3");
    CHECK_THROWS_AS(aggregate_scores(rows, refs), AggregationError);
}

TEST_CASE("aggregation of known scores") {
    const ReferenceTable refs{{"a", {0.0, 10.0}}, {"b", {0.0, 10.0}}, {"c", {0.0, 10.0}}};
    std::vector<MetricRow> rows{{"a", "x", 0, 1, "eval_return", 1.0},
                                {"a", "x", 1, 1, "eval_return", 1.0},
                                {"b", "x", 0, 1, "eval_return", 2.0},
                                {"c", "x", 0, 1, "eval_return", 3.0}};
    const auto table = aggregate_scores(rows, refs);
    REQUIRE(table.summaries.size() == 1);
    CHECK(table.summaries[0].median == doctest::Approx(20.0));
    CHECK(table.summaries[0].mean == doctest::Approx(20.0));
    const auto csv = score_table_to_csv(table);
    CHECK(csv.find("x,1,median,all,20") != std::string::npos);
}

TEST_CASE("greedy trajectory starts at the start state") {
    auto cfg = small_config(AgentKind::tabular);
    auto result = run_seed(cfg, 0);
    const auto path = greedy_trajectory(*result.agent, cfg.env, 4);
    REQUIRE_FALSE(path.empty());
    CHECK(path.front() == build_mdp(cfg.env).start);
    CHECK(path.size() <= cfg.env.max_steps + 1);
}

TEST_CASE("run summary json lists config, references and runs") {
    const auto cfg = small_config(AgentKind::mfec);
    const auto records = run_experiment(cfg);
    CHECK(records.size() == 2);
    const ReferenceTable refs{{"gridworld_4x4", compute_reference(cfg.env, cfg.eval_gamma, 10, 0)}};
    const auto json = run_summary_json(cfg, records, refs);
    CHECK(json.find("\"experiment.agent\": \"mfec\"") != std::string::npos);
    CHECK(json.find("gridworld_4x4") != std::string::npos);
    CHECK(json.find("wall_seconds") != std::string::npos);
}
