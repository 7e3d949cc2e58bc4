// Exercises the shared library through its C interface only.

#include "nec/nec.h"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    nec_string_free(s);
    return out;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("nec_capi_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSmallRun = R"(
experiment.agent = tabular
experiment.steps = 200
experiment.eval_every = 100
experiment.eval_episodes = 2
experiment.reference_episodes = 10
experiment.seeds = 0,1
env.name = chain
env.length = 4
)";

}  // namespace

TEST_CASE("version and status strings") {
    CHECK(std::string(nec_version()) == "0.1.0");
    CHECK(std::string(nec_status_string(NEC_OK)) == "ok");
    CHECK(std::string(nec_status_string(NEC_ERR_CONFIG)).size() > 0);
    nec_string_free(nullptr);
    nec_config_free(nullptr);
    nec_run_record_free(nullptr);
    nec_dnd_free(nullptr);
}

TEST_CASE("config handle get/set/validate") {
    nec_config* cfg = nullptr;
    REQUIRE(nec_config_default(&cfg) == NEC_OK);
    char* value = nullptr;
    REQUIRE(nec_config_get(cfg, "dnd.p", &value) == NEC_OK);
    CHECK(take(value) == "50");
    CHECK(nec_config_set(cfg, "dnd.p", "7") == NEC_OK);
    REQUIRE(nec_config_get(cfg, "dnd.p", &value) == NEC_OK);
    CHECK(take(value) == "7");
    CHECK(nec_config_set(cfg, "no.such", "1") == NEC_ERR_CONFIG);
    CHECK(std::string(nec_last_error()).find("no.such") != std::string::npos);
    CHECK(nec_config_set(cfg, "nec.gamma", "2") == NEC_OK);
    CHECK(nec_config_validate(cfg) == NEC_ERR_CONFIG);
    CHECK(nec_config_set(cfg, "nec.gamma", "0.9") == NEC_OK);
    CHECK(nec_config_validate(cfg) == NEC_OK);
    char* text = nullptr;
    REQUIRE(nec_config_to_text(cfg, &text) == NEC_OK);
    nec_config* again = nullptr;
    CHECK(nec_config_parse(text, &again) == NEC_OK);
    nec_string_free(text);
    nec_config_free(again);
    nec_config_free(cfg);
}

TEST_CASE("null arguments are input errors") {
    CHECK(nec_config_default(nullptr) == NEC_ERR_INPUT);
    CHECK(nec_config_parse(nullptr, nullptr) == NEC_ERR_INPUT);
    nec_config* cfg = nullptr;
    CHECK(nec_config_parse("experiment.steps = x", &cfg) == NEC_ERR_CONFIG);
    CHECK(cfg == nullptr);
    CHECK(nec_config_load("/nonexistent.cfg", &cfg) == NEC_ERR_IO);
}

TEST_CASE("run, write, aggregate") {
    nec_config* cfg = nullptr;
    REQUIRE(nec_config_parse(kSmallRun, &cfg) == NEC_OK);
    nec_run_record* rec = nullptr;
    REQUIRE(nec_run_experiment(cfg, &rec) == NEC_OK);
    size_t n = 0;
    REQUIRE(nec_run_record_num_rows(rec, &n) == NEC_OK);
    CHECK(n > 0);
    const char *env = nullptr, *agent = nullptr, *metric = nullptr;
    uint64_t seed = 9, step = 9;
    double value = 0;
    REQUIRE(nec_run_record_row(rec, 0, &env, &agent, &seed, &step, &metric, &value) == NEC_OK);
    CHECK(std::string(env) == "chain_4");
    CHECK(std::string(agent) == "tabular");
    CHECK(seed == 0);
    CHECK(step == 0);
    CHECK(std::string(metric) == "eval_return");
    CHECK(nec_run_record_row(rec, n, &env, &agent, &seed, &step, &metric, &value) == NEC_ERR_INPUT);

    char* csv = nullptr;
    REQUIRE(nec_run_record_csv(rec, &csv) == NEC_OK);
    const std::string csv_text = take(csv);
    CHECK(csv_text.rfind("env,agent,seed,step,metric,value\n", 0) == 0);

    const auto dir = scratch("run");
    char* used = nullptr;
    REQUIRE(nec_run_record_write(rec, dir.c_str(), &used) == NEC_OK);
    CHECK(take(used) == dir.string());
    CHECK(slurp(dir / "records.csv") == csv_text);
    CHECK(fs::exists(dir / "run.json"));
    CHECK(fs::exists(dir / "refs.json"));

    char* scores = nullptr;
    REQUIRE(nec_aggregate(dir.c_str(), nullptr, &scores) == NEC_OK);
    const std::string score_text = take(scores);
    CHECK(score_text.rfind("agent,step,statistic,env,value\n", 0) == 0);
    CHECK(score_text.find("tabular,200,median,all,") != std::string::npos);

    const auto refs = (dir / "refs.json").string();
    REQUIRE(nec_aggregate(dir.c_str(), refs.c_str(), &scores) == NEC_OK);
    CHECK(take(scores) == score_text);
    CHECK(nec_aggregate("/nonexistent", nullptr, &scores) == NEC_ERR_IO);

    nec_run_record* again = nullptr;
    REQUIRE(nec_run_experiment(cfg, &again) == NEC_OK);
    REQUIRE(nec_run_record_csv(again, &csv) == NEC_OK);
    CHECK(take(csv) == csv_text);
    nec_run_record_free(again);
    nec_run_record_free(rec);
    nec_config_free(cfg);
    fs::remove_all(dir);
}

TEST_CASE("output directory falls back to the environment variable") {
    nec_config* cfg = nullptr;
    REQUIRE(nec_config_parse(kSmallRun, &cfg) == NEC_OK);
    nec_config_set(cfg, "experiment.seeds", "0");
    nec_run_record* rec = nullptr;
    REQUIRE(nec_run_experiment(cfg, &rec) == NEC_OK);
    const auto dir = scratch("envdir");
    ::setenv("NEC_OUTPUT_DIR", dir.c_str(), 1);
    char* used = nullptr;
    REQUIRE(nec_run_record_write(rec, nullptr, &used) == NEC_OK);
    ::unsetenv("NEC_OUTPUT_DIR");
    CHECK(take(used) == dir.string());
    CHECK(fs::exists(dir / "records.csv"));
    nec_run_record_free(rec);
    nec_config_free(cfg);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints are written and can be inspected") {
    nec_config* cfg = nullptr;
    REQUIRE(nec_config_parse(kSmallRun, &cfg) == NEC_OK);
    for (auto [k, v] : {std::pair{"experiment.agent", "nec"}, {"experiment.checkpoint", "true"},
                        {"experiment.seeds", "3"}, {"dnd.capacity", "100"}})
        REQUIRE(nec_config_set(cfg, k, v) == NEC_OK);
    nec_run_record* rec = nullptr;
    REQUIRE(nec_run_experiment(cfg, &rec) == NEC_OK);
    const auto dir = scratch("ckpt");
    REQUIRE(nec_run_record_write(rec, dir.c_str(), nullptr) == NEC_OK);
    const auto ckpt = (dir / "checkpoint_seed3.bin").string();
    REQUIRE(fs::exists(ckpt));
    char* text = nullptr;
    REQUIRE(nec_dump_memory(ckpt.c_str(), &text) == NEC_OK);
    const auto dump = take(text);
    CHECK(dump.find("size") != std::string::npos);
    CHECK(dump.find("age histogram") != std::string::npos);
    const auto junk = (dir / "junk.bin").string();
    std::ofstream(junk) << "hello";
    CHECK(nec_dump_memory(junk.c_str(), &text) == NEC_ERR_IO);
    nec_run_record_free(rec);
    nec_config_free(cfg);
    fs::remove_all(dir);
}

TEST_CASE("standalone dnd handle") {
    nec_dnd* dnd = nullptr;
    CHECK(nec_dnd_create(2, 1, 5, 1e-3, 0.5, &dnd) == NEC_ERR_CONFIG);
    REQUIRE(nec_dnd_create(2, 10, 5, 1e-3, 0.5, &dnd) == NEC_OK);
    const double k0[] = {0, 0}, k1[] = {1, 0}, q[] = {0.5, 0};
    double out = 0;
    CHECK(nec_dnd_lookup(dnd, q, 2, &out) == NEC_ERR_EMPTY_MEMORY);
    REQUIRE(nec_dnd_write(dnd, k0, 2, 1.0) == NEC_OK);
    REQUIRE(nec_dnd_write(dnd, k1, 2, 3.0) == NEC_OK);
    CHECK(nec_dnd_write(dnd, k1, 1, 3.0) == NEC_ERR_INPUT);
    REQUIRE(nec_dnd_lookup(dnd, q, 2, &out) == NEC_OK);
    CHECK(out == doctest::Approx(2.0));
    REQUIRE(nec_dnd_write(dnd, k1, 2, 1.0) == NEC_OK);  // exact match: 3 + 0.5 (1 - 3)
    size_t size = 0;
    REQUIRE(nec_dnd_size(dnd, &size) == NEC_OK);
    CHECK(size == 2);
    REQUIRE(nec_dnd_lookup(dnd, k1, 2, &out) == NEC_OK);
    CHECK(out == doctest::Approx((1.0 / (1 + 1e-3) + 2.0 / 1e-3) / (1.0 / (1 + 1e-3) + 1.0 / 1e-3)));

    const auto dir = scratch("dnd");
    fs::create_directories(dir);
    const auto path = (dir / "mem.bin").string();
    REQUIRE(nec_dnd_save(dnd, path.c_str()) == NEC_OK);
    nec_dnd* loaded = nullptr;
    REQUIRE(nec_dnd_load(path.c_str(), &loaded) == NEC_OK);
    double a = 0, b = 0;
    nec_dnd_lookup(dnd, q, 2, &a);
    nec_dnd_lookup(loaded, q, 2, &b);
    CHECK(a == b);
    char* stats = nullptr;
    REQUIRE(nec_dnd_stats(loaded, &stats) == NEC_OK);
    CHECK(take(stats).find("size 2 / 10") != std::string::npos);
    char* text = nullptr;
    REQUIRE(nec_dump_memory(path.c_str(), &text) == NEC_OK);
    CHECK(take(text).find("size 2 / 10") != std::string::npos);
    CHECK(nec_dnd_load((dir / "missing.bin").c_str(), &loaded) == NEC_ERR_IO);
    nec_dnd_free(loaded);
    nec_dnd_free(dnd);
    fs::remove_all(dir);
}

TEST_CASE("references, env dump and index benchmark") {
    nec_config* cfg = nullptr;
    REQUIRE(nec_config_parse(kSmallRun, &cfg) == NEC_OK);
    char* json = nullptr;
    REQUIRE(nec_compute_references(cfg, &json) == NEC_OK);
    const auto refs = take(json);
    CHECK(refs.find("\"chain_4\"") != std::string::npos);
    CHECK(refs.find("\"oracle\"") != std::string::npos);
    char* dump = nullptr;
    REQUIRE(nec_dump_env(cfg, &dump) == NEC_OK);
    CHECK(take(dump).find("state,action,probability,next,reward,terminal") != std::string::npos);
    char* report = nullptr;
    REQUIRE(nec_bench_index(2000, 8, 50, 10, 1, &report) == NEC_OK);
    CHECK(take(report).find("recall") != std::string::npos);
    CHECK(nec_bench_index(0, 8, 50, 10, 1, &report) == NEC_ERR_INPUT);
    nec_config_free(cfg);
}
