// Command-line front end. Talks to the library only through the C API.

#include "nec/nec.h"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Failure {
    nec_status status;
    bool reported = false;  // message already printed by the CLI itself
};

void check(nec_status s) {
    if (s != NEC_OK) throw Failure{s};
}

struct ConfigDeleter {
    void operator()(nec_config* c) const { nec_config_free(c); }
};
struct RecordDeleter {
    void operator()(nec_run_record* r) const { nec_run_record_free(r); }
};
struct StringDeleter {
    void operator()(char* s) const { nec_string_free(s); }
};
using ConfigPtr = std::unique_ptr<nec_config, ConfigDeleter>;
using RecordPtr = std::unique_ptr<nec_run_record, RecordDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

ConfigPtr load_config(const std::string& path, const std::vector<std::string>& overrides) {
    nec_config* raw = nullptr;
    check(path.empty() ? nec_config_default(&raw) : nec_config_load(path.c_str(), &raw));
    ConfigPtr cfg(raw);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "nec: --set expects key=value, got '" << kv << "'\n";
            throw Failure{NEC_ERR_USAGE, true};
        }
        check(nec_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    check(nec_config_validate(cfg.get()));
    return cfg;
}

void print(StringPtr s, const std::string& out_path = {}) {
    if (out_path.empty()) {
        std::cout << s.get();
        return;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out || !(out << s.get())) {
        std::cerr << "nec: cannot write '" << out_path << "'\n";
        throw Failure{NEC_ERR_IO, true};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural episodic control experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(nec_version()));

    std::string config_path, out_dir, in_dir, refs_path, out_file, memory_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed_override;
    std::size_t bench_keys = 50000, bench_dim = 16, bench_queries = 1000;
    int bench_p = 50;
    std::uint64_t bench_seed = 0;

    auto* run = app.add_subcommand("run", "Train and evaluate every configured seed");
    run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--seed-override", seed_override, "Run only this seed");
    run->add_option("--out", out_dir, "Output directory (default: experiment.output, $NEC_OUTPUT_DIR, runs)");
    run->add_option("--set", overrides, "Override a config key (key=value)");

    auto* aggregate = app.add_subcommand("aggregate", "Normalized scores across run directories");
    aggregate->add_option("--in", in_dir, "Directory searched recursively for records.csv")
        ->required()
        ->check(CLI::ExistingDirectory);
    aggregate->add_option("--refs", refs_path, "Reference JSON (default: refs.json files under --in)")
        ->check(CLI::ExistingFile);
    aggregate->add_option("--out", out_file, "Write the score CSV here instead of stdout");

    auto* references = app.add_subcommand("references", "Random and oracle reference scores for an env");
    references->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
    references->add_option("--set", overrides, "Override a config key (key=value)");

    auto* dump_memory = app.add_subcommand("dump-memory", "Statistics of a memory snapshot or checkpoint");
    dump_memory->add_option("path", memory_path, "Snapshot or checkpoint file")->required()->check(CLI::ExistingFile);

    auto* dump_env = app.add_subcommand("dump-env", "Transition table of the configured env");
    dump_env->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
    dump_env->add_option("--set", overrides, "Override a config key (key=value)");

    auto* show_config = app.add_subcommand("show-config", "Print the fully resolved configuration");
    show_config->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
    show_config->add_option("--set", overrides, "Override a config key (key=value)");

    auto* bench = app.add_subcommand("bench-index", "kd-tree exact vs approximate query benchmark");
    bench->add_option("--keys", bench_keys, "Stored keys")->check(CLI::PositiveNumber);
    bench->add_option("--dim", bench_dim, "Key dimension")->check(CLI::PositiveNumber);
    bench->add_option("--queries", bench_queries, "Queries")->check(CLI::PositiveNumber);
    bench->add_option("--p", bench_p, "Neighbours per query")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            if (seed_override) overrides.push_back("experiment.seeds=" + std::to_string(*seed_override));
            auto cfg = load_config(config_path, overrides);
            nec_run_record* raw = nullptr;
            check(nec_run_experiment(cfg.get(), &raw));
            RecordPtr rec(raw);
            char* used = nullptr;
            check(nec_run_record_write(rec.get(), out_dir.empty() ? nullptr : out_dir.c_str(), &used));
            StringPtr used_dir(used);
            std::size_t rows = 0;
            check(nec_run_record_num_rows(rec.get(), &rows));
            std::cout << "wrote " << rows << " rows to " << used_dir.get() << "\n";
        } else if (*aggregate) {
            char* csv = nullptr;
            check(nec_aggregate(in_dir.c_str(), refs_path.empty() ? nullptr : refs_path.c_str(), &csv));
            print(StringPtr(csv), out_file);
        } else if (*references) {
            auto cfg = load_config(config_path, overrides);
            char* json = nullptr;
            check(nec_compute_references(cfg.get(), &json));
            print(StringPtr(json));
        } else if (*dump_memory) {
            char* text = nullptr;
            check(nec_dump_memory(memory_path.c_str(), &text));
            print(StringPtr(text));
        } else if (*dump_env) {
            auto cfg = load_config(config_path, overrides);
            char* text = nullptr;
            check(nec_dump_env(cfg.get(), &text));
            print(StringPtr(text));
        } else if (*show_config) {
            auto cfg = load_config(config_path, overrides);
            char* text = nullptr;
            check(nec_config_to_text(cfg.get(), &text));
            print(StringPtr(text));
        } else if (*bench) {
            char* report = nullptr;
            check(nec_bench_index(bench_keys, bench_dim, bench_queries, bench_p, bench_seed, &report));
            print(StringPtr(report));
        }
    } catch (const Failure& f) {
        if (!f.reported)
            std::cerr << "nec: " << nec_status_string(f.status) << ": " << nec_last_error() << "\n";
        return static_cast<int>(f.status);
    }
    return 0;
}
