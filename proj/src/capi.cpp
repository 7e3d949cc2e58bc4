#include "nec/nec.h"

#include "nec/agent.hpp"
#include "nec/baselines.hpp"
#include "nec/binary_io.hpp"
#include "nec/config.hpp"
#include "nec/dnd.hpp"
#include "nec/error.hpp"
#include "nec/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <random>
#include <sstream>
#include <string>

struct nec_config {
    nec::ExperimentConfig cfg;
};

struct nec_run_record {
    nec::ExperimentConfig cfg;
    std::vector<nec::RunRecord> records;
    nec::ReferenceTable refs;
    std::vector<std::pair<std::uint64_t, std::string>> checkpoints;
    std::vector<nec::MetricRow> rows;  // flattened view for row access
};

struct nec_dnd {
    nec::DndMemory memory;
};

namespace {

thread_local std::string last_error;

nec_status status_of(nec::ErrorCode code) {
    switch (code) {
        case nec::ErrorCode::config: return NEC_ERR_CONFIG;
        case nec::ErrorCode::input: return NEC_ERR_INPUT;
        case nec::ErrorCode::internal: return NEC_ERR_INTERNAL;
        case nec::ErrorCode::usage: return NEC_ERR_USAGE;
        case nec::ErrorCode::empty_memory: return NEC_ERR_EMPTY_MEMORY;
        case nec::ErrorCode::io: return NEC_ERR_IO;
        case nec::ErrorCode::aggregation: return NEC_ERR_AGGREGATION;
    }
    return NEC_ERR_INTERNAL;
}

template <class F>
nec_status guarded(F&& body) {
    try {
        body();
        return NEC_OK;
    } catch (const nec::Error& e) {
        last_error = e.what();
        return status_of(e.code());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return NEC_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return NEC_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown exception";
        return NEC_ERR_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw nec::InputError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw nec::IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw nec::IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw nec::IoError("write failed for '" + path.string() + "'");
}

std::string memories_report(const std::vector<nec::MemoryStats>& stats) {
    std::string out;
    for (std::size_t a = 0; a < stats.size(); ++a) out += "action " + std::to_string(a) + ": " + stats[a].to_text();
    return out;
}

}  // namespace

extern "C" {

const char* nec_version(void) { return "0.1.0"; }

const char* nec_last_error(void) { return last_error.c_str(); }

const char* nec_status_string(nec_status status) {
    switch (status) {
        case NEC_OK: return "ok";
        case NEC_ERR_CONFIG: return "config error";
        case NEC_ERR_INPUT: return "input error";
        case NEC_ERR_INTERNAL: return "internal error";
        case NEC_ERR_USAGE: return "usage error";
        case NEC_ERR_EMPTY_MEMORY: return "empty memory";
        case NEC_ERR_IO: return "io error";
        case NEC_ERR_AGGREGATION: return "aggregation error";
    }
    return "unknown status";
}

void nec_string_free(char* s) { std::free(s); }

// ---- configuration ---------------------------------------------------------

nec_status nec_config_default(nec_config** out) {
    return guarded([&] {
        require(out, "out");
        *out = new nec_config{};
    });
}

nec_status nec_config_parse(const char* text, nec_config** out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        *out = new nec_config{nec::parse_config(text)};
    });
}

nec_status nec_config_load(const char* path, nec_config** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new nec_config{nec::load_config(path)};
    });
}

nec_status nec_config_set(nec_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        require(cfg, "cfg");
        require(key, "key");
        require(value, "value");
        nec::set_config_value(cfg->cfg, key, value);
    });
}

nec_status nec_config_get(const nec_config* cfg, const char* key, char** value) {
    return guarded([&] {
        require(cfg, "cfg");
        require(key, "key");
        require(value, "value");
        for (const auto& [k, v] : nec::config_entries(cfg->cfg)) {
            if (k == key) {
                *value = dup_string(v);
                return;
            }
        }
        throw nec::ConfigError(std::string("unknown config key '") + key + "'");
    });
}

nec_status nec_config_validate(const nec_config* cfg) {
    return guarded([&] {
        require(cfg, "cfg");
        cfg->cfg.validate();
    });
}

nec_status nec_config_to_text(const nec_config* cfg, char** text) {
    return guarded([&] {
        require(cfg, "cfg");
        require(text, "text");
        *text = dup_string(nec::config_to_text(cfg->cfg));
    });
}

void nec_config_free(nec_config* cfg) { delete cfg; }

// ---- experiments -----------------------------------------------------------

nec_status nec_run_experiment(const nec_config* cfg, nec_run_record** out) {
    return guarded([&] {
        require(cfg, "cfg");
        require(out, "out");
        const auto& c = cfg->cfg;
        c.validate();
        auto rec = std::make_unique<nec_run_record>();
        rec->cfg = c;
        rec->refs[c.env.display_label()] =
            nec::compute_reference(c.env, c.eval_gamma, c.reference_episodes, c.seeds.front());
        for (auto seed : c.seeds) {
            auto result = nec::run_seed(c, seed);
            if (c.checkpoint) {
                std::ostringstream blob;
                result.agent->save(blob);
                rec->checkpoints.emplace_back(seed, blob.str());
            }
            rec->rows.insert(rec->rows.end(), result.record.rows.begin(), result.record.rows.end());
            rec->records.push_back(std::move(result.record));
        }
        *out = rec.release();
    });
}

nec_status nec_run_record_csv(const nec_run_record* rec, char** csv) {
    return guarded([&] {
        require(rec, "rec");
        require(csv, "csv");
        *csv = dup_string(nec::records_to_csv(rec->records));
    });
}

nec_status nec_run_record_summary_json(const nec_run_record* rec, char** json) {
    return guarded([&] {
        require(rec, "rec");
        require(json, "json");
        *json = dup_string(nec::run_summary_json(rec->cfg, rec->records, rec->refs));
    });
}

nec_status nec_run_record_num_rows(const nec_run_record* rec, size_t* n) {
    return guarded([&] {
        require(rec, "rec");
        require(n, "n");
        *n = rec->rows.size();
    });
}

nec_status nec_run_record_row(const nec_run_record* rec, size_t i, const char** env, const char** agent,
                              uint64_t* seed, uint64_t* step, const char** metric, double* value) {
    return guarded([&] {
        require(rec, "rec");
        if (i >= rec->rows.size()) throw nec::InputError("row index out of range");
        const auto& r = rec->rows[i];
        if (env) *env = r.env.c_str();
        if (agent) *agent = r.agent.c_str();
        if (seed) *seed = r.seed;
        if (step) *step = r.step;
        if (metric) *metric = r.metric.c_str();
        if (value) *value = r.value;
    });
}

nec_status nec_run_record_write(const nec_run_record* rec, const char* dir, char** used_dir) {
    return guarded([&] {
        require(rec, "rec");
        std::filesystem::path out = dir ? std::string(dir)
                                        : (rec->cfg.output.empty() ? nec::default_output_dir() : rec->cfg.output);
        std::error_code ec;
        std::filesystem::create_directories(out, ec);
        if (ec) throw nec::IoError("cannot create output directory '" + out.string() + "': " + ec.message());
        write_file(out / "records.csv", nec::records_to_csv(rec->records));
        write_file(out / "run.json", nec::run_summary_json(rec->cfg, rec->records, rec->refs));
        write_file(out / "refs.json", nec::references_to_json(rec->refs));
        for (const auto& [seed, blob] : rec->checkpoints)
            write_file(out / ("checkpoint_seed" + std::to_string(seed) + ".bin"), blob);
        if (used_dir) *used_dir = dup_string(out.string());
    });
}

void nec_run_record_free(nec_run_record* rec) { delete rec; }

nec_status nec_compute_references(const nec_config* cfg, char** json) {
    return guarded([&] {
        require(cfg, "cfg");
        require(json, "json");
        const auto& c = cfg->cfg;
        c.validate();
        nec::ReferenceTable refs;
        refs[c.env.display_label()] =
            nec::compute_reference(c.env, c.eval_gamma, c.reference_episodes, c.seeds.front());
        *json = dup_string(nec::references_to_json(refs));
    });
}

nec_status nec_aggregate(const char* in_dir, const char* refs_path, char** csv) {
    return guarded([&] {
        require(in_dir, "in_dir");
        require(csv, "csv");
        namespace fs = std::filesystem;
        if (!fs::is_directory(in_dir)) throw nec::IoError(std::string("not a directory: '") + in_dir + "'");
        std::vector<fs::path> record_files, ref_files;
        for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
            if (!entry.is_regular_file()) continue;
            if (entry.path().filename() == "records.csv") record_files.push_back(entry.path());
            if (entry.path().filename() == "refs.json") ref_files.push_back(entry.path());
        }
        if (record_files.empty()) throw nec::IoError(std::string("no records.csv under '") + in_dir + "'");
        std::sort(record_files.begin(), record_files.end());
        std::sort(ref_files.begin(), ref_files.end());
        std::vector<nec::MetricRow> rows;
        for (const auto& f : record_files) {
            std::istringstream in(read_file(f));
            auto part = nec::parse_csv(in);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        nec::ReferenceTable refs;
        if (refs_path) {
            refs = nec::references_from_json(read_file(refs_path));
        } else {
            for (const auto& f : ref_files)
                for (const auto& [env, r] : nec::references_from_json(read_file(f))) refs.emplace(env, r);
        }
        *csv = dup_string(nec::score_table_to_csv(nec::aggregate_scores(rows, refs)));
    });
}

// ---- inspection ------------------------------------------------------------

nec_status nec_dump_env(const nec_config* cfg, char** text) {
    return guarded([&] {
        require(cfg, "cfg");
        require(text, "text");
        cfg->cfg.env.validate();
        *text = dup_string(nec::Environment(cfg->cfg.env).dump_transitions());
    });
}

nec_status nec_dump_memory(const char* path, char** text) {
    return guarded([&] {
        require(path, "path");
        require(text, "text");
        const std::string data = read_file(path);
        const std::string magic = data.substr(0, 8);
        std::istringstream in(data);
        std::string report;
        if (magic == "NECDND01") {
            report = "DND snapshot\n" + nec::DndMemory::load(in).stats().to_text();
        } else if (magic == "NECMFEC1") {
            report = "MFEC snapshot\n" + nec::MfecMemory::load(in).stats().to_text();
        } else if (magic == "NECCKPT1") {
            std::vector<nec::MemoryStats> stats;
            for (const auto& m : nec::read_checkpoint_memories(in)) stats.push_back(m.stats());
            report = "NEC checkpoint, " + std::to_string(stats.size()) + " action memories\n" + memories_report(stats);
        } else if (magic == "NECMFAG1") {
            nec::io::expect_magic(in, "NECMFAG1");
            const auto steps = nec::io::read_u64(in);
            const auto n = nec::io::read_u64(in);
            std::vector<nec::MemoryStats> stats;
            for (std::uint64_t a = 0; a < n; ++a) stats.push_back(nec::MfecMemory::load(in).stats());
            report = "MFEC checkpoint after " + std::to_string(steps) + " steps, " + std::to_string(n) +
                     " action memories\n" + memories_report(stats);
        } else {
            throw nec::IoError(std::string("'") + path + "' is not a memory snapshot or agent checkpoint");
        }
        *text = dup_string(report);
    });
}

nec_status nec_bench_index(size_t num_keys, size_t dim, size_t num_queries, int p, uint64_t seed, char** report) {
    return guarded([&] {
        require(report, "report");
        if (num_keys == 0 || dim == 0 || num_queries == 0 || p <= 0)
            throw nec::InputError("bench-index needs positive keys, dim, queries and p");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal;
        std::vector<std::pair<nec::KeyId, std::vector<double>>> keys(num_keys);
        for (std::size_t i = 0; i < num_keys; ++i) {
            keys[i].first = static_cast<nec::KeyId>(i);
            keys[i].second.resize(dim);
            for (auto& x : keys[i].second) x = normal(rng);
        }
        using clock = std::chrono::steady_clock;
        auto t0 = clock::now();
        const auto index = nec::KdIndex::build(dim, keys);
        const double build_s = std::chrono::duration<double>(clock::now() - t0).count();

        std::vector<std::vector<double>> queries(num_queries, std::vector<double>(dim));
        for (auto& q : queries)
            for (auto& x : q) x = normal(rng);
        std::vector<std::vector<nec::Neighbor>> exact(num_queries);
        t0 = clock::now();
        for (std::size_t i = 0; i < num_queries; ++i) exact[i] = index.query(queries[i], p, nec::SearchMode::exact);
        const double exact_s = std::chrono::duration<double>(clock::now() - t0).count();
        std::size_t hits = 0, total = 0;
        t0 = clock::now();
        std::vector<std::vector<nec::Neighbor>> approx(num_queries);
        for (std::size_t i = 0; i < num_queries; ++i)
            approx[i] = index.query(queries[i], p, nec::SearchMode::approximate);
        const double approx_s = std::chrono::duration<double>(clock::now() - t0).count();
        for (std::size_t i = 0; i < num_queries; ++i) {
            total += exact[i].size();
            for (const auto& n : approx[i])
                for (const auto& e : exact[i]) hits += n.id == e.id;
        }
        std::ostringstream os;
        os << "keys " << num_keys << "  dim " << dim << "  queries " << num_queries << "  p " << p << "  depth "
           << index.depth() << '\n';
        os << "build_seconds " << nec::io::format_double(build_s) << '\n';
        os << "exact_us_per_query " << nec::io::format_double(1e6 * exact_s / double(num_queries)) << '\n';
        os << "approximate_us_per_query " << nec::io::format_double(1e6 * approx_s / double(num_queries)) << '\n';
        os << "approximate_recall " << nec::io::format_double(total ? double(hits) / double(total) : 1.0) << '\n';
        *report = dup_string(os.str());
    });
}

// ---- standalone DND --------------------------------------------------------

nec_status nec_dnd_create(size_t key_dim, size_t capacity, int p, double delta, double alpha, nec_dnd** out) {
    return guarded([&] {
        require(out, "out");
        if (key_dim == 0) throw nec::ConfigError("key_dim must be positive");
        nec::DndConfig cfg;
        cfg.capacity = capacity;
        cfg.p = p;
        cfg.delta = delta;
        cfg.alpha = alpha;
        *out = new nec_dnd{nec::DndMemory(key_dim, cfg)};
    });
}

nec_status nec_dnd_write(nec_dnd* dnd, const double* key, size_t dim, double value) {
    return guarded([&] {
        require(dnd, "dnd");
        require(key, "key");
        dnd->memory.write(std::span<const double>(key, dim), value);
        dnd->memory.maintain_index();
    });
}

nec_status nec_dnd_lookup(nec_dnd* dnd, const double* key, size_t dim, double* out) {
    return guarded([&] {
        require(dnd, "dnd");
        require(key, "key");
        require(out, "out");
        *out = dnd->memory.lookup(std::span<const double>(key, dim)).output;
    });
}

nec_status nec_dnd_size(const nec_dnd* dnd, size_t* out) {
    return guarded([&] {
        require(dnd, "dnd");
        require(out, "out");
        *out = dnd->memory.size();
    });
}

nec_status nec_dnd_stats(const nec_dnd* dnd, char** text) {
    return guarded([&] {
        require(dnd, "dnd");
        require(text, "text");
        *text = dup_string(dnd->memory.stats().to_text());
    });
}

nec_status nec_dnd_save(const nec_dnd* dnd, const char* path) {
    return guarded([&] {
        require(dnd, "dnd");
        require(path, "path");
        std::ostringstream os;
        dnd->memory.save(os);
        write_file(path, os.str());
    });
}

nec_status nec_dnd_load(const char* path, nec_dnd** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        std::istringstream in(read_file(path));
        *out = new nec_dnd{nec::DndMemory::load(in)};
    });
}

void nec_dnd_free(nec_dnd* dnd) { delete dnd; }

}  // extern "C"
