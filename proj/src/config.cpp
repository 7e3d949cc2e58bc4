#include "nec/config.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace nec {

std::string_view to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::nec: return "nec";
        case AgentKind::mfec: return "mfec";
        case AgentKind::tabular: return "tabular";
    }
    return "nec";
}

AgentKind parse_agent_kind(std::string_view name) {
    if (name == "nec") return AgentKind::nec;
    if (name == "mfec") return AgentKind::mfec;
    if (name == "tabular") return AgentKind::tabular;
    throw ConfigError("unknown agent '" + std::string(name) + "' (expected nec, mfec or tabular)");
}

void ExperimentConfig::validate() const {
    if (eval_every == 0) throw ConfigError("experiment.eval_every must be positive");
    if (eval_episodes == 0) throw ConfigError("experiment.eval_episodes must be positive");
    if (reference_episodes == 0) throw ConfigError("experiment.reference_episodes must be positive");
    if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
    if (!(eval_gamma > 0.0 && eval_gamma < 1.0)) throw ConfigError("eval.gamma must lie in (0, 1)");
    env.validate();
    switch (agent) {
        case AgentKind::nec: nec.validate(); break;
        case AgentKind::mfec: mfec.validate(); break;
        case AgentKind::tabular: tabular.validate(); break;
    }
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(std::string_view v) {
    return io::parse_uint(v);
}

bool to_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InputError("expected a boolean, got '" + std::string(v) + "'");
}

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in{std::string(v)};
    while (std::getline(in, item, ',')) {
        auto t = trim(item);
        if (t.empty()) throw InputError("empty list element in '" + std::string(v) + "'");
        out.push_back(std::move(t));
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    return out;
}

SearchMode to_search(std::string_view v) {
    if (v == "exact") return SearchMode::exact;
    if (v == "approximate") return SearchMode::approximate;
    throw InputError("expected exact or approximate, got '" + std::string(v) + "'");
}

std::string from_search(SearchMode m) { return m == SearchMode::exact ? "exact" : "approximate"; }

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct Key {
    const char* name;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define NEC_U64(NAME, FIELD)                                                              \
    Key {                                                                                 \
        NAME, [](ExperimentConfig& c, std::string_view v) { c.FIELD = to_u64(v); },       \
            [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }             \
    }
#define NEC_F64(NAME, FIELD)                                                                  \
    Key {                                                                                     \
        NAME, [](ExperimentConfig& c, std::string_view v) { c.FIELD = io::parse_double(v); }, \
            [](const ExperimentConfig& c) { return io::format_double(c.FIELD); }              \
    }
#define NEC_BOOL(NAME, FIELD)                                                              \
    Key {                                                                                  \
        NAME, [](ExperimentConfig& c, std::string_view v) { c.FIELD = to_bool(v); },       \
            [](const ExperimentConfig& c) { return from_bool(c.FIELD); }                   \
    }
#define NEC_SEARCH(NAME, FIELD)                                                            \
    Key {                                                                                  \
        NAME, [](ExperimentConfig& c, std::string_view v) { c.FIELD = to_search(v); },     \
            [](const ExperimentConfig& c) { return from_search(c.FIELD); }                 \
    }

const std::vector<Key>& schema() {
    static const std::vector<Key> keys = {
        {"experiment.agent", [](ExperimentConfig& c, std::string_view v) { c.agent = parse_agent_kind(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.agent)); }},
        NEC_U64("experiment.steps", steps),
        NEC_U64("experiment.eval_every", eval_every),
        NEC_U64("experiment.eval_episodes", eval_episodes),
        NEC_U64("experiment.reference_episodes", reference_episodes),
        {"experiment.seeds",
         [](ExperimentConfig& c, std::string_view v) {
             c.seeds.clear();
             for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(s));
         },
         [](const ExperimentConfig& c) { return join(c.seeds); }},
        {"experiment.output", [](ExperimentConfig& c, std::string_view v) { c.output = std::string(v); },
         [](const ExperimentConfig& c) { return c.output; }},
        NEC_BOOL("experiment.checkpoint", checkpoint),
        NEC_F64("eval.gamma", eval_gamma),

        {"env.name", [](ExperimentConfig& c, std::string_view v) { c.env.kind = parse_env_kind(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.env.kind)); }},
        NEC_U64("env.length", env.length),
        NEC_U64("env.width", env.width),
        NEC_U64("env.height", env.height),
        {"env.obs", [](ExperimentConfig& c, std::string_view v) { c.env.obs = parse_obs_mode(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.env.obs)); }},
        NEC_U64("env.max_steps", env.max_steps),
        NEC_U64("env.noise_pixels", env.noise_pixels),
        NEC_F64("env.pellet_reward", env.pellet_reward),
        NEC_F64("env.exit_reward", env.exit_reward),
        NEC_F64("env.bonus_reward", env.bonus_reward),
        {"env.label", [](ExperimentConfig& c, std::string_view v) { c.env.label = std::string(v); },
         [](const ExperimentConfig& c) { return c.env.label; }},

        // One exploration schedule shared by every agent kind.
        {"exploration.start",
         [](ExperimentConfig& c, std::string_view v) {
             c.nec.epsilon.start = c.mfec.epsilon.start = c.tabular.epsilon.start = io::parse_double(v);
         },
         [](const ExperimentConfig& c) { return io::format_double(c.nec.epsilon.start); }},
        {"exploration.end",
         [](ExperimentConfig& c, std::string_view v) {
             c.nec.epsilon.end = c.mfec.epsilon.end = c.tabular.epsilon.end = io::parse_double(v);
         },
         [](const ExperimentConfig& c) { return io::format_double(c.nec.epsilon.end); }},
        {"exploration.anneal_steps",
         [](ExperimentConfig& c, std::string_view v) {
             c.nec.epsilon.anneal_steps = c.mfec.epsilon.anneal_steps = c.tabular.epsilon.anneal_steps = to_u64(v);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.nec.epsilon.anneal_steps); }},

        NEC_F64("nec.gamma", nec.gamma),
        NEC_U64("nec.n_step", nec.n_step),
        NEC_F64("nec.slow_lr", nec.slow_lr),
        {"nec.memory_lr",
         [](ExperimentConfig& c, std::string_view v) {
             if (v == "default")
                 c.nec.memory_lr.reset();
             else
                 c.nec.memory_lr = io::parse_double(v);
         },
         [](const ExperimentConfig& c) {
             return c.nec.memory_lr ? io::format_double(*c.nec.memory_lr) : std::string("default");
         }},
        NEC_F64("nec.rms_rho", nec.rms_rho),
        NEC_F64("nec.rms_eps", nec.rms_epsilon),
        NEC_U64("nec.replay_capacity", nec.replay_capacity),
        NEC_U64("nec.train_every", nec.train_every),
        NEC_U64("nec.batch_size", nec.batch_size),
        NEC_BOOL("nec.batch_writes", nec.batch_writes),
        NEC_F64("nec.q_default", nec.q_default),

        {"embed.kind", [](ExperimentConfig& c, std::string_view v) { c.nec.embed.kind = parse_embed_kind(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.nec.embed.kind)); }},
        {"embed.hidden",
         [](ExperimentConfig& c, std::string_view v) {
             c.nec.embed.hidden.clear();
             if (v == "none") return;
             for (const auto& s : split_list(v)) c.nec.embed.hidden.push_back(to_u64(s));
         },
         [](const ExperimentConfig& c) {
             return c.nec.embed.hidden.empty() ? std::string("none") : join(c.nec.embed.hidden);
         }},
        NEC_U64("embed.key_dim", nec.embed.key_dim),
        NEC_BOOL("embed.trainable", nec.embed.trainable),

        NEC_U64("dnd.capacity", nec.dnd.capacity),
        {"dnd.p", [](ExperimentConfig& c, std::string_view v) { c.nec.dnd.p = static_cast<int>(io::parse_int(v)); },
         [](const ExperimentConfig& c) { return std::to_string(c.nec.dnd.p); }},
        NEC_F64("dnd.delta", nec.dnd.delta),
        NEC_F64("dnd.alpha", nec.dnd.alpha),
        NEC_F64("dnd.exact_match_eps", nec.dnd.exact_match_eps),
        NEC_SEARCH("dnd.search", nec.dnd.search),
        NEC_U64("dnd.rebuild_threshold", nec.dnd.rebuild_threshold),

        {"mfec.k", [](ExperimentConfig& c, std::string_view v) { c.mfec.memory.k = static_cast<int>(io::parse_int(v)); },
         [](const ExperimentConfig& c) { return std::to_string(c.mfec.memory.k); }},
        NEC_U64("mfec.capacity", mfec.memory.capacity),
        NEC_U64("mfec.key_dim", mfec.key_dim),
        NEC_F64("mfec.exact_match_eps", mfec.memory.exact_match_eps),
        {"mfec.update", [](ExperimentConfig& c, std::string_view v) { c.mfec.memory.update = parse_mfec_update(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.mfec.memory.update)); }},
        NEC_F64("mfec.gamma", mfec.gamma),
        NEC_SEARCH("mfec.search", mfec.memory.search),
        NEC_F64("mfec.q_default", mfec.q_default),

        NEC_F64("tabular.lr", tabular.learning_rate),
        NEC_F64("tabular.gamma", tabular.gamma),
        NEC_F64("tabular.init", tabular.init),
        NEC_BOOL("tabular.clip_rewards", tabular.clip_rewards),
    };
    return keys;
}

#undef NEC_U64
#undef NEC_F64
#undef NEC_BOOL
#undef NEC_SEARCH

const Key* find_key(std::string_view name) {
    for (const auto& k : schema())
        if (name == k.name) return &k;
    return nullptr;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
    try {
        k->set(cfg, value);
    } catch (const InputError& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    }
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(std::string_view(body).substr(0, eq));
        const auto value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : schema()) out.emplace_back(k.name, k.get(cfg));
    return out;
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
    return out;
}

std::string default_output_dir() {
    if (const char* env = std::getenv("NEC_OUTPUT_DIR"); env && *env) return env;
    return "runs";
}

}  // namespace nec
