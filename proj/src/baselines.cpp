#include "nec/baselines.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace nec {

std::string_view to_string(MfecUpdate update) { return update == MfecUpdate::max ? "max" : "overwrite"; }

MfecUpdate parse_mfec_update(std::string_view name) {
    if (name == "max") return MfecUpdate::max;
    if (name == "overwrite") return MfecUpdate::overwrite;
    throw ConfigError("unknown mfec update rule '" + std::string(name) + "'");
}

void MfecMemoryConfig::validate() const {
    if (k < 1) throw ConfigError("mfec.k must be >= 1");
    if (capacity == 0) throw ConfigError("mfec.capacity must be positive");
    if (!(exact_match_eps >= 0.0)) throw ConfigError("mfec.exact_match_eps must be >= 0");
    if (rebuild_threshold == 0) throw ConfigError("rebuild threshold must be positive");
}

namespace {

KdIndexOptions mfec_index_options(const MfecMemoryConfig& cfg) {
    KdIndexOptions opts;
    opts.rebuild_threshold = cfg.rebuild_threshold;
    return opts;
}

}  // namespace

MfecMemory::MfecMemory(std::size_t key_dim, MfecMemoryConfig config)
    : config_(config), store_(key_dim, (config.validate(), config.capacity), mfec_index_options(config)) {}

std::vector<KeyId> MfecMemory::neighbours(std::span<const double> h, bool& exact) const {
    if (store_.empty()) throw EmptyMemoryError("MFEC lookup on an empty memory");
    if (h.size() != key_dim()) throw InputError("MFEC lookup: key has wrong dimension");
    const auto nn = store_.nearest(h, config_.k, config_.search);
    exact = !nn.empty() && nn.front().distance2 <= config_.exact_match_eps;
    std::vector<KeyId> ids;
    if (exact) {
        ids.push_back(nn.front().id);
    } else {
        for (const auto& n : nn) ids.push_back(n.id);
    }
    return ids;
}

double MfecMemory::estimate(std::span<const KeyId> ids) const {
    double total = 0.0;
    for (auto id : ids) total += store_.value(id);
    return total / static_cast<double>(ids.size());
}

double MfecMemory::lookup(std::span<const double> h) {
    bool exact = false;
    const auto ids = neighbours(h, exact);
    const double v = estimate(ids);
    store_.touch(ids);
    return v;
}

double MfecMemory::peek(std::span<const double> h) const {
    bool exact = false;
    return estimate(neighbours(h, exact));
}

WriteOutcome MfecMemory::write(std::span<const double> h, double ret) {
    if (h.size() != key_dim()) throw InputError("MFEC write: key has wrong dimension");
    if (!std::isfinite(ret)) throw InputError("MFEC write: non-finite return");
    for (double v : h)
        if (!std::isfinite(v)) throw InputError("MFEC write: non-finite key");
    if (!store_.empty()) {
        const auto nn = store_.nearest(h, 1, SearchMode::exact);
        if (!nn.empty() && nn.front().distance2 <= config_.exact_match_eps) {
            const KeyId id = nn.front().id;
            const double stored = store_.value(id);
            store_.set_value(id, config_.update == MfecUpdate::max ? std::max(stored, ret) : ret);
            const KeyId touched[] = {id};
            store_.touch(touched);
            return {WriteKind::updated, id};
        }
    }
    if (!store_.full()) return {WriteKind::appended, store_.append(h, ret)};
    const KeyId victim = store_.lru_victim();
    store_.overwrite(victim, h, ret);
    store_.maintain_index();
    return {WriteKind::evicted_and_appended, victim};
}

void MfecMemory::save(std::ostream& os) const {
    io::write_magic(os, "NECMFEC1");
    io::write_u64(os, static_cast<std::uint64_t>(config_.k));
    io::write_f64(os, config_.exact_match_eps);
    io::write_u64(os, config_.update == MfecUpdate::max ? 0 : 1);
    io::write_u64(os, config_.search == SearchMode::exact ? 0 : 1);
    io::write_u64(os, config_.rebuild_threshold);
    store_.save(os);
}

MfecMemory MfecMemory::load(std::istream& is) {
    io::expect_magic(is, "NECMFEC1");
    MfecMemoryConfig cfg;
    cfg.k = static_cast<int>(io::read_u64(is));
    cfg.exact_match_eps = io::read_f64(is);
    cfg.update = io::read_u64(is) == 0 ? MfecUpdate::max : MfecUpdate::overwrite;
    cfg.search = io::read_u64(is) == 0 ? SearchMode::exact : SearchMode::approximate;
    cfg.rebuild_threshold = io::read_u64(is);
    auto store = MemoryStore::load(is, mfec_index_options(cfg));
    cfg.capacity = store.capacity();
    MfecMemory m(store.key_dim(), cfg);
    m.store_ = std::move(store);
    return m;
}

// ---------------------------------------------------------------------------

void MfecConfig::validate() const {
    memory.validate();
    if (key_dim == 0) throw ConfigError("mfec.key_dim must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("mfec.gamma must lie in (0, 1]");
    if (!std::isfinite(q_default)) throw ConfigError("mfec.q_default must be finite");
    epsilon.validate();
}

MfecAgent::MfecAgent(MfecConfig config, std::size_t obs_dim, std::size_t num_actions, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      projection_(config_.key_dim, obs_dim, seed ^ 0x6d666563ULL),
      rng_(seed) {
    if (num_actions == 0) throw ConfigError("agent needs at least one action");
    for (std::size_t a = 0; a < num_actions; ++a) memories_.emplace_back(config_.key_dim, config_.memory);
}

std::vector<double> MfecAgent::q_values(std::span<const double> obs) {
    const auto h = projection_.embed(obs);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].lookup(h);
    return q;
}

std::vector<double> MfecAgent::q_values_peek(std::span<const double> obs) const {
    const auto h = projection_.embed(obs);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].peek(h);
    return q;
}

void MfecAgent::begin_episode(const Environment& env) {
    if (!episode_.empty()) end_episode();
    current_obs_ = env.observation();
}

StepResult MfecAgent::step(Environment& env) {
    if (current_obs_.empty()) throw UsageError("MfecAgent::step before begin_episode");
    auto h = projection_.embed(current_obs_);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].lookup(h);
    const std::size_t action = select_action(q, config_.epsilon.at(steps_), rng_);
    StepResult result = env.step(action);
    episode_.push_back({std::move(h), action, result.reward});
    ++steps_;
    current_obs_ = result.observation;
    if (result.done()) end_episode();
    return result;
}

void MfecAgent::end_episode() {
    double ret = 0.0;
    for (auto it = episode_.rbegin(); it != episode_.rend(); ++it) it->reward = ret = it->reward + config_.gamma * ret;
    for (const auto& v : episode_) memories_[v.action].write(v.key, v.reward);
    episode_.clear();
}

std::size_t MfecAgent::greedy_action(const Environment& env, std::mt19937_64& tie_rng) const {
    return greedy_choice(q_values_peek(env.observation()), tie_rng);
}

void MfecAgent::save(std::ostream& os) const {
    io::write_magic(os, "NECMFAG1");
    io::write_u64(os, steps_);
    io::write_u64(os, memories_.size());
    for (const auto& m : memories_) m.save(os);
    io::write_u64(os, episode_.size());
    for (const auto& v : episode_) {
        io::write_u64(os, v.action);
        io::write_f64(os, v.reward);
        io::write_f64s(os, v.key);
    }
    os << rng_ << '\n';
}

// ---------------------------------------------------------------------------

QTable::QTable(std::size_t num_states, std::size_t num_actions, double init)
    : num_states_(num_states), num_actions_(num_actions), q_(num_states * num_actions, init) {
    if (num_states == 0 || num_actions == 0) throw ConfigError("Q table needs states and actions");
    if (!std::isfinite(init)) throw ConfigError("Q table init must be finite");
}

double& QTable::at(std::size_t s, std::size_t a) {
    if (s >= num_states_ || a >= num_actions_) throw InputError("Q table index out of range");
    return q_[s * num_actions_ + a];
}

double QTable::at(std::size_t s, std::size_t a) const {
    if (s >= num_states_ || a >= num_actions_) throw InputError("Q table index out of range");
    return q_[s * num_actions_ + a];
}

std::span<const double> QTable::row(std::size_t s) const {
    if (s >= num_states_) throw InputError("Q table index out of range");
    return std::span<const double>(q_).subspan(s * num_actions_, num_actions_);
}

double QTable::max_row(std::size_t s) const {
    const auto r = row(s);
    return *std::max_element(r.begin(), r.end());
}

void QTable::update(std::size_t s, std::size_t a, double r, std::size_t s_next, bool done, double gamma, double lr) {
    const double bootstrap = done ? 0.0 : max_row(s_next);
    double& q = at(s, a);
    q += lr * (r + gamma * bootstrap - q);
}

void TabularConfig::validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("tabular.lr must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("tabular.gamma must lie in [0, 1)");
    if (!std::isfinite(init)) throw ConfigError("tabular.init must be finite");
    epsilon.validate();
}

TabularAgent::TabularAgent(TabularConfig config, std::size_t num_states, std::size_t num_actions, std::uint64_t seed)
    : config_((config.validate(), config)), q_(num_states, num_actions, config.init), rng_(seed) {}

void TabularAgent::begin_episode(const Environment& env) {
    if (env.num_states() != q_.num_states() || env.num_actions() != q_.num_actions())
        throw UsageError("tabular agent does not match the environment");
}

StepResult TabularAgent::step(Environment& env) {
    const std::size_t s = env.state();
    const std::size_t a = select_action(q_.row(s), config_.epsilon.at(steps_), rng_);
    StepResult result = env.step(a);
    const double r = config_.clip_rewards ? std::clamp(result.reward, -1.0, 1.0) : result.reward;
    q_.update(s, a, r, env.state(), result.terminal, config_.gamma, config_.learning_rate);
    ++steps_;
    return result;
}

std::size_t TabularAgent::greedy_action(const Environment& env, std::mt19937_64& tie_rng) const {
    return greedy_choice(q_.row(env.state()), tie_rng);
}

void TabularAgent::save(std::ostream& os) const {
    io::write_magic(os, "NECTABQ1");
    io::write_u64(os, steps_);
    io::write_u64(os, q_.num_states());
    io::write_u64(os, q_.num_actions());
    io::write_f64s(os, q_.data());
    os << rng_ << '\n';
}

}  // namespace nec
