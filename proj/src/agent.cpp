#include "nec/agent.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace nec {

double EpsilonSchedule::at(std::uint64_t step) const {
    if (anneal_steps == 0 || step >= anneal_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
    return start + (end - start) * frac;
}

void EpsilonSchedule::validate() const {
    if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0))
        throw ConfigError("exploration rates must lie in [0, 1]");
}

std::size_t greedy_choice(std::span<const double> q, std::mt19937_64& rng) {
    if (q.empty()) throw InputError("select_action: no actions");
    const double best = *std::max_element(q.begin(), q.end());
    std::size_t ties = 0;
    for (double v : q) ties += v == best;
    std::size_t pick = 0;
    if (ties > 1) pick = std::uniform_int_distribution<std::size_t>(0, ties - 1)(rng);
    for (std::size_t a = 0; a < q.size(); ++a)
        if (q[a] == best && pick-- == 0) return a;
    return 0;
}

std::size_t select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng) {
    if (q.empty()) throw InputError("select_action: no actions");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InputError("select_action: epsilon outside [0, 1]");
    if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
        return std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
    return greedy_choice(q, rng);
}

double n_step_target(std::span<const double> rewards, double bootstrap, double gamma, bool terminal) {
    double total = 0.0;
    double discount = 1.0;
    for (double r : rewards) {
        total += discount * r;
        discount *= gamma;
    }
    if (!terminal) total += discount * bootstrap;
    return total;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(TransitionRecord record) {
    if (!std::isfinite(record.target)) throw InputError("replay: non-finite target");
    if (records_.size() < capacity_) {
        records_.push_back(std::move(record));
        return;
    }
    records_[next_] = std::move(record);
    next_ = (next_ + 1) % capacity_;
}

const TransitionRecord& ReplayBuffer::at(std::size_t i) const {
    if (i >= records_.size()) throw InputError("replay index out of range");
    return records_[(next_ + i) % records_.size()];
}

std::vector<TransitionRecord> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
    if (records_.empty()) throw EmptyMemoryError("replay buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, records_.size() - 1);
    std::vector<TransitionRecord> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(records_[pick(rng)]);
    return batch;
}

void ReplayBuffer::save(std::ostream& os) const {
    io::write_u64(os, capacity_);
    io::write_u64(os, next_);
    io::write_u64(os, records_.size());
    for (const auto& r : records_) {
        io::write_u64(os, r.action);
        io::write_f64(os, r.target);
        io::write_u64(os, r.observation.size());
        io::write_f64s(os, r.observation);
    }
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
    ReplayBuffer buf(io::read_u64(is));
    buf.next_ = io::read_u64(is);
    const auto n = io::read_u64(is);
    if (n > buf.capacity_ || buf.next_ >= std::max<std::size_t>(buf.capacity_, 1))
        throw IoError("replay snapshot: inconsistent header");
    buf.records_.resize(n);
    for (auto& r : buf.records_) {
        r.action = io::read_u64(is);
        r.target = io::read_f64(is);
        r.observation = io::read_f64s(is, io::read_u64(is));
    }
    return buf;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EmbedKind kind) {
    switch (kind) {
        case EmbedKind::mlp: return "mlp";
        case EmbedKind::identity: return "identity";
        case EmbedKind::projection: return "projection";
    }
    return "mlp";
}

EmbedKind parse_embed_kind(std::string_view name) {
    if (name == "mlp") return EmbedKind::mlp;
    if (name == "identity") return EmbedKind::identity;
    if (name == "projection") return EmbedKind::projection;
    throw ConfigError("unknown embedding kind '" + std::string(name) + "'");
}

void AgentConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("nec.gamma must lie in (0, 1)");
    if (n_step < 1) throw ConfigError("nec.n_step must be >= 1");
    epsilon.validate();
    if (!(slow_lr > 0.0)) throw ConfigError("nec.slow_lr must be positive");
    if (!(memory_learning_rate() >= 0.0)) throw ConfigError("nec.memory_lr must be >= 0");
    if (replay_capacity == 0 || train_every == 0 || batch_size == 0)
        throw ConfigError("replay capacity, train_every and batch_size must be positive");
    if (!std::isfinite(q_default)) throw ConfigError("nec.q_default must be finite");
    if (embed.kind != EmbedKind::identity && embed.key_dim == 0) throw ConfigError("embed.key_dim must be positive");
    for (auto w : embed.hidden)
        if (w == 0) throw ConfigError("embed.hidden widths must be positive");
    dnd.validate();
}

namespace {

EmbeddingParams make_embedding(const EmbedConfig& cfg, std::size_t obs_dim, std::uint64_t seed) {
    switch (cfg.kind) {
        case EmbedKind::identity: return identity_params(obs_dim);
        case EmbedKind::projection: return RandomProjection(cfg.key_dim, obs_dim, seed).as_params();
        case EmbedKind::mlp: {
            std::vector<LayerShape> shapes;
            std::size_t in = obs_dim;
            for (auto width : cfg.hidden) {
                shapes.push_back({in, width, Activation::relu});
                in = width;
            }
            shapes.push_back({in, cfg.key_dim, Activation::identity});
            return init_params(shapes, seed);
        }
    }
    throw ConfigError("unknown embedding kind");
}

// Distinct streams for the embedding initializer and the agent's own rng.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (std::uint64_t{out[0]} << 32) | out[1];
}

}  // namespace

NecAgent::NecAgent(AgentConfig config, std::size_t obs_dim, std::size_t num_actions, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      obs_dim_(obs_dim),
      params_(make_embedding(config_.embed, obs_dim, mix_seed(seed, 1))),
      opt_(params_, RmsPropConfig{config_.slow_lr, config_.rms_rho, config_.rms_epsilon}),
      replay_(config_.replay_capacity),
      rng_(mix_seed(seed, 2)) {
    if (num_actions == 0) throw ConfigError("agent needs at least one action");
    memories_.reserve(num_actions);
    for (std::size_t a = 0; a < num_actions; ++a) memories_.emplace_back(params_.key_dim(), config_.dnd);
}

std::vector<double> NecAgent::q_values(std::span<const double> obs) {
    const auto h = key_of(obs);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].lookup(h).output;
    return q;
}

std::vector<double> NecAgent::q_values_peek(std::span<const double> obs) const {
    const auto h = key_of(obs);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].peek(h).output;
    return q;
}

double NecAgent::max_q(std::span<const double> obs) {
    const auto q = q_values(obs);
    return *std::max_element(q.begin(), q.end());
}

void NecAgent::begin_episode(const Environment& env) {
    if (!window_.empty() || !pending_writes_.empty()) flush_episode();
    current_obs_ = env.observation();
    episode_writes_ = 0;
}

StepResult NecAgent::step(Environment& env) {
    if (current_obs_.size() != obs_dim_) throw UsageError("NecAgent::step before begin_episode");
    const auto h = key_of(current_obs_);
    std::vector<double> q(memories_.size(), config_.q_default);
    for (std::size_t a = 0; a < memories_.size(); ++a)
        if (!memories_[a].empty()) q[a] = memories_[a].lookup(h).output;
    const std::size_t action = select_action(q, config_.epsilon.at(steps_), rng_);

    StepResult result = env.step(action);
    window_.push_back({current_obs_, h, action, result.reward});
    ++steps_;

    if (result.terminal) {
        flush_episode();
    } else if (result.truncated) {
        flush_episode(max_q(result.observation));
    } else if (window_.size() >= config_.n_step) {
        mature_front(max_q(result.observation), false);
    }
    current_obs_ = result.observation;

    if (steps_ % config_.train_every == 0 && !replay_.empty()) {
        const bool learns = config_.embed.trainable || config_.memory_learning_rate() > 0.0;
        if (learns) {
            const auto batch = replay_.sample(config_.batch_size, rng_);
            train_minibatch(batch);
        }
    }
    return result;
}

void NecAgent::mature_front(double bootstrap, bool terminal) {
    std::vector<double> rewards;
    rewards.reserve(window_.size());
    for (const auto& s : window_) rewards.push_back(s.reward);
    PendingStep front = std::move(window_.front());
    window_.pop_front();
    const double target = n_step_target(rewards, bootstrap, config_.gamma, terminal);
    replay_.push({std::move(front.observation), front.action, target});
    PendingWrite write{front.action, std::move(front.key), target};
    if (config_.batch_writes)
        pending_writes_.push_back(std::move(write));
    else
        commit(std::move(write));
}

void NecAgent::commit(PendingWrite write) {
    memories_[write.action].write(write.key, write.target);
    memories_[write.action].maintain_index();
    ++episode_writes_;
    ++total_writes_;
}

void NecAgent::commit_batched_writes() {
    for (auto& w : pending_writes_) commit(std::move(w));
    pending_writes_.clear();
}

void NecAgent::flush_episode(std::optional<double> bootstrap) {
    while (!window_.empty()) mature_front(bootstrap.value_or(0.0), !bootstrap.has_value());
    commit_batched_writes();
}

std::size_t NecAgent::greedy_action(const Environment& env, std::mt19937_64& tie_rng) const {
    const auto q = q_values_peek(env.observation());
    return greedy_choice(q, tie_rng);
}

NecAgent::BatchGradients NecAgent::batch_gradients(std::span<const TransitionRecord> batch) {
    struct Item {
        const TransitionRecord* record;
        EmbedResult embedded;
        LookupTrace trace;
    };
    std::vector<Item> items;
    items.reserve(batch.size());
    BatchGradients g;
    for (const auto& rec : batch) {
        if (rec.action >= memories_.size()) throw InputError("training record has an invalid action");
        if (memories_[rec.action].empty()) {
            ++g.skipped;
            continue;
        }
        Item item{&rec, embed_forward(params_, rec.observation), {}};
        item.trace = memories_[rec.action].lookup(item.embedded.key);
        items.push_back(std::move(item));
    }
    g.used = items.size();
    g.memory.resize(memories_.size());
    g.d_params = params_.zeros_like();
    if (items.empty()) return g;

    const double n = static_cast<double>(items.size());
    double loss = 0.0;
    for (const auto& item : items) {
        const double err = item.trace.output - item.record->target;
        loss += err * err;
    }
    g.loss = loss / n;

    const std::size_t dim = params_.key_dim();
    for (const auto& item : items) {
        const std::size_t a = item.record->action;
        const double d_out = 2.0 * (item.trace.output - item.record->target) / n;
        const auto lg = memories_[a].lookup_backward(item.trace, d_out);
        if (config_.embed.trainable) {
            const auto eg = embed_backward(params_, item.embedded.trace, lg.d_query);
            for (std::size_t li = 0; li < g.d_params.layers.size(); ++li) {
                auto& dst = g.d_params.layers[li];
                const auto& src = eg.params.layers[li];
                for (std::size_t i = 0; i < dst.weight.size(); ++i) dst.weight[i] += src.weight[i];
                for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
            }
        }
        for (std::size_t i = 0; i < item.trace.ids.size(); ++i) {
            auto& mg = g.memory[a][item.trace.ids[i]];
            if (mg.d_key.empty()) mg.d_key.assign(dim, 0.0);
            for (std::size_t d = 0; d < dim; ++d) mg.d_key[d] += lg.d_keys[i * dim + d];
            mg.d_value += lg.d_values[i];
        }
    }
    return g;
}

double NecAgent::batch_loss(std::span<const TransitionRecord> batch) const {
    double loss = 0.0;
    std::size_t used = 0;
    for (const auto& rec : batch) {
        if (rec.action >= memories_.size() || memories_[rec.action].empty()) continue;
        const auto h = key_of(rec.observation);
        const double err = memories_[rec.action].peek(h).output - rec.target;
        loss += err * err;
        ++used;
    }
    return used ? loss / static_cast<double>(used) : 0.0;
}

double NecAgent::train_minibatch(std::span<const TransitionRecord> batch) {
    if (batch.empty()) throw InputError("train_minibatch: empty batch");
    auto g = batch_gradients(batch);
    skipped_ += g.skipped;
    if (g.used == 0) return 0.0;

    if (config_.embed.trainable && !rmsprop_step(params_, g.d_params, opt_)) ++rejected_;

    const double lr = config_.memory_learning_rate();
    if (lr > 0.0) {
        for (std::size_t a = 0; a < memories_.size(); ++a) {
            if (g.memory[a].empty()) continue;
            std::vector<KeyId> ids;
            std::vector<double> d_keys, d_values;
            bool finite = true;
            for (const auto& [id, mg] : g.memory[a]) {
                ids.push_back(id);
                d_keys.insert(d_keys.end(), mg.d_key.begin(), mg.d_key.end());
                d_values.push_back(mg.d_value);
                finite = finite && std::isfinite(mg.d_value);
                for (double v : mg.d_key) finite = finite && std::isfinite(v);
            }
            if (!finite) {
                ++rejected_;
                continue;
            }
            memories_[a].apply_gradients(ids, d_keys, d_values, lr);
            memories_[a].maintain_index();
        }
    }
    return g.loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_section(std::ostream& os, std::string_view tag, const std::string& payload) {
    if (tag.size() != 8) throw InternalError("checkpoint tags are 8 bytes");
    io::write_magic(os, tag);
    io::write_bytes(os, payload);
}

struct Section {
    std::string tag;
    std::string payload;
};

std::vector<Section> read_sections(std::istream& is) {
    io::expect_magic(is, "NECCKPT1");
    const auto count = io::read_u64(is);
    std::vector<Section> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        Section s;
        s.tag = io::read_bytes(is, 8);
        s.payload = io::read_bytes(is, io::read_u64(is));
        out.push_back(std::move(s));
    }
    return out;
}

std::string dnd_tag(std::size_t a) {
    std::string digits = std::to_string(a);
    if (digits.size() > 5) throw InternalError("too many actions for checkpoint tag");
    return "DND" + std::string(5 - digits.size(), '0') + digits;
}

}  // namespace

void NecAgent::save(std::ostream& os) const {
    std::vector<std::pair<std::string, std::string>> sections;
    {
        std::ostringstream s;
        save_params(s, params_);
        sections.emplace_back("EMBED___", s.str());
    }
    {
        std::ostringstream s;
        save_params(s, opt_.nu);
        sections.emplace_back("OPTSTATE", s.str());
    }
    for (std::size_t a = 0; a < memories_.size(); ++a) {
        std::ostringstream s;
        memories_[a].save(s);
        sections.emplace_back(dnd_tag(a), s.str());
    }
    {
        std::ostringstream s;
        replay_.save(s);
        sections.emplace_back("REPLAY__", s.str());
    }
    {
        std::ostringstream s;
        s << rng_;
        sections.emplace_back("RNG_____", s.str());
    }
    {
        std::ostringstream s;
        io::write_u64(s, steps_);
        io::write_u64(s, skipped_);
        io::write_u64(s, rejected_);
        io::write_u64(s, total_writes_);
        io::write_u64(s, episode_writes_);
        sections.emplace_back("COUNTERS", s.str());
    }
    {
        std::ostringstream s;
        io::write_u64(s, current_obs_.size());
        io::write_f64s(s, current_obs_);
        io::write_u64(s, window_.size());
        for (const auto& w : window_) {
            io::write_u64(s, w.observation.size());
            io::write_f64s(s, w.observation);
            io::write_u64(s, w.key.size());
            io::write_f64s(s, w.key);
            io::write_u64(s, w.action);
            io::write_f64(s, w.reward);
        }
        io::write_u64(s, pending_writes_.size());
        for (const auto& w : pending_writes_) {
            io::write_u64(s, w.action);
            io::write_u64(s, w.key.size());
            io::write_f64s(s, w.key);
            io::write_f64(s, w.target);
        }
        sections.emplace_back("WINDOW__", s.str());
    }
    io::write_magic(os, "NECCKPT1");
    io::write_u64(os, sections.size());
    for (const auto& [tag, payload] : sections) write_section(os, tag, payload);
}

void NecAgent::load(std::istream& is) {
    const auto sections = read_sections(is);
    std::size_t dnd_seen = 0;
    for (const auto& sec : sections) {
        std::istringstream s(sec.payload);
        if (sec.tag == "EMBED___") {
            auto p = load_params(s);
            if (!p.same_shape(params_)) throw IoError("checkpoint embedding does not match agent config");
            params_ = std::move(p);
        } else if (sec.tag == "OPTSTATE") {
            auto nu = load_params(s);
            if (!nu.same_shape(params_)) throw IoError("checkpoint optimizer state does not match agent config");
            opt_.nu = std::move(nu);
        } else if (sec.tag.rfind("DND", 0) == 0) {
            const auto a = static_cast<std::size_t>(io::parse_int(std::string_view(sec.tag).substr(3)));
            if (a >= memories_.size()) throw IoError("checkpoint has more memories than the agent has actions");
            auto m = DndMemory::load(s);
            if (m.key_dim() != params_.key_dim()) throw IoError("checkpoint memory key_dim mismatch");
            memories_[a] = std::move(m);
            ++dnd_seen;
        } else if (sec.tag == "REPLAY__") {
            replay_ = ReplayBuffer::load(s);
        } else if (sec.tag == "RNG_____") {
            s >> rng_;
        } else if (sec.tag == "COUNTERS") {
            steps_ = io::read_u64(s);
            skipped_ = io::read_u64(s);
            rejected_ = io::read_u64(s);
            total_writes_ = io::read_u64(s);
            episode_writes_ = io::read_u64(s);
        } else if (sec.tag == "WINDOW__") {
            current_obs_ = io::read_f64s(s, io::read_u64(s));
            window_.clear();
            const auto n = io::read_u64(s);
            for (std::uint64_t i = 0; i < n; ++i) {
                PendingStep w;
                w.observation = io::read_f64s(s, io::read_u64(s));
                w.key = io::read_f64s(s, io::read_u64(s));
                w.action = io::read_u64(s);
                w.reward = io::read_f64(s);
                window_.push_back(std::move(w));
            }
            pending_writes_.clear();
            const auto m = io::read_u64(s);
            for (std::uint64_t i = 0; i < m; ++i) {
                PendingWrite w;
                w.action = io::read_u64(s);
                w.key = io::read_f64s(s, io::read_u64(s));
                w.target = io::read_f64(s);
                pending_writes_.push_back(std::move(w));
            }
        }
    }
    if (dnd_seen != memories_.size()) throw IoError("checkpoint is missing DND sections");
}

std::vector<DndMemory> read_checkpoint_memories(std::istream& is) {
    std::vector<DndMemory> out;
    for (const auto& sec : read_sections(is)) {
        if (sec.tag.rfind("DND", 0) != 0) continue;
        std::istringstream s(sec.payload);
        out.push_back(DndMemory::load(s));
    }
    return out;
}

}  // namespace nec
