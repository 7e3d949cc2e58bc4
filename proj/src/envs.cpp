#include "nec/envs.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace nec {

std::string_view to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::chain: return "chain";
        case EnvKind::gridworld: return "gridworld";
        case EnvKind::noisy_gridworld: return "noisy_gridworld";
        case EnvKind::cliff: return "cliff";
    }
    return "chain";
}

EnvKind parse_env_kind(std::string_view name) {
    if (name == "chain") return EnvKind::chain;
    if (name == "gridworld") return EnvKind::gridworld;
    if (name == "noisy_gridworld") return EnvKind::noisy_gridworld;
    if (name == "cliff") return EnvKind::cliff;
    throw ConfigError("unknown environment '" + std::string(name) + "'");
}

std::string_view to_string(ObsMode mode) { return mode == ObsMode::onehot ? "onehot" : "pixel"; }

ObsMode parse_obs_mode(std::string_view name) {
    if (name == "onehot" || name == "tabular") return ObsMode::onehot;
    if (name == "pixel") return ObsMode::pixel;
    throw ConfigError("unknown observation mode '" + std::string(name) + "'");
}

void TabularMdp::validate() const {
    if (num_states == 0 || num_actions == 0) throw ConfigError("MDP must have states and actions");
    if (table.size() != num_states * num_actions) throw ConfigError("MDP table has wrong size");
    if (start >= num_states) throw ConfigError("MDP start state out of range");
    for (std::size_t i = 0; i < table.size(); ++i) {
        double total = 0.0;
        for (const auto& o : table[i]) {
            if (o.next >= num_states) throw ConfigError("MDP outcome points past the state space");
            if (!std::isfinite(o.reward)) throw ConfigError("MDP reward must be finite");
            total += o.probability;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ConfigError("MDP outcome probabilities must sum to 1");
    }
}

void EnvSpec::validate() const {
    if (max_steps == 0) throw ConfigError("env.max_steps must be positive");
    if (label.find_first_of(",\"\n\r") != std::string::npos)
        throw ConfigError("env.label must not contain commas, quotes or line breaks");
    switch (kind) {
        case EnvKind::chain:
            if (length < 2) throw ConfigError("chain length must be >= 2");
            break;
        case EnvKind::gridworld:
            if (width * height < 2) throw ConfigError("gridworld needs at least two cells");
            break;
        case EnvKind::cliff:
            if (width < 3 || height < 2) throw ConfigError("cliff needs width >= 3 and height >= 2");
            break;
        case EnvKind::noisy_gridworld:
            if (width < 3 || height < 2) throw ConfigError("noisy_gridworld needs width >= 3 and height >= 2");
            if (width - 2 > 16) throw ConfigError("noisy_gridworld supports at most 16 pellets (width <= 18)");
            break;
    }
}

std::string EnvSpec::display_label() const {
    if (!label.empty()) return label;
    std::string out(to_string(kind));
    if (kind == EnvKind::chain) return out + "_" + std::to_string(length);
    return out + "_" + std::to_string(width) + "x" + std::to_string(height);
}

namespace {

struct Grid {
    std::size_t width, height;
    std::size_t cell(std::size_t row, std::size_t col) const { return row * width + col; }
    std::size_t row(std::size_t cell) const { return cell / width; }
    std::size_t col(std::size_t cell) const { return cell % width; }
    // Returns the target cell, or the same cell when blocked by the border.
    std::size_t move(std::size_t cell, std::size_t action) const {
        std::size_t r = row(cell), c = col(cell);
        switch (action) {
            case 0: if (r > 0) --r; break;
            case 1: if (c + 1 < width) ++c; break;
            case 2: if (r + 1 < height) ++r; break;
            case 3: if (c > 0) --c; break;
            default: break;
        }
        return this->cell(r, c);
    }
};

TabularMdp make_chain(std::size_t n) {
    TabularMdp m;
    m.num_states = n;
    m.num_actions = 2;
    m.start = 0;
    m.table.resize(n * 2);
    m.terminal.assign(n, false);
    m.terminal[n - 1] = true;
    for (std::size_t s = 0; s < n; ++s) {
        m.state_labels.push_back("s" + std::to_string(s));
        if (m.terminal[s]) {
            m.outcomes(s, 0) = {{1.0, s, 0.0, true}};
            m.outcomes(s, 1) = {{1.0, s, 0.0, true}};
            continue;
        }
        m.outcomes(s, 0) = {{1.0, s == 0 ? 0 : s - 1, 0.0, false}};
        const std::size_t right = s + 1;
        const bool goal = right == n - 1;
        m.outcomes(s, 1) = {{1.0, right, goal ? 1.0 : 0.0, goal}};
    }
    return m;
}

TabularMdp make_gridworld(std::size_t w, std::size_t h) {
    const Grid g{w, h};
    TabularMdp m;
    m.num_states = w * h;
    m.num_actions = 4;
    m.start = 0;
    m.table.resize(m.num_states * 4);
    m.terminal.assign(m.num_states, false);
    const std::size_t goal = g.cell(h - 1, w - 1);
    m.terminal[goal] = true;
    for (std::size_t s = 0; s < m.num_states; ++s) {
        m.state_labels.push_back("(" + std::to_string(g.row(s)) + "," + std::to_string(g.col(s)) + ")");
        for (std::size_t a = 0; a < 4; ++a) {
            if (s == goal) {
                m.outcomes(s, a) = {{1.0, s, 0.0, true}};
                continue;
            }
            const std::size_t next = g.move(s, a);
            const bool at_goal = next == goal;
            m.outcomes(s, a) = {{1.0, next, at_goal ? 1.0 : 0.0, at_goal}};
        }
    }
    return m;
}

TabularMdp make_cliff(std::size_t w, std::size_t h) {
    const Grid g{w, h};
    TabularMdp m;
    m.num_states = w * h;
    m.num_actions = 4;
    m.start = g.cell(h - 1, 0);
    m.table.resize(m.num_states * 4);
    m.terminal.assign(m.num_states, false);
    const std::size_t goal = g.cell(h - 1, w - 1);
    auto is_cliff = [&](std::size_t c) { return g.row(c) == h - 1 && g.col(c) >= 1 && g.col(c) + 1 < w; };
    for (std::size_t s = 0; s < m.num_states; ++s) m.terminal[s] = s == goal || is_cliff(s);
    for (std::size_t s = 0; s < m.num_states; ++s) {
        m.state_labels.push_back("(" + std::to_string(g.row(s)) + "," + std::to_string(g.col(s)) + ")");
        for (std::size_t a = 0; a < 4; ++a) {
            if (m.terminal[s]) {
                m.outcomes(s, a) = {{1.0, s, 0.0, true}};
                continue;
            }
            const std::size_t next = g.move(s, a);
            if (is_cliff(next))
                m.outcomes(s, a) = {{1.0, next, -100.0, true}};
            else
                m.outcomes(s, a) = {{1.0, next, -1.0, next == goal}};
        }
    }
    return m;
}

TabularMdp make_noisy_gridworld(const EnvSpec& spec) {
    const Grid g{spec.width, spec.height};
    const std::size_t pellets = spec.width - 2;
    const std::size_t masks = std::size_t{1} << pellets;
    const std::size_t cells = spec.width * spec.height;
    const std::size_t exit_cell = g.cell(0, spec.width - 1);
    const std::size_t bonus_cell = g.cell(spec.height - 1, 0);
    auto index = [&](std::size_t cell, std::size_t mask) { return cell * masks + mask; };

    TabularMdp m;
    m.num_states = cells * masks;
    m.num_actions = 4;
    m.start = index(g.cell(0, 0), masks - 1);
    m.table.resize(m.num_states * 4);
    m.terminal.assign(m.num_states, false);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        for (std::size_t mask = 0; mask < masks; ++mask) {
            const std::size_t s = index(cell, mask);
            m.terminal[s] = cell == exit_cell || cell == bonus_cell;
            std::ostringstream label;
            label << '(' << g.row(cell) << ',' << g.col(cell) << ")m" << mask;
            m.state_labels.push_back(label.str());
            for (std::size_t a = 0; a < 4; ++a) {
                if (m.terminal[s]) {
                    m.outcomes(s, a) = {{1.0, s, 0.0, true}};
                    continue;
                }
                const std::size_t next_cell = g.move(cell, a);
                std::size_t next_mask = mask;
                double reward = 0.0;
                bool terminal = false;
                if (next_cell == exit_cell) {
                    reward = spec.exit_reward;
                    terminal = true;
                } else if (next_cell == bonus_cell) {
                    reward = spec.bonus_reward;
                    terminal = true;
                } else if (g.row(next_cell) == 0 && g.col(next_cell) >= 1) {
                    const std::size_t bit = std::size_t{1} << (g.col(next_cell) - 1);
                    if (mask & bit) {
                        reward = spec.pellet_reward;
                        next_mask = mask & ~bit;
                    }
                }
                m.outcomes(s, a) = {{1.0, index(next_cell, next_mask), reward, terminal}};
            }
        }
    }
    return m;
}

}  // namespace

TabularMdp build_mdp(const EnvSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case EnvKind::chain: return make_chain(spec.length);
        case EnvKind::gridworld: return make_gridworld(spec.width, spec.height);
        case EnvKind::cliff: return make_cliff(spec.width, spec.height);
        case EnvKind::noisy_gridworld: return make_noisy_gridworld(spec);
    }
    throw ConfigError("unknown environment kind");
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)), mdp_(build_mdp(spec_)) {
    mdp_.validate();
    const std::size_t n = mdp_.num_states;
    base_obs_.resize(n);
    if (spec_.obs == ObsMode::onehot) {
        obs_dim_ = n;
        obs_rows_ = 1;
        obs_cols_ = n;
        for (std::size_t s = 0; s < n; ++s) {
            base_obs_[s].assign(n, 0.0);
            base_obs_[s][s] = 1.0;
        }
        return;
    }
    switch (spec_.kind) {
        case EnvKind::chain: {
            obs_rows_ = 1;
            obs_cols_ = spec_.length;
            obs_dim_ = spec_.length;
            for (std::size_t s = 0; s < n; ++s) {
                base_obs_[s].assign(obs_dim_, 0.0);
                base_obs_[s][s] = 1.0;
            }
            break;
        }
        case EnvKind::gridworld:
        case EnvKind::cliff: {
            const Grid g{spec_.width, spec_.height};
            obs_rows_ = spec_.height;
            obs_cols_ = spec_.width;
            obs_dim_ = spec_.width * spec_.height;
            const std::size_t goal = g.cell(spec_.height - 1, spec_.width - 1);
            for (std::size_t s = 0; s < n; ++s) {
                auto& o = base_obs_[s];
                o.assign(obs_dim_, 0.0);
                if (spec_.kind == EnvKind::cliff) {
                    for (std::size_t c = 1; c + 1 < spec_.width; ++c) o[g.cell(spec_.height - 1, c)] = 0.5;
                    o[goal] = 0.25;
                } else {
                    o[goal] = 0.5;
                }
                o[s] = 1.0;
            }
            break;
        }
        case EnvKind::noisy_gridworld: {
            const Grid g{spec_.width, spec_.height};
            const std::size_t cells = spec_.width * spec_.height;
            const std::size_t pellets = spec_.width - 2;
            const std::size_t masks = std::size_t{1} << pellets;
            obs_rows_ = 2 * spec_.height;
            obs_cols_ = spec_.width;
            obs_dim_ = 2 * cells + spec_.noise_pixels;
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t cell = s / masks;
                const std::size_t mask = s % masks;
                auto& o = base_obs_[s];
                o.assign(obs_dim_, 0.0);
                o[cell] = 1.0;
                for (std::size_t i = 0; i < pellets; ++i)
                    if (mask & (std::size_t{1} << i)) o[cells + g.cell(0, i + 1)] = 0.5;
                o[cells + g.cell(0, spec_.width - 1)] = 0.25;
                o[cells + g.cell(spec_.height - 1, 0)] = 1.0;
            }
            break;
        }
    }
}

Observation Environment::render_state(std::size_t state) const {
    if (state >= base_obs_.size()) throw InputError("render_state: state out of range");
    return base_obs_[state];
}

void Environment::render(Observation& out) {
    out = base_obs_[state_];
    if (spec_.kind == EnvKind::noisy_gridworld && spec_.obs == ObsMode::pixel) {
        const std::size_t offset = obs_dim_ - spec_.noise_pixels;
        std::bernoulli_distribution flicker(0.5);
        for (std::size_t i = 0; i < spec_.noise_pixels; ++i) out[offset + i] = flicker(rng_) ? 1.0 : 0.0;
    }
}

Observation Environment::reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_ = mdp_.start;
    steps_ = 0;
    active_ = true;
    render(observation_);
    return observation_;
}

StepResult Environment::step(std::size_t action) {
    if (!active_) throw UsageError("env_step on a finished episode (call reset)");
    if (action >= mdp_.num_actions) throw InputError("env_step: action out of range");
    const auto& outcomes = mdp_.outcomes(state_, action);
    const Outcome* chosen = &outcomes.front();
    if (outcomes.size() > 1) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double draw = u(rng_);
        for (const auto& o : outcomes) {
            chosen = &o;
            if (draw < o.probability) break;
            draw -= o.probability;
        }
    }
    state_ = chosen->next;
    ++steps_;
    StepResult r;
    r.reward = chosen->reward;
    r.terminal = chosen->terminal;
    r.truncated = !r.terminal && steps_ >= spec_.max_steps;
    active_ = !r.done();
    render(observation_);
    r.observation = observation_;
    return r;
}

std::string Environment::dump_transitions() const {
    static constexpr const char* grid_actions[] = {"up", "right", "down", "left"};
    static constexpr const char* chain_actions[] = {"left", "right"};
    std::ostringstream os;
    os << "# " << spec_.display_label() << ": " << mdp_.num_states << " states, " << mdp_.num_actions
       << " actions, start " << mdp_.state_labels[mdp_.start] << '\n';
    os << "state,action,probability,next,reward,terminal\n";
    for (std::size_t s = 0; s < mdp_.num_states; ++s) {
        if (mdp_.terminal[s]) continue;
        for (std::size_t a = 0; a < mdp_.num_actions; ++a) {
            for (const auto& o : mdp_.outcomes(s, a)) {
                os << mdp_.state_labels[s] << ','
                   << (spec_.kind == EnvKind::chain ? chain_actions[a] : grid_actions[a]) << ','
                   << io::format_double(o.probability) << ',' << mdp_.state_labels[o.next] << ','
                   << io::format_double(o.reward) << ',' << (o.terminal ? 1 : 0) << '\n';
            }
        }
    }
    return os.str();
}

std::vector<double> value_iteration(const TabularMdp& mdp, double gamma, double tolerance) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InputError("value_iteration: gamma must lie in [0, 1]");
    const std::size_t S = mdp.num_states, A = mdp.num_actions;
    std::vector<double> q(S * A, 0.0), next(S * A, 0.0), v(S, 0.0);
    const double stop = gamma < 1.0 ? tolerance * (1.0 - gamma) : tolerance;
    for (std::size_t iter = 0; iter < 1'000'000; ++iter) {
        for (std::size_t s = 0; s < S; ++s) {
            double best = q[s * A];
            for (std::size_t a = 1; a < A; ++a) best = std::max(best, q[s * A + a]);
            v[s] = mdp.terminal[s] ? 0.0 : best;
        }
        double residual = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a) {
                double acc = 0.0;
                if (!mdp.terminal[s])
                    for (const auto& o : mdp.outcomes(s, a))
                        acc += o.probability * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
                next[s * A + a] = acc;
                residual = std::max(residual, std::abs(acc - q[s * A + a]));
            }
        }
        q.swap(next);
        if (residual < stop) return q;
    }
    throw InternalError("value_iteration did not converge");
}

std::vector<double> optimal_q_oracle(const EnvSpec& spec, double gamma) {
    return value_iteration(build_mdp(spec), gamma);
}

std::vector<std::size_t> reachable_states(const TabularMdp& mdp) {
    std::vector<bool> seen(mdp.num_states, false);
    std::deque<std::size_t> frontier{mdp.start};
    seen[mdp.start] = true;
    while (!frontier.empty()) {
        const std::size_t s = frontier.front();
        frontier.pop_front();
        if (mdp.terminal[s]) continue;
        for (std::size_t a = 0; a < mdp.num_actions; ++a)
            for (const auto& o : mdp.outcomes(s, a))
                if (o.probability > 0.0 && !seen[o.next]) {
                    seen[o.next] = true;
                    frontier.push_back(o.next);
                }
    }
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < mdp.num_states; ++s)
        if (seen[s]) out.push_back(s);
    return out;
}

}  // namespace nec
