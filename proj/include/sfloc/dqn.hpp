// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deep Q-learning over the window-search MDP.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfloc/baselines.hpp"
#include "sfloc/common.hpp"
#include "sfloc/dataset.hpp"
#include "sfloc/io.hpp"
#include "sfloc/neural.hpp"
#include "sfloc/rl_env.hpp"

namespace sfloc::dqn {

struct Transition {
    std::vector<double> state;
    int action = 1;  ///< 1..5
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Fixed-capacity ring; once full, each push overwrites the oldest entry.
template <typename T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
        data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }
    bool full() const { return data_.size() == capacity_; }

    void push(T item) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(item));
        } else {
            data_[cursor_] = std::move(item);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    /// Slot access; slot order is storage order, not insertion order.
    const T& operator[](std::size_t slot) const { return data_.at(slot); }

    /// Uniform draw with replacement.
    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
        if (data_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> u(0, data_.size() - 1);
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx) i = u(rng);
        return idx;
    }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<T> data_;
};

enum class DecayShape { exponential, linear };

/// Per-environment-step decay from `start` to the `floor`, reached after
/// `decay_steps` steps and held there.
struct EpsilonSchedule {
    double start = 1.0;
    double floor = 0.001;
    double decay_steps = 1.0;
    DecayShape shape = DecayShape::exponential;

    double value(std::uint64_t step) const {
        if (decay_steps <= 0.0) return floor;
        const double t = std::min(1.0, static_cast<double>(step) / decay_steps);
        const double v = shape == DecayShape::exponential ? start * std::pow(floor / start, t)
                                                          : start - (start - floor) * t;
        return std::max(floor, v);
    }
};

struct DqnConfig {
    std::vector<std::size_t> hidden{128, 128, 64};
    nn::AdamConfig adam{5e-4, 0.9, 0.999, 1e-8};
    std::size_t batch_size = 512;
    double gamma = 0.1;
    std::size_t replay_capacity = 50'000;
    std::size_t warmup = 1'024;
    std::size_t target_sync_interval = 1'000;
    std::size_t episodes = 20'000;
    double epsilon_start = 1.0;
    double epsilon_min = 0.001;
    /// Fraction of the scheduled environment steps after which epsilon hits its floor.
    double epsilon_decay_fraction = 0.7;
    DecayShape epsilon_shape = DecayShape::exponential;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
        if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
        if (target_sync_interval == 0) throw std::invalid_argument("target sync interval must be positive");
        if (!(epsilon_min >= 0.0 && epsilon_min <= epsilon_start && epsilon_start <= 1.0))
            throw std::invalid_argument("need 0 <= epsilon_min <= epsilon_start <= 1");
    }
};

/// Steps a containment-preserving descent needs before the overlap test can pass.
inline std::size_t nominal_episode_length(const rl::Window& initial, double precision_m, double shrink = 0.5) {
    const double ratio = initial.half_length / (std::sqrt(2.0) * precision_m);
    if (ratio <= 1.0) return 1;
    return static_cast<std::size_t>(std::ceil(std::log(ratio) / std::log(1.0 / shrink)));
}

inline std::vector<double> q_values(const nn::Network& net, std::span<const double> state) {
    if (state.size() != net.input_dim()) throw DimensionMismatch("state dimension does not match the Q-network");
    const nn::Vector x = Eigen::Map<const nn::Vector>(state.data(), static_cast<Eigen::Index>(state.size()));
    const nn::Vector q = nn::forward(net, x);
    return {q.data(), q.data() + q.size()};
}

/// Lowest index wins ties; returns a 0-based position.
inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Epsilon-greedy. One uniform draw decides explore vs exploit on every call
/// so the RNG stream does not depend on epsilon.
inline rl::Action select_action(const nn::Network& net, std::span<const double> state, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<int> pick(1, rl::kActionCount);
        return static_cast<rl::Action>(pick(rng));
    }
    const auto q = q_values(net, state);
    return static_cast<rl::Action>(static_cast<int>(argmax(q)) + 1);
}

/// Mini-batch in column layout.
struct Batch {
    nn::Matrix states;       ///< dim x B
    nn::Matrix next_states;  ///< dim x B
    std::vector<int> actions;
    nn::Vector rewards;
    std::vector<bool> done;

    std::size_t size() const { return actions.size(); }
};

namespace detail {

template <typename Get>
Batch gather(std::size_t count, Get&& get) {
    if (count == 0) throw std::invalid_argument("empty batch");
    const auto dim = static_cast<Eigen::Index>(get(0).state.size());
    const auto n = static_cast<Eigen::Index>(count);
    Batch b{nn::Matrix(dim, n), nn::Matrix(dim, n), {}, nn::Vector(n), {}};
    b.actions.reserve(count);
    b.done.reserve(count);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Transition& t = get(static_cast<std::size_t>(j));
        if (static_cast<Eigen::Index>(t.state.size()) != dim || static_cast<Eigen::Index>(t.next_state.size()) != dim)
            throw DimensionMismatch("transition state dimensions differ");
        b.states.col(j) = Eigen::Map<const nn::Vector>(t.state.data(), dim);
        b.next_states.col(j) = Eigen::Map<const nn::Vector>(t.next_state.data(), dim);
        b.actions.push_back(t.action);
        b.rewards(j) = t.reward;
        b.done.push_back(t.done);
    }
    return b;
}

}  // namespace detail

inline Batch make_batch(std::span<const Transition> transitions) {
    return detail::gather(transitions.size(), [&](std::size_t j) -> const Transition& { return transitions[j]; });
}

inline Batch make_batch(const ReplayBuffer<Transition>& buffer, std::span<const std::size_t> slots) {
    return detail::gather(slots.size(), [&](std::size_t j) -> const Transition& { return buffer[slots[j]]; });
}

/// y = r on terminal transitions, r + gamma * max_a' Q_target(s', a') otherwise.
inline nn::Vector compute_targets(const Batch& batch, const nn::Network& target_net, double gamma) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    const nn::Matrix q_next = nn::forward(target_net, batch.next_states);
    nn::Vector y(static_cast<Eigen::Index>(batch.size()));
    for (Eigen::Index j = 0; j < y.size(); ++j) {
        y(j) = batch.rewards(j);
        if (!batch.done[static_cast<std::size_t>(j)]) y(j) += gamma * q_next.col(j).maxCoeff();
    }
    return y;
}

/// Mean squared TD error on the taken actions and one Adam step. Returns the
/// pre-update loss.
inline double fit_batch(nn::Network& net, nn::Adam& adam, const Batch& batch, const nn::Vector& targets) {
    nn::ForwardCache cache;
    const nn::Matrix q = nn::forward_with_masks(net, batch.states, std::vector<nn::Matrix>(net.depth()), cache);
    const auto n = static_cast<Eigen::Index>(batch.size());
    nn::Matrix grad = nn::Matrix::Zero(q.rows(), n);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const int a = batch.actions[static_cast<std::size_t>(j)] - 1;
        if (a < 0 || a >= q.rows()) throw std::invalid_argument("transition action out of range");
        const double diff = q(a, j) - targets(j);
        loss += diff * diff;
        grad(a, j) = 2.0 * diff / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
        throw TrainingDivergence("DQN loss became non-finite after " + std::to_string(adam.step_count()) + " updates");
    adam.step(net, nn::backward(net, cache, grad));
    return loss;
}

inline double train_step(nn::Network& net, const nn::Network& target_net, nn::Adam& adam,
                         const ReplayBuffer<Transition>& buffer, const DqnConfig& config, Rng& rng) {
    const auto slots = buffer.sample_indices(config.batch_size, rng);
    const Batch batch = make_batch(buffer, slots);
    return fit_batch(net, adam, batch, compute_targets(batch, target_net, config.gamma));
}

struct EpisodeMetrics {
    std::size_t episode = 0;  ///< 1-based
    double iow = 0.0;         ///< final overlap
    double reward = 0.0;      ///< episode return
    std::size_t steps = 0;
    double error_m = 0.0;     ///< final window centre vs truth
    double epsilon = 0.0;     ///< at episode start
};

inline void write_episode_csv(std::ostream& out, std::span<const EpisodeMetrics> rows) {
    out << "episode,iow,reward,steps,error_m\n";
    for (const auto& m : rows)
        out << m.episode << ',' << io::format_double(m.iow) << ',' << io::format_double(m.reward) << ','
            << m.steps << ',' << io::format_double(m.error_m) << '\n';
}

/// Greedy window-search localizer wrapping a trained Q-network.
class DqnLocalizer {
public:
    DqnLocalizer(nn::Network net, Bounds bounds, rl::EnvConfig env) : net_(std::move(net)), bounds_(bounds), env_(env) {}

    const nn::Network& network() const { return net_; }
    const Bounds& bounds() const { return bounds_; }
    const rl::EnvConfig& env_config() const { return env_; }

    Point localize(std::span<const double> features, Point truth, std::size_t* steps = nullptr) const {
        rl::LocalizationEnv env(bounds_, features.size(), env_);
        auto s = env.reset(features, truth);
        Rng unused;
        rl::StepOutcome out;
        do {
            out = env.step(select_action(net_, s, 0.0, unused));
            s = std::move(out.next_state);
        } while (!out.done);
        if (steps) *steps = out.info.steps;
        return out.info.estimate;
    }

    /// The environment needs the truth only to decide termination, so a
    /// step cap is mandatory here.
    std::vector<Point> predict(const FeatureTable& t) const {
        if (env_.max_steps == 0) throw std::invalid_argument("greedy evaluation needs a finite step cap");
        std::vector<Point> out;
        out.reserve(t.size());
        for (Eigen::Index c = 0; c < t.features.cols(); ++c) {
            const std::span<const double> f(t.features.col(c).data(), static_cast<std::size_t>(t.features.rows()));
            out.push_back(localize(f, t.positions[static_cast<std::size_t>(c)]));
        }
        return out;
    }

private:
    nn::Network net_;
    Bounds bounds_;
    rl::EnvConfig env_;
};

struct TrainResult {
    nn::Network network;
    std::vector<EpisodeMetrics> episodes;
    std::vector<double> losses;  ///< one per gradient update
    std::uint64_t env_steps = 0;
};

/// Learner state: online and target networks, optimizer, replay and RNG.
class Agent {
public:
    Agent(std::size_t state_dim, DqnConfig config, std::uint64_t seed)
        : config_(std::move(config)),
          online_(nn::Network::build(nn::mlp_specs(state_dim, config_.hidden, rl::kActionCount), seed)),
          target_(online_),
          adam_(online_, config_.adam),
          buffer_(config_.replay_capacity),
          rng_(make_rng(seed, 0xa6e7)) {
        config_.validate();
    }

    const nn::Network& online() const { return online_; }
    const nn::Network& target() const { return target_; }
    const ReplayBuffer<Transition>& buffer() const { return buffer_; }
    Rng& rng() { return rng_; }
    std::uint64_t env_steps() const { return env_steps_; }

    rl::Action act(std::span<const double> state, double epsilon) { return select_action(online_, state, epsilon, rng_); }

    /// Stores a transition and, past warmup, runs one update. The target
    /// network is resynced every `target_sync_interval` environment steps.
    /// Returns the loss when an update happened.
    std::optional<double> observe(Transition t) {
        buffer_.push(std::move(t));
        ++env_steps_;
        std::optional<double> loss;
        if (buffer_.size() >= std::max(config_.warmup, std::size_t{1}))
            loss = train_step(online_, target_, adam_, buffer_, config_, rng_);
        if (env_steps_ % config_.target_sync_interval == 0) target_ = online_;
        return loss;
    }

private:
    DqnConfig config_;
    nn::Network online_;
    nn::Network target_;
    nn::Adam adam_;
    ReplayBuffer<Transition> buffer_;
    Rng rng_;
    std::uint64_t env_steps_ = 0;
};

/// Runs `config.episodes` episodes, one training sample per episode, cycling
/// through reshuffled passes over the training set. Single-threaded and
/// fully determined by `seed`.
inline TrainResult train(const FeatureTable& data, const Bounds& bounds, const rl::EnvConfig& env_config,
                         const DqnConfig& config, std::uint64_t seed) {
    if (data.size() == 0) throw std::invalid_argument("empty training set");
    rl::LocalizationEnv env(bounds, data.dim(), env_config);
    Agent agent(env.state_dim(), config, seed);

    const double scheduled = static_cast<double>(config.episodes) *
                             static_cast<double>(nominal_episode_length(env.initial(), env_config.precision_m,
                                                                        env_config.shrink));
    const EpsilonSchedule eps{config.epsilon_start, config.epsilon_min, config.epsilon_decay_fraction * scheduled,
                              config.epsilon_shape};

    Rng order_rng = make_rng(seed, 0x0de5);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    TrainResult result;
    result.episodes.reserve(config.episodes);
    for (std::size_t ep = 1; ep <= config.episodes; ++ep) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), order_rng);
            cursor = 0;
        }
        const std::size_t i = order[cursor++];
        const std::span<const double> f(data.features.col(static_cast<Eigen::Index>(i)).data(), data.dim());
        const Point truth = data.positions[i];

        EpisodeMetrics m;
        m.episode = ep;
        m.epsilon = eps.value(agent.env_steps());
        auto state = env.reset(f, truth);
        rl::StepOutcome out;
        do {
            const rl::Action a = agent.act(state, eps.value(agent.env_steps()));
            out = env.step(a);
            m.reward += out.reward;
            Transition t{state, rl::code(a), out.reward, out.next_state, out.done};
            state = out.next_state;
            if (auto loss = agent.observe(std::move(t))) result.losses.push_back(*loss);
        } while (!out.done);
        m.iow = out.info.iow;
        m.steps = out.info.steps;
        m.error_m = distance(out.info.estimate, truth);
        result.episodes.push_back(m);
    }
    result.network = agent.online();
    result.env_steps = agent.env_steps();
    return result;
}

/// Uniform-random policy under the same episode sequence as train(); the
/// reference point for "has the agent learned anything".
inline std::vector<EpisodeMetrics> run_random_policy(const FeatureTable& data, const Bounds& bounds,
                                                     const rl::EnvConfig& env_config, std::size_t episodes,
                                                     std::uint64_t seed) {
    rl::LocalizationEnv env(bounds, data.dim(), env_config);
    Rng order_rng = make_rng(seed, 0x0de5);
    Rng act_rng = make_rng(seed, 0x4a4d);
    std::uniform_int_distribution<int> pick(1, rl::kActionCount);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    std::vector<EpisodeMetrics> out;
    for (std::size_t ep = 1; ep <= episodes; ++ep) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), order_rng);
            cursor = 0;
        }
        const std::size_t i = order[cursor++];
        const std::span<const double> f(data.features.col(static_cast<Eigen::Index>(i)).data(), data.dim());
        EpisodeMetrics m;
        m.episode = ep;
        m.epsilon = 1.0;
        env.reset(f, data.positions[i]);
        rl::StepOutcome o;
        do {
            o = env.step(pick(act_rng));
            m.reward += o.reward;
        } while (!o.done);
        m.iow = o.info.iow;
        m.steps = o.info.steps;
        m.error_m = distance(o.info.estimate, data.positions[i]);
        out.push_back(m);
    }
    return out;
}

/// Mean of error_m over episodes [end - window, end).
inline double trailing_mean_error(std::span<const EpisodeMetrics> eps, std::size_t end, std::size_t window) {
    if (end > eps.size() || window == 0 || window > end) throw std::out_of_range("trailing window out of range");
    double s = 0.0;
    for (std::size_t i = end - window; i < end; ++i) s += eps[i].error_m;
    return s / static_cast<double>(window);
}

}  // namespace sfloc::dqn
