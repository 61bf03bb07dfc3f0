// SPDX-License-Identifier: Apache-2.0
#pragma once

// Window-search localization MDP. The agent holds a square search window,
// and every action moves its centre to one of four quadrant centres (or
// keeps it) while halving the half-length. Rewards come from the overlap
// between the search window and a small target window around the truth.

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfloc/common.hpp"
#include "sfloc/fingerprint.hpp"
#include "sfloc/io.hpp"

namespace sfloc::rl {

inline constexpr int kActionCount = 5;

/// Axis-aligned square [x - d, x + d] x [y - d, y + d].
struct Window {
    Point center;
    double half_length = 1.0;

    double x_min() const { return center.x - half_length; }
    double x_max() const { return center.x + half_length; }
    double y_min() const { return center.y - half_length; }
    double y_max() const { return center.y + half_length; }
    double area() const { return 4.0 * half_length * half_length; }
    bool contains(Point p) const { return p.x >= x_min() && p.x <= x_max() && p.y >= y_min() && p.y <= y_max(); }
    friend bool operator==(const Window&, const Window&) = default;
};

/// 1 up-left, 2 up-right, 3 down-left, 4 down-right, 5 keep centre; "up" is +y.
enum class Action : int { up_left = 1, up_right = 2, down_left = 3, down_right = 4, center = 5 };

inline Action action_from_code(int code) {
    if (code < 1 || code > kActionCount) throw std::invalid_argument("action code must be in 1..5, got " + std::to_string(code));
    return static_cast<Action>(code);
}

inline constexpr int code(Action a) { return static_cast<int>(a); }

inline Window apply_action(const Window& w, Action a, double shrink = 0.5) {
    const double h = w.half_length / 2.0;
    Point c = w.center;
    switch (a) {
        case Action::up_left: c = {c.x - h, c.y + h}; break;
        case Action::up_right: c = {c.x + h, c.y + h}; break;
        case Action::down_left: c = {c.x - h, c.y - h}; break;
        case Action::down_right: c = {c.x + h, c.y - h}; break;
        case Action::center: break;
        default: throw std::invalid_argument("invalid action");
    }
    return {c, shrink * w.half_length};
}

inline Window apply_action(const Window& w, int action_code, double shrink = 0.5) {
    return apply_action(w, action_from_code(action_code), shrink);
}

/// Overlap area normalized by the search-window area.
inline double iow(const Window& search, const Window& target) {
    if (!(search.half_length > 0.0) || !(target.half_length > 0.0))
        throw std::invalid_argument("windows need a positive half-length");
    const double ox = std::max(0.0, std::min(search.x_max(), target.x_max()) - std::max(search.x_min(), target.x_min()));
    const double oy = std::max(0.0, std::min(search.y_max(), target.y_max()) - std::max(search.y_min(), target.y_min()));
    return std::clamp(ox * oy / search.area(), 0.0, 1.0);
}

struct RewardParams {
    double overlap_threshold = 0.5;  ///< Delta
    double stop_reward = 10.0;       ///< xi
    double step_reward = 1.0;        ///< phi
};

/// +xi once the overlap reaches the threshold, +phi for a non-decreasing
/// overlap still below it, -xi otherwise.
inline double reward(double prev_iow, double next_iow, const RewardParams& p = {}) {
    if (next_iow >= p.overlap_threshold && next_iow <= 1.0) return p.stop_reward;
    if (next_iow >= prev_iow && next_iow < p.overlap_threshold) return p.step_reward;
    return -p.stop_reward;
}

/// Smallest square covering `bounds`, padded by the target half-length.
inline Window initial_window(const Bounds& bounds, double precision_m) {
    return {bounds.center(), std::max(bounds.width(), bounds.height()) / 2.0 + precision_m};
}

struct EnvConfig {
    double precision_m = 10.0;  ///< target window half-length
    std::size_t max_steps = 20; ///< 0 disables truncation
    std::size_t history_length = 10;
    double shrink = 0.5;
    RewardParams reward;
};

struct StepInfo {
    double iow = 0.0;
    std::size_t steps = 0;
    bool success = false;
    bool truncated = false;
    Point estimate;  ///< current search-window centre
};

struct StepOutcome {
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

struct TraceRow {
    std::size_t step = 0;
    int action = 0;  ///< 0 for the reset row
    Window window;
    double iow = 0.0;
    double reward = 0.0;
    bool done = false;
};

inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
    out << "step,action,x,y,d,iow,reward,done\n";
    for (const auto& r : rows)
        out << r.step << ',' << r.action << ',' << io::format_double(r.window.center.x) << ','
            << io::format_double(r.window.center.y) << ',' << io::format_double(r.window.half_length) << ','
            << io::format_double(r.iow) << ',' << io::format_double(r.reward) << ',' << (r.done ? 1 : 0) << '\n';
}

/// One episode at a time over a fixed radio-map geometry. The state vector is
/// [features | x, y, d | history]. Position is scaled by the initial window
/// extent and d by its half-length. The history holds one one-hot row per
/// remembered action, most recent first, with zero rows when empty.
class LocalizationEnv {
public:
    LocalizationEnv(Bounds bounds, std::size_t feature_dim, EnvConfig config = {})
        : bounds_(bounds), feature_dim_(feature_dim), config_(config) {
        if (!(config_.precision_m > 0.0)) throw std::invalid_argument("precision must be positive");
        if (!(config_.shrink > 0.0 && config_.shrink < 1.0)) throw std::invalid_argument("shrink factor must be in (0, 1)");
        origin_ = initial_window(bounds_, config_.precision_m);
    }

    std::size_t state_dim() const { return feature_dim_ + 3 + kActionCount * config_.history_length; }
    const EnvConfig& config() const { return config_; }
    const Window& initial() const { return origin_; }
    const Window& window() const { return window_; }
    const Window& target() const { return target_; }
    double current_iow() const { return iow_; }
    std::size_t steps() const { return steps_; }
    bool done() const { return done_; }
    const std::vector<TraceRow>& trace() const { return trace_; }

    std::vector<double> reset(std::span<const double> features, Point truth) {
        if (features.size() != feature_dim_) throw DimensionMismatch("feature vector has the wrong dimension");
        features_.assign(features.begin(), features.end());
        target_ = {truth, config_.precision_m};
        window_ = origin_;
        history_.clear();
        steps_ = 0;
        done_ = false;
        iow_ = iow(window_, target_);
        started_ = true;
        trace_.clear();
        trace_.push_back({0, 0, window_, iow_, 0.0, false});
        return encode();
    }

    StepOutcome step(Action a) {
        if (!started_) throw std::logic_error("step before reset");
        if (done_) throw std::logic_error("episode is done; call reset first");
        const double prev = iow_;
        window_ = apply_action(window_, a, config_.shrink);
        iow_ = iow(window_, target_);
        ++steps_;
        history_.push_front(a);
        if (history_.size() > config_.history_length) history_.pop_back();

        StepOutcome out;
        out.reward = reward(prev, iow_, config_.reward);
        out.info.iow = iow_;
        out.info.steps = steps_;
        out.info.success = iow_ >= config_.reward.overlap_threshold;
        out.info.truncated = !out.info.success && config_.max_steps > 0 && steps_ >= config_.max_steps;
        out.info.estimate = window_.center;
        done_ = out.info.success || out.info.truncated;
        out.done = done_;
        out.next_state = encode();
        trace_.push_back({steps_, code(a), window_, iow_, out.reward, done_});
        return out;
    }

    StepOutcome step(int action_code) { return step(action_from_code(action_code)); }

    std::vector<double> encode() const {
        std::vector<double> s;
        s.reserve(state_dim());
        s.insert(s.end(), features_.begin(), features_.end());
        const double span = 2.0 * origin_.half_length;
        s.push_back((window_.center.x - origin_.x_min()) / span);
        s.push_back((window_.center.y - origin_.y_min()) / span);
        s.push_back(window_.half_length / origin_.half_length);
        for (std::size_t slot = 0; slot < config_.history_length; ++slot)
            for (int a = 1; a <= kActionCount; ++a)
                s.push_back(slot < history_.size() && code(history_[slot]) == a ? 1.0 : 0.0);
        return s;
    }

private:
    Bounds bounds_;
    std::size_t feature_dim_;
    EnvConfig config_;
    Window origin_;
    Window window_;
    Window target_;
    std::vector<double> features_;
    std::deque<Action> history_;
    std::size_t steps_ = 0;
    bool done_ = false;
    bool started_ = false;
    double iow_ = 0.0;
    std::vector<TraceRow> trace_;
};

/// Quadrant descent with knowledge of the truth: picks the first corner
/// action whose child window still contains the target centre.
inline Action containment_oracle(const Window& w, Point target, double shrink = 0.5) {
    for (int a = 1; a <= 4; ++a)
        if (apply_action(w, a, shrink).contains(target)) return static_cast<Action>(a);
    return Action::center;
}

}  // namespace sfloc::rl
