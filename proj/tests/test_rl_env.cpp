// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <sstream>

#include "oracles.hpp"
#include "sfloc/rl_env.hpp"

using namespace sfloc;
using namespace sfloc::rl;
using Catch::Approx;

TEST_CASE("actions move to quadrant centres and halve the window") {
    const Window w{{100, 200}, 40};
    const Window ul = apply_action(w, Action::up_left);
    CHECK(ul.center == Point{80, 220});
    CHECK(ul.half_length == 20);
    CHECK(apply_action(w, Action::up_right).center == Point{120, 220});
    CHECK(apply_action(w, Action::down_left).center == Point{80, 180});
    CHECK(apply_action(w, Action::down_right).center == Point{120, 180});
    CHECK(apply_action(w, Action::center).center == Point{100, 200});
    CHECK(apply_action(w, 5).half_length == 20);
    CHECK_THROWS_AS(apply_action(w, 0), std::invalid_argument);
    CHECK_THROWS_AS(apply_action(w, 6), std::invalid_argument);
}

TEST_CASE("corner children tile the parent") {
    const Window w{{0, 0}, 8};
    double area = 0;
    for (int a = 1; a <= 4; ++a) {
        const auto c = apply_action(w, a);
        area += c.area();
        CHECK(c.x_min() >= w.x_min());
        CHECK(c.x_max() <= w.x_max());
    }
    CHECK(area == w.area());
}

TEST_CASE("IoW against the rectangle oracle") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(-100, 100), h(0.1, 60);
    for (int i = 0; i < 2000; ++i) {
        const Window a{{u(rng), u(rng)}, h(rng)}, b{{u(rng), u(rng)}, h(rng)};
        const double ref = oracle::rect_overlap(a.x_min(), a.x_max(), a.y_min(), a.y_max(), b.x_min(), b.x_max(),
                                                b.y_min(), b.y_max()) /
                           a.area();
        CHECK(iow(a, b) == Approx(ref).margin(1e-12));
    }
    CHECK(iow({{0, 0}, 5}, {{0, 0}, 10}) == 1.0);
    CHECK(iow({{0, 0}, 10}, {{0, 0}, 5}) == 0.25);
    CHECK(iow({{0, 0}, 1}, {{5, 5}, 1}) == 0.0);
    CHECK_THROWS_AS(iow({{0, 0}, 0}, {{0, 0}, 1}), std::invalid_argument);
}

TEST_CASE("reward cases") {
    CHECK(reward(0.1, 0.5) == 10);
    CHECK(reward(0.9, 0.6) == 10);
    CHECK(reward(0.1, 0.2) == 1);
    CHECK(reward(0.2, 0.2) == 1);
    CHECK(reward(0.3, 0.2) == -10);
    CHECK(reward(0.0, 0.0) == 1);
    RewardParams p{0.7, 5, 2};
    CHECK(reward(0.1, 0.6, p) == 2);
    CHECK(reward(0.1, 0.7, p) == 5);
}

TEST_CASE("initial window covers the bounds with padding") {
    const Bounds b{0, 1000, 0, 600};
    const auto w = initial_window(b, 10);
    CHECK(w.center == Point{500, 300});
    CHECK(w.half_length == 510);
    CHECK(w.contains({0, 0}));
    CHECK(w.contains({1000, 600}));
}

TEST_CASE("environment episode flow") {
    const Bounds b{0, 1000, 0, 1000};
    EnvConfig cfg;
    LocalizationEnv env(b, 3, cfg);
    CHECK(env.state_dim() == 3 + 3 + 50);
    const std::vector<double> f{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(env.step(Action::center), std::logic_error);
    CHECK_THROWS_AS(env.reset(std::vector<double>{1.0}, {1, 1}), DimensionMismatch);

    const auto s0 = env.reset(f, {123, 456});
    REQUIRE(s0.size() == env.state_dim());
    CHECK(s0[0] == 0.1);
    CHECK(s0[3] == Approx(0.5));
    CHECK(s0[4] == Approx(0.5));
    CHECK(s0[5] == 1.0);
    for (std::size_t i = 6; i < s0.size(); ++i) CHECK(s0[i] == 0.0);

    const auto o = env.step(Action::down_left);
    CHECK(o.next_state[5] == 0.5);
    CHECK(o.next_state[6 + 2] == 1.0);  // most recent action first, one-hot over 1..5
    CHECK(o.info.steps == 1);
    CHECK(o.info.estimate == env.window().center);
    const auto o2 = env.step(Action::up_right);
    CHECK(o2.next_state[6 + 1] == 1.0);
    CHECK(o2.next_state[11 + 2] == 1.0);
}

TEST_CASE("history keeps the most recent actions") {
    EnvConfig cfg;
    cfg.history_length = 2;
    cfg.max_steps = 0;
    cfg.precision_m = 1e-3;
    LocalizationEnv env({0, 100, 0, 100}, 0, cfg);
    env.reset(std::vector<double>{}, {50, 50});
    env.step(1);
    env.step(2);
    const auto o = env.step(3);
    REQUIRE(o.next_state.size() == 3 + 10);
    CHECK(o.next_state[3 + 2] == 1.0);
    CHECK(o.next_state[3 + 5 + 1] == 1.0);
}

TEST_CASE("termination by success and by truncation") {
    EnvConfig cfg;
    cfg.max_steps = 3;
    LocalizationEnv env({0, 1000, 0, 1000}, 0, cfg);
    env.reset(std::vector<double>{}, {500, 500});
    StepOutcome o;
    for (int i = 0; i < 3; ++i) o = env.step(Action::up_left);
    CHECK(o.done);
    CHECK(o.info.truncated);
    CHECK_FALSE(o.info.success);
    CHECK_THROWS_AS(env.step(Action::center), std::logic_error);

    env.reset(std::vector<double>{}, {500, 500});
    cfg.max_steps = 0;
    LocalizationEnv free(Bounds{0, 1000, 0, 1000}, 0, cfg);
    free.reset(std::vector<double>{}, {500, 500});
    do o = free.step(Action::center);
    while (!o.done);
    CHECK(o.info.success);
    CHECK(o.info.iow >= 0.5);
    CHECK(o.reward == 10);
    CHECK(free.window().half_length <= 10 * std::sqrt(2.0));
}

TEST_CASE("trace CSV") {
    LocalizationEnv env({0, 100, 0, 100}, 0, {});
    env.reset(std::vector<double>{}, {10, 10});
    env.step(Action::down_left);
    std::ostringstream o;
    write_trace_csv(o, env.trace());
    CHECK(o.str().rfind("step,action,x,y,d,iow,reward,done\n0,0,50,50,60,", 0) == 0);
    CHECK(env.trace().size() == 2);
}

TEST_CASE("containment oracle keeps the truth inside") {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0, 1000);
    for (int i = 0; i < 200; ++i) {
        const Point t{u(rng), u(rng)};
        Window w = initial_window({0, 1000, 0, 1000}, 10);
        for (int s = 0; s < 12; ++s) {
            w = apply_action(w, containment_oracle(w, t));
            REQUIRE(w.contains(t));
        }
    }
}
