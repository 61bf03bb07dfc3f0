// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic LoRa deployments and SF-aware fingerprint generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sfloc/channel_model.hpp"
#include "sfloc/common.hpp"
#include "sfloc/fingerprint.hpp"

namespace sfloc {

struct NetworkLayout {
    double length_m = 0.0;
    double width_m = 0.0;
    std::vector<Point> gateways;

    void validate() const {
        if (!(length_m > 0.0) || !(width_m > 0.0)) throw std::invalid_argument("area dimensions must be positive");
        if (gateways.empty()) throw std::invalid_argument("layout needs at least one gateway");
        for (const auto& g : gateways)
            if (g.x < 0.0 || g.x > length_m || g.y < 0.0 || g.y > width_m)
                throw std::invalid_argument("gateway outside the area");
    }

    Bounds area() const { return {0.0, length_m, 0.0, width_m}; }
    double diagonal() const { return std::hypot(length_m, width_m); }

    double nearest_gateway_distance(Point p) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : gateways) best = std::min(best, distance(p, g));
        return best;
    }
};

enum class PlacementScheme { grid, uniform_random };

/// Grid: the first M cells of a row-major ceil(sqrt(M)) column grid, each
/// gateway at its cell centroid. Random: uniform over the area.
inline NetworkLayout place_gateways(double length_m, double width_m, int count, PlacementScheme scheme,
                                    std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("gateway count must be at least 1");
    if (!(length_m > 0.0) || !(width_m > 0.0)) throw std::invalid_argument("area dimensions must be positive");
    NetworkLayout layout{length_m, width_m, {}};
    layout.gateways.reserve(static_cast<std::size_t>(count));
    if (scheme == PlacementScheme::grid) {
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
        const int rows = (count + cols - 1) / cols;
        for (int i = 0; i < count; ++i) {
            const int r = i / cols;
            const int c = i % cols;
            layout.gateways.push_back({(c + 0.5) * length_m / cols, (r + 0.5) * width_m / rows});
        }
    } else {
        Rng rng = make_rng(seed, 0x6a7e);
        std::uniform_real_distribution<double> ux(0.0, length_m), uy(0.0, width_m);
        for (int i = 0; i < count; ++i) {
            const double x = ux(rng);
            const double y = uy(rng);
            layout.gateways.push_back({x, y});
        }
    }
    return layout;
}

struct FixedSf {
    SpreadingFactor sf{SpreadingFactor::kMin};
};

/// SF7 below thresholds[0], SF8 below thresholds[1], ..., SF12 at or beyond thresholds[4],
/// keyed on the distance to the nearest gateway.
struct DistanceBinnedSf {
    std::array<double, 5> thresholds_m{};

    void validate() const {
        for (std::size_t i = 1; i < thresholds_m.size(); ++i)
            if (!(thresholds_m[i] > thresholds_m[i - 1]))
                throw std::invalid_argument("distance thresholds must be strictly ascending");
    }
};

struct UniformRandomSf {};

using SfPolicy = std::variant<FixedSf, DistanceBinnedSf, UniformRandomSf>;

/// Default ADR stand-in: k * diagonal / (12 sqrt(M)) for k = 1..5. For a
/// grid layout diagonal / (2 sqrt(M)) is the largest nearest-gateway
/// distance, so the bins spread over all six SFs.
inline DistanceBinnedSf default_distance_bins(const NetworkLayout& layout) {
    const double step = layout.diagonal() / (12.0 * std::sqrt(static_cast<double>(layout.gateways.size())));
    DistanceBinnedSf p;
    for (std::size_t k = 0; k < 5; ++k) p.thresholds_m[k] = static_cast<double>(k + 1) * step;
    return p;
}

inline SpreadingFactor assign_sf(const SfPolicy& policy, Point node, const NetworkLayout& layout, Rng& rng) {
    struct Visitor {
        Point node;
        const NetworkLayout& layout;
        Rng& rng;
        SpreadingFactor operator()(const FixedSf& p) const { return p.sf; }
        SpreadingFactor operator()(const DistanceBinnedSf& p) const {
            const double d = layout.nearest_gateway_distance(node);
            int sf = SpreadingFactor::kMin;
            for (double t : p.thresholds_m)
                if (d >= t) ++sf;
            return SpreadingFactor{sf};
        }
        SpreadingFactor operator()(const UniformRandomSf&) const {
            std::uniform_int_distribution<int> u(SpreadingFactor::kMin, SpreadingFactor::kMax);
            return SpreadingFactor{u(rng)};
        }
    };
    return std::visit(Visitor{node, layout, rng}, policy);
}

struct SyntheticDatasetSpec {
    NetworkLayout layout;
    LinkBudgetParams link;
    SensitivityParams sens;
    SfPolicy sf_policy = UniformRandomSf{};
    std::size_t n_samples = 0;
    std::uint64_t rng_seed = 0;

    void validate() const {
        layout.validate();
        link.validate();
        sens.validate();
        if (auto* b = std::get_if<DistanceBinnedSf>(&sf_policy)) b->validate();
        if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    }
};

/// Draws one fingerprint. Each sample owns its RNG stream, keyed on (seed,
/// index), so any subset of samples can be regenerated independently.
inline Fingerprint generate_sample(const SyntheticDatasetSpec& spec, std::size_t index) {
    Rng rng = make_rng(mix_seed(spec.rng_seed, 0x5a3b1e), index);
    std::uniform_real_distribution<double> ux(0.0, spec.layout.length_m), uy(0.0, spec.layout.width_m);
    std::normal_distribution<double> shadow(0.0, 1.0);

    Fingerprint fp;
    const double x = ux(rng);
    const double y = uy(rng);
    const Point node{x, y};
    fp.position_m = node;
    fp.sf = assign_sf(spec.sf_policy, node, spec.layout, rng);
    fp.rssi_dbm.reserve(spec.layout.gateways.size());
    for (const auto& gw : spec.layout.gateways) {
        // The far-field model is clamped at the reference distance.
        const double d = std::max(distance(node, gw), spec.link.ref_distance_m);
        const double x_sigma = spec.link.shadowing_sigma_db * shadow(rng);
        const double rssi = rssi_at(spec.link, d, x_sigma);
        fp.rssi_dbm.push_back(gate_recording(rssi, fp.sf, spec.sens).value_dbm);
    }
    return fp;
}

/// MISSING entries are left in place; imputation is a dataset-stage step.
inline std::vector<Fingerprint> generate_dataset(const SyntheticDatasetSpec& spec) {
    spec.validate();
    std::vector<Fingerprint> out;
    out.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) out.push_back(generate_sample(spec, i));
    return out;
}

}  // namespace sfloc
