// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfloc/channel_model.hpp"
#include "sfloc/common.hpp"

namespace sfloc {

struct GeoPoint {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// One observation: per-gateway RSSI (nullopt = MISSING), the SF used for
/// the transmission and the ground-truth position.
struct Fingerprint {
    std::vector<std::optional<double>> rssi_dbm;
    SpreadingFactor sf{SpreadingFactor::kMin};
    std::optional<GeoPoint> position_geo;
    std::optional<Point> position_m;

    std::size_t missing_count() const {
        return static_cast<std::size_t>(std::count(rssi_dbm.begin(), rssi_dbm.end(), std::nullopt));
    }
    Point planar() const {
        if (!position_m) throw std::logic_error("fingerprint has no planar position; project it first");
        return *position_m;
    }
};

struct Bounds {
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double diagonal() const { return std::hypot(width(), height()); }
    Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
    bool contains(Point p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
    friend bool operator==(const Bounds&, const Bounds&) = default;
};

inline Bounds bounds_of(std::span<const Point> pts) {
    if (pts.empty()) throw std::invalid_argument("bounds of an empty point set");
    Bounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : pts) {
        b.x_min = std::min(b.x_min, p.x);
        b.x_max = std::max(b.x_max, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.y_max = std::max(b.y_max, p.y);
    }
    return b;
}

inline Bounds bounds_of(std::span<const Fingerprint> samples) {
    std::vector<Point> pts;
    pts.reserve(samples.size());
    for (const auto& s : samples) pts.push_back(s.planar());
    return bounds_of(pts);
}

}  // namespace sfloc
