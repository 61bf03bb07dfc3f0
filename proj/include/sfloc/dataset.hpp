// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fingerprint ingestion and preprocessing: canonical/Antwerp CSV parsing,
// planar projection, threshold imputation, min-max normalization and
// seeded train/validation/test splits.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <istream>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfloc/channel_model.hpp"
#include "sfloc/common.hpp"
#include "sfloc/fingerprint.hpp"
#include "sfloc/io.hpp"

namespace sfloc {

inline constexpr std::string_view kMissingToken = "MISSING";

// ---------------------------------------------------------------------------
// CSV

enum class CsvSchema {
    canonical,  ///< rssi_1..rssi_G,sf,(lat,lon | x_m,y_m); MISSING sentinel
    antwerp,    ///< published LoRaWAN Antwerp layout, see load_antwerp_csv
};

struct LoadResult {
    std::vector<Fingerprint> samples;
    std::size_t gateway_count = 0;
    bool planar = false;  ///< true for x_m,y_m files
};

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

inline SpreadingFactor parse_sf(std::string_view field, std::size_t line) {
    double v = 0.0;
    if (!io::parse_double(io::trim(field), v) || v != std::floor(v))
        throw ParseError(line, "invalid spreading factor '" + std::string(field) + "'");
    try {
        return SpreadingFactor{static_cast<int>(v)};
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, e.what());
    }
}

inline double parse_number(std::string_view field, std::size_t line, const char* what) {
    double v = 0.0;
    if (!io::parse_double(io::trim(field), v) || !std::isfinite(v))
        throw ParseError(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
    return v;
}

}  // namespace detail

/// Parses the canonical schema. The header fixes the gateway count G and
/// whether coordinates are geographic (lat,lon) or planar (x_m,y_m).
inline LoadResult load_canonical_csv(std::istream& in) {
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) return result;
    ++line_no;
    const auto header = io::split(line);
    if (header.size() < 4) throw ParseError(line_no, "header needs at least rssi_1,sf and two coordinate columns");
    const std::size_t n_cols = header.size();
    const std::size_t gw = n_cols - 3;
    const auto c1 = std::string(io::trim(header[n_cols - 2]));
    const auto c2 = std::string(io::trim(header[n_cols - 1]));
    if (c1 == "x_m" && c2 == "y_m")
        result.planar = true;
    else if (!(c1 == "lat" && c2 == "lon"))
        throw ParseError(line_no, "last two header columns must be lat,lon or x_m,y_m");
    if (io::trim(header[gw]) != "sf") throw ParseError(line_no, "expected 'sf' column before coordinates");
    for (std::size_t g = 0; g < gw; ++g)
        if (io::trim(header[g]) != "rssi_" + std::to_string(g + 1))
            throw ParseError(line_no, "expected column rssi_" + std::to_string(g + 1));
    result.gateway_count = gw;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = io::split(line);
        if (fields.size() != n_cols)
            throw ParseError(line_no, "expected " + std::to_string(n_cols) + " columns, found " +
                                          std::to_string(fields.size()));
        Fingerprint fp;
        fp.rssi_dbm.reserve(gw);
        for (std::size_t g = 0; g < gw; ++g) {
            const auto f = io::trim(fields[g]);
            if (f == kMissingToken)
                fp.rssi_dbm.emplace_back(std::nullopt);
            else
                fp.rssi_dbm.emplace_back(detail::parse_number(f, line_no, "RSSI value"));
        }
        fp.sf = detail::parse_sf(fields[gw], line_no);
        const double a = detail::parse_number(fields[gw + 1], line_no, "coordinate");
        const double b = detail::parse_number(fields[gw + 2], line_no, "coordinate");
        if (result.planar)
            fp.position_m = Point{a, b};
        else
            fp.position_geo = GeoPoint{a, b};
        result.samples.push_back(std::move(fp));
    }
    return result;
}

/// Adapter for the published Antwerp LoRaWAN dataset. Columns are matched by
/// header name, case-insensitively: "SF", "Latitude", "Longitude" are
/// required; "HDOP", "RX Time" and "Timestamp" are ignored; every other
/// column is a gateway. Readings at or below `missing_at_or_below_dbm`
/// (the dataset uses -200 for "not received") become MISSING.
inline LoadResult load_antwerp_csv(std::istream& in, double missing_at_or_below_dbm = -200.0) {
    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) return result;
    ++line_no;
    const auto header = io::split(line);
    std::optional<std::size_t> sf_col, lat_col, lon_col;
    std::vector<std::size_t> gw_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto name = detail::lower(io::trim(header[i]));
        if (name == "sf")
            sf_col = i;
        else if (name == "latitude" || name == "lat")
            lat_col = i;
        else if (name == "longitude" || name == "lon")
            lon_col = i;
        else if (name == "hdop" || name == "rx time" || name == "rx_time" || name == "timestamp" || name.empty())
            continue;
        else
            gw_cols.push_back(i);
    }
    if (!sf_col || !lat_col || !lon_col) throw ParseError(line_no, "Antwerp header lacks SF/Latitude/Longitude");
    if (gw_cols.empty()) throw ParseError(line_no, "Antwerp header has no gateway columns");
    result.gateway_count = gw_cols.size();

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = io::split(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " columns, found " +
                                          std::to_string(fields.size()));
        Fingerprint fp;
        fp.rssi_dbm.reserve(gw_cols.size());
        for (auto c : gw_cols) {
            const double v = detail::parse_number(fields[c], line_no, "RSSI value");
            if (v <= missing_at_or_below_dbm)
                fp.rssi_dbm.emplace_back(std::nullopt);
            else
                fp.rssi_dbm.emplace_back(v);
        }
        fp.sf = detail::parse_sf(fields[*sf_col], line_no);
        fp.position_geo = GeoPoint{detail::parse_number(fields[*lat_col], line_no, "latitude"),
                                   detail::parse_number(fields[*lon_col], line_no, "longitude")};
        result.samples.push_back(std::move(fp));
    }
    return result;
}

inline LoadResult load_csv(const std::filesystem::path& path, CsvSchema schema = CsvSchema::canonical) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return schema == CsvSchema::canonical ? load_canonical_csv(in) : load_antwerp_csv(in);
}

/// Writes the canonical schema. Planar positions are written when every
/// sample has one, geographic positions otherwise.
inline void write_canonical_csv(std::ostream& out, std::span<const Fingerprint> samples, std::size_t gateway_count) {
    const bool planar = std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.position_m; });
    for (std::size_t g = 0; g < gateway_count; ++g) out << "rssi_" << g + 1 << ',';
    out << (planar ? "sf,x_m,y_m\n" : "sf,lat,lon\n");
    for (const auto& s : samples) {
        if (s.rssi_dbm.size() != gateway_count) throw DimensionMismatch("inconsistent gateway count");
        for (const auto& v : s.rssi_dbm) out << (v ? io::format_double(*v) : std::string(kMissingToken)) << ',';
        out << s.sf.value() << ',';
        if (planar) {
            out << io::format_double(s.position_m->x) << ',' << io::format_double(s.position_m->y) << '\n';
        } else {
            if (!s.position_geo) throw std::invalid_argument("sample has neither planar nor geographic position");
            out << io::format_double(s.position_geo->lat_deg) << ',' << io::format_double(s.position_geo->lon_deg)
                << '\n';
        }
    }
}

inline void write_canonical_csv(const std::filesystem::path& path, std::span<const Fingerprint> samples,
                                std::size_t gateway_count) {
    io::StagedFile f(path);
    write_canonical_csv(f.stream(), samples, gateway_count);
    f.commit();
}

// ---------------------------------------------------------------------------
// Projection

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Equirectangular projection about a fixed origin.
class Projection {
public:
    explicit Projection(GeoPoint origin) : origin_(origin), cos_lat_(std::cos(deg2rad(origin.lat_deg))) {}

    GeoPoint origin() const { return origin_; }

    Point project(GeoPoint g) const {
        return {kEarthRadiusM * deg2rad(g.lon_deg - origin_.lon_deg) * cos_lat_,
                kEarthRadiusM * deg2rad(g.lat_deg - origin_.lat_deg)};
    }
    GeoPoint unproject(Point p) const {
        return {origin_.lat_deg + rad2deg(p.y / kEarthRadiusM),
                origin_.lon_deg + rad2deg(p.x / (kEarthRadiusM * cos_lat_))};
    }

private:
    static double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
    static double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

    GeoPoint origin_;
    double cos_lat_;
};

inline GeoPoint geo_centroid(std::span<const Fingerprint> samples) {
    double lat = 0.0, lon = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        if (!s.position_geo) continue;
        lat += s.position_geo->lat_deg;
        lon += s.position_geo->lon_deg;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no geographic positions to project");
    return {lat / static_cast<double>(n), lon / static_cast<double>(n)};
}

/// Fills position_m for every sample; geographic positions are kept.
inline Projection project_to_plane(std::vector<Fingerprint>& samples, std::optional<GeoPoint> origin = {}) {
    const Projection proj(origin ? *origin : geo_centroid(samples));
    for (auto& s : samples) {
        if (!s.position_geo) throw std::invalid_argument("sample without geographic position");
        s.position_m = proj.project(*s.position_geo);
    }
    return proj;
}

inline double haversine_m(GeoPoint a, GeoPoint b) {
    constexpr double k = std::numbers::pi / 180.0;
    const double dlat = (b.lat_deg - a.lat_deg) * k;
    const double dlon = (b.lon_deg - a.lon_deg) * k;
    const double h = std::pow(std::sin(dlat / 2), 2) +
                     std::cos(a.lat_deg * k) * std::cos(b.lat_deg * k) * std::pow(std::sin(dlon / 2), 2);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// ---------------------------------------------------------------------------
// Imputation

inline void impute_dataset(std::vector<Fingerprint>& samples, const SensitivityParams& sens) {
    for (auto& s : samples) {
        const double floor = sensitivity(sens, s.sf);
        for (auto& v : s.rssi_dbm)
            if (!v) v = floor;
    }
}

inline std::size_t count_missing(std::span<const Fingerprint> samples) {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.missing_count();
    return n;
}

// ---------------------------------------------------------------------------
// Radio map, normalization, features

struct RadioMap {
    std::vector<Fingerprint> samples;
    std::size_t gateway_count = 0;
    Bounds bounds;

    static RadioMap from(std::vector<Fingerprint> samples, std::size_t gateway_count) {
        RadioMap m;
        m.bounds = bounds_of(samples);
        m.samples = std::move(samples);
        m.gateway_count = gateway_count;
        return m;
    }
};

enum class FeatureMode {
    without_sf,     ///< G inputs
    with_sf,        ///< G + 1 inputs, SF as (sf - 7) / 5
    with_sf_onehot  ///< G + 6 inputs
};

inline std::size_t feature_dim(std::size_t gateway_count, FeatureMode mode) {
    switch (mode) {
        case FeatureMode::without_sf: return gateway_count;
        case FeatureMode::with_sf: return gateway_count + 1;
        case FeatureMode::with_sf_onehot: return gateway_count + SpreadingFactor::kCount;
    }
    return gateway_count;
}

/// Per-gateway min-max scaling of (imputed) RSSI and per-axis scaling of
/// positions, both fitted on the training portion only.
class Normalizer {
public:
    Normalizer() = default;

    static Normalizer fit(std::span<const Fingerprint> train, std::span<const std::size_t> idx) {
        if (idx.empty()) throw std::invalid_argument("cannot fit a normalizer on an empty set");
        Normalizer n;
        const std::size_t g = train[idx.front()].rssi_dbm.size();
        n.rssi_min_.assign(g, std::numeric_limits<double>::infinity());
        n.rssi_max_.assign(g, -std::numeric_limits<double>::infinity());
        std::vector<Point> pts;
        pts.reserve(idx.size());
        for (auto i : idx) {
            const auto& s = train[i];
            if (s.rssi_dbm.size() != g) throw DimensionMismatch("inconsistent gateway count");
            for (std::size_t k = 0; k < g; ++k) {
                if (!s.rssi_dbm[k]) throw std::invalid_argument("normalizer requires imputed samples");
                n.rssi_min_[k] = std::min(n.rssi_min_[k], *s.rssi_dbm[k]);
                n.rssi_max_[k] = std::max(n.rssi_max_[k], *s.rssi_dbm[k]);
            }
            pts.push_back(s.planar());
        }
        n.target_bounds_ = bounds_of(pts);
        for (std::size_t k = 0; k < g; ++k)
            if (n.rssi_max_[k] == n.rssi_min_[k]) ++n.degenerate_;
        if (n.degenerate_ > 0)
            std::clog << "sfloc: " << n.degenerate_ << " constant RSSI feature(s) mapped to 0.5\n";
        return n;
    }

    static Normalizer fit(std::span<const Fingerprint> train) {
        std::vector<std::size_t> idx(train.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return fit(train, idx);
    }

    static Normalizer from_parameters(std::vector<double> rssi_min, std::vector<double> rssi_max, Bounds targets) {
        if (rssi_min.size() != rssi_max.size()) throw DimensionMismatch("normalizer min/max length mismatch");
        Normalizer n;
        n.rssi_min_ = std::move(rssi_min);
        n.rssi_max_ = std::move(rssi_max);
        n.target_bounds_ = targets;
        for (std::size_t k = 0; k < n.rssi_min_.size(); ++k)
            if (n.rssi_max_[k] == n.rssi_min_[k]) ++n.degenerate_;
        return n;
    }

    std::size_t gateway_count() const { return rssi_min_.size(); }
    const std::vector<double>& rssi_min() const { return rssi_min_; }
    const std::vector<double>& rssi_max() const { return rssi_max_; }
    const Bounds& target_bounds() const { return target_bounds_; }
    std::size_t degenerate_features() const { return degenerate_; }

    double normalize_rssi(std::size_t k, double v) const {
        const double span = rssi_max_[k] - rssi_min_[k];
        return span == 0.0 ? 0.5 : (v - rssi_min_[k]) / span;
    }
    double unnormalize_rssi(std::size_t k, double u) const {
        return rssi_min_[k] + u * (rssi_max_[k] - rssi_min_[k]);
    }

    static double normalize_sf(SpreadingFactor sf) {
        return static_cast<double>(sf.value() - SpreadingFactor::kMin) /
               static_cast<double>(SpreadingFactor::kMax - SpreadingFactor::kMin);
    }

    Point normalize_position(Point p) const {
        return {axis(p.x, target_bounds_.x_min, target_bounds_.x_max),
                axis(p.y, target_bounds_.y_min, target_bounds_.y_max)};
    }
    Point unnormalize_position(Point u) const {
        return {unaxis(u.x, target_bounds_.x_min, target_bounds_.x_max),
                unaxis(u.y, target_bounds_.y_min, target_bounds_.y_max)};
    }

    /// Feature vector of an imputed sample, written into `out`.
    void features(const Fingerprint& s, FeatureMode mode, std::span<double> out) const {
        const std::size_t g = gateway_count();
        if (s.rssi_dbm.size() != g) throw DimensionMismatch("sample gateway count differs from the normalizer");
        if (out.size() != feature_dim(g, mode)) throw DimensionMismatch("feature buffer has the wrong size");
        for (std::size_t k = 0; k < g; ++k) {
            if (!s.rssi_dbm[k]) throw std::invalid_argument("features require imputed samples");
            out[k] = normalize_rssi(k, *s.rssi_dbm[k]);
        }
        if (mode == FeatureMode::with_sf) {
            out[g] = normalize_sf(s.sf);
        } else if (mode == FeatureMode::with_sf_onehot) {
            for (std::size_t j = 0; j < SpreadingFactor::kCount; ++j) out[g + j] = (j == s.sf.index()) ? 1.0 : 0.0;
        }
    }

    std::vector<double> features(const Fingerprint& s, FeatureMode mode) const {
        std::vector<double> out(feature_dim(gateway_count(), mode));
        features(s, mode, out);
        return out;
    }

private:
    static double axis(double v, double lo, double hi) { return hi == lo ? 0.5 : (v - lo) / (hi - lo); }
    static double unaxis(double u, double lo, double hi) { return hi == lo ? lo : lo + u * (hi - lo); }

    std::vector<double> rssi_min_;
    std::vector<double> rssi_max_;
    Bounds target_bounds_;
    std::size_t degenerate_ = 0;
};

/// Column-per-sample feature matrix plus ground truth, ready for learners.
struct FeatureTable {
    Eigen::MatrixXd features;     ///< dim x n
    Eigen::MatrixXd targets;      ///< 2 x n, normalized positions
    std::vector<Point> positions; ///< metres

    std::size_t size() const { return positions.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.rows()); }
};

inline FeatureTable make_table(std::span<const Fingerprint> samples, std::span<const std::size_t> idx,
                               const Normalizer& norm, FeatureMode mode) {
    FeatureTable t;
    const auto dim = static_cast<Eigen::Index>(feature_dim(norm.gateway_count(), mode));
    const auto n = static_cast<Eigen::Index>(idx.size());
    t.features.resize(dim, n);
    t.targets.resize(2, n);
    t.positions.reserve(idx.size());
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto& s = samples[idx[static_cast<std::size_t>(c)]];
        norm.features(s, mode, std::span<double>(t.features.col(c).data(), static_cast<std::size_t>(dim)));
        const Point p = s.planar();
        const Point u = norm.normalize_position(p);
        t.targets(0, c) = u.x;
        t.targets(1, c) = u.y;
        t.positions.push_back(p);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Test share follows the Antwerp 100,000 / 23,528 partition; validation is
/// 10% of the remaining training portion.
inline SplitSizes default_split_sizes(std::size_t n) {
    constexpr double kTestShare = 23'528.0 / 123'528.0;
    SplitSizes s;
    s.test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * kTestShare));
    const std::size_t trainval = n - s.test;
    s.validation = static_cast<std::size_t>(std::llround(static_cast<double>(trainval) * 0.1));
    s.train = trainval - s.validation;
    return s;
}

/// Seeded Fisher-Yates shuffle, then contiguous train | validation | test.
inline DatasetSplit split(std::size_t n, SplitSizes sizes, std::uint64_t seed) {
    if (sizes.train + sizes.validation + sizes.test > n)
        throw std::invalid_argument("split sizes exceed the sample count");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, 0x5b1e);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> u(0, i - 1);
        std::swap(order[i - 1], order[u(rng)]);
    }
    DatasetSplit out;
    auto it = order.begin();
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
    it += static_cast<std::ptrdiff_t>(sizes.train);
    out.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes.validation));
    it += static_cast<std::ptrdiff_t>(sizes.validation);
    out.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
    return out;
}

}  // namespace sfloc
