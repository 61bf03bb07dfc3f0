// SPDX-License-Identifier: Apache-2.0
#pragma once

// LoRa link model: log-distance RSSI, SF-dependent receiver sensitivity,
// the sensitivity gate applied at recording time and threshold imputation.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfloc {

class SpreadingFactor {
public:
    static constexpr int kMin = 7;
    static constexpr int kMax = 12;
    static constexpr int kCount = kMax - kMin + 1;

    constexpr explicit SpreadingFactor(int value) : value_(value) {
        if (value < kMin || value > kMax)
            throw std::invalid_argument("spreading factor must be in 7..12, got " + std::to_string(value));
    }

    constexpr int value() const noexcept { return value_; }
    /// 0 for SF7 ... 5 for SF12.
    constexpr std::size_t index() const noexcept { return static_cast<std::size_t>(value_ - kMin); }

    friend constexpr auto operator<=>(SpreadingFactor, SpreadingFactor) = default;

private:
    int value_;
};

inline constexpr double kSpeedOfLight = 299'792'458.0;

struct LinkBudgetParams {
    double tx_power_dbm = 14.0;
    double ref_distance_m = 1.0;
    double frequency_hz = 868e6;
    double path_loss_exponent = 2.0;
    double shadowing_sigma_db = 4.0;

    void validate() const {
        if (!(ref_distance_m > 0.0)) throw std::invalid_argument("reference distance must be positive");
        if (!(frequency_hz > 0.0)) throw std::invalid_argument("frequency must be positive");
        if (!(path_loss_exponent > 0.0)) throw std::invalid_argument("path loss exponent must be positive");
        if (!(shadowing_sigma_db >= 0.0)) throw std::invalid_argument("shadowing sigma must be non-negative");
    }
};

struct SensitivityParams {
    double bandwidth_hz = 125e3;
    double noise_figure_db = 6.0;
    /// Demodulation SNR threshold in dB, indexed by SpreadingFactor::index().
    std::array<double, SpreadingFactor::kCount> snr_threshold_db{-7.5, -10.0, -12.5, -15.0, -17.5, -20.0};

    void validate() const {
        if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("bandwidth must be positive");
        for (std::size_t i = 1; i < snr_threshold_db.size(); ++i)
            if (!(snr_threshold_db[i] < snr_threshold_db[i - 1]))
                throw std::invalid_argument("SNR thresholds must be strictly decreasing in SF");
    }
};

/// One per-gateway reading; an empty value is the MISSING marker.
struct RssiObservation {
    std::optional<double> value_dbm;
    SpreadingFactor sf{SpreadingFactor::kMin};

    bool missing() const noexcept { return !value_dbm.has_value(); }
};

/// Received power in dBm at `distance_m` under the log-distance model.
/// `shadowing_db` is the caller's draw of the shadowing term.
inline double rssi_at(const LinkBudgetParams& p, double distance_m, double shadowing_db) {
    if (!(distance_m > 0.0)) throw std::domain_error("distance must be positive");
    const double loss = 20.0 * std::log10(4.0 * std::numbers::pi * p.ref_distance_m / kSpeedOfLight) +
                        20.0 * std::log10(p.frequency_hz) +
                        10.0 * p.path_loss_exponent * std::log10(distance_m / p.ref_distance_m) + shadowing_db;
    return p.tx_power_dbm - loss;
}

/// Receiver sensitivity in dBm: thermal floor + NF + SF-specific SNR threshold.
inline double sensitivity(const SensitivityParams& p, SpreadingFactor sf) {
    return -174.0 + 10.0 * std::log10(p.bandwidth_hz) + p.noise_figure_db + p.snr_threshold_db[sf.index()];
}

/// A reading is recorded only when strictly above the sensitivity.
inline RssiObservation gate_recording(double rssi_dbm, SpreadingFactor sf, const SensitivityParams& p) {
    if (rssi_dbm > sensitivity(p, sf)) return {rssi_dbm, sf};
    return {std::nullopt, sf};
}

inline double impute_missing(const RssiObservation& obs, const SensitivityParams& p) {
    return obs.value_dbm ? *obs.value_dbm : sensitivity(p, obs.sf);
}

/// Imputes a whole per-gateway vector recorded under a single SF.
inline std::vector<double> impute_missing(std::span<const std::optional<double>> rssi, SpreadingFactor sf,
                                          const SensitivityParams& p) {
    const double floor = sensitivity(p, sf);
    std::vector<double> out;
    out.reserve(rssi.size());
    for (const auto& v : rssi) out.push_back(v ? *v : floor);
    return out;
}

}  // namespace sfloc
