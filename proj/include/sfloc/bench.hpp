// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment harness: config handling, data preparation, benchmark runs and
// plot-ready output files.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfloc/baselines.hpp"
#include "sfloc/channel_model.hpp"
#include "sfloc/checkpoint.hpp"
#include "sfloc/dataset.hpp"
#include "sfloc/dqn.hpp"
#include "sfloc/io.hpp"
#include "sfloc/network_sim.hpp"
#include "sfloc/rl_env.hpp"

namespace sfloc::bench {

namespace fs = std::filesystem;

inline const std::vector<std::string>& all_models() {
    static const std::vector<std::string> m{"knn", "ridge", "tree", "dnn", "dqn"};
    return m;
}

struct SyntheticSource {
    int gateways = 9;
    PlacementScheme placement = PlacementScheme::grid;
    double length_m = 1000.0;
    double width_m = 1000.0;
    std::size_t samples = 6000;
    LinkBudgetParams link{14.0, 1.0, 868e6, 2.0, 4.0};
    SensitivityParams sens;
    /// "binned" (default thresholds), "random" or "fixed:<sf>"
    std::string sf_policy = "binned";
};

struct ExperimentConfig {
    enum class Source { synthetic, csv };
    Source source = Source::synthetic;
    SyntheticSource synthetic;
    fs::path csv_path;
    CsvSchema csv_schema = CsvSchema::canonical;
    SensitivityParams imputation;  ///< used to impute MISSING entries of loaded data

    FeatureMode features = FeatureMode::with_sf;
    std::vector<std::string> models = all_models();
    double precision_m = 10.0;
    std::uint64_t seed = 1;
    fs::path out_dir = "run";

    std::size_t train_size = 0;  ///< 0 means the default split
    std::size_t val_size = 0;
    std::size_t test_size = 0;

    DnnConfig dnn;
    std::size_t knn_k = 11;
    double ridge_lambda = 1.0;
    int tree_depth = 10;
    dqn::DqnConfig dqn;
    rl::EnvConfig env;

    std::size_t rolling_window = 100;
    bool svg = false;

    void validate() const {
        if (source == Source::csv && csv_path.empty()) throw std::invalid_argument("csv source needs csv_path");
        if (!(precision_m > 0.0)) throw std::invalid_argument("precision must be positive");
        if (models.empty()) throw std::invalid_argument("no models selected");
        for (const auto& m : models)
            if (std::find(all_models().begin(), all_models().end(), m) == all_models().end())
                throw std::invalid_argument("unknown model '" + m + "'");
        if (rolling_window == 0) throw std::invalid_argument("rolling window must be positive");
    }
};

// ---------------------------------------------------------------------------
// Config files: "key = value" lines, '#' comments, blank lines ignored.

inline std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = io::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
        const auto key = std::string(io::trim(t.substr(0, eq)));
        const auto value = std::string(io::trim(t.substr(eq + 1)));
        if (key.empty()) throw ParseError(line_no, "empty key");
        kv[key] = value;
    }
    return kv;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    if (!io::parse_double(v, d)) throw std::invalid_argument("config key '" + key + "': not a number: " + v);
    return d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0.0 || d != std::floor(d)) throw std::invalid_argument("config key '" + key + "': expected a non-negative integer");
    return static_cast<std::uint64_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key '" + key + "': expected a boolean");
}

inline std::vector<std::string> to_list(const std::string& v) {
    std::vector<std::string> out;
    for (auto part : io::split(v)) {
        const auto t = io::trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : to_list(v)) out.push_back(static_cast<std::size_t>(to_uint(key, s)));
    return out;
}

}  // namespace detail

inline FeatureMode parse_feature_mode(const std::string& v) {
    if (v == "with_sf") return FeatureMode::with_sf;
    if (v == "without_sf") return FeatureMode::without_sf;
    if (v == "with_sf_onehot") return FeatureMode::with_sf_onehot;
    throw std::invalid_argument("features must be with_sf, without_sf or with_sf_onehot");
}

inline std::string to_string(FeatureMode m) {
    switch (m) {
        case FeatureMode::with_sf: return "with_sf";
        case FeatureMode::without_sf: return "without_sf";
        case FeatureMode::with_sf_onehot: return "with_sf_onehot";
    }
    return "with_sf";
}

inline std::vector<std::string> parse_models(const std::string& v) {
    auto list = detail::to_list(v);
    if (list.size() == 1 && list.front() == "all") return all_models();
    return list;
}

/// Applies one config key. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v) {
    using detail::to_double;
    using detail::to_uint;
    auto& syn = c.synthetic;
    if (key == "source") {
        if (v == "synthetic") c.source = ExperimentConfig::Source::synthetic;
        else if (v == "csv") c.source = ExperimentConfig::Source::csv;
        else throw std::invalid_argument("source must be synthetic or csv");
    } else if (key == "csv_path") { c.csv_path = v; c.source = ExperimentConfig::Source::csv; }
    else if (key == "csv_schema") {
        if (v == "canonical") c.csv_schema = CsvSchema::canonical;
        else if (v == "antwerp") c.csv_schema = CsvSchema::antwerp;
        else throw std::invalid_argument("csv_schema must be canonical or antwerp");
    }
    else if (key == "gateways") syn.gateways = static_cast<int>(to_uint(key, v));
    else if (key == "placement") {
        if (v == "grid") syn.placement = PlacementScheme::grid;
        else if (v == "random") syn.placement = PlacementScheme::uniform_random;
        else throw std::invalid_argument("placement must be grid or random");
    }
    else if (key == "length_m") syn.length_m = to_double(key, v);
    else if (key == "width_m") syn.width_m = to_double(key, v);
    else if (key == "samples") syn.samples = to_uint(key, v);
    else if (key == "tx_power_dbm") syn.link.tx_power_dbm = to_double(key, v);
    else if (key == "frequency_hz") syn.link.frequency_hz = to_double(key, v);
    else if (key == "path_loss_exponent") syn.link.path_loss_exponent = to_double(key, v);
    else if (key == "shadowing_sigma_db") syn.link.shadowing_sigma_db = to_double(key, v);
    else if (key == "bandwidth_hz") { syn.sens.bandwidth_hz = to_double(key, v); c.imputation.bandwidth_hz = syn.sens.bandwidth_hz; }
    else if (key == "noise_figure_db") { syn.sens.noise_figure_db = to_double(key, v); c.imputation.noise_figure_db = syn.sens.noise_figure_db; }
    else if (key == "sf_policy") syn.sf_policy = v;
    else if (key == "features") c.features = parse_feature_mode(v);
    else if (key == "models") c.models = parse_models(v);
    else if (key == "precision_m") { c.precision_m = to_double(key, v); }
    else if (key == "seed") c.seed = to_uint(key, v);
    else if (key == "out_dir") c.out_dir = v;
    else if (key == "train_size") c.train_size = to_uint(key, v);
    else if (key == "val_size") c.val_size = to_uint(key, v);
    else if (key == "test_size") c.test_size = to_uint(key, v);
    else if (key == "dnn_epochs") c.dnn.epochs = to_uint(key, v);
    else if (key == "dnn_batch") c.dnn.batch_size = to_uint(key, v);
    else if (key == "dnn_lr") c.dnn.adam.learning_rate = to_double(key, v);
    else if (key == "dnn_beta1") c.dnn.adam.beta1 = to_double(key, v);
    else if (key == "dnn_beta2") c.dnn.adam.beta2 = to_double(key, v);
    else if (key == "dnn_hidden") c.dnn.hidden_units = detail::to_sizes(key, v);
    else if (key == "dnn_patience") c.dnn.patience = to_uint(key, v);
    else if (key == "knn_k") c.knn_k = to_uint(key, v);
    else if (key == "ridge_lambda") c.ridge_lambda = to_double(key, v);
    else if (key == "tree_depth") c.tree_depth = static_cast<int>(to_uint(key, v));
    else if (key == "dqn_episodes") c.dqn.episodes = to_uint(key, v);
    else if (key == "dqn_batch") c.dqn.batch_size = to_uint(key, v);
    else if (key == "dqn_lr") c.dqn.adam.learning_rate = to_double(key, v);
    else if (key == "dqn_gamma") c.dqn.gamma = to_double(key, v);
    else if (key == "dqn_hidden") c.dqn.hidden = detail::to_sizes(key, v);
    else if (key == "dqn_replay") c.dqn.replay_capacity = to_uint(key, v);
    else if (key == "dqn_warmup") c.dqn.warmup = to_uint(key, v);
    else if (key == "dqn_sync") c.dqn.target_sync_interval = to_uint(key, v);
    else if (key == "dqn_epsilon_min") c.dqn.epsilon_min = to_double(key, v);
    else if (key == "dqn_epsilon_shape") {
        if (v == "exponential") c.dqn.epsilon_shape = dqn::DecayShape::exponential;
        else if (v == "linear") c.dqn.epsilon_shape = dqn::DecayShape::linear;
        else throw std::invalid_argument("dqn_epsilon_shape must be exponential or linear");
    }
    else if (key == "max_steps") c.env.max_steps = to_uint(key, v);
    else if (key == "history_length") c.env.history_length = to_uint(key, v);
    else if (key == "rolling_window") c.rolling_window = to_uint(key, v);
    else if (key == "svg") c.svg = detail::to_bool(key, v);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

inline void apply_config(ExperimentConfig& c, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) apply_setting(c, k, v);
}

/// Canonical key = value dump, used for the run manifest.
inline std::string describe(const ExperimentConfig& c) {
    std::ostringstream o;
    const auto& s = c.synthetic;
    o << "source = " << (c.source == ExperimentConfig::Source::csv ? "csv" : "synthetic") << '\n';
    if (c.source == ExperimentConfig::Source::csv) {
        o << "csv_path = " << c.csv_path.string() << '\n';
        o << "csv_schema = " << (c.csv_schema == CsvSchema::antwerp ? "antwerp" : "canonical") << '\n';
    } else {
        o << "gateways = " << s.gateways << '\n'
          << "placement = " << (s.placement == PlacementScheme::grid ? "grid" : "random") << '\n'
          << "length_m = " << io::format_double(s.length_m) << '\n'
          << "width_m = " << io::format_double(s.width_m) << '\n'
          << "samples = " << s.samples << '\n'
          << "tx_power_dbm = " << io::format_double(s.link.tx_power_dbm) << '\n'
          << "frequency_hz = " << io::format_double(s.link.frequency_hz) << '\n'
          << "path_loss_exponent = " << io::format_double(s.link.path_loss_exponent) << '\n'
          << "shadowing_sigma_db = " << io::format_double(s.link.shadowing_sigma_db) << '\n'
          << "sf_policy = " << s.sf_policy << '\n';
    }
    o << "bandwidth_hz = " << io::format_double(c.imputation.bandwidth_hz) << '\n'
      << "noise_figure_db = " << io::format_double(c.imputation.noise_figure_db) << '\n'
      << "features = " << to_string(c.features) << '\n';
    o << "models = ";
    for (std::size_t i = 0; i < c.models.size(); ++i) o << (i ? "," : "") << c.models[i];
    o << '\n'
      << "precision_m = " << io::format_double(c.precision_m) << '\n'
      << "seed = " << c.seed << '\n'
      << "train_size = " << c.train_size << '\n'
      << "val_size = " << c.val_size << '\n'
      << "test_size = " << c.test_size << '\n'
      << "dnn_epochs = " << c.dnn.epochs << '\n'
      << "dnn_batch = " << c.dnn.batch_size << '\n'
      << "dnn_lr = " << io::format_double(c.dnn.adam.learning_rate) << '\n'
      << "dnn_beta1 = " << io::format_double(c.dnn.adam.beta1) << '\n'
      << "dnn_beta2 = " << io::format_double(c.dnn.adam.beta2) << '\n'
      << "dnn_patience = " << c.dnn.patience << '\n'
      << "knn_k = " << c.knn_k << '\n'
      << "ridge_lambda = " << io::format_double(c.ridge_lambda) << '\n'
      << "tree_depth = " << c.tree_depth << '\n'
      << "dqn_episodes = " << c.dqn.episodes << '\n'
      << "dqn_batch = " << c.dqn.batch_size << '\n'
      << "dqn_lr = " << io::format_double(c.dqn.adam.learning_rate) << '\n'
      << "dqn_gamma = " << io::format_double(c.dqn.gamma) << '\n'
      << "dqn_replay = " << c.dqn.replay_capacity << '\n'
      << "dqn_warmup = " << c.dqn.warmup << '\n'
      << "dqn_sync = " << c.dqn.target_sync_interval << '\n'
      << "dqn_epsilon_min = " << io::format_double(c.dqn.epsilon_min) << '\n'
      << "max_steps = " << c.env.max_steps << '\n'
      << "history_length = " << c.env.history_length << '\n'
      << "rolling_window = " << c.rolling_window << '\n'
      << "svg = " << (c.svg ? "true" : "false") << '\n';
    return o.str();
}

// ---------------------------------------------------------------------------
// Data preparation

inline SfPolicy make_sf_policy(const std::string& spec, const NetworkLayout& layout) {
    if (spec == "binned") return default_distance_bins(layout);
    if (spec == "random") return UniformRandomSf{};
    if (spec.rfind("fixed:", 0) == 0) {
        double v = 0.0;
        if (!io::parse_double(spec.substr(6), v)) throw std::invalid_argument("bad fixed SF in '" + spec + "'");
        return FixedSf{SpreadingFactor{static_cast<int>(v)}};
    }
    if (spec.rfind("binned:", 0) == 0) {
        const auto parts = detail::to_list(spec.substr(7));
        if (parts.size() != 5) throw std::invalid_argument("binned policy needs five thresholds");
        DistanceBinnedSf p;
        for (std::size_t i = 0; i < 5; ++i) p.thresholds_m[i] = detail::to_double("sf_policy", parts[i]);
        p.validate();
        return p;
    }
    throw std::invalid_argument("sf_policy must be binned, binned:<t1,..,t5>, random or fixed:<sf>");
}

inline SyntheticDatasetSpec make_synthetic_spec(const SyntheticSource& s, std::uint64_t seed) {
    SyntheticDatasetSpec spec;
    spec.layout = place_gateways(s.length_m, s.width_m, s.gateways, s.placement, seed);
    spec.link = s.link;
    spec.sens = s.sens;
    spec.sf_policy = make_sf_policy(s.sf_policy, spec.layout);
    spec.n_samples = s.samples;
    spec.rng_seed = seed;
    return spec;
}

struct PreparedData {
    RadioMap map;
    DatasetSplit split;
    Normalizer normalizer;
    FeatureTable train;
    FeatureTable validation;
    FeatureTable test;
    std::size_t missing_before_imputation = 0;
};

inline SplitSizes resolve_split(const ExperimentConfig& c, std::size_t n) {
    if (c.train_size == 0 && c.val_size == 0 && c.test_size == 0) return default_split_sizes(n);
    return {c.train_size, c.val_size, c.test_size};
}

/// Builds the planar, imputed radio map and its split. The normalizer is fit
/// on the training portion only.
inline PreparedData prepare(const ExperimentConfig& c) {
    std::vector<Fingerprint> samples;
    std::size_t gateways = 0;
    SensitivityParams sens = c.imputation;
    if (c.source == ExperimentConfig::Source::synthetic) {
        const auto spec = make_synthetic_spec(c.synthetic, c.seed);
        samples = generate_dataset(spec);
        gateways = spec.layout.gateways.size();
        sens = spec.sens;
    } else {
        auto loaded = load_csv(c.csv_path, c.csv_schema);
        samples = std::move(loaded.samples);
        gateways = loaded.gateway_count;
        if (!loaded.planar) project_to_plane(samples);
    }
    if (samples.empty()) throw std::runtime_error("dataset is empty");
    PreparedData d;
    d.missing_before_imputation = count_missing(samples);
    impute_dataset(samples, sens);
    d.map = RadioMap::from(std::move(samples), gateways);
    d.split = split(d.map.samples.size(), resolve_split(c, d.map.samples.size()), c.seed);
    d.normalizer = Normalizer::fit(d.map.samples, d.split.train);
    d.train = make_table(d.map.samples, d.split.train, d.normalizer, c.features);
    d.validation = make_table(d.map.samples, d.split.validation, d.normalizer, c.features);
    d.test = make_table(d.map.samples, d.split.test, d.normalizer, c.features);
    return d;
}

// ---------------------------------------------------------------------------
// Benchmark

struct ModelResult {
    std::string name;
    std::optional<EvalReport> report;
    std::string error;  ///< non-empty when the model failed
    std::vector<dqn::EpisodeMetrics> episodes;
};

struct BenchmarkResult {
    std::vector<ModelResult> models;

    /// improvement[i][j] = improvement of model i over model j; NaN when either failed.
    std::vector<std::vector<double>> improvement_matrix() const {
        const std::size_t n = models.size();
        std::vector<std::vector<double>> m(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (models[i].report && models[j].report)
                    m[i][j] = improvement(models[i].report->mde_m, models[j].report->mde_m);
        return m;
    }

    const ModelResult* find(const std::string& name) const {
        for (const auto& m : models)
            if (m.name == name) return &m;
        return nullptr;
    }
};

inline dqn::TrainResult train_dqn_on(const PreparedData& d, const ExperimentConfig& c) {
    rl::EnvConfig env = c.env;
    env.precision_m = c.precision_m;
    return dqn::train(d.train, d.map.bounds, env, c.dqn, c.seed);
}

inline ModelResult run_model(const std::string& name, const PreparedData& d, const ExperimentConfig& c) {
    ModelResult r;
    r.name = name;
    try {
        if (name == "knn") {
            r.report = evaluate(KnnModel(d.train, c.knn_k), d.test);
        } else if (name == "ridge") {
            r.report = evaluate(RidgeModel::fit(d.train, c.ridge_lambda), d.test);
        } else if (name == "tree") {
            r.report = evaluate(RegressionTree::fit(d.train, c.tree_depth), d.test);
        } else if (name == "dnn") {
            DnnConfig cfg = c.dnn;
            cfg.features = c.features;
            auto trained = train_dnn(cfg, d.train, d.validation, d.normalizer, c.seed);
            r.report = evaluate(trained.model, d.test);
            r.report->loss_curve = std::move(trained.curve);
        } else if (name == "dqn") {
            auto trained = train_dqn_on(d, c);
            rl::EnvConfig env = c.env;
            env.precision_m = c.precision_m;
            const dqn::DqnLocalizer loc(std::move(trained.network), d.map.bounds, env);
            r.report = evaluate(loc, d.test);
            r.episodes = std::move(trained.episodes);
        } else {
            throw std::invalid_argument("unknown model '" + name + "'");
        }
    } catch (const std::exception& e) {
        r.report.reset();
        r.error = e.what();
    }
    return r;
}

/// Every selected model sees the same prepared data and seed. A failing
/// model is recorded and the remaining models still run.
inline BenchmarkResult run_benchmark(const ExperimentConfig& c, const PreparedData& d) {
    c.validate();
    BenchmarkResult res;
    for (const auto& m : c.models) res.models.push_back(run_model(m, d, c));
    return res;
}

inline BenchmarkResult run_benchmark(const ExperimentConfig& c) { return run_benchmark(c, prepare(c)); }

// ---------------------------------------------------------------------------
// Output files

inline void write_summary_csv(std::ostream& out, const BenchmarkResult& r) {
    out << "model,mde_m,n,status\n";
    for (const auto& m : r.models) {
        if (m.report)
            out << m.name << ',' << io::format_double(m.report->mde_m) << ',' << m.report->error_samples_m.size()
                << ",ok\n";
        else
            out << m.name << ",nan,0,failed\n";
    }
}

inline void write_improvement_csv(std::ostream& out, const BenchmarkResult& r) {
    const auto m = r.improvement_matrix();
    out << "model";
    for (const auto& x : r.models) out << ',' << x.name;
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << r.models[i].name;
        for (double v : m[i]) out << ',' << (std::isnan(v) ? std::string("nan") : io::format_double(v));
        out << '\n';
    }
}

/// (error_m, fraction of samples with error <= error_m); one row per
/// distinct error value, ending at 1.
inline std::vector<std::pair<double, double>> cdf_rows(const std::vector<double>& sorted_errors) {
    std::vector<std::pair<double, double>> rows;
    const double n = static_cast<double>(sorted_errors.size());
    for (std::size_t i = 0; i < sorted_errors.size(); ++i) {
        if (i + 1 < sorted_errors.size() && sorted_errors[i + 1] == sorted_errors[i]) continue;
        rows.emplace_back(sorted_errors[i], static_cast<double>(i + 1) / n);
    }
    return rows;
}

inline std::vector<double> rolling_mean(const std::vector<double>& v, std::size_t window) {
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        sum += v[i];
        if (i >= window) sum -= v[i - window];
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

struct FigureInputs {
    std::map<std::string, EvalReport> reports;
    std::map<std::string, std::vector<EpochLoss>> loss_curves;
    std::vector<dqn::EpisodeMetrics> episodes;
};

inline FigureInputs figure_inputs(const BenchmarkResult& r) {
    FigureInputs f;
    for (const auto& m : r.models) {
        if (!m.report) continue;
        f.reports[m.name] = *m.report;
        if (!m.report->loss_curve.empty()) f.loss_curves[m.name] = m.report->loss_curve;
        if (!m.episodes.empty()) f.episodes = m.episodes;
    }
    return f;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> r;
        for (auto f : io::split(line)) r.emplace_back(f);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline double num(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    if (!io::parse_double(s, v)) throw std::runtime_error("bad number '" + s + "' in metric log");
    return v;
}

// Minimal line chart. Each series is drawn as a polyline over shared axes.
inline std::string svg_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& [_, pts] : series)
        for (auto [x, y] : pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            x0 = std::min(x0, x); x1 = std::max(x1, x);
            y0 = std::min(y0, y); y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
      << " [" << io::format_fixed(x0, 1) << ", " << io::format_fixed(x1, 1) << "]</text>\n";
    o << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << " [" << io::format_fixed(y0, 3) << ", "
      << io::format_fixed(y1, 3) << "]</text>\n";
    std::size_t k = 0;
    for (const auto& [name, pts] : series) {
        const char* color = colors[k % 6];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (auto [x, y] : pts) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            o << io::format_fixed(L + (x - x0) / (x1 - x0) * (W - L - R), 2) << ','
              << io::format_fixed(H - B - (y - y0) / (y1 - y0) * (H - T - B), 2) << ' ';
        }
        o << "\"/>\n";
        o << "<text x=\"" << W - R - 100 << "\" y=\"" << T + 15 * (k + 1) << "\" font-size=\"11\" fill=\"" << color
          << "\">" << name << "</text>\n";
        ++k;
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace detail

/// Reads the raw logs written by write_run_logs back from a run directory.
inline FigureInputs load_figure_inputs(const fs::path& run_dir) {
    FigureInputs f;
    if (!fs::is_directory(run_dir)) throw std::runtime_error(run_dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(run_dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        const auto name = p.filename().string();
        if (name.rfind("errors_", 0) == 0 && p.extension() == ".csv") {
            std::vector<double> errs;
            for (const auto& row : detail::read_csv_rows(p))
                if (row.size() == 2 && row[0] == "sample") errs.push_back(detail::num(row[1]));
            f.reports[name.substr(7, name.size() - 11)] = make_report(std::move(errs));
        } else if (name.rfind("loss_curve_", 0) == 0 && p.extension() == ".csv") {
            std::vector<EpochLoss> curve;
            auto rows = detail::read_csv_rows(p);
            for (std::size_t i = 1; i < rows.size(); ++i)
                curve.push_back({static_cast<std::size_t>(detail::num(rows[i].at(0))), detail::num(rows[i].at(1)),
                                 detail::num(rows[i].at(2))});
            f.loss_curves[name.substr(11, name.size() - 15)] = std::move(curve);
        } else if (name == "episodes_dqn.csv") {
            auto rows = detail::read_csv_rows(p);
            for (std::size_t i = 1; i < rows.size(); ++i) {
                dqn::EpisodeMetrics m;
                m.episode = static_cast<std::size_t>(detail::num(rows[i].at(0)));
                m.iow = detail::num(rows[i].at(1));
                m.reward = detail::num(rows[i].at(2));
                m.steps = static_cast<std::size_t>(detail::num(rows[i].at(3)));
                m.error_m = detail::num(rows[i].at(4));
                f.episodes.push_back(m);
            }
        }
    }
    return f;
}

/// Raw per-run logs: summary, improvement matrix, per-model error samples,
/// loss curves and DQN episode metrics.
inline std::vector<fs::path> write_run_logs(const BenchmarkResult& r, const fs::path& out_dir) {
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, auto&& writer) {
        io::StagedFile f(out_dir / name);
        writer(f.stream());
        f.commit();
        written.push_back(out_dir / name);
    };
    emit("summary.csv", [&](std::ostream& o) { write_summary_csv(o, r); });
    emit("improvement.csv", [&](std::ostream& o) { write_improvement_csv(o, r); });
    for (const auto& m : r.models) {
        if (!m.report) continue;
        emit("errors_" + m.name + ".csv", [&](std::ostream& o) { write_eval_csv(o, *m.report); });
        if (!m.report->loss_curve.empty())
            emit("loss_curve_" + m.name + ".csv", [&](std::ostream& o) { write_loss_curve_csv(o, m.report->loss_curve); });
        if (!m.episodes.empty())
            emit("episodes_" + m.name + ".csv", [&](std::ostream& o) { dqn::write_episode_csv(o, m.episodes); });
    }
    return written;
}

struct FigureOptions {
    std::size_t rolling_window = 100;
    bool svg = false;
};

/// Plot-ready CSVs (and optional SVGs) derived from the raw logs. Missing
/// inputs produce a warning per figure instead of an error.
inline std::vector<fs::path> emit_figures(const FigureInputs& in, const fs::path& out_dir, const FigureOptions& opt,
                                          std::vector<std::string>* warnings = nullptr) {
    std::vector<fs::path> written;
    auto warn = [&](const std::string& w) {
        if (warnings) warnings->push_back(w);
    };
    auto emit = [&](const std::string& name, const std::string& content) {
        io::write_text_file(out_dir / name, content);
        written.push_back(out_dir / name);
    };

    if (in.reports.empty()) warn("no error samples found; skipping CDF figure");
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> cdf_series;
    for (const auto& [name, rep] : in.reports) {
        std::ostringstream o;
        o << "error_m,fraction\n";
        const auto rows = cdf_rows(rep.error_samples_m);
        for (auto [e, frac] : rows) o << io::format_double(e) << ',' << io::format_double(frac) << '\n';
        emit("cdf_" + name + ".csv", o.str());
        cdf_series.emplace_back(name + " (MDE " + io::format_fixed(rep.mde_m, 1) + " m)", rows);
    }
    if (opt.svg && !cdf_series.empty())
        emit("cdf.svg", detail::svg_chart("Localization error CDF", "error (m)", "fraction", cdf_series));

    if (in.loss_curves.empty()) warn("no loss curves found; skipping loss figure");
    for (const auto& [name, curve] : in.loss_curves) {
        std::ostringstream o;
        o << "epoch,train_mae,val_mae\n";
        std::vector<std::pair<double, double>> tr, va;
        for (const auto& e : curve) {
            o << e.epoch << ',' << io::format_double(e.train_mae) << ','
              << (std::isnan(e.val_mae) ? std::string("nan") : io::format_double(e.val_mae)) << '\n';
            tr.emplace_back(static_cast<double>(e.epoch), e.train_mae);
            va.emplace_back(static_cast<double>(e.epoch), e.val_mae);
        }
        emit("loss_" + name + ".csv", o.str());
        if (opt.svg)
            emit("loss_" + name + ".svg",
                 detail::svg_chart(name + " MAE loss", "epoch", "MAE (normalized)", {{"train", tr}, {"validation", va}}));
    }

    if (in.episodes.empty()) {
        warn("no DQN episode log found; skipping episode figures");
    } else {
        struct Panel {
            const char* file;
            const char* label;
            double (*get)(const dqn::EpisodeMetrics&);
        };
        const Panel panels[] = {
            {"episode_iow", "IoW", [](const dqn::EpisodeMetrics& m) { return m.iow; }},
            {"episode_reward", "reward", [](const dqn::EpisodeMetrics& m) { return m.reward; }},
            {"episode_steps", "steps", [](const dqn::EpisodeMetrics& m) { return static_cast<double>(m.steps); }},
            {"episode_error", "distance error (m)", [](const dqn::EpisodeMetrics& m) { return m.error_m; }},
        };
        for (const auto& p : panels) {
            std::vector<double> v;
            v.reserve(in.episodes.size());
            for (const auto& m : in.episodes) v.push_back(p.get(m));
            const auto roll = rolling_mean(v, opt.rolling_window);
            std::ostringstream o;
            o << "episode,value,rolling_mean\n";
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < v.size(); ++i) {
                o << in.episodes[i].episode << ',' << io::format_double(v[i]) << ',' << io::format_double(roll[i]) << '\n';
                pts.emplace_back(static_cast<double>(in.episodes[i].episode), roll[i]);
            }
            emit(std::string(p.file) + ".csv", o.str());
            if (opt.svg)
                emit(std::string(p.file) + ".svg",
                     detail::svg_chart(std::string(p.label) + " per episode", "episode", p.label, {{"rolling mean", pts}}));
        }
    }
    return written;
}

/// Run provenance with FNV-1a artifact hashes. Timestamps live only here so
/// the metric CSVs stay byte-stable.
inline void write_manifest(const fs::path& path, const std::string& config_text, std::uint64_t seed,
                           const std::vector<fs::path>& artifacts) {
    std::ostringstream o;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    o << "created_utc = " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    o << "seed = " << seed << '\n';
    o << "[config]\n" << config_text;
    o << "[artifacts]\n";
    for (const auto& a : artifacts) {
        std::ostringstream h;
        h << std::hex << std::setw(16) << std::setfill('0') << io::fnv1a(io::read_text_file(a));
        o << a.filename().string() << " = fnv1a:" << h.str() << '\n';
    }
    io::write_text_file(path, o.str());
}

}  // namespace sfloc::bench
