// SPDX-License-Identifier: Apache-2.0
//
// sfloc command-line front end for RSSI fingerprint localization.
// Exit status: 0 success, 1 usage or config error, 2 runtime failure.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "sfloc/bench.hpp"

namespace fs = std::filesystem;
using namespace sfloc;

namespace {

/// Signals a config or argument problem (exit status 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flags that mirror config keys. Applied after the config file, so flags win.
class Overrides {
public:
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto& slot = values_[key];
        options_.emplace_back(key, app->add_option(flag, slot, help));
    }

    void apply(bench::ExperimentConfig& c) const {
        for (const auto& [key, opt] : options_)
            if (opt->count() > 0) bench::apply_setting(c, key, values_.at(key));
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, CLI::Option*>> options_;
};

void add_synthetic_flags(CLI::App* app, Overrides& o) {
    o.add(app, "--gateways", "gateways", "Number of gateways (default 9)");
    o.add(app, "--placement", "placement", "Gateway placement: grid | random");
    o.add(app, "--length", "length_m", "Area length along x in metres (default 1000)");
    o.add(app, "--width", "width_m", "Area width along y in metres (default 1000)");
    o.add(app, "--samples", "samples", "Number of synthetic fingerprints (default 6000)");
    o.add(app, "--tx-power", "tx_power_dbm", "Transmit power in dBm (default 14)");
    o.add(app, "--frequency", "frequency_hz", "Carrier frequency in Hz (default 868e6)");
    o.add(app, "--beta", "path_loss_exponent", "Path-loss exponent (default 2)");
    o.add(app, "--sigma", "shadowing_sigma_db", "Shadowing standard deviation in dB (default 4)");
    o.add(app, "--bandwidth", "bandwidth_hz", "Channel bandwidth in Hz (default 125e3)");
    o.add(app, "--noise-figure", "noise_figure_db", "Receiver noise figure in dB (default 6)");
    o.add(app, "--sf-policy", "sf_policy", "SF policy: binned | binned:t1,..,t5 | random | fixed:<sf>");
}

void add_data_flags(CLI::App* app, Overrides& o) {
    add_synthetic_flags(app, o);
    o.add(app, "--data", "csv_path", "Fingerprint CSV (default: generate a synthetic set)");
    o.add(app, "--schema", "csv_schema", "CSV schema: canonical | antwerp");
    o.add(app, "--features", "features", "Feature mode: with_sf | without_sf | with_sf_onehot");
    o.add(app, "--train-size", "train_size", "Training samples (0 = default split)");
    o.add(app, "--val-size", "val_size", "Validation samples");
    o.add(app, "--test-size", "test_size", "Test samples");
}

void add_dnn_flags(CLI::App* app, Overrides& o) {
    o.add(app, "--epochs", "dnn_epochs", "DNN training epochs (default 100)");
    o.add(app, "--batch", "dnn_batch", "DNN mini-batch size (default 512)");
    o.add(app, "--lr", "dnn_lr", "DNN Adam learning rate (default 5e-4)");
    o.add(app, "--patience", "dnn_patience", "Early-stopping patience in epochs (0 = off)");
}

void add_dqn_flags(CLI::App* app, Overrides& o) {
    o.add(app, "--precision", "precision_m", "Target window half-length P in metres (default 10)");
    o.add(app, "--episodes", "dqn_episodes", "Training episodes (default 20000)");
    o.add(app, "--max-steps", "max_steps", "Episode step cap (default 20, 0 = none)");
    o.add(app, "--dqn-batch", "dqn_batch", "DQN mini-batch size (default 512)");
    o.add(app, "--gamma", "dqn_gamma", "Discount factor (default 0.1)");
}

struct Common {
    std::string config_path;
    std::uint64_t seed = 1;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
    c.seed_opt = app->add_option("--seed", c.seed, "Seed for every random stream of the run");
}

bench::ExperimentConfig load_config(const Common& common, const Overrides& o) {
    bench::ExperimentConfig cfg;
    try {
        if (!common.config_path.empty())
            bench::apply_config(cfg, bench::parse_config_text(io::read_text_file(common.config_path)));
        o.apply(cfg);
        if (common.seed_opt->count() > 0) cfg.seed = common.seed;
        cfg.validate();
    } catch (const ParseError& e) {
        throw UsageError(common.config_path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

std::map<std::string, std::string> split_meta(const bench::ExperimentConfig& cfg, const DatasetSplit& s) {
    return {{"features", bench::to_string(cfg.features)},
            {"split_train", std::to_string(s.train.size())},
            {"split_val", std::to_string(s.validation.size())},
            {"split_test", std::to_string(s.test.size())}};
}

void print_report(const std::string& name, const EvalReport& r) {
    std::cout << name << " test MDE " << io::format_fixed(r.mde_m, 3) << " m over " << r.error_samples_m.size()
              << " samples\n";
}

std::string manifest_path(const fs::path& artifact) { return artifact.string() + ".manifest"; }

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& common, const Overrides& o, const std::string& out) {
    auto cfg = load_config(common, o);
    if (cfg.source != bench::ExperimentConfig::Source::synthetic) throw UsageError("simulate needs a synthetic source");
    const auto spec = bench::make_synthetic_spec(cfg.synthetic, cfg.seed);
    spec.validate();
    const auto samples = generate_dataset(spec);
    write_canonical_csv(out, samples, spec.layout.gateways.size());
    std::cout << "wrote " << samples.size() << " fingerprints (" << count_missing(samples) << " censored readings) to "
              << out << '\n';
    return 0;
}

int cmd_ingest(const std::string& input, const std::string& schema, const std::string& out, bool impute,
               const Common& common, const Overrides& o) {
    auto cfg = load_config(common, o);
    auto loaded = load_csv(input, schema == "antwerp" ? CsvSchema::antwerp : CsvSchema::canonical);
    if (!loaded.planar) {
        const auto proj = project_to_plane(loaded.samples);
        std::cout << "projected about (" << io::format_double(proj.origin().lat_deg) << ", "
                  << io::format_double(proj.origin().lon_deg) << ")\n";
    }
    const auto missing = count_missing(loaded.samples);
    if (impute) impute_dataset(loaded.samples, cfg.imputation);
    write_canonical_csv(out, loaded.samples, loaded.gateway_count);
    std::cout << "wrote " << loaded.samples.size() << " fingerprints, " << loaded.gateway_count << " gateways, "
              << missing << " missing readings" << (impute ? " imputed" : "") << '\n';
    return 0;
}

int cmd_train_dnn(const Common& common, const Overrides& o, const std::string& out, const std::string& curve_path) {
    auto cfg = load_config(common, o);
    const auto data = bench::prepare(cfg);
    DnnConfig dc = cfg.dnn;
    dc.features = cfg.features;
    auto trained = train_dnn(dc, data.train, data.validation, data.normalizer, cfg.seed);

    Checkpoint ck{"dnn", cfg.seed, split_meta(cfg, data.split), data.normalizer, trained.model.network()};
    save_checkpoint(out, ck);
    std::vector<fs::path> artifacts{out};
    if (!curve_path.empty()) {
        io::StagedFile f(curve_path);
        write_loss_curve_csv(f.stream(), trained.curve);
        f.commit();
        artifacts.emplace_back(curve_path);
    }
    bench::write_manifest(manifest_path(out), bench::describe(cfg), cfg.seed, artifacts);
    if (!trained.curve.empty())
        std::cout << "final epoch " << trained.curve.back().epoch << ": train MAE "
                  << io::format_fixed(trained.curve.back().train_mae, 5) << '\n';
    print_report("dnn", evaluate(trained.model, data.test));
    return 0;
}

int cmd_train_dqn(const Common& common, const Overrides& o, const std::string& out, const std::string& log_path) {
    auto cfg = load_config(common, o);
    const auto data = bench::prepare(cfg);
    auto trained = bench::train_dqn_on(data, cfg);

    auto meta = split_meta(cfg, data.split);
    const auto& b = data.map.bounds;
    meta["precision_m"] = io::format_double(cfg.precision_m);
    meta["max_steps"] = std::to_string(cfg.env.max_steps);
    meta["history_length"] = std::to_string(cfg.env.history_length);
    meta["bounds"] = io::format_double(b.x_min) + ' ' + io::format_double(b.x_max) + ' ' + io::format_double(b.y_min) +
                     ' ' + io::format_double(b.y_max);
    Checkpoint ck{"dqn", cfg.seed, meta, data.normalizer, trained.network};
    save_checkpoint(out, ck);
    std::vector<fs::path> artifacts{out};
    if (!log_path.empty()) {
        io::StagedFile f(log_path);
        dqn::write_episode_csv(f.stream(), trained.episodes);
        f.commit();
        artifacts.emplace_back(log_path);
    }
    bench::write_manifest(manifest_path(out), bench::describe(cfg), cfg.seed, artifacts);
    const auto& eps = trained.episodes;
    std::cout << "trained " << eps.size() << " episodes, " << trained.env_steps << " environment steps\n";
    if (!eps.empty())
        std::cout << "trailing mean error " << io::format_fixed(dqn::trailing_mean_error(eps, eps.size(), std::min<std::size_t>(1000, eps.size())), 3)
                  << " m\n";
    return 0;
}

std::size_t meta_size(const Checkpoint& ck, const std::string& key) {
    const auto v = ck.meta_or(key, "");
    double d = 0.0;
    if (!io::parse_double(v, d) || d < 0.0) throw std::runtime_error("checkpoint lacks a valid '" + key + "' entry");
    return static_cast<std::size_t>(d);
}

int cmd_eval(const Common& common, const Overrides& o, const std::string& ckpt_path, const std::string& out) {
    auto cfg = load_config(common, o);
    const auto ck = load_checkpoint(ckpt_path);
    // Rebuild the exact split the model was trained on.
    cfg.seed = ck.seed;
    cfg.features = bench::parse_feature_mode(ck.meta_or("features", "with_sf"));
    cfg.train_size = meta_size(ck, "split_train");
    cfg.val_size = meta_size(ck, "split_val");
    cfg.test_size = meta_size(ck, "split_test");
    const auto data = bench::prepare(cfg);
    if (data.map.gateway_count != ck.normalizer.gateway_count())
        throw std::runtime_error("checkpoint expects " + std::to_string(ck.normalizer.gateway_count()) +
                                 " gateways, data has " + std::to_string(data.map.gateway_count));
    const auto test = make_table(data.map.samples, data.split.test, ck.normalizer, cfg.features);

    EvalReport report;
    if (ck.kind == "dnn") {
        report = evaluate(DnnModel(ck.network, ck.normalizer), test);
    } else if (ck.kind == "dqn") {
        rl::EnvConfig env = cfg.env;
        double p = 0.0;
        if (!io::parse_double(ck.meta_or("precision_m", ""), p)) throw std::runtime_error("checkpoint lacks precision_m");
        env.precision_m = p;
        env.max_steps = meta_size(ck, "max_steps");
        env.history_length = meta_size(ck, "history_length");
        std::istringstream bs(ck.meta_or("bounds", ""));
        std::string t;
        std::vector<double> bv;
        while (bs >> t) {
            double v = 0.0;
            if (!io::parse_double(t, v)) throw std::runtime_error("bad bounds in checkpoint");
            bv.push_back(v);
        }
        if (bv.size() != 4) throw std::runtime_error("checkpoint lacks bounds");
        report = evaluate(dqn::DqnLocalizer(ck.network, Bounds{bv[0], bv[1], bv[2], bv[3]}, env), test);
    } else {
        throw std::runtime_error("unknown checkpoint kind '" + ck.kind + "'");
    }
    io::StagedFile f(out);
    write_eval_csv(f.stream(), report);
    f.commit();
    bench::write_manifest(manifest_path(out), bench::describe(cfg), cfg.seed, {fs::path(out)});
    print_report(ck.kind, report);
    return 0;
}

int cmd_bench(const Common& common, const Overrides& o, const std::string& out_dir_flag) {
    auto cfg = load_config(common, o);
    if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
    const auto data = bench::prepare(cfg);
    const auto result = bench::run_benchmark(cfg, data);
    auto artifacts = bench::write_run_logs(result, cfg.out_dir);
    std::vector<std::string> warnings;
    const auto figs = bench::emit_figures(bench::figure_inputs(result), cfg.out_dir / "figures",
                                          {cfg.rolling_window, cfg.svg}, &warnings);
    artifacts.insert(artifacts.end(), figs.begin(), figs.end());
    bench::write_manifest(cfg.out_dir / "manifest.txt", bench::describe(cfg), cfg.seed, artifacts);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    bool failed = false;
    for (const auto& m : result.models) {
        if (m.report) {
            print_report(m.name, *m.report);
        } else {
            std::cerr << m.name << " failed: " << m.error << '\n';
            failed = true;
        }
    }
    return failed ? 2 : 0;
}

int cmd_figures(const std::string& run_dir, std::string out_dir, std::size_t window, bool svg) {
    if (out_dir.empty()) out_dir = (fs::path(run_dir) / "figures").string();
    if (window == 0) throw UsageError("--rolling-window must be positive");
    std::vector<std::string> warnings;
    const auto files = bench::emit_figures(bench::load_figure_inputs(run_dir), out_dir, {window, svg}, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << files.size() << " figure files to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    sfloc::tune_allocator();
    CLI::App app{"SF-aware LoRa RSSI fingerprint localization toolkit"};
    app.require_subcommand(1);

    Common c_sim, c_ing, c_dnn, c_dqn, c_eval, c_bench;
    Overrides o_sim, o_ing, o_dnn, o_dqn, o_eval, o_bench;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic fingerprint CSV");
    std::string sim_out;
    add_common(sim, c_sim);
    add_synthetic_flags(sim, o_sim);
    sim->add_option("--out", sim_out, "Output CSV path")->required();

    auto* ing = app.add_subcommand("ingest", "Convert a fingerprint CSV to the canonical planar schema");
    std::string ing_in, ing_schema = "canonical", ing_out;
    bool ing_impute = false;
    add_common(ing, c_ing);
    ing->add_option("--input", ing_in, "Input CSV")->required()->check(CLI::ExistingFile);
    ing->add_option("--schema", ing_schema, "Input schema")->check(CLI::IsMember({"canonical", "antwerp"}));
    ing->add_option("--out", ing_out, "Output CSV path")->required();
    ing->add_flag("--impute", ing_impute, "Replace missing readings by the SF sensitivity");
    o_ing.add(ing, "--bandwidth", "bandwidth_hz", "Bandwidth in Hz used for imputation (default 125e3)");
    o_ing.add(ing, "--noise-figure", "noise_figure_db", "Noise figure in dB used for imputation (default 6)");

    auto* tdnn = app.add_subcommand("train-dnn", "Train the baseline DNN regressor");
    std::string dnn_out, dnn_curve;
    add_common(tdnn, c_dnn);
    add_data_flags(tdnn, o_dnn);
    add_dnn_flags(tdnn, o_dnn);
    tdnn->add_option("--out", dnn_out, "Checkpoint path")->required();
    tdnn->add_option("--loss-curve", dnn_curve, "Per-epoch loss CSV path");

    auto* tdqn = app.add_subcommand("train-dqn", "Train the window-search DQN agent");
    std::string dqn_out, dqn_log;
    add_common(tdqn, c_dqn);
    add_data_flags(tdqn, o_dqn);
    add_dqn_flags(tdqn, o_dqn);
    tdqn->add_option("--out", dqn_out, "Checkpoint path")->required();
    tdqn->add_option("--episode-log", dqn_log, "Per-episode metrics CSV path");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
    std::string ev_ckpt, ev_out;
    add_common(ev, c_eval);
    add_data_flags(ev, o_eval);
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint from train-dnn or train-dqn")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "Error CSV path")->required();

    auto* be = app.add_subcommand("bench", "Train and evaluate several models on one split");
    std::string be_out;
    add_common(be, c_bench);
    add_data_flags(be, o_bench);
    add_dnn_flags(be, o_bench);
    add_dqn_flags(be, o_bench);
    o_bench.add(be, "--models", "models", "Comma list of knn,ridge,tree,dnn,dqn or 'all'");
    o_bench.add(be, "--knn-k", "knn_k", "Neighbours for KNN (default 11)");
    o_bench.add(be, "--ridge-lambda", "ridge_lambda", "Ridge penalty (default 1)");
    o_bench.add(be, "--tree-depth", "tree_depth", "Regression tree depth limit (default 10)");
    o_bench.add(be, "--rolling-window", "rolling_window", "Episode rolling-mean window (default 100)");
    o_bench.add(be, "--svg", "svg", "Also render SVG figures (true/false)");
    be->add_option("--out-dir", be_out, "Run directory (overrides out_dir)");

    auto* fig = app.add_subcommand("figures", "Write plot-ready CSVs from a run directory");
    std::string fig_run, fig_out;
    std::size_t fig_window = 100;
    bool fig_svg = false;
    fig->add_option("--run-dir", fig_run, "Run directory written by bench")->required()->check(CLI::ExistingDirectory);
    fig->add_option("--out-dir", fig_out, "Output directory (default <run-dir>/figures)");
    fig->add_option("--rolling-window", fig_window, "Episode rolling-mean window");
    fig->add_flag("--svg", fig_svg, "Also render SVG figures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*sim) return cmd_simulate(c_sim, o_sim, sim_out);
        if (*ing) return cmd_ingest(ing_in, ing_schema, ing_out, ing_impute, c_ing, o_ing);
        if (*tdnn) return cmd_train_dnn(c_dnn, o_dnn, dnn_out, dnn_curve);
        if (*tdqn) return cmd_train_dqn(c_dqn, o_dqn, dqn_out, dqn_log);
        if (*ev) return cmd_eval(c_eval, o_eval, ev_ckpt, ev_out);
        if (*be) return cmd_bench(c_bench, o_bench, be_out);
        if (*fig) return cmd_figures(fig_run, fig_out, fig_window, fig_svg);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
