// SPDX-License-Identifier: Apache-2.0
#pragma once

// Supervised localization baselines and the shared distance-error report.

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
#include <utility>
#include <vector>

#include "sfloc/common.hpp"
#include "sfloc/dataset.hpp"
#include "sfloc/io.hpp"
#include "sfloc/neural.hpp"

namespace sfloc {

struct EpochLoss {
    std::size_t epoch = 0;
    double train_mae = 0.0;
    double val_mae = 0.0;
};

struct EvalReport {
    double mde_m = 0.0;
    std::vector<double> error_samples_m;  ///< ascending
    std::vector<EpochLoss> loss_curve;
};

inline EvalReport make_report(std::vector<double> errors) {
    EvalReport r;
    if (!errors.empty()) r.mde_m = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    std::sort(errors.begin(), errors.end());
    r.error_samples_m = std::move(errors);
    return r;
}

/// Per-sample Euclidean error of `model.predict(table)` against the table's
/// ground truth, in metres.
template <typename Model>
EvalReport evaluate(const Model& model, const FeatureTable& test) {
    const std::vector<Point> pred = model.predict(test);
    if (pred.size() != test.size()) throw DimensionMismatch("prediction count differs from test size");
    std::vector<double> err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) err[i] = distance(pred[i], test.positions[i]);
    return make_report(std::move(err));
}

/// Relative MDE reduction of `a` over `b`: (MDE_b - MDE_a) / MDE_b.
inline double improvement(double mde_a, double mde_b) { return (mde_b - mde_a) / mde_b; }

inline void write_eval_csv(std::ostream& out, const EvalReport& r) {
    out << "kind,error_m\n";
    for (double e : r.error_samples_m) out << "sample," << io::format_double(e) << '\n';
    out << "mde," << io::format_double(r.mde_m) << '\n';
}

inline void write_loss_curve_csv(std::ostream& out, const std::vector<EpochLoss>& curve) {
    out << "epoch,train_mae,val_mae\n";
    for (const auto& e : curve)
        out << e.epoch << ',' << io::format_double(e.train_mae) << ',' << io::format_double(e.val_mae) << '\n';
}

// ---------------------------------------------------------------------------

/// Predicts the mean training position everywhere.
class CentroidModel {
public:
    static CentroidModel fit(const FeatureTable& train) {
        if (train.size() == 0) throw std::invalid_argument("empty training set");
        Point c;
        for (const auto& p : train.positions) {
            c.x += p.x;
            c.y += p.y;
        }
        c.x /= static_cast<double>(train.size());
        c.y /= static_cast<double>(train.size());
        return CentroidModel{c};
    }
    std::vector<Point> predict(const FeatureTable& t) const { return std::vector<Point>(t.size(), centroid); }

    Point centroid;
};

// ---------------------------------------------------------------------------

/// Brute-force K nearest neighbours on normalized features.
class KnnModel {
public:
    KnnModel(FeatureTable train, std::size_t k) : train_(std::move(train)), k_(k) {
        if (train_.size() == 0) throw std::invalid_argument("KNN needs a non-empty training set");
        if (k_ == 0 || k_ > train_.size()) throw std::invalid_argument("K must be in 1..train size");
    }

    std::size_t k() const { return k_; }

    Point predict_one(const Eigen::Ref<const Eigen::VectorXd>& query) const {
        if (query.size() != train_.features.rows()) throw DimensionMismatch("query dimension mismatch");
        const Eigen::VectorXd d2 = (train_.features.colwise() - query).colwise().squaredNorm().transpose();
        std::vector<std::pair<double, std::size_t>> order(train_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = {d2(static_cast<Eigen::Index>(i)), i};
        // (distance, index) ordering breaks ties by lower sample index.
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_ - 1), order.end());
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_));
        Point p;
        for (std::size_t j = 0; j < k_; ++j) {
            p.x += train_.positions[order[j].second].x;
            p.y += train_.positions[order[j].second].y;
        }
        p.x /= static_cast<double>(k_);
        p.y /= static_cast<double>(k_);
        return p;
    }

    std::vector<Point> predict(const FeatureTable& t) const {
        std::vector<Point> out;
        out.reserve(t.size());
        for (Eigen::Index c = 0; c < t.features.cols(); ++c) out.push_back(predict_one(t.features.col(c)));
        return out;
    }

private:
    FeatureTable train_;
    std::size_t k_;
};

// ---------------------------------------------------------------------------

/// Linear least squares with an unpenalized bias. Coefficients: (dim + 1) x 2,
/// last row is the bias.
class RidgeModel {
public:
    static RidgeModel fit(const FeatureTable& train, double lambda) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("ridge lambda must be non-negative");
        if (train.size() == 0) throw std::invalid_argument("empty training set");
        const Eigen::Index d = train.features.rows();
        const Eigen::Index n = train.features.cols();
        Eigen::MatrixXd x(n, d + 1);
        x.leftCols(d) = train.features.transpose();
        x.col(d).setOnes();
        Eigen::MatrixXd y(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            y(i, 0) = train.positions[static_cast<std::size_t>(i)].x;
            y(i, 1) = train.positions[static_cast<std::size_t>(i)].y;
        }
        Eigen::MatrixXd a = x.transpose() * x;
        a.diagonal().head(d).array() += lambda;
        const Eigen::MatrixXd b = x.transpose() * y;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        if (qr.rank() < a.rows())
            throw std::runtime_error("ridge normal equations are singular (lambda = " + io::format_double(lambda) + ")");
        return RidgeModel{qr.solve(b), lambda};
    }

    std::vector<Point> predict(const FeatureTable& t) const {
        const Eigen::Index d = coefficients.rows() - 1;
        if (t.features.rows() != d) throw DimensionMismatch("ridge input dimension mismatch");
        const Eigen::MatrixXd out =
            (t.features.transpose() * coefficients.topRows(d)).rowwise() + coefficients.row(d);
        std::vector<Point> pts(t.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            pts[i] = {out(static_cast<Eigen::Index>(i), 0), out(static_cast<Eigen::Index>(i), 1)};
        return pts;
    }

    /// Norm of the penalized weights (bias excluded).
    double weight_norm() const { return coefficients.topRows(coefficients.rows() - 1).norm(); }

    Eigen::MatrixXd coefficients;
    double lambda = 0.0;
};

// ---------------------------------------------------------------------------

/// CART regression tree over both coordinates jointly.
class RegressionTree {
public:
    struct Node {
        int feature = -1;  ///< -1 for leaves
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int depth = 0;
        std::size_t n_samples = 0;
        Point value;
    };

    static RegressionTree fit(const FeatureTable& train, int max_depth = 10) {
        if (train.size() == 0) throw std::invalid_argument("tree needs a non-empty training set");
        if (max_depth < 0) throw std::invalid_argument("max depth must be non-negative");
        RegressionTree t;
        t.dim_ = train.dim();
        t.max_depth_ = max_depth;
        std::vector<std::size_t> idx(train.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        t.build(train, idx, 0);
        return t;
    }

    /// Index of the leaf that `x` falls into.
    int leaf_of(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        if (static_cast<std::size_t>(x.size()) != dim_) throw DimensionMismatch("tree input dimension mismatch");
        int n = 0;
        while (nodes_[static_cast<std::size_t>(n)].feature >= 0) {
            const auto& node = nodes_[static_cast<std::size_t>(n)];
            n = x(node.feature) <= node.threshold ? node.left : node.right;
        }
        return n;
    }

    std::vector<Point> predict(const FeatureTable& t) const {
        std::vector<Point> out;
        out.reserve(t.size());
        for (Eigen::Index c = 0; c < t.features.cols(); ++c)
            out.push_back(nodes_[static_cast<std::size_t>(leaf_of(t.features.col(c)))].value);
        return out;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    int max_depth_reached() const {
        int d = 0;
        for (const auto& n : nodes_) d = std::max(d, n.depth);
        return d;
    }

private:
    int build(const FeatureTable& train, std::vector<std::size_t>& idx, int depth) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        Node node;
        node.depth = depth;
        node.n_samples = idx.size();
        double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
        for (auto i : idx) {
            const auto& p = train.positions[i];
            sx += p.x;
            sy += p.y;
            sxx += p.x * p.x;
            syy += p.y * p.y;
        }
        const double n = static_cast<double>(idx.size());
        node.value = {sx / n, sy / n};
        const double parent_sse = (sxx - sx * sx / n) + (syy - sy * sy / n);

        bool pure = true;
        for (auto i : idx)
            if (!(train.positions[i] == train.positions[idx.front()])) {
                pure = false;
                break;
            }

        std::optional<std::pair<int, double>> best;
        if (depth < max_depth_ && idx.size() >= 2 && !pure) best = best_split(train, idx, parent_sse);

        if (!best) {
            nodes_[static_cast<std::size_t>(id)] = node;
            return id;
        }
        node.feature = best->first;
        node.threshold = best->second;
        std::vector<std::size_t> left, right;
        for (auto i : idx)
            (train.features(node.feature, static_cast<Eigen::Index>(i)) <= node.threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        node.left = build(train, left, depth + 1);
        node.right = build(train, right, depth + 1);
        nodes_[static_cast<std::size_t>(id)] = node;
        return id;
    }

    // Exact scan over midpoints between consecutive distinct values,
    // minimizing the summed within-child squared error of both coordinates.
    std::optional<std::pair<int, double>> best_split(const FeatureTable& train, const std::vector<std::size_t>& idx,
                                                     double parent_sse) const {
        const std::size_t n = idx.size();
        double best_sse = parent_sse - 1e-12 * std::max(1.0, std::abs(parent_sse));
        std::optional<std::pair<int, double>> best;
        std::vector<std::pair<double, std::size_t>> col(n);
        double tx = 0.0, ty = 0.0, txx = 0.0, tyy = 0.0;
        for (auto i : idx) {
            const auto& p = train.positions[i];
            tx += p.x;
            ty += p.y;
            txx += p.x * p.x;
            tyy += p.y * p.y;
        }
        for (std::size_t f = 0; f < dim_; ++f) {
            for (std::size_t j = 0; j < n; ++j)
                col[j] = {train.features(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(idx[j])), idx[j]};
            std::sort(col.begin(), col.end());
            double lx = 0.0, ly = 0.0, lxx = 0.0, lyy = 0.0;
            for (std::size_t j = 0; j + 1 < n; ++j) {
                const auto& p = train.positions[col[j].second];
                lx += p.x;
                ly += p.y;
                lxx += p.x * p.x;
                lyy += p.y * p.y;
                if (col[j].first == col[j + 1].first) continue;
                const double nl = static_cast<double>(j + 1);
                const double nr = static_cast<double>(n - j - 1);
                const double rx = tx - lx, ry = ty - ly, rxx = txx - lxx, ryy = tyy - lyy;
                const double sse = (lxx - lx * lx / nl) + (lyy - ly * ly / nl) + (rxx - rx * rx / nr) +
                                   (ryy - ry * ry / nr);
                if (sse < best_sse) {
                    best_sse = sse;
                    best = std::pair{static_cast<int>(f), 0.5 * (col[j].first + col[j + 1].first)};
                }
            }
        }
        return best;
    }

    std::vector<Node> nodes_;
    std::size_t dim_ = 0;
    int max_depth_ = 10;
};

// ---------------------------------------------------------------------------

struct DnnConfig {
    std::vector<std::size_t> hidden_units{512, 256, 128, 64, 32};
    std::vector<double> dropout{0.3, 0.2, 0.1};
    nn::AdamConfig adam{0.0005, 0.1, 0.99, 1e-8};
    std::size_t batch_size = 512;
    std::size_t epochs = 100;
    /// Stop after this many epochs without validation improvement; 0 disables.
    std::size_t patience = 0;
    FeatureMode features = FeatureMode::with_sf;
};

/// Regressor from normalized fingerprints to normalized (x, y).
class DnnModel {
public:
    DnnModel(nn::Network net, Normalizer norm) : net_(std::move(net)), norm_(std::move(norm)) {}

    const nn::Network& network() const { return net_; }
    const Normalizer& normalizer() const { return norm_; }

    std::vector<Point> predict(const FeatureTable& t) const {
        const nn::Matrix out = nn::forward(net_, t.features);
        std::vector<Point> pts(t.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            pts[i] = norm_.unnormalize_position(
                {out(0, static_cast<Eigen::Index>(i)), out(1, static_cast<Eigen::Index>(i))});
        return pts;
    }

private:
    nn::Network net_;
    Normalizer norm_;
};

struct DnnTrainResult {
    DnnModel model;
    std::vector<EpochLoss> curve;
};

namespace detail {

inline nn::Matrix gather_columns(const nn::Matrix& m, std::span<const std::size_t> cols) {
    nn::Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
    return out;
}

}  // namespace detail

/// Minimizes MAE on normalized targets with shuffled Adam mini-batches.
/// Records the mean training-batch MAE and the eval-mode validation MAE
/// after every epoch.
inline DnnTrainResult train_dnn(const DnnConfig& config, const FeatureTable& train, const FeatureTable& val,
                                const Normalizer& norm, std::uint64_t seed) {
    if (train.size() == 0) throw std::invalid_argument("empty training set");
    if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    const std::size_t expected = feature_dim(norm.gateway_count(), config.features);
    if (train.dim() != expected) throw DimensionMismatch("training features do not match the configured mode");

    nn::Network net =
        nn::Network::build(nn::mlp_specs(train.dim(), config.hidden_units, 2, config.dropout), seed);
    nn::Adam adam(net, config.adam);
    Rng rng = make_rng(seed, 0xd00d);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochLoss> curve;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    nn::ForwardCache cache;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, len);
            const nn::Matrix x = detail::gather_columns(train.features, batch);
            const nn::Matrix t = detail::gather_columns(train.targets, batch);
            const nn::Matrix pred = nn::forward(net, x, nn::Mode::train, rng, cache);
            const auto loss = nn::mae_loss(pred, t);
            if (!std::isfinite(loss.value))
                throw TrainingDivergence("DNN loss became non-finite at epoch " + std::to_string(epoch) +
                                         ", batch offset " + std::to_string(start));
            adam.step(net, nn::backward(net, cache, loss.grad));
            loss_sum += loss.value * static_cast<double>(len);
        }
        EpochLoss e{epoch, loss_sum / static_cast<double>(train.size()), std::numeric_limits<double>::quiet_NaN()};
        if (val.size() > 0) e.val_mae = nn::mae_loss(nn::forward(net, val.features), val.targets).value;
        curve.push_back(e);
        if (config.patience > 0 && val.size() > 0) {
            if (e.val_mae < best_val) {
                best_val = e.val_mae;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        }
    }
    return {DnnModel(std::move(net), norm), std::move(curve)};
}

}  // namespace sfloc
