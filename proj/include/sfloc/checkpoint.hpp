// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned text container for trained models. Layout (one record per line,
// space separated, numbers in shortest round-trip form):
//
//   sfloc-checkpoint 1
//   kind <dnn|dqn>
//   seed <uint64>
//   meta <key> <value>              (zero or more)
//   normalizer <G>
//   rssi_min <G numbers>
//   rssi_max <G numbers>
//   target_bounds <x_min> <x_max> <y_min> <y_max>
//   layers <L>
//   layer <in> <out> <relu|linear> <dropout>     then
//   weights <out*in numbers, row-major>
//   bias <out numbers>                           (repeated L times)
//   end

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "sfloc/dataset.hpp"
#include "sfloc/io.hpp"
#include "sfloc/neural.hpp"

namespace sfloc {

struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string kind;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> meta;
    Normalizer normalizer;
    nn::Network network;

    std::string meta_or(const std::string& key, const std::string& fallback) const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : it->second;
    }
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    auto numbers = [&out](auto&& range) {
        for (double v : range) out << ' ' << io::format_double(v);
        out << '\n';
    };
    out << "sfloc-checkpoint " << Checkpoint::kVersion << '\n';
    out << "kind " << c.kind << '\n';
    out << "seed " << c.seed << '\n';
    for (const auto& [k, v] : c.meta) {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint meta keys may not contain spaces or newlines");
        out << "meta " << k << ' ' << v << '\n';
    }
    const auto& n = c.normalizer;
    out << "normalizer " << n.gateway_count() << '\n';
    out << "rssi_min";
    numbers(n.rssi_min());
    out << "rssi_max";
    numbers(n.rssi_max());
    const auto& b = n.target_bounds();
    out << "target_bounds";
    numbers(std::initializer_list<double>{b.x_min, b.x_max, b.y_min, b.y_max});
    out << "layers " << c.network.depth() << '\n';
    for (const auto& l : c.network.layers()) {
        out << "layer " << l.spec.input_dim << ' ' << l.spec.output_dim << ' '
            << (l.spec.activation == nn::Activation::relu ? "relu" : "linear") << ' '
            << io::format_double(l.spec.dropout_rate) << '\n';
        out << "weights";
        for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
            for (Eigen::Index j = 0; j < l.weights.cols(); ++j) out << ' ' << io::format_double(l.weights(i, j));
        out << '\n';
        out << "bias";
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out << ' ' << io::format_double(l.bias(i));
        out << '\n';
    }
    out << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next = [&](const std::string& keyword) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string kw;
            ss >> kw;
            if (kw != keyword && !(keyword == "meta|normalizer" && (kw == "meta" || kw == "normalizer")))
                throw ParseError(line_no, "expected '" + keyword + "', found '" + kw + "'");
            return line;
        }
        throw ParseError(line_no, "unexpected end of checkpoint, expected '" + keyword + "'");
    };
    auto read_numbers = [&](const std::string& keyword, std::size_t count) {
        std::istringstream ss(next(keyword));
        std::string kw, tok;
        ss >> kw;
        std::vector<double> v;
        v.reserve(count);
        while (ss >> tok) {
            double d = 0.0;
            if (!io::parse_double(tok, d)) throw ParseError(line_no, "bad number '" + tok + "'");
            v.push_back(d);
        }
        if (v.size() != count)
            throw ParseError(line_no, keyword + " expects " + std::to_string(count) + " values, found " +
                                          std::to_string(v.size()));
        return v;
    };

    Checkpoint c;
    {
        std::istringstream ss(next("sfloc-checkpoint"));
        std::string kw;
        int version = 0;
        ss >> kw >> version;
        if (version != Checkpoint::kVersion)
            throw ParseError(line_no, "unsupported checkpoint version " + std::to_string(version));
    }
    {
        std::istringstream ss(next("kind"));
        std::string kw;
        ss >> kw >> c.kind;
    }
    {
        std::istringstream ss(next("seed"));
        std::string kw;
        ss >> kw >> c.seed;
    }
    std::size_t gw = 0;
    while (true) {
        std::istringstream ss(next("meta|normalizer"));
        std::string kw;
        ss >> kw;
        if (kw == "normalizer") {
            ss >> gw;
            break;
        }
        std::string key, value;
        ss >> key;
        std::getline(ss >> std::ws, value);
        c.meta[key] = value;
    }
    auto rmin = read_numbers("rssi_min", gw);
    auto rmax = read_numbers("rssi_max", gw);
    auto tb = read_numbers("target_bounds", 4);
    c.normalizer = Normalizer::from_parameters(std::move(rmin), std::move(rmax), Bounds{tb[0], tb[1], tb[2], tb[3]});

    std::size_t n_layers = 0;
    {
        std::istringstream ss(next("layers"));
        std::string kw;
        ss >> kw >> n_layers;
    }
    std::vector<nn::DenseLayer> layers;
    for (std::size_t k = 0; k < n_layers; ++k) {
        std::istringstream ss(next("layer"));
        std::string kw, act, drop;
        nn::LayerSpec spec;
        ss >> kw >> spec.input_dim >> spec.output_dim >> act >> drop;
        if (act != "relu" && act != "linear") throw ParseError(line_no, "unknown activation '" + act + "'");
        spec.activation = act == "relu" ? nn::Activation::relu : nn::Activation::linear;
        if (!io::parse_double(drop, spec.dropout_rate)) throw ParseError(line_no, "bad dropout rate");
        const auto w = read_numbers("weights", spec.input_dim * spec.output_dim);
        const auto b = read_numbers("bias", spec.output_dim);
        nn::DenseLayer l{spec, nn::Matrix(spec.output_dim, spec.input_dim), nn::Vector(spec.output_dim)};
        for (std::size_t i = 0; i < spec.output_dim; ++i)
            for (std::size_t j = 0; j < spec.input_dim; ++j)
                l.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[i * spec.input_dim + j];
        for (std::size_t i = 0; i < spec.output_dim; ++i) l.bias(static_cast<Eigen::Index>(i)) = b[i];
        layers.push_back(std::move(l));
    }
    c.network = nn::Network::from_layers(std::move(layers));
    next("end");
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    io::StagedFile f(path);
    write_checkpoint(f.stream(), c);
    f.commit();
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace sfloc
