#pragma once

// Central-difference checks of the analytic cell and network gradients on
// random small shapes (every dimension at most 8).

#include <Eigen/Dense>
#include <vector>

#include "support/oracles.hpp"
#include "v2n/neural.hpp"
#include "v2n/random.hpp"

namespace v2n::testing {

struct GradCheck {
    double worst = 0.0;        // largest relative error over every parameter and input
    std::size_t resampled = 0;  // draws skipped because a ReLU sat within reach of its kink
};

namespace detail {

using neural::Mat;
using neural::Vec;
using MatMap = Eigen::Map<Mat>;
using VecMap = Eigen::Map<Vec>;

// Carves named blocks out of one flat buffer so a single vector holds every
// quantity the loss depends on.
struct Buffer {
    std::vector<double> data;
    std::size_t used = 0;

    explicit Buffer(std::size_t n) : data(n) {}
    MatMap mat(Eigen::Index r, Eigen::Index c) {
        MatMap m(data.data() + used, r, c);
        used += static_cast<std::size_t>(r * c);
        return m;
    }
    VecMap vec(Eigen::Index n) {
        VecMap v(data.data() + used, n);
        used += static_cast<std::size_t>(n);
        return v;
    }
};

inline void fill(std::vector<double>& v, Rng& rng, double scale) {
    for (double& x : v) x = rng.uniform(-scale, scale);
}

inline void append(std::vector<double>& out, const Eigen::Ref<const Mat>& m) {
    out.insert(out.end(), m.data(), m.data() + m.size());
}

inline Eigen::Index dim(Rng& rng) { return 1 + static_cast<Eigen::Index>(rng.below(8)); }

}  // namespace detail

inline double lstm_cell_check(Rng& rng) {
    using namespace detail;
    const Eigen::Index D = dim(rng), H = dim(rng);
    Buffer buf(static_cast<std::size_t>(4 * H * D + 4 * H * H + 4 * H + D + 2 * H));
    fill(buf.data, rng, 1.0);
    auto W = buf.mat(4 * H, D);
    auto U = buf.mat(4 * H, H);
    auto b = buf.vec(4 * H);
    auto x = buf.vec(D);
    auto h0 = buf.vec(H);
    auto c0 = buf.vec(H);
    Vec pa(H), pc(H);
    for (Eigen::Index i = 0; i < H; ++i) {
        pa(i) = rng.uniform(-1, 1);
        pc(i) = rng.uniform(-1, 1);
    }
    const neural::LstmWeights w{W, U, b};
    auto loss = [&] {
        const auto out = neural::lstm_cell_step(x, h0, c0, w);
        return pa.dot(out.h) + pc.dot(out.c);
    };
    neural::LstmCache cache;
    neural::lstm_cell_step(x, h0, c0, w, &cache);
    Mat gW = Mat::Zero(4 * H, D), gU = Mat::Zero(4 * H, H);
    Vec gb = Vec::Zero(4 * H);
    neural::LstmGrads acc{gW, gU, gb};
    const auto in = neural::lstm_cell_backward(cache, pa, pc, w, acc);
    std::vector<double> analytic;
    append(analytic, gW);
    append(analytic, gU);
    append(analytic, gb);
    append(analytic, in.x);
    append(analytic, in.h_prev);
    append(analytic, in.c_prev);
    const auto numeric = numeric_gradient(buf.data, loss);
    return max_relative_error(analytic, numeric);
}

inline double gru_cell_check(Rng& rng) {
    using namespace detail;
    const Eigen::Index D = dim(rng), H = dim(rng);
    Buffer buf(static_cast<std::size_t>(3 * H * D + 3 * H * H + 3 * H + D + H));
    fill(buf.data, rng, 1.0);
    auto W = buf.mat(3 * H, D);
    auto U = buf.mat(3 * H, H);
    auto b = buf.vec(3 * H);
    auto x = buf.vec(D);
    auto h0 = buf.vec(H);
    Vec pa(H);
    for (Eigen::Index i = 0; i < H; ++i) pa(i) = rng.uniform(-1, 1);
    const neural::GruWeights w{W, U, b};
    auto loss = [&] { return pa.dot(neural::gru_cell_step(x, h0, w)); };
    neural::GruCache cache;
    neural::gru_cell_step(x, h0, w, &cache);
    Mat gW = Mat::Zero(3 * H, D), gU = Mat::Zero(3 * H, H);
    Vec gb = Vec::Zero(3 * H);
    neural::GruGrads acc{gW, gU, gb};
    const auto in = neural::gru_cell_backward(cache, pa, w, acc);
    std::vector<double> analytic;
    append(analytic, gW);
    append(analytic, gU);
    append(analytic, gb);
    append(analytic, in.x);
    append(analytic, in.h_prev);
    const auto numeric = numeric_gradient(buf.data, loss);
    return max_relative_error(analytic, numeric);
}

// Returns a negative value when the draw put a pre-activation so close to a
// ReLU kink that a difference quotient would straddle it.
inline double tcn_check(Rng& rng) {
    using namespace detail;
    const Eigen::Index T = 4 * (1 + static_cast<Eigen::Index>(rng.below(4)));
    const Eigen::Index K = static_cast<Eigen::Index>(neural::kernel_length(static_cast<std::size_t>(T)));
    const Eigen::Index D = dim(rng), H = dim(rng);
    const Eigen::Index flat = (T - K + 1) * D;
    Buffer buf(static_cast<std::size_t>(K * D + D + H * flat + H + T * D));
    fill(buf.data, rng, 1.0);
    auto kernel = buf.mat(K, D);
    auto conv_b = buf.vec(D);
    auto dW = buf.mat(H, flat);
    auto db = buf.vec(H);
    auto window = buf.mat(T, D);
    Vec pa(H);
    for (Eigen::Index i = 0; i < H; ++i) pa(i) = rng.uniform(-1, 1);
    const neural::TcnWeights w{kernel, conv_b, dW, db};
    neural::TcnCache cache;
    neural::tcn_forward(Mat(window), w, &cache);
    if (cache.conv_pre.cwiseAbs().minCoeff() < 1e-3 || cache.dense_pre.cwiseAbs().minCoeff() < 1e-3) {
        return -1.0;
    }
    auto loss = [&] { return pa.dot(neural::tcn_forward(Mat(window), w)); };
    Mat gk = Mat::Zero(K, D), gW = Mat::Zero(H, flat);
    Vec gcb = Vec::Zero(D), gb = Vec::Zero(H);
    neural::TcnGrads acc{gk, gcb, gW, gb};
    const Mat dwin = neural::tcn_backward(cache, pa, w, acc);
    std::vector<double> analytic;
    append(analytic, gk);
    append(analytic, gcb);
    append(analytic, gW);
    append(analytic, gb);
    append(analytic, dwin);
    const auto numeric = numeric_gradient(buf.data, loss);
    return max_relative_error(analytic, numeric);
}

// Whole network: parameters and input sequence, output as the loss.
inline double network_check(neural::ModelKind kind, Rng& rng) {
    neural::NetConfig cfg = neural::NetConfig::defaults(kind);
    cfg.hidden_layers = kind == neural::ModelKind::tcnlstm ? 4
                        : kind == neural::ModelKind::tcn   ? 2 + rng.below(2)
                                                           : 1 + rng.below(2);
    cfg.neurons = 1 + rng.below(8);
    cfg.history = 4 * (1 + rng.below(2));
    const std::size_t width = 1 + rng.below(8);
    neural::Network net(cfg, width);
    for (double& p : net.params()) p = rng.uniform(-0.5, 0.5);
    neural::Mat seq(static_cast<Eigen::Index>(cfg.history), static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < seq.size(); ++i) seq.data()[i] = rng.uniform(0, 1);

    std::vector<double> analytic(net.param_count(), 0.0);
    neural::Mat dinput;
    net.backward(seq, 1.0, analytic, &dinput);
    const auto numeric = numeric_gradient(net.params(), [&] { return net.forward(seq); });
    const auto numeric_in = numeric_gradient(std::span(seq.data(), static_cast<std::size_t>(seq.size())),
                                             [&] { return net.forward(seq); });
    return std::max(max_relative_error(analytic, numeric),
                    max_relative_error(std::span(dinput.data(), static_cast<std::size_t>(dinput.size())),
                                       numeric_in));
}

// Worst error over `configs` accepted draws of `check`.
template <class F>
GradCheck repeat_check(F&& check, std::size_t configs, std::uint64_t seed) {
    Rng rng(seed);
    GradCheck r;
    for (std::size_t done = 0; done < configs;) {
        const double e = check(rng);
        if (e < 0.0) {
            ++r.resampled;
            continue;
        }
        r.worst = std::max(r.worst, e);
        ++done;
    }
    return r;
}

}  // namespace v2n::testing
