#include <cmath>
#include <string>

#include "conv.hpp"
#include "v2n/error.hpp"
#include "v2n/neural.hpp"
#include "v2n/random.hpp"

namespace v2n::neural {

namespace {

using CMap = Eigen::Map<const Mat>;
using CVMap = Eigen::Map<const Vec>;
using GMap = Eigen::Map<Mat>;
using GVMap = Eigen::Map<Vec>;

}  // namespace

ModelKind parse_model(std::string_view name) {
    if (name == "lstm") return ModelKind::lstm;
    if (name == "gru") return ModelKind::gru;
    if (name == "tcn") return ModelKind::tcn;
    if (name == "tcnlstm") return ModelKind::tcnlstm;
    throw ConfigError("unknown neural model '" + std::string(name) + "'");
}

std::string_view model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::lstm: return "lstm";
        case ModelKind::gru: return "gru";
        case ModelKind::tcn: return "tcn";
        case ModelKind::tcnlstm: return "tcnlstm";
    }
    return "?";
}

InputMode parse_input_mode(std::string_view name) {
    if (name == "full") return InputMode::full;
    if (name == "flow") return InputMode::flow_only;
    throw ConfigError("unknown input mode '" + std::string(name) + "' (expected full or flow)");
}

std::string_view input_mode_name(InputMode mode) {
    return mode == InputMode::full ? "full" : "flow";
}

NetConfig NetConfig::defaults(ModelKind model) {
    NetConfig c;
    c.model = model;
    switch (model) {
        case ModelKind::lstm:
            c.hidden_layers = 2;
            c.history = 12;
            c.inputs = InputMode::full;
            break;
        case ModelKind::gru:
            c.hidden_layers = 1;
            c.history = 24;
            c.inputs = InputMode::flow_only;
            break;
        case ModelKind::tcn:
            c.hidden_layers = 2;
            c.history = 12;
            c.inputs = InputMode::full;
            break;
        case ModelKind::tcnlstm:
            c.hidden_layers = 4;
            c.history = 12;
            c.inputs = InputMode::full;
            break;
    }
    return c;
}

void NetConfig::validate() const {
    if (neurons == 0) throw ConfigError("neurons must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (history == 0) throw ConfigError("history must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be positive");
    }
    switch (model) {
        case ModelKind::lstm:
        case ModelKind::gru:
            if (hidden_layers < 1) throw ConfigError("recurrent models need at least 1 hidden layer");
            break;
        case ModelKind::tcn:
            if (hidden_layers < 2) throw ConfigError("tcn needs at least 2 hidden layers");
            break;
        case ModelKind::tcnlstm:
            if (hidden_layers < 4) throw ConfigError("tcnlstm needs at least 4 hidden layers");
            break;
    }
    if (model == ModelKind::tcn || model == ModelKind::tcnlstm) {
        try {
            kernel_length(history);
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what());
        }
    }
}

struct Network::Cache {
    // Recurrent stacks: [layer][time].
    std::vector<std::vector<LstmCache>> lstm;
    std::vector<std::vector<GruCache>> gru;
    std::vector<Mat> layer_in;  // input sequence of each recurrent layer

    TcnCache tcn;
    std::vector<Vec> dense_in;   // inputs of the trailing dense layers
    std::vector<Vec> dense_pre;  // their pre-activations

    Mat conv_in, conv_pre, conv_out;  // tcnlstm
    Mat proj_pre;

    Vec head_in;
};

Network::Network(const NetConfig& config, std::size_t input_width)
    : config_(config), input_width_(input_width) {
    config_.validate();
    if (input_width == 0) {
        throw ShapeError("input width must be positive");
    }
    const std::size_t H = config_.neurons;
    const std::size_t D = input_width;
    switch (config_.model) {
        case ModelKind::lstm:
            for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
                const std::string p = "lstm" + std::to_string(l);
                add_tensor(p + ".W", 4 * H, l == 0 ? D : H);
                add_tensor(p + ".U", 4 * H, H);
                add_tensor(p + ".b", 4 * H, 1);
            }
            break;
        case ModelKind::gru:
            for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
                const std::string p = "gru" + std::to_string(l);
                add_tensor(p + ".W", 3 * H, l == 0 ? D : H);
                add_tensor(p + ".U", 3 * H, H);
                add_tensor(p + ".b", 3 * H, 1);
            }
            break;
        case ModelKind::tcn: {
            const std::size_t K = kernel_length(config_.history);
            const std::size_t out_len = config_.history - K + 1;
            add_tensor("conv.kernel", K, D);
            add_tensor("conv.bias", D, 1);
            add_tensor("dense0.W", H, out_len * D);
            add_tensor("dense0.b", H, 1);
            for (std::size_t l = 1; l + 1 < config_.hidden_layers; ++l) {
                add_tensor("dense" + std::to_string(l) + ".W", H, H);
                add_tensor("dense" + std::to_string(l) + ".b", H, 1);
            }
            break;
        }
        case ModelKind::tcnlstm: {
            const std::size_t K = kernel_length(config_.history);
            add_tensor("conv.kernel", K, D);
            add_tensor("conv.bias", D, 1);
            add_tensor("proj.W", H, D);
            add_tensor("proj.b", H, 1);
            for (std::size_t l = 0; l + 3 < config_.hidden_layers; ++l) {
                const std::string p = "lstm" + std::to_string(l);
                add_tensor(p + ".W", 4 * H, H);
                add_tensor(p + ".U", 4 * H, H);
                add_tensor(p + ".b", 4 * H, 1);
            }
            add_tensor("dense0.W", H, H);
            add_tensor("dense0.b", H, 1);
            break;
        }
    }
    add_tensor("head.W", 1, H);
    add_tensor("head.b", 1, 1);
}

void Network::add_tensor(const std::string& name, std::size_t rows, std::size_t cols) {
    layout_.push_back({name, params_.size(), rows, cols});
    params_.resize(params_.size() + rows * cols, 0.0);
}

const TensorSpec& Network::tensor(const std::string& name) const {
    for (const auto& t : layout_) {
        if (t.name == name) {
            return t;
        }
    }
    throw ShapeError("network has no tensor '" + name + "'");
}

void Network::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (double& p : params_) {
        p = rng.uniform(-0.05, 0.05);
    }
}

double Network::forward(const Mat& sequence) const { return run(sequence, nullptr); }

namespace {

struct Params {
    const std::vector<double>& data;
    const std::vector<TensorSpec>& layout;

    const TensorSpec& spec(const std::string& name) const {
        for (const auto& t : layout) {
            if (t.name == name) return t;
        }
        throw ShapeError("network has no tensor '" + name + "'");
    }
    CMap mat(const std::string& name) const {
        const auto& t = spec(name);
        return CMap(data.data() + t.offset, static_cast<Eigen::Index>(t.rows),
                    static_cast<Eigen::Index>(t.cols));
    }
    CVMap vec(const std::string& name) const {
        const auto& t = spec(name);
        return CVMap(data.data() + t.offset, static_cast<Eigen::Index>(t.size()));
    }
};

struct Grads {
    std::span<double> data;
    const std::vector<TensorSpec>& layout;

    const TensorSpec& spec(const std::string& name) const {
        for (const auto& t : layout) {
            if (t.name == name) return t;
        }
        throw ShapeError("network has no tensor '" + name + "'");
    }
    GMap mat(const std::string& name) const {
        const auto& t = spec(name);
        return GMap(data.data() + t.offset, static_cast<Eigen::Index>(t.rows),
                    static_cast<Eigen::Index>(t.cols));
    }
    GVMap vec(const std::string& name) const {
        const auto& t = spec(name);
        return GVMap(data.data() + t.offset, static_cast<Eigen::Index>(t.size()));
    }
};

LstmWeights lstm_weights(const Params& p, const std::string& prefix) {
    return LstmWeights{p.mat(prefix + ".W"), p.mat(prefix + ".U"), p.vec(prefix + ".b")};
}

GruWeights gru_weights(const Params& p, const std::string& prefix) {
    return GruWeights{p.mat(prefix + ".W"), p.mat(prefix + ".U"), p.vec(prefix + ".b")};
}

// Runs a stack of LSTM layers over `input`; returns the top layer's last hidden state.
Vec lstm_stack(const Params& p, const std::string& stem, std::size_t layers, std::size_t H,
               const Mat& input, std::vector<std::vector<LstmCache>>* caches,
               std::vector<Mat>* layer_in) {
    Mat seq = input;
    const Eigen::Index T = input.rows();
    Vec h;
    for (std::size_t l = 0; l < layers; ++l) {
        const LstmWeights w = lstm_weights(p, stem + std::to_string(l));
        Mat out(T, static_cast<Eigen::Index>(H));
        h = Vec::Zero(static_cast<Eigen::Index>(H));
        Vec c = Vec::Zero(static_cast<Eigen::Index>(H));
        std::vector<LstmCache> layer_cache;
        if (caches != nullptr) layer_cache.resize(static_cast<std::size_t>(T));
        for (Eigen::Index t = 0; t < T; ++t) {
            LstmOutput o = lstm_cell_step(seq.row(t).transpose(), h, c, w,
                                          caches != nullptr ? &layer_cache[static_cast<std::size_t>(t)] : nullptr);
            h = std::move(o.h);
            c = std::move(o.c);
            out.row(t) = h.transpose();
        }
        if (caches != nullptr) {
            caches->push_back(std::move(layer_cache));
            layer_in->push_back(std::move(seq));
        }
        seq = std::move(out);
    }
    return h;
}

Vec gru_stack(const Params& p, std::size_t layers, std::size_t H, const Mat& input,
              std::vector<std::vector<GruCache>>* caches, std::vector<Mat>* layer_in) {
    Mat seq = input;
    const Eigen::Index T = input.rows();
    Vec h;
    for (std::size_t l = 0; l < layers; ++l) {
        const GruWeights w = gru_weights(p, "gru" + std::to_string(l));
        Mat out(T, static_cast<Eigen::Index>(H));
        h = Vec::Zero(static_cast<Eigen::Index>(H));
        std::vector<GruCache> layer_cache;
        if (caches != nullptr) layer_cache.resize(static_cast<std::size_t>(T));
        for (Eigen::Index t = 0; t < T; ++t) {
            h = gru_cell_step(seq.row(t).transpose(), h, w,
                              caches != nullptr ? &layer_cache[static_cast<std::size_t>(t)] : nullptr);
            out.row(t) = h.transpose();
        }
        if (caches != nullptr) {
            caches->push_back(std::move(layer_cache));
            layer_in->push_back(std::move(seq));
        }
        seq = std::move(out);
    }
    return h;
}

// Backprop through a recurrent stack given d/d(last hidden state of the top layer).
Mat lstm_stack_backward(const Params& p, const Grads& g, const std::string& stem,
                        const std::vector<std::vector<LstmCache>>& caches,
                        const std::vector<Mat>& layer_in, const Vec& dlast) {
    const std::size_t layers = caches.size();
    const Eigen::Index T = layer_in.front().rows();
    const Eigen::Index H = dlast.size();
    Mat dout = Mat::Zero(T, H);
    dout.row(T - 1) = dlast.transpose();
    for (std::size_t l = layers; l-- > 0;) {
        const std::string prefix = stem + std::to_string(l);
        const LstmWeights w = lstm_weights(p, prefix);
        GMap dW = g.mat(prefix + ".W");
        GMap dU = g.mat(prefix + ".U");
        GVMap db = g.vec(prefix + ".b");
        LstmGrads acc{dW, dU, db};
        Mat din = Mat::Zero(T, layer_in[l].cols());
        Vec dh_next = Vec::Zero(H);
        Vec dc_next = Vec::Zero(H);
        for (Eigen::Index t = T; t-- > 0;) {
            const Vec dh = dout.row(t).transpose() + dh_next;
            CellInputGrads cg =
                lstm_cell_backward(caches[l][static_cast<std::size_t>(t)], dh, dc_next, w, acc);
            din.row(t) = cg.x.transpose();
            dh_next = std::move(cg.h_prev);
            dc_next = std::move(cg.c_prev);
        }
        dout = std::move(din);
    }
    return dout;
}

Mat gru_stack_backward(const Params& p, const Grads& g,
                       const std::vector<std::vector<GruCache>>& caches,
                       const std::vector<Mat>& layer_in, const Vec& dlast) {
    const std::size_t layers = caches.size();
    const Eigen::Index T = layer_in.front().rows();
    const Eigen::Index H = dlast.size();
    Mat dout = Mat::Zero(T, H);
    dout.row(T - 1) = dlast.transpose();
    for (std::size_t l = layers; l-- > 0;) {
        const std::string prefix = "gru" + std::to_string(l);
        const GruWeights w = gru_weights(p, prefix);
        GMap dW = g.mat(prefix + ".W");
        GMap dU = g.mat(prefix + ".U");
        GVMap db = g.vec(prefix + ".b");
        GruGrads acc{dW, dU, db};
        Mat din = Mat::Zero(T, layer_in[l].cols());
        Vec dh_next = Vec::Zero(H);
        for (Eigen::Index t = T; t-- > 0;) {
            const Vec dh = dout.row(t).transpose() + dh_next;
            CellInputGrads cg = gru_cell_backward(caches[l][static_cast<std::size_t>(t)], dh, w, acc);
            din.row(t) = cg.x.transpose();
            dh_next = std::move(cg.h_prev);
        }
        dout = std::move(din);
    }
    return dout;
}

}  // namespace

double Network::run(const Mat& sequence, Cache* cache) const {
    if (static_cast<std::size_t>(sequence.cols()) != input_width_ ||
        static_cast<std::size_t>(sequence.rows()) != config_.history) {
        throw ShapeError("input sequence is " + std::to_string(sequence.rows()) + "x" +
                         std::to_string(sequence.cols()) + ", network expects " +
                         std::to_string(config_.history) + "x" + std::to_string(input_width_));
    }
    const Params p{params_, layout_};
    const std::size_t H = config_.neurons;
    Vec a;
    switch (config_.model) {
        case ModelKind::lstm:
            a = lstm_stack(p, "lstm", config_.hidden_layers, H, sequence,
                           cache ? &cache->lstm : nullptr, cache ? &cache->layer_in : nullptr);
            break;
        case ModelKind::gru:
            a = gru_stack(p, config_.hidden_layers, H, sequence, cache ? &cache->gru : nullptr,
                          cache ? &cache->layer_in : nullptr);
            break;
        case ModelKind::tcn: {
            const TcnWeights w{p.mat("conv.kernel"), p.vec("conv.bias"), p.mat("dense0.W"),
                               p.vec("dense0.b")};
            a = tcn_forward(sequence, w, cache ? &cache->tcn : nullptr);
            for (std::size_t l = 1; l + 1 < config_.hidden_layers; ++l) {
                const std::string prefix = "dense" + std::to_string(l);
                Vec pre = p.mat(prefix + ".W") * a + p.vec(prefix + ".b");
                Vec next = pre.cwiseMax(0.0);
                if (cache) {
                    cache->dense_in.push_back(std::move(a));
                    cache->dense_pre.push_back(std::move(pre));
                }
                a = std::move(next);
            }
            break;
        }
        case ModelKind::tcnlstm: {
            Mat conv_pre = conv_forward(sequence, p.mat("conv.kernel"), p.vec("conv.bias"));
            Mat conv_out = conv_pre.cwiseMax(0.0);
            Mat proj_pre = (conv_out * p.mat("proj.W").transpose()).rowwise() +
                           p.vec("proj.b").transpose();
            const Mat projected = proj_pre.cwiseMax(0.0);
            Vec h = lstm_stack(p, "lstm", config_.hidden_layers - 3, H, projected,
                               cache ? &cache->lstm : nullptr, cache ? &cache->layer_in : nullptr);
            Vec pre = p.mat("dense0.W") * h + p.vec("dense0.b");
            a = pre.cwiseMax(0.0);
            if (cache) {
                cache->conv_in = sequence;
                cache->conv_pre = std::move(conv_pre);
                cache->conv_out = std::move(conv_out);
                cache->proj_pre = std::move(proj_pre);
                cache->dense_in.push_back(std::move(h));
                cache->dense_pre.push_back(std::move(pre));
            }
            break;
        }
    }
    const double y = (p.mat("head.W") * a)(0) + p.vec("head.b")(0);
    if (cache) {
        cache->head_in = std::move(a);
    }
    return y;
}

double Network::backward(const Mat& sequence, double dout, std::span<double> grad,
                         Mat* dinput) const {
    if (grad.size() != params_.size()) {
        throw ShapeError("gradient buffer size differs from the parameter count");
    }
    Cache cache;
    const double y = run(sequence, &cache);
    propagate(cache, dout, grad, dinput);
    return y;
}

double Network::error_gradient(const Mat& sequence, double target, double weight,
                               std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw ShapeError("gradient buffer size differs from the parameter count");
    }
    Cache cache;
    const double err = run(sequence, &cache) - target;
    propagate(cache, weight * err, grad, nullptr);
    return err;
}

void Network::propagate(const Cache& cache, double dout, std::span<double> grad,
                        Mat* dinput) const {
    const Params p{params_, layout_};
    const Grads g{grad, layout_};

    g.mat("head.W") += dout * cache.head_in.transpose();
    g.vec("head.b")(0) += dout;
    Vec da = dout * p.mat("head.W").transpose();

    Mat dx;
    switch (config_.model) {
        case ModelKind::lstm:
            dx = lstm_stack_backward(p, g, "lstm", cache.lstm, cache.layer_in, da);
            break;
        case ModelKind::gru:
            dx = gru_stack_backward(p, g, cache.gru, cache.layer_in, da);
            break;
        case ModelKind::tcn: {
            for (std::size_t i = cache.dense_pre.size(); i-- > 0;) {
                const std::string prefix = "dense" + std::to_string(i + 1);
                const Vec dpre = (cache.dense_pre[i].array() > 0.0).select(da, 0.0);
                g.mat(prefix + ".W").noalias() += dpre * cache.dense_in[i].transpose();
                g.vec(prefix + ".b") += dpre;
                da = p.mat(prefix + ".W").transpose() * dpre;
            }
            const TcnWeights w{p.mat("conv.kernel"), p.vec("conv.bias"), p.mat("dense0.W"),
                               p.vec("dense0.b")};
            GMap dk = g.mat("conv.kernel");
            GVMap dcb = g.vec("conv.bias");
            GMap dW = g.mat("dense0.W");
            GVMap dbias = g.vec("dense0.b");
            TcnGrads acc{dk, dcb, dW, dbias};
            dx = tcn_backward(cache.tcn, da, w, acc);
            break;
        }
        case ModelKind::tcnlstm: {
            const Vec dpre = (cache.dense_pre[0].array() > 0.0).select(da, 0.0);
            g.mat("dense0.W").noalias() += dpre * cache.dense_in[0].transpose();
            g.vec("dense0.b") += dpre;
            const Vec dh = p.mat("dense0.W").transpose() * dpre;
            const Mat dproj = lstm_stack_backward(p, g, "lstm", cache.lstm, cache.layer_in, dh);
            const Mat dproj_pre = (cache.proj_pre.array() > 0.0).select(dproj, 0.0);
            g.mat("proj.W").noalias() += dproj_pre.transpose() * cache.conv_out;
            g.vec("proj.b") += dproj_pre.colwise().sum().transpose();
            const Mat dconv_out = dproj_pre * p.mat("proj.W");
            const Mat dconv_pre = (cache.conv_pre.array() > 0.0).select(dconv_out, 0.0);
            dx = conv_backward(cache.conv_in, dconv_pre, p.mat("conv.kernel"),
                               g.mat("conv.kernel"), g.vec("conv.bias"));
            break;
        }
    }
    if (dinput != nullptr) {
        *dinput = std::move(dx);
    }
}

}  // namespace v2n::neural
