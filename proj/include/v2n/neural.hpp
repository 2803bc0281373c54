#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "v2n/features.hpp"

namespace v2n::neural {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ModelKind { lstm, gru, tcn, tcnlstm };
enum class InputMode { full, flow_only };
enum class TrainMode { offline, online };

ModelKind parse_model(std::string_view name);
std::string_view model_name(ModelKind kind);
InputMode parse_input_mode(std::string_view name);
std::string_view input_mode_name(InputMode mode);

struct NetConfig {
    ModelKind model = ModelKind::lstm;
    std::size_t hidden_layers = 2;
    std::size_t neurons = 100;
    std::size_t epochs = 100;
    std::size_t batch_size = 5;
    std::size_t history = 12;  // 5-minute steps
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
    InputMode inputs = InputMode::full;
    std::size_t online_window = 288;  // steps used by each online pass

    // Hidden layers TCN=2, LSTM=2, GRU=1, TCNLSTM=4; GRU looks back 120 min,
    // the rest 60 min; GRU defaults to flow-only inputs.
    static NetConfig defaults(ModelKind model);

    // Throws ConfigError.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Cells. Gate blocks are stacked row-wise in the weight matrices.

// Gate order: input, forget, candidate, output.
struct LstmWeights {
    Eigen::Ref<const Mat> W;  // 4H x D
    Eigen::Ref<const Mat> U;  // 4H x H
    Eigen::Ref<const Vec> b;  // 4H
};

struct LstmGrads {
    Eigen::Ref<Mat> W;
    Eigen::Ref<Mat> U;
    Eigen::Ref<Vec> b;
};

struct LstmCache {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o, c, tanh_c;
};

struct LstmOutput {
    Vec h;
    Vec c;
};

// Throws ShapeError.
LstmOutput lstm_cell_step(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                          const LstmWeights& w, LstmCache* cache = nullptr);

struct CellInputGrads {
    Vec x;
    Vec h_prev;
    Vec c_prev;  // empty for GRU
};

// Accumulates parameter gradients into `acc`.
CellInputGrads lstm_cell_backward(const LstmCache& cache, const Vec& dh, const Vec& dc,
                                  const LstmWeights& w, LstmGrads& acc);

// Gate order: update z, reset r, candidate n.
// n = tanh(W_n x + U_n (r * h_prev) + b_n), h = (1 - z) h_prev + z n.
struct GruWeights {
    Eigen::Ref<const Mat> W;  // 3H x D
    Eigen::Ref<const Mat> U;  // 3H x H
    Eigen::Ref<const Vec> b;  // 3H
};

struct GruGrads {
    Eigen::Ref<Mat> W;
    Eigen::Ref<Mat> U;
    Eigen::Ref<Vec> b;
};

struct GruCache {
    Vec x, h_prev;
    Vec z, r, n, rh;  // rh = r * h_prev
};

Vec gru_cell_step(const Vec& x, const Vec& h_prev, const GruWeights& w, GruCache* cache = nullptr);

CellInputGrads gru_cell_backward(const GruCache& cache, const Vec& dh, const GruWeights& w,
                                 GruGrads& acc);

// Depthwise valid convolution over time (one kernel column per channel,
// ReLU), flattened time-major, then a ReLU dense layer.
struct TcnWeights {
    Eigen::Ref<const Mat> kernel;     // K x D
    Eigen::Ref<const Vec> conv_bias;  // D
    Eigen::Ref<const Mat> dense_W;    // H x (T - K + 1) D
    Eigen::Ref<const Vec> dense_b;    // H
};

struct TcnGrads {
    Eigen::Ref<Mat> kernel;
    Eigen::Ref<Vec> conv_bias;
    Eigen::Ref<Mat> dense_W;
    Eigen::Ref<Vec> dense_b;
};

struct TcnCache {
    Mat input;       // T x D
    Mat conv_pre;    // T' x D
    Vec flat;        // relu(conv_pre), time-major
    Vec dense_pre;   // H
};

// `window` is T x D, oldest step first.
Vec tcn_forward(const Mat& window, const TcnWeights& w, TcnCache* cache = nullptr);

// Returns d/d(window).
Mat tcn_backward(const TcnCache& cache, const Vec& dout, const TcnWeights& w, TcnGrads& acc);

// Kernel length: a fourth of the history. Throws PreconditionError for h < 4.
std::size_t kernel_length(std::size_t history);

// ---------------------------------------------------------------------------
// Networks over a flat parameter vector.

struct TensorSpec {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
};

class Network {
public:
    Network() = default;
    Network(const NetConfig& config, std::size_t input_width);

    // Uniform(-0.05, 0.05) from the seeded generator.
    void initialize(std::uint64_t seed);

    const NetConfig& config() const { return config_; }
    std::size_t input_width() const { return input_width_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<TensorSpec>& layout() const { return layout_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    // `sequence` is history x input_width, oldest step first.
    double forward(const Mat& sequence) const;

    // Adds dout * d(output)/d(params) into `grad`; returns the output.
    // When `dinput` is given it receives dout * d(output)/d(sequence).
    double backward(const Mat& sequence, double dout, std::span<double> grad,
                    Mat* dinput = nullptr) const;

    // Adds weight * (output - target) * d(output)/d(params) into `grad`;
    // returns output - target.
    double error_gradient(const Mat& sequence, double target, double weight,
                          std::span<double> grad) const;

private:
    struct Cache;

    void propagate(const Cache& cache, double dout, std::span<double> grad, Mat* dinput) const;

    void add_tensor(const std::string& name, std::size_t rows, std::size_t cols);
    const TensorSpec& tensor(const std::string& name) const;
    double run(const Mat& sequence, Cache* cache) const;

    NetConfig config_;
    std::size_t input_width_ = 0;
    std::vector<TensorSpec> layout_;
    std::vector<double> params_;
};

struct Sample {
    Mat sequence;   // history x input_width, oldest first, scaled
    double target;  // scaled
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean squared error after each epoch
};

// Offline: seeded init, then `epochs` passes of minibatch gradient descent on
// the mean squared error. Online: one pass in order, starting from `start`.
// Throws NumericError when the loss stops being finite.
Network train(const NetConfig& config, const std::vector<Sample>& data, TrainMode mode,
              const Network* start = nullptr, TrainReport* report = nullptr);

double mean_squared_error(const Network& net, const std::vector<Sample>& data);

// Sequence fed to a network: oldest lag first.
Mat to_sequence(const features::FeatureMatrix& window, InputMode inputs);
std::size_t input_width(std::size_t probes, InputMode inputs);

// A network trained for one look-ahead together with everything needed to
// rebuild its inputs.
struct TrainedModel {
    NetConfig config;
    std::size_t horizon = 1;
    features::Neighborhood members;
    features::FeatureScaler scaler;
    double target_min = 0.0;
    double target_max = 1.0;
    Network net;

    double scale_target(double flow) const;
    double unscale_target(double scaled) const;
};

// De-normalized, clamped at zero. Throws PreconditionError when k differs
// from the trained horizon.
double predict(const TrainedModel& model, const features::FeatureMatrix& window, std::size_t k);

// Binary bundle: "V2NPARAM", u64 manifest length, JSON manifest, raw
// little-endian doubles. Paths ending in ".json" use an all-JSON layout.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace v2n::neural
