#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/datasets.hpp"
#include "support/gradcheck.hpp"
#include "v2n/error.hpp"
#include "v2n/features.hpp"
#include "v2n/neural.hpp"
#include "v2n/random.hpp"

using namespace v2n;
using namespace v2n::neural;

namespace {

Mat zeros(Eigen::Index r, Eigen::Index c) { return Mat::Zero(r, c); }
Vec zeros(Eigen::Index n) { return Vec::Zero(n); }

NetConfig small(ModelKind kind, std::size_t epochs = 100) {
    NetConfig c = NetConfig::defaults(kind);
    c.hidden_layers = kind == ModelKind::tcnlstm ? 4 : kind == ModelKind::tcn ? 2 : 1;
    c.neurons = 6;
    c.history = 4;
    c.epochs = epochs;
    c.batch_size = 5;
    return c;
}

std::vector<Sample> random_samples(std::size_t n, std::size_t history, std::size_t width,
                                   std::uint64_t seed, double (*target)(const Mat&)) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Mat s(static_cast<Eigen::Index>(history), static_cast<Eigen::Index>(width));
        for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = rng.uniform();
        out.push_back({s, target(s)});
    }
    return out;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("v2n_test_" + name)).string();
}

}  // namespace

TEST_CASE("lstm cell with zero weights") {
    const Mat W = zeros(8, 3), U = zeros(8, 2);
    const Vec b = zeros(8);
    const LstmWeights w{W, U, b};
    const auto a = lstm_cell_step(Vec::Ones(3), zeros(2), zeros(2), w);
    CHECK(a.h.isZero());
    CHECK(a.c.isZero());
    const auto r = lstm_cell_step(Vec::Ones(3), zeros(2), Vec::Constant(2, 2.0), w);
    CHECK(r.c(0) == doctest::Approx(1.0));
    CHECK(r.h(1) == doctest::Approx(0.5 * std::tanh(1.0)));
    CHECK(r.h(1) == doctest::Approx(0.3808).epsilon(1e-4));
    CHECK_THROWS_AS(lstm_cell_step(Vec::Ones(4), zeros(2), zeros(2), w), ShapeError);
}

TEST_CASE("gru cell interpolates") {
    const Mat W = zeros(3, 2), U = zeros(3, 1);
    Vec b = zeros(3);
    {
        const GruWeights w{W, U, b};
        CHECK(gru_cell_step(Vec::Ones(2), Vec::Ones(1), w)(0) == doctest::Approx(0.5));
    }
    b(0) = -50.0;  // update gate shut
    const Mat W2 = Mat::Constant(3, 2, 0.7);
    const GruWeights w{W2, U, b};
    CHECK(gru_cell_step(Vec::Constant(2, 0.1), Vec::Constant(1, 0.8), w)(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(gru_cell_step(Vec::Ones(2), Vec::Ones(2), w), ShapeError);
}

TEST_CASE("temporal convolution") {
    CHECK(kernel_length(12) == 3);
    CHECK_THROWS_AS(kernel_length(3), PreconditionError);

    // Zero kernel: only the dense bias survives.
    const Mat k0 = zeros(1, 1);
    const Vec cb0 = zeros(1);
    const Mat dW0 = zeros(2, 4);
    const Vec db0 = Vec::Constant(2, 0.25);
    const TcnWeights w0{k0, cb0, dW0, db0};
    CHECK(tcn_forward(Mat::Constant(4, 1, 3.0), w0).isApprox(db0));

    // Kernel [1, 0] and an identity dense layer copy the input.
    Mat k(2, 1);
    k << 1, 0;
    const Vec cb = zeros(1);
    const Mat I = Mat::Identity(7, 7);
    const Vec db = zeros(7);
    Mat x(8, 1);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    const Vec out = tcn_forward(x, TcnWeights{k, cb, I, db});
    CHECK(out.isApprox(x.col(0).head(7)));
}

TEST_CASE("cell gradients against central differences") {
    const auto lstm = v2n::testing::repeat_check(v2n::testing::lstm_cell_check, 25, 1);
    const auto gru = v2n::testing::repeat_check(v2n::testing::gru_cell_check, 25, 2);
    const auto tcn = v2n::testing::repeat_check(v2n::testing::tcn_check, 25, 3);
    CHECK(lstm.worst <= 1e-4);
    CHECK(gru.worst <= 1e-4);
    CHECK(tcn.worst <= 1e-4);
}

TEST_CASE("network gradients against central differences") {
    for (auto kind : {ModelKind::lstm, ModelKind::gru, ModelKind::tcn, ModelKind::tcnlstm}) {
        CAPTURE(model_name(kind));
        Rng rng(17);
        double worst = 0.0;
        for (int i = 0; i < 8; ++i) worst = std::max(worst, v2n::testing::network_check(kind, rng));
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("defaults follow the evaluation table") {
    CHECK(NetConfig::defaults(ModelKind::tcn).hidden_layers == 2);
    CHECK(NetConfig::defaults(ModelKind::lstm).hidden_layers == 2);
    CHECK(NetConfig::defaults(ModelKind::gru).hidden_layers == 1);
    CHECK(NetConfig::defaults(ModelKind::tcnlstm).hidden_layers == 4);
    CHECK(NetConfig::defaults(ModelKind::gru).history == 24);
    CHECK(NetConfig::defaults(ModelKind::lstm).history == 12);
    for (auto kind : {ModelKind::lstm, ModelKind::gru, ModelKind::tcn, ModelKind::tcnlstm}) {
        const auto c = NetConfig::defaults(kind);
        CHECK(c.neurons == 100);
        CHECK(c.epochs == 100);
        CHECK(c.batch_size == 5);
        CHECK(c.learning_rate == 1e-3);
    }
    NetConfig bad = small(ModelKind::tcn);
    bad.history = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training reaches a constant target") {
    for (auto kind : {ModelKind::lstm, ModelKind::gru, ModelKind::tcn, ModelKind::tcnlstm}) {
        CAPTURE(model_name(kind));
        auto cfg = small(kind);
        const auto data = random_samples(200, cfg.history, 3, 4, [](const Mat&) { return 0.6; });
        TrainReport rep;
        const Network net = train(cfg, data, TrainMode::offline, nullptr, &rep);
        CHECK(net.forward(data[7].sequence) == doctest::Approx(0.6).epsilon(0.01));
        REQUIRE(rep.epoch_loss.size() == cfg.epochs);
        CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());
    }
}

TEST_CASE("zero epochs keep the initialization and seeds repeat") {
    auto cfg = small(ModelKind::lstm, 0);
    const auto data = random_samples(20, cfg.history, 3, 5, [](const Mat& s) { return s(3, 0); });
    const Network net = train(cfg, data, TrainMode::offline);
    Network fresh(cfg, 3);
    fresh.initialize(cfg.seed);
    CHECK(std::equal(net.params().begin(), net.params().end(), fresh.params().begin()));
    for (double p : fresh.params()) {
        CHECK(p >= -0.05);
        CHECK(p < 0.05);
    }

    cfg.epochs = 5;
    const Network a = train(cfg, data, TrainMode::offline);
    const Network b = train(cfg, data, TrainMode::offline);
    CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
    cfg.seed = 8;
    const Network c = train(cfg, data, TrainMode::offline);
    CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}

TEST_CASE("online training starts from the given network") {
    auto cfg = small(ModelKind::gru, 3);
    const auto data = random_samples(30, cfg.history, 2, 6, [](const Mat& s) { return s(3, 1); });
    const Network base = train(cfg, data, TrainMode::offline);
    const Network next = train(cfg, std::vector<Sample>(data.begin(), data.begin() + 5), TrainMode::online, &base);
    CHECK(next.param_count() == base.param_count());
    CHECK_FALSE(std::equal(next.params().begin(), next.params().end(), base.params().begin()));
    CHECK_THROWS_AS(train(cfg, data, TrainMode::online), PreconditionError);
    CHECK_THROWS_AS(train(cfg, {}, TrainMode::offline), PreconditionError);
}

TEST_CASE("a diverging loss aborts with a hint") {
    auto cfg = small(ModelKind::lstm, 50);
    cfg.learning_rate = 1e6;
    const auto data = random_samples(20, cfg.history, 3, 7, [](const Mat&) { return 1e6; });
    try {
        train(cfg, data, TrainMode::offline);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("learning rate") != std::string::npos);
    }
}

TEST_CASE("a network learns to copy the newest flow") {
    auto cfg = small(ModelKind::lstm, 300);
    cfg.learning_rate = 0.05;
    cfg.neurons = 8;
    const auto data = random_samples(300, cfg.history, 2, 8, [](const Mat& s) { return s(3, 0); });
    const Network net = train(cfg, data, TrainMode::offline);
    const auto test = random_samples(50, cfg.history, 2, 9, [](const Mat& s) { return s(3, 0); });
    double worst = 0.0;
    for (const auto& s : test) worst = std::max(worst, std::abs(net.forward(s.sequence) - s.target));
    CHECK(worst < 0.1);
}

TEST_CASE("predictions are de-normalized and clamped") {
    const auto clean = v2n::testing::make_dataset({{45.0, 7.6}}, {std::vector<double>(20, 500.0)});
    TrainedModel m;
    m.config = small(ModelKind::lstm);
    m.config.inputs = InputMode::flow_only;
    m.horizon = 1;
    m.members = features::full_neighborhood(clean, "P0");
    m.scaler = features::FeatureScaler::identity();
    m.target_min = 0.0;
    m.target_max = 2000.0;
    CHECK(m.unscale_target(0.5) == 1000.0);
    CHECK(m.scale_target(1000.0) == 0.5);
    m.net = Network(m.config, 1);
    for (double& p : m.net.params()) p = 0.0;
    const auto& head = *std::find_if(m.net.layout().begin(), m.net.layout().end(),
                                     [](const TensorSpec& t) { return t.name == "head.b"; });
    m.net.params()[head.offset] = -0.1;
    const auto window = features::build_feature_matrix(clean, "P0", 10, 4, m.members, m.scaler);
    CHECK(predict(m, window, 1) == 0.0);
    m.net.params()[head.offset] = 0.25;
    CHECK(predict(m, window, 1) == doctest::Approx(500.0));
    CHECK_THROWS_AS(predict(m, window, 3), PreconditionError);
}

TEST_CASE("parameter bundles round-trip") {
    const auto clean = v2n::testing::make_dataset({{45.0, 7.6}, {45.01, 7.6}},
                                                  {v2n::testing::daily_wave(60, 800), v2n::testing::daily_wave(60, 300)});
    TrainedModel m;
    m.config = small(ModelKind::tcnlstm, 2);
    m.horizon = 3;
    m.members = features::build_neighborhood(clean, "P0", 5.0);
    m.scaler = features::FeatureScaler::fit(clean, m.members, 0, 40);
    m.target_min = 1.0;
    m.target_max = 800.0;
    m.net = Network(m.config, input_width(2, m.config.inputs));
    m.net.initialize(3);
    const auto window = features::build_feature_matrix(clean, "P0", 50, 4, m.members, m.scaler);
    for (const std::string ext : {".bin", ".json"}) {
        const auto path = temp_path("model" + ext);
        save_model(m, path);
        const auto back = load_model(path);
        CHECK(back.horizon == 3);
        CHECK(back.members.members == m.members.members);
        CHECK(back.scaler.max(features::kFlow) == m.scaler.max(features::kFlow));
        CHECK(std::equal(back.net.params().begin(), back.net.params().end(), m.net.params().begin()));
        CHECK(predict(back, window, 3) == predict(m, window, 3));
        std::filesystem::remove(path);
    }
    const auto junk = temp_path("junk.bin");
    std::ofstream(junk) << "not a bundle";
    CHECK_THROWS_AS(load_model(junk), FormatError);
    std::filesystem::remove(junk);
}

TEST_CASE("forward is a pure function of parameters and window") {
    auto cfg = small(ModelKind::tcn);
    Network net(cfg, 3);
    net.initialize(1);
    const auto data = random_samples(3, cfg.history, 3, 10, [](const Mat&) { return 0.0; });
    const double first = net.forward(data[0].sequence);
    net.forward(data[1].sequence);
    CHECK(net.forward(data[0].sequence) == first);
}
