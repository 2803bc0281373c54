#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "v2n/error.hpp"
#include "v2n/neural.hpp"
#include "v2n/random.hpp"

namespace v2n::neural {

namespace {

void check_samples(const Network& net, const std::vector<Sample>& data) {
    for (const auto& s : data) {
        if (static_cast<std::size_t>(s.sequence.rows()) != net.config().history ||
            static_cast<std::size_t>(s.sequence.cols()) != net.input_width()) {
            throw ShapeError("training sample shape differs from the network input");
        }
    }
}

}  // namespace

double mean_squared_error(const Network& net, const std::vector<Sample>& data) {
    if (data.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& s : data) {
        const double e = net.forward(s.sequence) - s.target;
        sum += e * e;
    }
    return sum / static_cast<double>(data.size());
}

Network train(const NetConfig& config, const std::vector<Sample>& data, TrainMode mode,
              const Network* start, TrainReport* report) {
    if (data.empty()) {
        throw PreconditionError("training set is empty");
    }
    Network net;
    if (mode == TrainMode::online) {
        if (start == nullptr) {
            throw PreconditionError("online training needs offline parameters to start from");
        }
        net = *start;
    } else {
        net = Network(config, static_cast<std::size_t>(data.front().sequence.cols()));
        net.initialize(config.seed);
    }
    check_samples(net, data);

    const NetConfig& cfg = net.config();
    const std::size_t epochs = mode == TrainMode::offline ? config.epochs : 1;
    const double lr = config.learning_rate;
    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> grad(net.param_count());
    auto params = net.params();

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (mode == TrainMode::offline) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng.below(i)]);
            }
        }
        double epoch_sum = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
            const std::size_t b1 = std::min(order.size(), b0 + batch);
            const double weight = 2.0 / static_cast<double>(b1 - b0);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t j = b0; j < b1; ++j) {
                const Sample& s = data[order[j]];
                const double err = net.error_gradient(s.sequence, s.target, weight, grad);
                epoch_sum += err * err;
            }
            if (!std::isfinite(epoch_sum)) {
                std::ostringstream msg;
                msg << "training loss became non-finite in epoch " << epoch + 1 << " of "
                    << model_name(cfg.model) << "; try a smaller learning rate than " << lr;
                throw NumericError(msg.str());
            }
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= lr * grad[i];
            }
        }
        if (report != nullptr) {
            report->epoch_loss.push_back(mean_squared_error(net, data));
        }
    }
    return net;
}

std::size_t input_width(std::size_t probes, InputMode inputs) {
    return inputs == InputMode::full ? probes * features::kFeatureCount : probes;
}

Mat to_sequence(const features::FeatureMatrix& window, InputMode inputs) {
    const std::size_t P = window.probes.size();
    const std::size_t h = window.history;
    Mat seq(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(input_width(P, inputs)));
    for (std::size_t step = 0; step < h; ++step) {
        const std::size_t lag = h - step;  // oldest first
        for (std::size_t p = 0; p < P; ++p) {
            const auto& row = window.at(lag, p);
            if (inputs == InputMode::full) {
                for (std::size_t f = 0; f < features::kFeatureCount; ++f) {
                    seq(static_cast<Eigen::Index>(step),
                        static_cast<Eigen::Index>(p * features::kFeatureCount + f)) = row[f];
                }
            } else {
                seq(static_cast<Eigen::Index>(step), static_cast<Eigen::Index>(p)) =
                    row[features::kFlow];
            }
        }
    }
    return seq;
}

double TrainedModel::scale_target(double flow) const {
    const double range = target_max - target_min;
    return range > 0 ? (flow - target_min) / range : flow - target_min;
}

double TrainedModel::unscale_target(double scaled) const {
    const double range = target_max - target_min;
    return target_min + scaled * (range > 0 ? range : 1.0);
}

double predict(const TrainedModel& model, const features::FeatureMatrix& window, std::size_t k) {
    if (k != model.horizon) {
        throw PreconditionError("model was trained for look-ahead " +
                                std::to_string(model.horizon) + ", not " + std::to_string(k));
    }
    const double out = model.net.forward(to_sequence(window, model.config.inputs));
    return std::max(0.0, model.unscale_target(out));
}

}  // namespace v2n::neural
