#include <string>

#include "v2n/error.hpp"
#include "conv.hpp"
#include "v2n/neural.hpp"

namespace v2n::neural {

namespace {

Vec sigmoid(const Vec& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Vec tanh_vec(const Vec& z) { return z.array().tanh().matrix(); }

void check_shape(bool ok, const char* what) {
    if (!ok) {
        throw ShapeError(std::string("shape mismatch: ") + what);
    }
}

}  // namespace

LstmOutput lstm_cell_step(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                          const LstmWeights& w, LstmCache* cache) {
    const Eigen::Index H = h_prev.size();
    check_shape(w.W.rows() == 4 * H && w.U.rows() == 4 * H && w.U.cols() == H &&
                    w.b.size() == 4 * H,
                "LSTM gate blocks must have 4H rows");
    check_shape(w.W.cols() == x.size(), "LSTM input width");
    check_shape(c_prev.size() == H, "LSTM cell state width");

    const Vec z = w.W * x + w.U * h_prev + w.b;
    Vec i = sigmoid(z.segment(0, H));
    Vec f = sigmoid(z.segment(H, H));
    Vec g = tanh_vec(z.segment(2 * H, H));
    Vec o = sigmoid(z.segment(3 * H, H));
    Vec c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    Vec tc = tanh_vec(c);
    LstmOutput out{o.cwiseProduct(tc), c};
    if (cache != nullptr) {
        *cache = LstmCache{x, h_prev, c_prev, std::move(i), std::move(f),
                           std::move(g), std::move(o), std::move(c), std::move(tc)};
    }
    return out;
}

CellInputGrads lstm_cell_backward(const LstmCache& k, const Vec& dh, const Vec& dc,
                                  const LstmWeights& w, LstmGrads& acc) {
    const Eigen::Index H = k.h_prev.size();
    const Vec d_o = dh.cwiseProduct(k.tanh_c);
    const Vec dc_total =
        dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix());

    Vec dz(4 * H);
    dz.segment(0, H) = dc_total.cwiseProduct(k.g).array() * k.i.array() * (1.0 - k.i.array());
    dz.segment(H, H) = dc_total.cwiseProduct(k.c_prev).array() * k.f.array() * (1.0 - k.f.array());
    dz.segment(2 * H, H) = dc_total.cwiseProduct(k.i).array() * (1.0 - k.g.array().square());
    dz.segment(3 * H, H) = d_o.array() * k.o.array() * (1.0 - k.o.array());

    acc.W.noalias() += dz * k.x.transpose();
    acc.U.noalias() += dz * k.h_prev.transpose();
    acc.b += dz;
    return CellInputGrads{w.W.transpose() * dz, w.U.transpose() * dz, dc_total.cwiseProduct(k.f)};
}

Vec gru_cell_step(const Vec& x, const Vec& h_prev, const GruWeights& w, GruCache* cache) {
    const Eigen::Index H = h_prev.size();
    check_shape(w.W.rows() == 3 * H && w.U.rows() == 3 * H && w.U.cols() == H &&
                    w.b.size() == 3 * H,
                "GRU gate blocks must have 3H rows");
    check_shape(w.W.cols() == x.size(), "GRU input width");

    const Vec a = w.W * x + w.b;
    Vec z = sigmoid(a.segment(0, H) + w.U.middleRows(0, H) * h_prev);
    Vec r = sigmoid(a.segment(H, H) + w.U.middleRows(H, H) * h_prev);
    Vec rh = r.cwiseProduct(h_prev);
    Vec n = tanh_vec(a.segment(2 * H, H) + w.U.middleRows(2 * H, H) * rh);
    Vec h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(n);
    if (cache != nullptr) {
        *cache = GruCache{x, h_prev, std::move(z), std::move(r), std::move(n), std::move(rh)};
    }
    return h;
}

CellInputGrads gru_cell_backward(const GruCache& k, const Vec& dh, const GruWeights& w,
                                 GruGrads& acc) {
    const Eigen::Index H = k.h_prev.size();
    const Vec dn = dh.cwiseProduct(k.z);
    const Vec dz = dh.cwiseProduct(k.n - k.h_prev);
    Vec dh_prev = dh.cwiseProduct((1.0 - k.z.array()).matrix());

    const Vec dan = dn.array() * (1.0 - k.n.array().square());
    const Vec drh = w.U.middleRows(2 * H, H).transpose() * dan;
    const Vec dr = drh.cwiseProduct(k.h_prev);
    dh_prev += drh.cwiseProduct(k.r);
    const Vec daz = dz.array() * k.z.array() * (1.0 - k.z.array());
    const Vec dar = dr.array() * k.r.array() * (1.0 - k.r.array());

    Vec da(3 * H);
    da << daz, dar, dan;
    acc.W.noalias() += da * k.x.transpose();
    acc.b += da;
    acc.U.middleRows(0, H).noalias() += daz * k.h_prev.transpose();
    acc.U.middleRows(H, H).noalias() += dar * k.h_prev.transpose();
    acc.U.middleRows(2 * H, H).noalias() += dan * k.rh.transpose();
    dh_prev.noalias() += w.U.middleRows(0, H).transpose() * daz;
    dh_prev.noalias() += w.U.middleRows(H, H).transpose() * dar;
    return CellInputGrads{w.W.transpose() * da, std::move(dh_prev), Vec()};
}

std::size_t kernel_length(std::size_t history) {
    if (history < 4) {
        throw PreconditionError("TCN needs a history of at least 4 steps, got " +
                                std::to_string(history));
    }
    if (history % 4 != 0) {
        throw PreconditionError("TCN history must be divisible by 4, got " +
                                std::to_string(history));
    }
    return history / 4;
}

Mat conv_forward(const Mat& input, const Eigen::Ref<const Mat>& kernel,
                 const Eigen::Ref<const Vec>& bias) {
    const Eigen::Index K = kernel.rows();
    const Eigen::Index D = input.cols();
    check_shape(kernel.cols() == D && bias.size() == D, "convolution channels");
    check_shape(input.rows() >= K, "convolution window shorter than kernel");
    const Eigen::Index out_len = input.rows() - K + 1;
    Mat pre(out_len, D);
    for (Eigen::Index j = 0; j < out_len; ++j) {
        pre.row(j) = (input.middleRows(j, K).array() * kernel.array()).colwise().sum().matrix() +
                     bias.transpose();
    }
    return pre;
}

// dpre is already masked by the activation. Returns d/d(input).
Mat conv_backward(const Mat& input, const Mat& dpre, const Eigen::Ref<const Mat>& kernel,
                  Eigen::Ref<Mat> dkernel, Eigen::Ref<Vec> dbias) {
    const Eigen::Index K = kernel.rows();
    Mat dinput = Mat::Zero(input.rows(), input.cols());
    for (Eigen::Index j = 0; j < dpre.rows(); ++j) {
        for (Eigen::Index m = 0; m < K; ++m) {
            dkernel.row(m).array() += dpre.row(j).array() * input.row(j + m).array();
            dinput.row(j + m).array() += dpre.row(j).array() * kernel.row(m).array();
        }
    }
    dbias += dpre.colwise().sum().transpose();
    return dinput;
}

Vec tcn_forward(const Mat& window, const TcnWeights& w, TcnCache* cache) {
    Mat pre = conv_forward(window, w.kernel, w.conv_bias);
    // Time-major flattening: element (j, d) lands at j * D + d.
    const Mat activated = pre.cwiseMax(0.0);
    const Mat activated_t = activated.transpose();
    const Vec flat = Eigen::Map<const Vec>(activated_t.data(), activated_t.size());
    check_shape(w.dense_W.cols() == flat.size() && w.dense_b.size() == w.dense_W.rows(),
                "TCN dense layer width");
    Vec dense_pre = w.dense_W * flat + w.dense_b;
    Vec out = dense_pre.cwiseMax(0.0);
    if (cache != nullptr) {
        *cache = TcnCache{window, std::move(pre), flat, std::move(dense_pre)};
    }
    return out;
}

Mat tcn_backward(const TcnCache& k, const Vec& dout, const TcnWeights& w, TcnGrads& acc) {
    const Vec ddense = (k.dense_pre.array() > 0.0).select(dout, 0.0);
    acc.dense_W.noalias() += ddense * k.flat.transpose();
    acc.dense_b += ddense;
    const Vec dflat = w.dense_W.transpose() * ddense;
    const Eigen::Index D = k.conv_pre.cols();
    const Eigen::Index out_len = k.conv_pre.rows();
    Mat dpre(out_len, D);
    for (Eigen::Index j = 0; j < out_len; ++j) {
        for (Eigen::Index d = 0; d < D; ++d) {
            dpre(j, d) = k.conv_pre(j, d) > 0.0 ? dflat(j * D + d) : 0.0;
        }
    }
    return conv_backward(k.input, dpre, w.kernel, acc.kernel, acc.conv_bias);
}

}  // namespace v2n::neural
