#pragma once

#include "v2n/neural.hpp"

namespace v2n::neural {

// Pre-activation of the depthwise temporal convolution, (T - K + 1) x D.
Mat conv_forward(const Mat& input, const Eigen::Ref<const Mat>& kernel,
                 const Eigen::Ref<const Vec>& bias);

// `dpre` is the gradient w.r.t. the pre-activation. Returns d/d(input).
Mat conv_backward(const Mat& input, const Mat& dpre, const Eigen::Ref<const Mat>& kernel,
                  Eigen::Ref<Mat> dkernel, Eigen::Ref<Vec> dbias);

}  // namespace v2n::neural
