#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace v2n::testing {

// P_Q straight from the factorial form, in long double:
// p0 = [sum_{n<c} a^n/n! + a^c/(c! (1-rho))]^-1, P_Q = p0 a^c / (c! (1-rho)).
inline long double erlang_c_factorial(long double lambda, long double mu, unsigned c) {
    const long double a = lambda / mu;
    const long double rho = a / c;
    long double term = 1.0L;  // a^n / n!
    long double sum = 0.0L;
    for (unsigned n = 0; n < c; ++n) {
        sum += term;
        term *= a / (n + 1);
    }
    // term is now a^c / c!
    const long double tail = term / (1.0L - rho);
    return tail / (sum + tail);
}

inline long double empty_probability_factorial(long double lambda, long double mu, unsigned c) {
    const long double a = lambda / mu;
    const long double rho = a / c;
    long double term = 1.0L;
    long double sum = 0.0L;
    for (unsigned n = 0; n < c; ++n) {
        sum += term;
        term *= a / (n + 1);
    }
    return 1.0L / (sum + term / (1.0L - rho));
}

// One-sided sign test: P(X >= successes) for X ~ Binomial(trials, 1/2).
inline double sign_test_p(std::size_t successes, std::size_t trials) {
    double p = 0.0;
    for (std::size_t i = successes; i <= trials; ++i) {
        p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(i + 1.0) -
                      std::lgamma(trials - i + 1.0) - trials * std::log(2.0));
    }
    return p;
}

// Central differences of a scalar function of `params`, step eps.
inline std::vector<double> numeric_gradient(std::span<double> params,
                                            const std::function<double()>& loss,
                                            double eps = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + eps;
        const double up = loss();
        params[i] = keep - eps;
        const double down = loss();
        params[i] = keep;
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

// Largest |a - n| / max(|a|, |n|, floor). The floor keeps components that
// are zero up to rounding from dominating; at eps = 1e-5 the difference
// quotient carries about 1e-11 of rounding noise.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

}  // namespace v2n::testing
