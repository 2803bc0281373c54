#include "v2n/queueing.hpp"

#include <cmath>
#include <functional>
#include <queue>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "v2n/error.hpp"
#include "v2n/random.hpp"

namespace v2n::queueing {

namespace {

void check_args(double lambda, double mu, std::size_t c) {
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw PreconditionError("service rate mu must be positive");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw PreconditionError("arrival rate lambda must be non-negative");
    }
    if (c < 1) {
        throw PreconditionError("server count must be at least 1");
    }
}

void check_stable(double lambda, double mu, std::size_t c) {
    check_args(lambda, mu, c);
    if (lambda >= static_cast<double>(c) * mu) {
        throw InstabilityError("unstable queue: lambda " + std::to_string(lambda) + " >= c*mu " +
                               std::to_string(static_cast<double>(c) * mu));
    }
}

constexpr std::size_t kBatches = 20;

}  // namespace

double erlang_b(double a, std::size_t c) {
    double b = 1.0;
    for (std::size_t k = 1; k <= c; ++k) {
        b = a * b / (static_cast<double>(k) + a * b);
    }
    return b;
}

double erlang_c(double lambda, double mu, std::size_t c) {
    check_stable(lambda, mu, c);
    const double a = lambda / mu;
    const double b = erlang_b(a, c);
    const double cd = static_cast<double>(c);
    return cd * b / (cd - a * (1.0 - b));
}

double empty_probability(double lambda, double mu, std::size_t c) {
    check_stable(lambda, mu, c);
    if (lambda == 0.0) {
        return 1.0;
    }
    // p0 = P_Q c! (1 - rho) / a^c, evaluated in logs.
    const double a = lambda / mu;
    const double cd = static_cast<double>(c);
    const double rho = a / cd;
    return std::exp(std::log(erlang_c(lambda, mu, c)) + std::lgamma(cd + 1.0) +
                    std::log1p(-rho) - cd * std::log(a));
}

double mean_system_time(double lambda, double mu, std::size_t c) {
    const double pq = erlang_c(lambda, mu, c);
    return 1.0 / mu + pq / (static_cast<double>(c) * mu - lambda);
}

std::size_t min_servers(double lambda, double mu, double T0) {
    check_args(lambda, mu, 1);
    if (!(T0 > 1.0 / mu)) {
        throw InfeasibleError("target " + std::to_string(T0) + " s is not above the service time " +
                              std::to_string(1.0 / mu) + " s");
    }
    std::size_t c = 1;
    while (lambda >= static_cast<double>(c) * mu || mean_system_time(lambda, mu, c) > T0) {
        ++c;
    }
    return c;
}

QueueSizing size(double lambda, double mu, std::size_t c) {
    QueueSizing q;
    q.lambda = lambda;
    q.mu = mu;
    q.c = c;
    q.rho = lambda / (static_cast<double>(c) * mu);
    q.pq = erlang_c(lambda, mu, c);
    q.p0 = empty_probability(lambda, mu, c);
    q.T = 1.0 / mu + q.pq / (static_cast<double>(c) * mu - lambda);
    return q;
}

SimulationResult simulate_mmc(double lambda, double mu, std::size_t c, std::size_t arrivals,
                              std::uint64_t seed) {
    check_stable(lambda, mu, c);
    if (lambda == 0.0) {
        throw PreconditionError("simulation needs a positive arrival rate");
    }
    if (arrivals < 10000) {
        throw PreconditionError("simulation needs at least 10^4 arrivals");
    }
    Rng rng(seed);
    // Times at which each server next becomes free; FIFO order means every
    // arrival takes the earliest one.
    std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
    for (std::size_t i = 0; i < c; ++i) {
        free_at.push(0.0);
    }
    const std::size_t warmup = arrivals / 10;
    const std::size_t kept = arrivals - warmup;
    const std::size_t per_batch = kept / kBatches;
    std::vector<double> batch_sum(kBatches, 0.0);
    double total = 0.0;
    double clock = 0.0;
    for (std::size_t n = 0; n < arrivals; ++n) {
        clock += rng.exponential(lambda);
        const double service = rng.exponential(mu);
        const double start = std::max(clock, free_at.top());
        free_at.pop();
        const double done = start + service;
        free_at.push(done);
        if (n < warmup) {
            continue;
        }
        const double sojourn = done - clock;
        total += sojourn;
        const std::size_t b = (n - warmup) / per_batch;
        if (b < kBatches) {
            batch_sum[b] += sojourn;
        }
    }
    SimulationResult r;
    r.measured = kept;
    r.mean_sojourn = total / static_cast<double>(kept);
    double bm = 0.0;
    for (double s : batch_sum) {
        bm += s / static_cast<double>(per_batch);
    }
    bm /= kBatches;
    double var = 0.0;
    for (double s : batch_sum) {
        const double d = s / static_cast<double>(per_batch) - bm;
        var += d * d;
    }
    var /= static_cast<double>(kBatches - 1);
    const boost::math::students_t dist(static_cast<double>(kBatches - 1));
    r.half_width = boost::math::quantile(dist, 0.975) * std::sqrt(var / kBatches);
    return r;
}

}  // namespace v2n::queueing
