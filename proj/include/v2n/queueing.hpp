#pragma once

#include <cstddef>
#include <cstdint>

namespace v2n::queueing {

// Snapshot of an M/M/c system. Rates are per second.
struct QueueSizing {
    double lambda = 0.0;
    double mu = 0.0;
    std::size_t c = 1;
    double rho = 0.0;  // lambda / (c mu)
    double p0 = 1.0;   // probability of an empty system
    double pq = 0.0;   // probability that an arrival waits
    double T = 0.0;    // mean time in system, seconds
};

// Erlang B blocking probability for offered load a = lambda / mu.
double erlang_b(double a, std::size_t c);

// Waiting probability P_Q. Throws InstabilityError when lambda >= c mu and
// PreconditionError on bad arguments.
double erlang_c(double lambda, double mu, std::size_t c);

double empty_probability(double lambda, double mu, std::size_t c);

// 1/mu + P_Q / (c mu - lambda).
double mean_system_time(double lambda, double mu, std::size_t c);

// Smallest c, counting up from 1, with lambda < c mu and T(c) <= T0.
// Throws InfeasibleError when T0 <= 1/mu.
std::size_t min_servers(double lambda, double mu, double T0);

QueueSizing size(double lambda, double mu, std::size_t c);

struct SimulationResult {
    double mean_sojourn = 0.0;  // seconds
    double half_width = 0.0;    // 95% confidence, batch means
    std::size_t measured = 0;   // arrivals kept after warmup
};

// FIFO M/M/c simulation; the first 10% of arrivals are discarded.
// Throws InstabilityError for lambda >= c mu and PreconditionError for
// fewer than 10^4 arrivals.
SimulationResult simulate_mmc(double lambda, double mu, std::size_t c, std::size_t arrivals,
                              std::uint64_t seed);

}  // namespace v2n::queueing
