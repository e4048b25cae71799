#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bpm {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct RangeError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One round's decision: a common price plus one marketing cost per market.
struct Action {
    std::vector<double> costs;
    double price = 0.0;

    std::size_t n() const { return costs.size(); }

    void validate() const {
        if (price < 0.0 || price > 1.0) throw RangeError("Action: price outside [0,1]");
        for (double c : costs)
            if (c < 0.0 || c > 1.0) throw RangeError("Action: cost outside [0,1]");
    }
};

struct DemandVector {
    std::vector<double> demands;

    std::size_t n() const { return demands.size(); }

    void validate() const {
        for (double d : demands)
            if (d < 0.0 || d > 1.0) throw RangeError("DemandVector: demand outside [0,1]");
    }
};

struct ProfitBreakdown {
    std::vector<double> per_market;  // each in [-1, 1]
    double total = 0.0;              // in [-n, n]
};

struct NormalizedLoss {
    std::vector<double> per_market;  // each in [0, 1]
    double total = 0.0;              // in [0, n]
};

struct PriceGrid {
    std::size_t K = 0;
    std::vector<double> points;  // {0, 1/K, ..., 1}, K+1 entries

    std::size_t size() const { return points.size(); }
};

inline ProfitBreakdown compute_profit(const Action& action, const DemandVector& demands) {
    if (action.costs.size() != demands.demands.size())
        throw DimensionError("compute_profit: action/demand length mismatch");
    ProfitBreakdown out;
    out.per_market.resize(action.costs.size());
    for (std::size_t i = 0; i < action.costs.size(); ++i) {
        out.per_market[i] = action.price * demands.demands[i] - action.costs[i];
        out.total += out.per_market[i];
    }
    return out;
}

// Per-market profits are never clamped: values outside [-1,1] indicate a bug
// upstream (bad environment or action) and must surface, not be masked.
inline NormalizedLoss normalize_loss(const ProfitBreakdown& profit) {
    NormalizedLoss out;
    out.per_market.resize(profit.per_market.size());
    for (std::size_t i = 0; i < profit.per_market.size(); ++i) {
        double p = profit.per_market[i];
        if (!(p >= -1.0 && p <= 1.0))
            throw RangeError("normalize_loss: per-market profit outside [-1,1]");
        out.per_market[i] = 0.5 * (1.0 - p);
        out.total += out.per_market[i];
    }
    return out;
}

inline PriceGrid make_price_grid(std::size_t K) {
    if (K == 0) throw ParameterError("make_price_grid: K must be >= 1");
    PriceGrid g;
    g.K = K;
    g.points.resize(K + 1);
    for (std::size_t j = 0; j <= K; ++j)
        g.points[j] = static_cast<double>(j) / static_cast<double>(K);
    return g;
}

}  // namespace bpm
