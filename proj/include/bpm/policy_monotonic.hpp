#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "bpm/core.hpp"
#include "bpm/numeric.hpp"
#include "bpm/rng.hpp"

namespace bpm {

struct MonotonicParams {
    std::size_t n = 1;
    std::size_t K = 1;
    double eta = 0.0;
    double gamma = 0.0;

    void validate() const {
        if (n == 0) throw ParameterError("MonotonicParams: n must be >= 1");
        if (K == 0) throw ParameterError("MonotonicParams: K must be >= 1");
        if (!(eta > 0.0)) throw ParameterError("MonotonicParams: eta must be > 0");
        if (!(gamma > 0.0)) throw ParameterError("MonotonicParams: gamma must be > 0");
    }
};

// Indices (on the K+1 point grids) chosen in the current round; needed by the
// estimators because the indicator terms compare against the realized sample.
struct MonotonicChosen {
    std::vector<std::size_t> cost_idx;  // one per market
    std::size_t price_idx = 0;
};

// One Hedge over prices plus, per market and per price, one Hedge over costs.
// All weights live in log space; distributions are realized via softmax.
struct MonotonicPolicyState {
    MonotonicParams params;
    PriceGrid grid;
    std::vector<double> price_logw;                           // K+1
    std::vector<std::vector<std::vector<double>>> cost_logw;  // [n][K+1][K+1]
    std::uint64_t round = 1;
    bool poisoned = false;

    void check_usable() const {
        if (poisoned) throw RangeError("MonotonicPolicyState: state poisoned by non-finite loss");
    }
};

inline MonotonicPolicyState monotonic_init(const MonotonicParams& params) {
    params.validate();
    MonotonicPolicyState s;
    s.params = params;
    s.grid = make_price_grid(params.K);
    s.price_logw.assign(params.K + 1, 0.0);
    s.cost_logw.assign(
        params.n, std::vector<std::vector<double>>(params.K + 1, std::vector<double>(params.K + 1, 0.0)));
    return s;
}

inline std::vector<double> monotonic_price_dist(const MonotonicPolicyState& s) {
    return softmax(s.price_logw);
}

inline std::vector<double> monotonic_cost_dist(const MonotonicPolicyState& s, std::size_t market,
                                               std::size_t price_idx) {
    return softmax(s.cost_logw[market][price_idx]);
}

inline Action monotonic_sample_action(MonotonicPolicyState& s, Rng& rng, MonotonicChosen& chosen) {
    s.check_usable();
    auto qp = monotonic_price_dist(s);
    chosen.price_idx = sample_categorical(qp, rng);
    chosen.cost_idx.resize(s.params.n);
    Action a;
    a.price = s.grid.points[chosen.price_idx];
    a.costs.resize(s.params.n);
    for (std::size_t i = 0; i < s.params.n; ++i) {
        auto qc = monotonic_cost_dist(s, i, chosen.price_idx);
        chosen.cost_idx[i] = sample_categorical(qc, rng);
        a.costs[i] = s.grid.points[chosen.cost_idx[i]];
    }
    return a;
}

// Importance-weighted per-market loss estimate; nonzero only at the realized
// (cost, price) cell of market i.
inline double monotonic_estimator_f(const MonotonicPolicyState& s, const MonotonicChosen& chosen,
                                    const NormalizedLoss& losses, std::size_t market,
                                    std::size_t query_cost_idx, std::size_t query_price_idx) {
    if (query_price_idx != chosen.price_idx || query_cost_idx != chosen.cost_idx[market]) return 0.0;
    auto qp = monotonic_price_dist(s);
    auto qc = monotonic_cost_dist(s, market, chosen.price_idx);
    double denom = qc[chosen.cost_idx[market]] * (qp[chosen.price_idx] + s.params.gamma);
    return losses.per_market[market] / denom;
}

// Price-level estimate: importance-weighted total loss (scaled by 1/n) plus an
// optimistic exploration bonus that shrinks the estimate at rarely played prices.
inline double monotonic_estimator_h(const MonotonicPolicyState& s, std::size_t chosen_price_idx,
                                    const NormalizedLoss& losses, std::size_t query_price_idx) {
    auto qp = monotonic_price_dist(s);
    double g = s.params.gamma;
    double first = 0.0;
    if (query_price_idx == chosen_price_idx) {
        first = (losses.total / static_cast<double>(s.params.n)) / (qp[chosen_price_idx] + g);
    }
    double card = static_cast<double>(s.params.K + 1);
    double second = s.params.eta * card * (1.0 / g - 1.0 / (qp[query_price_idx] + g));
    return first + second;
}

inline void monotonic_update(MonotonicPolicyState& s, const MonotonicChosen& chosen,
                             const NormalizedLoss& losses) {
    s.check_usable();
    if (!std::isfinite(losses.total)) {
        s.poisoned = true;
        throw RangeError("monotonic_update: non-finite loss");
    }
    for (double l : losses.per_market) {
        if (!std::isfinite(l)) {
            s.poisoned = true;
            throw RangeError("monotonic_update: non-finite loss");
        }
    }
    auto qp = monotonic_price_dist(s);
    // f-hat is zero except at the chosen (cost, price) cell of each market.
    for (std::size_t i = 0; i < s.params.n; ++i) {
        auto qc = monotonic_cost_dist(s, i, chosen.price_idx);
        double denom = qc[chosen.cost_idx[i]] * (qp[chosen.price_idx] + s.params.gamma);
        double fhat = losses.per_market[i] / denom;
        s.cost_logw[i][chosen.price_idx][chosen.cost_idx[i]] -= s.params.eta * fhat;
    }
    double g = s.params.gamma;
    double card = static_cast<double>(s.params.K + 1);
    double scaled_total = losses.total / static_cast<double>(s.params.n);
    for (std::size_t p = 0; p <= s.params.K; ++p) {
        double first = (p == chosen.price_idx) ? scaled_total / (qp[p] + g) : 0.0;
        double second = s.params.eta * card * (1.0 / g - 1.0 / (qp[p] + g));
        s.price_logw[p] -= s.params.eta * (first + second);
    }
    s.round += 1;
}

inline nlohmann::json monotonic_to_json(const MonotonicPolicyState& s) {
    return nlohmann::json{{"format", "monotonic-policy"},
                          {"version", 1},
                          {"n", s.params.n},
                          {"K", s.params.K},
                          {"eta", s.params.eta},
                          {"gamma", s.params.gamma},
                          {"round", s.round},
                          {"price_logweights", s.price_logw},
                          {"cost_logweights", s.cost_logw}};
}

inline MonotonicPolicyState monotonic_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "monotonic-policy" || j.value("version", 0) != 1)
        throw ParameterError("monotonic_from_json: unrecognized checkpoint format/version");
    MonotonicParams p;
    p.n = j.at("n").get<std::size_t>();
    p.K = j.at("K").get<std::size_t>();
    p.eta = j.at("eta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    MonotonicPolicyState s = monotonic_init(p);
    s.round = j.at("round").get<std::uint64_t>();
    s.price_logw = j.at("price_logweights").get<std::vector<double>>();
    s.cost_logw = j.at("cost_logweights").get<std::vector<std::vector<std::vector<double>>>>();
    if (s.price_logw.size() != p.K + 1 || s.cost_logw.size() != p.n)
        throw ParameterError("monotonic_from_json: weight dimensions do not match params");
    return s;
}

}  // namespace bpm
