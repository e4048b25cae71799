#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bpm/core.hpp"
#include "bpm/numeric.hpp"
#include "bpm/rng.hpp"

namespace bpm {

// ---------------------------------------------------------------------------
// Subscription service: demand generated in round s keeps paying with
// geometric retention beta. The policy is fed a telescoped per-round loss so
// the core algorithms run unchanged; the ledger tracks the true profit.

struct SubscriptionConfig {
    std::vector<double> betas;  // one retention factor per market, each in [0,1)
    std::uint64_t T = 0;

    void validate() const {
        if (T == 0) throw ParameterError("SubscriptionConfig: T must be >= 1");
        for (double b : betas)
            if (!(b >= 0.0 && b < 1.0))
                throw ParameterError("SubscriptionConfig: every beta must be in [0,1)");
    }
};

// Telescoped per-round profit (1 - beta^(T-t+1)) * p * d - c; summing these
// and dividing by (1 - beta) recovers the true cumulative profit exactly.
inline NormalizedLoss subscription_loss(const SubscriptionConfig& cfg, std::uint64_t t,
                                        const Action& action, const DemandVector& demands) {
    if (t < 1 || t > cfg.T) throw ParameterError("subscription_loss: round out of range");
    if (action.costs.size() != cfg.betas.size() || demands.demands.size() != cfg.betas.size())
        throw DimensionError("subscription_loss: dimension mismatch");
    NormalizedLoss out;
    out.per_market.resize(cfg.betas.size());
    for (std::size_t i = 0; i < cfg.betas.size(); ++i) {
        double coeff = 1.0 - std::pow(cfg.betas[i], static_cast<double>(cfg.T - t + 1));
        double profit = coeff * action.price * demands.demands[i] - action.costs[i];
        out.per_market[i] = 0.5 * (1.0 - profit);
        out.total += out.per_market[i];
    }
    return out;
}

struct SubscriptionLedger {
    SubscriptionConfig cfg;
    std::vector<double> active;   // sum over s<=t of beta^(t-s) d_{s,i}
    std::vector<double> revenue;  // sum over s<=t of beta^(t-s) p_s d_{s,i}
    double cumulative_profit = 0.0;

    explicit SubscriptionLedger(SubscriptionConfig c) : cfg(std::move(c)) {
        cfg.validate();
        active.assign(cfg.betas.size(), 0.0);
        revenue.assign(cfg.betas.size(), 0.0);
    }

    // true round profit: revenue from all currently active users minus the
    // rescaled marketing spend c / (1 - beta)
    double record_round(const Action& action, const DemandVector& demands) {
        double round_profit = 0.0;
        for (std::size_t i = 0; i < cfg.betas.size(); ++i) {
            active[i] = cfg.betas[i] * active[i] + demands.demands[i];
            revenue[i] = cfg.betas[i] * revenue[i] + action.price * demands.demands[i];
            round_profit += revenue[i] - action.costs[i] / (1.0 - cfg.betas[i]);
        }
        cumulative_profit += round_profit;
        return round_profit;
    }
};

// ---------------------------------------------------------------------------
// Promotional credit: an exogenous arrival mass r scales the per-market
// profit inside the loss; the core algorithms run unmodified.

struct PromoConfig {
    std::vector<std::vector<double>> r;  // [t-1][market], each in [0,1]

    void validate() const {
        for (const auto& row : r)
            for (double v : row)
                if (!(v >= 0.0 && v <= 1.0))
                    throw ParameterError("PromoConfig: every r must be in [0,1]");
    }
};

inline NormalizedLoss promo_loss(const PromoConfig& cfg, std::uint64_t t, const Action& action,
                                 const DemandVector& demands) {
    if (t < 1 || t > cfg.r.size()) throw ParameterError("promo_loss: no arrivals for this round");
    const auto& row = cfg.r[t - 1];
    if (row.size() != action.costs.size() || row.size() != demands.demands.size())
        throw DimensionError("promo_loss: dimension mismatch");
    NormalizedLoss out;
    out.per_market.resize(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        double profit = row[i] * (action.price * demands.demands[i] - action.costs[i]);
        out.per_market[i] = 0.5 * (1.0 - profit);
        out.total += out.per_market[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Profit-maximizing A/B test: finitely many marketing alternatives per market
// replace the cost grid; otherwise the decomposed Hedge structure is intact.

struct ABConfig {
    std::size_t M = 2;                            // number of alternatives
    std::size_t K = 1;                            // price discretization
    std::vector<std::vector<double>> cost_schedule;  // [t-1][alternative], in [0,1]

    void validate() const {
        if (M < 2) throw ParameterError("ABConfig: M must be >= 2");
        if (K == 0) throw ParameterError("ABConfig: K must be >= 1");
        for (const auto& row : cost_schedule) {
            if (row.size() != M) throw DimensionError("ABConfig: schedule row size != M");
            for (double c : row)
                if (!(c >= 0.0 && c <= 1.0))
                    throw ParameterError("ABConfig: every alternative cost must be in [0,1]");
        }
    }

    double cost(std::uint64_t t, std::size_t alt) const {
        if (t < 1 || t > cost_schedule.size())
            throw ParameterError("ABConfig: no cost schedule for this round");
        return cost_schedule[t - 1][alt];
    }
};

inline double ab_default_gamma(double eta, std::size_t M, std::size_t K) {
    return eta * std::sqrt(static_cast<double>(M) / static_cast<double>(K));
}

struct ABChosen {
    std::vector<std::size_t> alt_idx;  // chosen alternative per market
    std::size_t price_idx = 0;
};

struct ABPolicyState {
    ABConfig cfg;
    double eta = 0.0;
    double gamma = 0.0;
    PriceGrid grid;
    std::vector<double> price_logw;                          // K+1
    std::vector<std::vector<std::vector<double>>> alt_logw;  // [n][K+1][M]
    std::uint64_t round = 1;
};

inline ABPolicyState ab_init(const ABConfig& cfg, std::size_t n, double eta, double gamma) {
    cfg.validate();
    if (!(eta > 0.0 && gamma > 0.0)) throw ParameterError("ab_init: eta and gamma must be > 0");
    ABPolicyState s;
    s.cfg = cfg;
    s.eta = eta;
    s.gamma = gamma;
    s.grid = make_price_grid(cfg.K);
    s.price_logw.assign(cfg.K + 1, 0.0);
    s.alt_logw.assign(n,
                      std::vector<std::vector<double>>(cfg.K + 1, std::vector<double>(cfg.M, 0.0)));
    return s;
}

inline Action ab_sample_action(ABPolicyState& s, std::uint64_t t, Rng& rng, ABChosen& chosen) {
    auto qp = softmax(s.price_logw);
    chosen.price_idx = sample_categorical(qp, rng);
    std::size_t n = s.alt_logw.size();
    chosen.alt_idx.resize(n);
    Action a;
    a.price = s.grid.points[chosen.price_idx];
    a.costs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto qa = softmax(s.alt_logw[i][chosen.price_idx]);
        chosen.alt_idx[i] = sample_categorical(qa, rng);
        a.costs[i] = s.cfg.cost(t, chosen.alt_idx[i]);
    }
    return a;
}

inline NormalizedLoss ab_loss(const ABPolicyState& s, std::uint64_t t, const ABChosen& chosen,
                              double price, const DemandVector& demands) {
    NormalizedLoss out;
    std::size_t n = s.alt_logw.size();
    out.per_market.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double profit = price * demands.demands[i] - s.cfg.cost(t, chosen.alt_idx[i]);
        out.per_market[i] = 0.5 * (1.0 - profit);
        out.total += out.per_market[i];
    }
    return out;
}

inline void ab_update(ABPolicyState& s, const ABChosen& chosen, const NormalizedLoss& losses) {
    if (!std::isfinite(losses.total)) throw RangeError("ab_update: non-finite loss");
    std::size_t n = s.alt_logw.size();
    auto qp = softmax(s.price_logw);
    for (std::size_t i = 0; i < n; ++i) {
        auto qa = softmax(s.alt_logw[i][chosen.price_idx]);
        double denom = qa[chosen.alt_idx[i]] * (qp[chosen.price_idx] + s.gamma);
        s.alt_logw[i][chosen.price_idx][chosen.alt_idx[i]] -= s.eta * losses.per_market[i] / denom;
    }
    double card = static_cast<double>(s.cfg.K + 1);
    double scaled_total = losses.total / static_cast<double>(n);
    for (std::size_t p = 0; p <= s.cfg.K; ++p) {
        double first = (p == chosen.price_idx) ? scaled_total / (qp[p] + s.gamma) : 0.0;
        double second = s.eta * card * (1.0 / s.gamma - 1.0 / (qp[p] + s.gamma));
        s.price_logw[p] -= s.eta * (first + second);
    }
    s.round += 1;
}

}  // namespace bpm
