#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bpm/core.hpp"
#include "bpm/environments.hpp"
#include "bpm/numeric.hpp"
#include "bpm/policy_baseline.hpp"
#include "bpm/policy_concave.hpp"
#include "bpm/policy_monotonic.hpp"
#include "bpm/rng.hpp"
#include "bpm/variants.hpp"

namespace bpm {

enum class PolicyKind { Monotonic, Concave, JointExp3, Fixed, Uniform };
enum class VariantKind { None, Subscription, Promo };

inline std::string policy_kind_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::Monotonic: return "monotonic";
        case PolicyKind::Concave: return "concave";
        case PolicyKind::JointExp3: return "joint-exp3";
        case PolicyKind::Fixed: return "fixed";
        case PolicyKind::Uniform: return "uniform";
    }
    return "?";
}

inline std::string variant_kind_name(VariantKind k) {
    switch (k) {
        case VariantKind::None: return "none";
        case VariantKind::Subscription: return "subscription";
        case VariantKind::Promo: return "promo";
    }
    return "?";
}

// Theorem-default parameter schedules. The constant multiplier scales K and
// eta for sensitivity studies; 1 reproduces the published schedule.
inline MonotonicParams monotonic_defaults(std::size_t n, std::uint64_t T, double constant = 1.0) {
    if (T < 16) throw ParameterError("monotonic_defaults: T must be >= 16");
    MonotonicParams p;
    p.n = n;
    double Td = static_cast<double>(T);
    p.K = static_cast<std::size_t>(std::ceil(constant * std::pow(Td, 0.25) - 1e-9));
    p.eta = constant * std::pow(Td, -0.75);
    p.gamma = p.eta;
    return p;
}

inline ConcaveParams concave_defaults(std::size_t n, std::uint64_t T, double constant = 1.0,
                                      std::size_t m = 256) {
    if (T < 16) throw ParameterError("concave_defaults: T must be >= 16");
    ConcaveParams p;
    p.n = n;
    double Td = static_cast<double>(T);
    p.K = static_cast<std::size_t>(std::ceil(constant * std::cbrt(Td) - 1e-9));
    p.eta = constant * std::pow(Td, -2.0 / 3.0);
    p.epsilon = 1.0 / (Td * Td);
    p.delta = 1.0 / Td;
    p.gamma = p.eta * std::log(std::exp(1.0) / p.epsilon);  // = eta * (1 + 2 ln T)
    p.m = m;
    return p;
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::Monotonic;
    // zero fields fall back to the theorem defaults derived from (n, T)
    std::size_t K = 0;
    double eta = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t m = 256;
    double constant = 1.0;
    Action fixed_action;  // PolicyKind::Fixed only
};

struct VariantSpec {
    VariantKind kind = VariantKind::None;
    SubscriptionConfig subscription;
    PromoConfig promo;
};

inline MonotonicParams resolve_monotonic(const PolicySpec& spec, std::size_t n, std::uint64_t T) {
    MonotonicParams p = monotonic_defaults(n, T, spec.constant);
    if (spec.K) p.K = spec.K;
    if (spec.eta > 0.0) p.eta = spec.eta;
    p.gamma = spec.gamma > 0.0 ? spec.gamma : p.eta;
    return p;
}

inline ConcaveParams resolve_concave(const PolicySpec& spec, std::size_t n, std::uint64_t T) {
    ConcaveParams p = concave_defaults(n, T, spec.constant, spec.m);
    if (spec.K) p.K = spec.K;
    if (spec.eta > 0.0) p.eta = spec.eta;
    if (spec.epsilon > 0.0) p.epsilon = spec.epsilon;
    if (spec.delta > 0.0) p.delta = spec.delta;
    p.gamma = spec.gamma > 0.0 ? spec.gamma : p.eta * std::log(std::exp(1.0) / p.epsilon);
    return p;
}

struct EpisodeResult {
    double alg_profit = 0.0;
    std::vector<double> trace;  // per-round reported profit, kept on request
};

// One full policy-environment episode. The reported profit is the true profit
// of the selected variant; the policy always learns from the variant's loss.
inline EpisodeResult run_episode(const Environment& env, const PolicySpec& spec,
                                 const VariantSpec& variant, std::uint64_t seed,
                                 bool keep_trace = false, bool oracle_profit = false) {
    std::size_t n = env.n();
    std::uint64_t T = env.horizon();
    RunRngs rngs = make_run_rngs(seed);
    EpisodeResult result;
    if (keep_trace) result.trace.reserve(T);

    std::optional<MonotonicPolicyState> mono;
    std::optional<ConcavePolicyState> conc;
    std::optional<JointExp3State> joint;
    switch (spec.kind) {
        case PolicyKind::Monotonic: mono.emplace(monotonic_init(resolve_monotonic(spec, n, T))); break;
        case PolicyKind::Concave: conc.emplace(concave_init(resolve_concave(spec, n, T))); break;
        case PolicyKind::JointExp3: {
            MonotonicParams p = resolve_monotonic(spec, n, T);
            joint.emplace(joint_init(n, p.K, p.eta));
            break;
        }
        case PolicyKind::Fixed:
            if (spec.fixed_action.costs.size() != n)
                throw DimensionError("run_episode: fixed action has wrong market count");
            break;
        case PolicyKind::Uniform: break;
    }

    std::optional<SubscriptionLedger> ledger;
    if (variant.kind == VariantKind::Subscription) {
        SubscriptionConfig cfg = variant.subscription;
        if (cfg.betas.size() != n) throw DimensionError("run_episode: betas have wrong market count");
        if (cfg.T != T) throw ParameterError("run_episode: subscription horizon mismatch");
        ledger.emplace(cfg);
    }

    MonotonicChosen mono_chosen;
    ConcaveChosen conc_chosen;
    std::size_t joint_arm = 0;

    for (std::uint64_t t = 1; t <= T; ++t) {
        Action action;
        switch (spec.kind) {
            case PolicyKind::Monotonic: action = monotonic_sample_action(*mono, rngs.policy, mono_chosen); break;
            case PolicyKind::Concave: action = concave_sample_action(*conc, rngs.policy, conc_chosen); break;
            case PolicyKind::JointExp3:
                joint_arm = joint_sample(*joint, rngs.policy);
                action = joint_arm_action(*joint, joint_arm);
                break;
            case PolicyKind::Fixed: action = spec.fixed_action; break;
            case PolicyKind::Uniform: action = uniform_policy(n, rngs.policy); break;
        }

        DemandVector demands = env.sample(t, action, rngs.environment);

        NormalizedLoss loss;
        double reported = 0.0;
        switch (variant.kind) {
            case VariantKind::None: {
                ProfitBreakdown profit = compute_profit(action, demands);
                loss = normalize_loss(profit);
                reported = profit.total;
                if (oracle_profit) {
                    reported = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        reported += action.price * env.oracle_mean(t, i, action.costs[i], action.price) -
                                    action.costs[i];
                }
                break;
            }
            case VariantKind::Subscription: {
                loss = subscription_loss(ledger->cfg, t, action, demands);
                reported = ledger->record_round(action, demands);
                break;
            }
            case VariantKind::Promo: {
                loss = promo_loss(variant.promo, t, action, demands);
                reported = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    reported += variant.promo.r[t - 1][i] *
                                (action.price * demands.demands[i] - action.costs[i]);
                break;
            }
        }

        switch (spec.kind) {
            case PolicyKind::Monotonic: monotonic_update(*mono, mono_chosen, loss); break;
            case PolicyKind::Concave: concave_update(*conc, conc_chosen, loss); break;
            case PolicyKind::JointExp3: joint_update(*joint, joint_arm, loss); break;
            case PolicyKind::Fixed:
            case PolicyKind::Uniform: break;
        }

        result.alg_profit += reported;
        if (keep_trace) result.trace.push_back(reported);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Hindsight optimum via the price-then-cost decomposition: for each candidate
// price, every market's best cost is a one-dimensional search.

inline double estimate_opt(const Environment& env, std::size_t resolution = 2001) {
    if (resolution < 2) throw ParameterError("estimate_opt: resolution must be >= 2");
    std::size_t n = env.n();
    double Td = static_cast<double>(env.horizon());
    double best = -1e300;
    for (std::size_t a = 0; a < resolution; ++a) {
        double p = static_cast<double>(a) / static_cast<double>(resolution - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best_i = -1e300;
            for (std::size_t b = 0; b < resolution; ++b) {
                double c = static_cast<double>(b) / static_cast<double>(resolution - 1);
                double v = p * env.mean_demand_total(i, c, p) - Td * c;
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

// Restriction of the optimum to the discretized price grid (costs stay fine).
inline double estimate_opt_on_price_grid(const Environment& env, const PriceGrid& grid,
                                         std::size_t cost_resolution = 2001) {
    std::size_t n = env.n();
    double Td = static_cast<double>(env.horizon());
    double best = -1e300;
    for (double p : grid.points) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best_i = -1e300;
            for (std::size_t b = 0; b < cost_resolution; ++b) {
                double c = static_cast<double>(b) / static_cast<double>(cost_resolution - 1);
                double v = p * env.mean_demand_total(i, c, p) - Td * c;
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

// Full restriction to the I_K x ... x I_K product grid (costs and price).
inline double estimate_opt_on_grid(const Environment& env, const PriceGrid& grid) {
    std::size_t n = env.n();
    double Td = static_cast<double>(env.horizon());
    double best = -1e300;
    for (double p : grid.points) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best_i = -1e300;
            for (double c : grid.points) {
                double v = p * env.mean_demand_total(i, c, p) - Td * c;
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

inline double promo_estimate_opt(const Environment& env, const PromoConfig& promo,
                                 std::size_t resolution = 2001) {
    std::size_t n = env.n();
    std::uint64_t T = env.horizon();
    if (promo.r.size() < T) throw ParameterError("promo_estimate_opt: schedule shorter than horizon");
    double best = -1e300;
    for (std::size_t a = 0; a < resolution; ++a) {
        double p = static_cast<double>(a) / static_cast<double>(resolution - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double r_sum = 0.0;
            for (std::uint64_t t = 1; t <= T; ++t) r_sum += promo.r[t - 1][i];
            double best_i = -1e300;
            for (std::size_t b = 0; b < resolution; ++b) {
                double c = static_cast<double>(b) / static_cast<double>(resolution - 1);
                // stationary-mean shortcut is invalid for nonstationary r x d
                double v;
                if (env.stationary()) {
                    v = r_sum * (p * env.oracle_mean(1, i, c, p) - c);
                } else {
                    v = 0.0;
                    for (std::uint64_t t = 1; t <= T; ++t)
                        v += promo.r[t - 1][i] * (p * env.oracle_mean(t, i, c, p) - c);
                }
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

// Subscription hindsight optimum. By the telescoping identity the cumulative
// subscription profit of a fixed (c, p) equals
//   sum_i (1/(1-beta_i)) * sum_t [(1 - beta_i^(T-t+1)) p dbar_i(c_i,p) - c_i].
inline double subscription_estimate_opt(const Environment& env, const SubscriptionConfig& cfg,
                                        std::size_t resolution = 2001) {
    std::size_t n = env.n();
    std::uint64_t T = env.horizon();
    if (cfg.betas.size() != n) throw DimensionError("subscription_estimate_opt: betas size != n");
    if (cfg.T != T) throw ParameterError("subscription_estimate_opt: horizon mismatch");
    double best = -1e300;
    for (std::size_t a = 0; a < resolution; ++a) {
        double p = static_cast<double>(a) / static_cast<double>(resolution - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double beta = cfg.betas[i];
            double scale = 1.0 / (1.0 - beta);
            double best_i = -1e300;
            for (std::size_t b = 0; b < resolution; ++b) {
                double c = static_cast<double>(b) / static_cast<double>(resolution - 1);
                double v = 0.0;
                if (env.stationary()) {
                    // sum_t (1 - beta^(T-t+1)) = T - beta (1 - beta^T)/(1 - beta)
                    double coeff_sum = static_cast<double>(T);
                    if (beta > 0.0)
                        coeff_sum -= beta * (1.0 - std::pow(beta, static_cast<double>(T))) / (1.0 - beta);
                    v = coeff_sum * p * env.oracle_mean(1, i, c, p) - static_cast<double>(T) * c;
                } else {
                    for (std::uint64_t t = 1; t <= T; ++t) {
                        double coeff = 1.0 - std::pow(beta, static_cast<double>(T - t + 1));
                        v += coeff * p * env.oracle_mean(t, i, c, p) - c;
                    }
                }
                v *= scale;
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

// ---------------------------------------------------------------------------
// A/B test experiment plumbing: each alternative selects a demand curve in p.

struct ABEnvironment {
    std::size_t n = 1;
    std::uint64_t T = 0;
    std::vector<double> levels;  // one per alternative; mean demand = level * (1-p)

    double mean(std::size_t alt, double p) const { return clamp01(levels[alt] * (1.0 - p)); }
};

inline EpisodeResult ab_run_episode(const ABEnvironment& env, const ABConfig& cfg, double eta,
                                    double gamma, std::uint64_t seed) {
    if (env.levels.size() != cfg.M) throw DimensionError("ab_run_episode: level count != M");
    ABPolicyState pol = ab_init(cfg, env.n, eta, gamma);
    RunRngs rngs = make_run_rngs(seed);
    EpisodeResult result;
    ABChosen chosen;
    for (std::uint64_t t = 1; t <= env.T; ++t) {
        Action a = ab_sample_action(pol, t, rngs.policy, chosen);
        DemandVector d;
        d.demands.resize(env.n);
        for (std::size_t i = 0; i < env.n; ++i)
            d.demands[i] = rngs.environment.bernoulli(env.mean(chosen.alt_idx[i], a.price)) ? 1.0 : 0.0;
        NormalizedLoss loss = ab_loss(pol, t, chosen, a.price, d);
        ab_update(pol, chosen, loss);
        for (std::size_t i = 0; i < env.n; ++i)
            result.alg_profit += a.price * d.demands[i] - cfg.cost(t, chosen.alt_idx[i]);
    }
    return result;
}

inline double ab_estimate_opt(const ABEnvironment& env, const ABConfig& cfg,
                              std::size_t resolution = 2001) {
    double best = -1e300;
    std::vector<double> cost_sums(cfg.M, 0.0);
    for (std::uint64_t t = 1; t <= env.T; ++t)
        for (std::size_t m = 0; m < cfg.M; ++m) cost_sums[m] += cfg.cost(t, m);
    for (std::size_t a = 0; a < resolution; ++a) {
        double p = static_cast<double>(a) / static_cast<double>(resolution - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < env.n; ++i) {
            double best_i = -1e300;
            for (std::size_t m = 0; m < cfg.M; ++m) {
                double v = p * env.mean(m, p) * static_cast<double>(env.T) - cost_sums[m];
                if (v > best_i) best_i = v;
            }
            total += best_i;
        }
        if (total > best) best = total;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Seed aggregation, sweeps, and slope fits.

struct RegretEstimate {
    double regret = 0.0;
    double se = 0.0;
    double mean_profit = 0.0;
    std::size_t seeds = 0;
};

inline RegretEstimate regret_estimate(const std::vector<double>& profits, double opt) {
    if (profits.size() < 2) throw ParameterError("regret_estimate: need >= 2 seeds");
    double mean = 0.0;
    for (double v : profits) mean += v;
    mean /= static_cast<double>(profits.size());
    double var = 0.0;
    for (double v : profits) var += (v - mean) * (v - mean);
    var /= static_cast<double>(profits.size() - 1);
    RegretEstimate r;
    r.mean_profit = mean;
    r.regret = opt - mean;
    r.se = std::sqrt(var / static_cast<double>(profits.size()));
    r.seeds = profits.size();
    return r;
}

inline unsigned thread_count() {
    if (const char* env = std::getenv("BPM_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

// Deterministic parallel map over seed indices: results land in a slot per
// index, so aggregation order never depends on scheduling.
inline std::vector<double> run_seeds(const std::function<double(std::uint64_t)>& body,
                                     const std::vector<std::uint64_t>& seeds) {
    std::vector<double> out(seeds.size(), 0.0);
    unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(seeds.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) out[i] = body(seeds[i]);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < seeds.size(); i += workers) out[i] = body(seeds[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct SweepPoint {
    std::uint64_t T = 0;
    double regret = 0.0;
    double se = 0.0;
    double opt = 0.0;
    double mean_profit = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> residuals;
    std::vector<std::uint64_t> used_T;
    std::vector<std::uint64_t> excluded_T;
};

// Log-log least squares on the regret curve. Points dominated by seed noise
// (regret below 10 SE) or nonpositive are excluded and reported.
inline SlopeFit fit_slope(const std::vector<SweepPoint>& points) {
    std::vector<double> xs, ys;
    SlopeFit fit;
    for (const auto& pt : points) {
        if (pt.regret <= 0.0 || pt.regret < 10.0 * pt.se) {
            fit.excluded_T.push_back(pt.T);
            continue;
        }
        xs.push_back(std::log(static_cast<double>(pt.T)));
        ys.push_back(std::log(pt.regret));
        fit.used_T.push_back(pt.T);
    }
    if (xs.size() < 2) throw ParameterError("fit_slope: fewer than 2 usable sweep points");
    LineFit lf = fit_line(xs, ys);
    fit.slope = lf.slope;
    fit.intercept = lf.intercept;
    fit.residuals = lf.residuals;
    return fit;
}

// ---------------------------------------------------------------------------
// CSV output.

struct CsvRow {
    std::string run_id;
    std::string algo;
    std::string env;
    std::string variant;
    std::size_t n = 0;
    std::uint64_t T = 0;
    std::size_t K = 0;
    double eta = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    double alg_profit = 0.0;
    double opt = 0.0;
    double regret = 0.0;
};

inline std::string csv_header() {
    return "run_id,algo,env,variant,n,T,K,eta,gamma,epsilon,delta,m,seed,alg_profit,opt,regret";
}

inline std::string csv_format_row(const CsvRow& r) {
    std::ostringstream os;
    os << r.run_id << ',' << r.algo << ',' << r.env << ',' << r.variant << ',' << r.n << ',' << r.T
       << ',' << r.K << ',' << fmt_double(r.eta) << ',' << fmt_double(r.gamma) << ','
       << fmt_double(r.epsilon) << ',' << fmt_double(r.delta) << ',' << r.m << ',' << r.seed << ','
       << fmt_double(r.alg_profit) << ',' << fmt_double(r.opt) << ',' << fmt_double(r.regret);
    return os.str();
}

}  // namespace bpm
