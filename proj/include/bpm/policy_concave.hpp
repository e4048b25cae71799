#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "bpm/core.hpp"
#include "bpm/numeric.hpp"
#include "bpm/rng.hpp"

namespace bpm {

struct ConcaveParams {
    std::size_t n = 1;
    std::size_t K = 1;
    double eta = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;  // kernel smoothing width
    double delta = 0.0;    // boundary margin of the cost interval
    std::size_t m = 256;   // grid resolution for represented densities

    void validate() const {
        if (n == 0) throw ParameterError("ConcaveParams: n must be >= 1");
        if (K == 0) throw ParameterError("ConcaveParams: K must be >= 1");
        if (!(eta > 0.0)) throw ParameterError("ConcaveParams: eta must be > 0");
        if (!(gamma > 0.0)) throw ParameterError("ConcaveParams: gamma must be > 0");
        if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("ConcaveParams: delta must be in (0, 1/2)");
        if (!(epsilon > 0.0 && epsilon < 1.0 - 2.0 * delta))
            throw ParameterError("ConcaveParams: epsilon must be in (0, 1-2*delta)");
        if (m < 8) throw ParameterError("ConcaveParams: m must be >= 8");
    }
};

// Uniform grid representing the truncated cost interval [delta, 1-delta].
// Grid points are cell centers except at the ends, whose cells are clipped to
// the interval and therefore carry half width.
struct CostGrid {
    double delta = 0.0;
    std::size_t m = 0;
    std::vector<double> points;
    double spacing = 0.0;

    double cell_lo(std::size_t j) const {
        return std::max(delta, points[j] - 0.5 * spacing);
    }
    double cell_hi(std::size_t j) const {
        return std::min(1.0 - delta, points[j] + 0.5 * spacing);
    }
    double cell_width(std::size_t j) const { return cell_hi(j) - cell_lo(j); }

    double integrate(const std::vector<double>& density) const {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += density[j] * cell_width(j);
        return s;
    }
};

inline CostGrid make_cost_grid(double delta, std::size_t m) {
    if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("make_cost_grid: delta must be in (0, 1/2)");
    if (m < 8) throw ParameterError("make_cost_grid: m must be >= 8");
    CostGrid g;
    g.delta = delta;
    g.m = m;
    g.spacing = (1.0 - 2.0 * delta) / static_cast<double>(m - 1);
    g.points.resize(m);
    for (std::size_t j = 0; j < m; ++j) g.points[j] = delta + g.spacing * static_cast<double>(j);
    g.points[m - 1] = 1.0 - delta;
    return g;
}

struct KernelSpec {
    double epsilon = 0.0;
    double delta = 0.0;
};

inline double kernel_mean(const CostGrid& grid, const std::vector<double>& u) {
    if (u.size() != grid.m) throw DimensionError("kernel_mean: density size mismatch");
    double mass = grid.integrate(u);
    if (std::abs(mass - 1.0) > 1e-6) throw RangeError("kernel_mean: density not normalized");
    double s = 0.0;
    for (std::size_t j = 0; j < grid.m; ++j) s += grid.points[j] * u[j] * grid.cell_width(j);
    return s;
}

// The smoothing kernel: mass at y is spread uniformly over the interval
// between y and the mean mu, or over a width-epsilon interval near mu when y
// is already close to it.
inline double kernel_density(const KernelSpec& spec, double mu, double x, double y) {
    double lo = spec.delta, hi = 1.0 - spec.delta;
    const double tol = 1e-12;
    if (x < lo - tol || x > hi + tol || y < lo - tol || y > hi + tol || mu < lo - tol || mu > hi + tol)
        throw RangeError("kernel_density: argument outside [delta, 1-delta]");
    double gap = std::abs(y - mu);
    if (gap >= spec.epsilon) {
        double a = std::min(y, mu), b = std::max(y, mu);
        return (x >= a && x <= b) ? 1.0 / gap : 0.0;
    }
    if (mu >= spec.epsilon + spec.delta) {
        return (x >= mu - spec.epsilon && x <= mu) ? 1.0 / spec.epsilon : 0.0;
    }
    return (x >= mu && x <= mu + spec.epsilon) ? 1.0 / spec.epsilon : 0.0;
}

// Support interval of the kernel column at y (the set where the density above
// is nonzero), clipped to the cost interval.
inline void kernel_support(const KernelSpec& spec, double mu, double y, double& a, double& b) {
    double gap = std::abs(y - mu);
    if (gap >= spec.epsilon) {
        a = std::min(y, mu);
        b = std::max(y, mu);
    } else if (mu >= spec.epsilon + spec.delta) {
        a = mu - spec.epsilon;
        b = mu;
    } else {
        a = mu;
        b = mu + spec.epsilon;
    }
}

// Smoothed playing density q = integral over y of kernel(., y) u(y) dy. Each
// grid column's mass is deposited onto cells by exact interval overlap rather
// than by sampling the kernel at cell centers; columns narrower than a cell
// would otherwise lose their mass entirely.
inline std::vector<double> apply_kernel(const KernelSpec& spec, const CostGrid& grid,
                                        const std::vector<double>& u) {
    double mu = kernel_mean(grid, u);
    double lo = grid.delta, hi = 1.0 - grid.delta;
    std::vector<double> cell_mass(grid.m, 0.0);
    // uniform density rates over runs of fully covered cells, applied lazily
    std::vector<double> rate_diff(grid.m + 1, 0.0);
    auto cell_of = [&](double x) {
        double r = (x - grid.delta) / grid.spacing + 0.5;
        long k = static_cast<long>(std::floor(r));
        if (k < 0) k = 0;
        if (k >= static_cast<long>(grid.m)) k = static_cast<long>(grid.m) - 1;
        return static_cast<std::size_t>(k);
    };
    for (std::size_t j = 0; j < grid.m; ++j) {
        double mass = u[j] * grid.cell_width(j);
        if (mass <= 0.0) continue;
        double a, b;
        kernel_support(spec, mu, grid.points[j], a, b);
        double len = b - a;
        if (len <= 0.0) continue;
        double rate = mass / len;  // mass per unit length along the support
        a = std::max(a, lo);
        b = std::min(b, hi);
        if (b <= a) continue;
        std::size_t ka = cell_of(a), kb = cell_of(b);
        if (ka == kb) {
            cell_mass[ka] += rate * (b - a);
        } else {
            cell_mass[ka] += rate * (grid.cell_hi(ka) - a);
            cell_mass[kb] += rate * (b - grid.cell_lo(kb));
            if (ka + 1 <= kb - 1) {
                rate_diff[ka + 1] += rate;
                rate_diff[kb] -= rate;
            }
        }
    }
    double run_rate = 0.0, total = 0.0;
    for (std::size_t k = 0; k < grid.m; ++k) {
        run_rate += rate_diff[k];
        cell_mass[k] += run_rate * grid.cell_width(k);
        total += cell_mass[k];
    }
    if (std::abs(total - 1.0) > 1e-3)
        throw RangeError("apply_kernel: quadrature mass deviates from 1 by more than 1e-3; increase m");
    std::vector<double> q(grid.m);
    for (std::size_t k = 0; k < grid.m; ++k) q[k] = cell_mass[k] / (grid.cell_width(k) * total);
    return q;
}

struct ConcaveChosen {
    std::vector<std::size_t> cost_idx;  // grid index per market
    std::size_t price_idx = 0;
};

struct ConcavePolicyState {
    ConcaveParams params;
    PriceGrid price_grid;
    CostGrid cost_grid;
    std::vector<double> price_logw;                        // K+1
    std::vector<std::vector<std::vector<double>>> u_logw;  // [n][K+1][m]
    std::vector<std::vector<std::vector<double>>> q_cache; // playing densities
    std::vector<std::vector<double>> mu_cache;             // kernel means of u
    std::uint64_t round = 1;
    bool poisoned = false;

    void check_usable() const {
        if (poisoned) throw RangeError("ConcavePolicyState: state poisoned by non-finite loss");
    }
};

// Normalized density (integrates to 1 over the grid) from one log-weight slice.
inline std::vector<double> concave_u_density(const CostGrid& grid, const std::vector<double>& logw) {
    double mx = *std::max_element(logw.begin(), logw.end());
    std::vector<double> d(logw.size());
    double z = 0.0;
    for (std::size_t j = 0; j < logw.size(); ++j) {
        d[j] = std::exp(logw[j] - mx);
        z += d[j] * grid.cell_width(j);
    }
    for (double& v : d) v /= z;
    return d;
}

inline void concave_refresh_cache(ConcavePolicyState& s, std::size_t market, std::size_t price_idx) {
    KernelSpec spec{s.params.epsilon, s.params.delta};
    auto u = concave_u_density(s.cost_grid, s.u_logw[market][price_idx]);
    s.mu_cache[market][price_idx] = kernel_mean(s.cost_grid, u);
    s.q_cache[market][price_idx] = apply_kernel(spec, s.cost_grid, u);
}

inline ConcavePolicyState concave_init(const ConcaveParams& params) {
    params.validate();
    ConcavePolicyState s;
    s.params = params;
    s.price_grid = make_price_grid(params.K);
    s.cost_grid = make_cost_grid(params.delta, params.m);
    s.price_logw.assign(params.K + 1, 0.0);
    s.u_logw.assign(params.n,
                    std::vector<std::vector<double>>(params.K + 1, std::vector<double>(params.m, 0.0)));
    s.q_cache.assign(params.n, std::vector<std::vector<double>>(params.K + 1));
    s.mu_cache.assign(params.n, std::vector<double>(params.K + 1, 0.0));
    for (std::size_t i = 0; i < params.n; ++i)
        for (std::size_t p = 0; p <= params.K; ++p) concave_refresh_cache(s, i, p);
    return s;
}

inline std::vector<double> concave_price_dist(const ConcavePolicyState& s) {
    return softmax(s.price_logw);
}

inline std::size_t concave_sample_cost(const ConcavePolicyState& s, std::size_t market,
                                       std::size_t price_idx, Rng& rng) {
    const auto& q = s.q_cache[market][price_idx];
    std::vector<double> probs(s.params.m);
    for (std::size_t j = 0; j < s.params.m; ++j) probs[j] = q[j] * s.cost_grid.cell_width(j);
    return sample_categorical(probs, rng);
}

inline Action concave_sample_action(ConcavePolicyState& s, Rng& rng, ConcaveChosen& chosen) {
    s.check_usable();
    auto qp = concave_price_dist(s);
    chosen.price_idx = sample_categorical(qp, rng);
    chosen.cost_idx.resize(s.params.n);
    Action a;
    a.price = s.price_grid.points[chosen.price_idx];
    a.costs.resize(s.params.n);
    for (std::size_t i = 0; i < s.params.n; ++i) {
        chosen.cost_idx[i] = concave_sample_cost(s, i, chosen.price_idx, rng);
        a.costs[i] = s.cost_grid.points[chosen.cost_idx[i]];
    }
    return a;
}

// Kernelized importance-weighted loss estimate for market i at (query_c, p).
inline double concave_estimator_f(const ConcavePolicyState& s, const ConcaveChosen& chosen,
                                  const NormalizedLoss& losses, std::size_t market, double query_c,
                                  std::size_t query_price_idx) {
    if (query_price_idx != chosen.price_idx) return 0.0;
    auto qp = concave_price_dist(s);
    double q_chosen = s.q_cache[market][chosen.price_idx][chosen.cost_idx[market]];
    double mu = s.mu_cache[market][chosen.price_idx];
    KernelSpec spec{s.params.epsilon, s.params.delta};
    double kd = kernel_density(spec, mu, s.cost_grid.points[chosen.cost_idx[market]], query_c);
    double denom = q_chosen * (qp[chosen.price_idx] + s.params.gamma);
    return losses.per_market[market] / denom * kd;
}

inline double concave_exploration_coeff(const ConcaveParams& p) {
    return 3.0 * p.eta * std::log(std::exp(1.0) / p.epsilon);
}

inline double concave_estimator_h(const ConcavePolicyState& s, std::size_t chosen_price_idx,
                                  const NormalizedLoss& losses, std::size_t query_price_idx) {
    auto qp = concave_price_dist(s);
    double g = s.params.gamma;
    double first = 0.0;
    if (query_price_idx == chosen_price_idx) {
        first = (losses.total / static_cast<double>(s.params.n)) / (qp[chosen_price_idx] + g);
    }
    double second = concave_exploration_coeff(s.params) * (1.0 / g - 1.0 / (qp[query_price_idx] + g));
    return first + second;
}

inline void concave_update(ConcavePolicyState& s, const ConcaveChosen& chosen,
                           const NormalizedLoss& losses) {
    s.check_usable();
    bool finite = std::isfinite(losses.total);
    for (double l : losses.per_market) finite = finite && std::isfinite(l);
    if (!finite) {
        s.poisoned = true;
        throw RangeError("concave_update: non-finite loss");
    }
    auto qp = concave_price_dist(s);
    KernelSpec spec{s.params.epsilon, s.params.delta};
    // only the chosen price's u slices move; the estimator vanishes elsewhere
    for (std::size_t i = 0; i < s.params.n; ++i) {
        double q_chosen = s.q_cache[i][chosen.price_idx][chosen.cost_idx[i]];
        double mu = s.mu_cache[i][chosen.price_idx];
        double x = s.cost_grid.points[chosen.cost_idx[i]];
        double factor = losses.per_market[i] / (q_chosen * (qp[chosen.price_idx] + s.params.gamma));
        auto& lw = s.u_logw[i][chosen.price_idx];
        for (std::size_t j = 0; j < s.params.m; ++j) {
            double kd = kernel_density(spec, mu, x, s.cost_grid.points[j]);
            if (kd != 0.0) lw[j] -= s.params.eta * factor * kd;
        }
        concave_refresh_cache(s, i, chosen.price_idx);
    }
    double g = s.params.gamma;
    double coeff = concave_exploration_coeff(s.params);
    double scaled_total = losses.total / static_cast<double>(s.params.n);
    for (std::size_t p = 0; p <= s.params.K; ++p) {
        double first = (p == chosen.price_idx) ? scaled_total / (qp[p] + g) : 0.0;
        double second = coeff * (1.0 / g - 1.0 / (qp[p] + g));
        s.price_logw[p] -= s.params.eta * (first + second);
    }
    s.round += 1;
}

inline nlohmann::json concave_to_json(const ConcavePolicyState& s) {
    return nlohmann::json{{"format", "concave-policy"},
                          {"version", 1},
                          {"n", s.params.n},
                          {"K", s.params.K},
                          {"eta", s.params.eta},
                          {"gamma", s.params.gamma},
                          {"epsilon", s.params.epsilon},
                          {"delta", s.params.delta},
                          {"m", s.params.m},
                          {"round", s.round},
                          {"price_logweights", s.price_logw},
                          {"u_logweights", s.u_logw}};
}

inline ConcavePolicyState concave_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "concave-policy" || j.value("version", 0) != 1)
        throw ParameterError("concave_from_json: unrecognized checkpoint format/version");
    ConcaveParams p;
    p.n = j.at("n").get<std::size_t>();
    p.K = j.at("K").get<std::size_t>();
    p.eta = j.at("eta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.epsilon = j.at("epsilon").get<double>();
    p.delta = j.at("delta").get<double>();
    p.m = j.at("m").get<std::size_t>();
    ConcavePolicyState s = concave_init(p);
    s.round = j.at("round").get<std::uint64_t>();
    s.price_logw = j.at("price_logweights").get<std::vector<double>>();
    s.u_logw = j.at("u_logweights").get<std::vector<std::vector<std::vector<double>>>>();
    if (s.price_logw.size() != p.K + 1 || s.u_logw.size() != p.n)
        throw ParameterError("concave_from_json: weight dimensions do not match params");
    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t q = 0; q <= p.K; ++q) concave_refresh_cache(s, i, q);
    return s;
}

}  // namespace bpm
