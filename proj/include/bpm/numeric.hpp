#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpm/rng.hpp"

namespace bpm {

inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;  // all -inf, or a stray +inf/nan
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// Probability vector from unnormalized log-weights, max-subtracted so large
// negative accumulations never underflow the whole vector at once.
inline std::vector<double> softmax(std::span<const double> logw) {
    std::vector<double> p(logw.size());
    double m = *std::max_element(logw.begin(), logw.end());
    double s = 0.0;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        p[i] = std::exp(logw[i] - m);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

// Cumulative-sum inversion; ties resolve toward the lower index.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
    double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return probs.size() - 1;
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Bernoulli KL divergence kl(p, q) in nats.
inline double bernoulli_kl(double p, double q) {
    auto term = [](double a, double b) {
        if (a == 0.0) return 0.0;
        return a * std::log(a / b);
    };
    return term(p, q) + term(1.0 - p, 1.0 - q);
}

// Stable shortest-exact formatting used for CSV/JSON output.
inline std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
}

inline std::uint64_t fnv1a64(std::span<const char> data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const char>(s.data(), s.size()));
}

// Ordinary least squares y = intercept + slope * x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> residuals;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 paired points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_line: degenerate x values");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    f.residuals.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        f.residuals[i] = y[i] - (f.intercept + f.slope * x[i]);
    return f;
}

}  // namespace bpm
