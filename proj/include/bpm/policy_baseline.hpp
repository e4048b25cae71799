#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "bpm/core.hpp"
#include "bpm/numeric.hpp"
#include "bpm/rng.hpp"

namespace bpm {

// EXP3 over the full (K+1)^(n+1) product grid of (costs..., price) tuples.
// Kept as the comparison point whose arm count explodes with n.
struct JointExp3State {
    std::size_t n = 1;
    std::size_t K = 1;
    double eta = 0.0;
    PriceGrid grid;
    std::vector<double> logweights;  // one per joint arm
    std::uint64_t round = 1;

    std::size_t arm_count() const { return logweights.size(); }
};

inline constexpr std::size_t kJointArmCap = 1000000;

// Mixed-radix arm indexing, price in the lowest digit, then cost 1, cost 2, ...
inline std::size_t joint_arm_index(const JointExp3State& s, const std::vector<std::size_t>& cost_idx,
                                   std::size_t price_idx) {
    std::size_t base = s.K + 1;
    std::size_t idx = 0;
    for (std::size_t i = s.n; i-- > 0;) idx = idx * base + cost_idx[i];
    return idx * base + price_idx;
}

inline void joint_arm_tuple(const JointExp3State& s, std::size_t arm, std::vector<std::size_t>& cost_idx,
                            std::size_t& price_idx) {
    std::size_t base = s.K + 1;
    price_idx = arm % base;
    arm /= base;
    cost_idx.resize(s.n);
    for (std::size_t i = 0; i < s.n; ++i) {
        cost_idx[i] = arm % base;
        arm /= base;
    }
}

inline JointExp3State joint_init(std::size_t n, std::size_t K, double eta) {
    if (n == 0 || K == 0) throw ParameterError("joint_init: n and K must be >= 1");
    if (!(eta > 0.0)) throw ParameterError("joint_init: eta must be > 0");
    double arms_f = std::pow(static_cast<double>(K + 1), static_cast<double>(n + 1));
    if (arms_f > static_cast<double>(kJointArmCap))
        throw ParameterError("joint_init: (K+1)^(n+1) arms exceed the arm cap; "
                             "the joint grid grows exponentially in the market count");
    JointExp3State s;
    s.n = n;
    s.K = K;
    s.eta = eta;
    s.grid = make_price_grid(K);
    s.logweights.assign(static_cast<std::size_t>(arms_f + 0.5), 0.0);
    return s;
}

inline std::size_t joint_sample(const JointExp3State& s, Rng& rng) {
    auto probs = softmax(s.logweights);
    return sample_categorical(probs, rng);
}

inline Action joint_arm_action(const JointExp3State& s, std::size_t arm) {
    std::vector<std::size_t> cost_idx;
    std::size_t price_idx;
    joint_arm_tuple(s, arm, cost_idx, price_idx);
    Action a;
    a.price = s.grid.points[price_idx];
    a.costs.resize(s.n);
    for (std::size_t i = 0; i < s.n; ++i) a.costs[i] = s.grid.points[cost_idx[i]];
    return a;
}

// Standard importance-weighted update; the total loss in [0, n] is divided by
// n to meet the unit-loss contract.
inline void joint_update(JointExp3State& s, std::size_t chosen_arm, const NormalizedLoss& losses) {
    if (!std::isfinite(losses.total)) throw RangeError("joint_update: non-finite loss");
    auto probs = softmax(s.logweights);
    double unit_loss = losses.total / static_cast<double>(s.n);
    double lhat = unit_loss / probs[chosen_arm];
    s.logweights[chosen_arm] -= s.eta * lhat;
    s.round += 1;
}

inline Action fixed_policy(const Action& action) { return action; }

inline Action uniform_policy(std::size_t n, Rng& rng) {
    Action a;
    a.price = rng.uniform();
    a.costs.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.costs[i] = rng.uniform();
    return a;
}

inline nlohmann::json joint_to_json(const JointExp3State& s) {
    return nlohmann::json{{"format", "joint-exp3"}, {"version", 1}, {"n", s.n},
                          {"K", s.K},              {"eta", s.eta}, {"round", s.round},
                          {"logweights", s.logweights}};
}

inline JointExp3State joint_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "joint-exp3" || j.value("version", 0) != 1)
        throw ParameterError("joint_from_json: unrecognized checkpoint format/version");
    JointExp3State s = joint_init(j.at("n").get<std::size_t>(), j.at("K").get<std::size_t>(),
                                  j.at("eta").get<double>());
    s.round = j.at("round").get<std::uint64_t>();
    auto lw = j.at("logweights").get<std::vector<double>>();
    if (lw.size() != s.logweights.size())
        throw ParameterError("joint_from_json: weight count does not match params");
    s.logweights = std::move(lw);
    return s;
}

}  // namespace bpm
