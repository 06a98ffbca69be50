#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "gridsentry/errors.hpp"
#include "gridsentry/pomdp.hpp"

namespace gridsentry {

namespace {

// Best cumulative discounted score over all root-to-state paths, for every
// reachable state. Exhaustive: intended for study-sized fixtures.
std::unordered_map<u128, double, U128Hash> best_arrival_scores(
    const Pomdp& pomdp, const std::vector<std::vector<double>>& probabilities) {
    std::unordered_map<u128, double, U128Hash> best;
    best[pomdp.root] = 0.0;
    std::function<void(u128, double, double)> walk = [&](u128 s, double carry, double score) {
        size_t pos = pomdp.state_pos.at(s);
        const auto& acts = pomdp.actions[pos];
        for (size_t ai = 0; ai < acts.size(); ++ai) {
            u128 succ = Pomdp::successor(s, acts[ai]);
            double c = carry * pomdp.gamma * probabilities[pos][ai];
            double sc = score + c * (pomdp.severity.at(succ) - pomdp.severity.at(s));
            auto it = best.find(succ);
            if (it == best.end() || sc > it->second) best[succ] = sc;
            walk(succ, c, sc);
        }
    };
    walk(pomdp.root, 1.0, 0.0);
    return best;
}

std::vector<std::vector<double>> baseline_probabilities(const Pomdp& pomdp) {
    std::vector<std::vector<double>> p(pomdp.actions.size());
    for (size_t i = 0; i < pomdp.actions.size(); ++i) {
        p[i].reserve(pomdp.actions[i].size());
        for (const auto& a : pomdp.actions[i]) p[i].push_back(a.probability);
    }
    return p;
}

// Contingency order: descending score, ties to the smaller state id.
std::vector<u128> rank_contingencies(const std::vector<u128>& contingencies,
                                     const std::unordered_map<u128, double, U128Hash>& scores) {
    std::vector<u128> order = contingencies;
    std::sort(order.begin(), order.end(), [&](u128 a, u128 b) {
        double sa = scores.count(a) ? scores.at(a) : -1.0;
        double sb = scores.count(b) ? scores.at(b) : -1.0;
        if (sa != sb) return sa > sb;
        return a < b;
    });
    return order;
}

}  // namespace

SensitivityResult sensitivity_study(const Pomdp& pomdp, double deviation, int trials, int top_n,
                                    uint64_t seed) {
    if (deviation < 0.0 || deviation > 0.25)
        throw ModelError("deviation must lie in [0, 0.25]");
    if (trials < 1) throw ModelError("at least one trial required");
    if (top_n < 1) throw ModelError("top_n must be positive");
    for (u128 s : pomdp.states)
        if (!pomdp.severity.count(s))
            throw ModelError("severities must be evaluated before the sensitivity study");

    auto base_p = baseline_probabilities(pomdp);
    auto base_scores = best_arrival_scores(pomdp, base_p);

    std::vector<u128> contingencies;
    for (u128 s : pomdp.states)
        if (pomdp.severity.at(s) > 0.0) contingencies.push_back(s);
    auto baseline_order = rank_contingencies(contingencies, base_scores);
    size_t n = std::min<size_t>(top_n, baseline_order.size());

    SensitivityResult result;
    result.contingencies.resize(n);
    std::vector<std::vector<int>> ranks(n);
    for (size_t i = 0; i < n; ++i) {
        result.contingencies[i].state = baseline_order[i];
        result.contingencies[i].baseline_score =
            base_scores.count(baseline_order[i]) ? base_scores.at(baseline_order[i]) : 0.0;
        result.contingencies[i].baseline_rank = static_cast<int>(i) + 1;
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-deviation, deviation);
    for (int trial = 0; trial < trials; ++trial) {
        auto p = base_p;
        for (auto& row : p)
            for (double& v : row) v = std::clamp(v + noise(rng), 0.01, 1.0);
        auto scores = best_arrival_scores(pomdp, p);
        auto order = rank_contingencies(contingencies, scores);
        for (size_t i = 0; i < n; ++i) {
            auto it = std::find(order.begin(), order.end(), baseline_order[i]);
            ranks[i].push_back(static_cast<int>(it - order.begin()) + 1);
        }
    }

    double mean_of_stddevs = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int r : ranks[i]) mean += r;
        mean /= static_cast<double>(trials);
        double var = 0.0;
        for (int r : ranks[i]) var += (r - mean) * (r - mean);
        var /= static_cast<double>(trials);
        result.contingencies[i].rank_stddev = std::sqrt(var);
        mean_of_stddevs += result.contingencies[i].rank_stddev;
    }
    result.mean_rank_stddev = n == 0 ? 0.0 : mean_of_stddevs / static_cast<double>(n);
    return result;
}

std::vector<DepthRow> depth_study(const CyberPhysicalModel& model, double gamma,
                                  const SeverityConfig& config, int max_depth) {
    if (max_depth < 1) throw ModelError("max_depth must be at least 1");
    std::vector<DepthRow> rows;
    for (int d = 1; d <= max_depth; ++d) {
        auto t0 = std::chrono::steady_clock::now();
        Pomdp pomdp = generate_state_space(model, 0, d, gamma);
        LocalSeverityEvaluator evaluator(model.pcase, config);
        evaluate_severities(pomdp, evaluator);
        compute_security_index(pomdp);
        rank_paths(pomdp, pomdp.root, 3);
        auto t1 = std::chrono::steady_clock::now();
        rows.push_back({d, pomdp.states.size(),
                        std::chrono::duration<double>(t1 - t0).count()});
    }
    return rows;
}

}  // namespace gridsentry
