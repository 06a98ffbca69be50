#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridsentry/cyber.hpp"
#include "gridsentry/power_model.hpp"
#include "gridsentry/powerflow.hpp"
#include "gridsentry/util.hpp"

namespace gridsentry {

// Devices are the non-Internet hosts in model order; bit i of a security
// state marks device i as compromised. The Internet is not a device: it is
// the permanently compromised source available in every state.
constexpr int32_t kInternetSource = -1;

struct Device {
    std::string name;
    bool is_relay = false;
    std::optional<std::string> controls;       // branch id, relays only
    std::vector<double> exploit_probabilities;  // per usable vulnerability
};

struct AdversarialAction {
    int32_t source = kInternetSource;  // device index, or kInternetSource
    int32_t target = 0;                // device index whose bit the action sets
    double probability = 0.0;          // exploit success p

    bool operator==(const AdversarialAction&) const = default;
};

struct CyberPhysicalModel {
    PowerCase pcase;  // switching layer already resolved
    std::string case_text;
    std::vector<Host> hosts;
    ConnectivityMatrix connectivity;
    ThreatModel threat;
    double epsilon = 0.01;

    std::string internet;
    std::vector<Device> devices;
    std::unordered_map<std::string, int32_t> device_index;

    static CyberPhysicalModel assemble(PowerCase pcase, std::string case_text,
                                       std::vector<Host> hosts, std::vector<FirewallRule> rules,
                                       ThreatModel threat, double epsilon = 0.01);

    double exploit_probability(int32_t target) const;
    std::vector<std::string> relay_branches() const;  // every relay-controlled branch
};

struct Pomdp {
    const CyberPhysicalModel* model = nullptr;
    double gamma = 0.9;
    int depth = 4;
    u128 root = 0;

    std::vector<u128> states;  // sorted by (bit count, bits)
    std::unordered_map<u128, size_t, U128Hash> state_pos;
    std::vector<std::vector<AdversarialAction>> actions;  // parallel to states
    std::unordered_map<u128, double, U128Hash> severity;  // F(s)
    std::unordered_map<u128, double, U128Hash> index;     // I(s)
    std::set<u128> penalized;  // states whose F is the divergence penalty

    bool contains(u128 s) const { return state_pos.count(s) > 0; }
    const std::vector<AdversarialAction>& actions_of(u128 s) const;
    static u128 successor(u128 s, const AdversarialAction& a) {
        return s | (u128(1) << a.target);
    }
};

Pomdp generate_state_space(const CyberPhysicalModel& model, u128 root, int depth,
                           double gamma = 0.9);

struct SeverityConfig {
    FlowMode mode = FlowMode::Dc;
    AcOptions ac;
    double divergence_penalty = 10.0;
};

// F for one outage set. Implementations must be pure: equal outage sets give
// equal results, so callers may memoize freely.
class SeverityEvaluator {
  public:
    virtual ~SeverityEvaluator() = default;
    virtual double evaluate(const std::vector<std::string>& outage_branches, bool& penalized) = 0;
};

class LocalSeverityEvaluator : public SeverityEvaluator {
  public:
    LocalSeverityEvaluator(const PowerCase& pcase, SeverityConfig config);
    double evaluate(const std::vector<std::string>& outage_branches, bool& penalized) override;
    int solve_count() const { return solves_; }

  private:
    const PowerCase& pcase_;
    SeverityConfig config_;
    int solves_ = 0;
};

// Fills pomdp.severity for every explored state, one power-flow evaluation
// per distinct relay-bit pattern.
void evaluate_severities(Pomdp& pomdp, SeverityEvaluator& evaluator);
double state_severity(Pomdp& pomdp, u128 state, SeverityEvaluator& evaluator);

// Backward DP over the acyclic transition graph. An attacker who stops
// gains nothing, so indices are floored at zero.
void compute_security_index(Pomdp& pomdp);

struct Belief {
    std::map<u128, double> probabilities;
};

Belief point_belief(u128 state);

struct ObservationModel {
    std::vector<double> tpr;  // per device
    std::vector<double> fpr;

    static ObservationModel uniform(size_t devices, double tpr, double fpr);
};

enum class PredictPolicy { UniformAttacker, Static };

double belief_reward(const Pomdp& pomdp, const Belief& belief, const AdversarialAction& action);
Belief update_belief(const Pomdp& pomdp, const Belief& belief,
                     const std::set<std::string>& alerted_devices, const ObservationModel& obs,
                     PredictPolicy policy = PredictPolicy::UniformAttacker);
u128 ml_state(const Belief& belief);

struct PathStep {
    u128 from = 0;
    u128 to = 0;
    int32_t source = kInternetSource;
    int32_t target = 0;
    double probability = 0.0;
    double successor_index = 0.0;  // I(to)
};

struct RankedPath {
    std::vector<PathStep> steps;
    double score = 0.0;  // sum over steps t of gamma^t * (prod p up to t) * dF_t
};

std::vector<RankedPath> rank_paths(const Pomdp& pomdp, u128 root, size_t k);

struct ContingencyRow {
    u128 state = 0;
    double baseline_score = 0.0;
    int baseline_rank = 0;     // 1-based
    double rank_stddev = 0.0;  // across perturbed trials
};

struct SensitivityResult {
    std::vector<ContingencyRow> contingencies;  // baseline rank order
    double mean_rank_stddev = 0.0;
};

SensitivityResult sensitivity_study(const Pomdp& pomdp, double deviation, int trials, int top_n,
                                    uint64_t seed);

struct DepthRow {
    int depth = 0;
    size_t state_count = 0;
    double seconds = 0.0;
};

std::vector<DepthRow> depth_study(const CyberPhysicalModel& model, double gamma,
                                  const SeverityConfig& config, int max_depth);

}  // namespace gridsentry
