#include "gridsentry/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

#include "gridsentry/errors.hpp"

namespace gridsentry {

CyberPhysicalModel CyberPhysicalModel::assemble(PowerCase pcase, std::string case_text,
                                                std::vector<Host> hosts,
                                                std::vector<FirewallRule> rules,
                                                ThreatModel threat, double epsilon) {
    CyberPhysicalModel m;
    m.pcase = std::move(pcase);
    m.case_text = std::move(case_text);
    m.hosts = std::move(hosts);
    m.threat = std::move(threat);
    m.epsilon = epsilon;
    m.connectivity = build_connectivity(rules, m.hosts);

    int internet_count = 0;
    for (const auto& h : m.hosts) {
        if (h.kind == HostKind::Internet) {
            m.internet = h.id;
            ++internet_count;
            continue;
        }
        Device d;
        d.name = h.id;
        d.is_relay = h.kind == HostKind::RelayController;
        d.controls = h.controls;
        if (d.controls && !m.pcase.find_branch(*d.controls))
            throw ModelError("host '" + h.id + "' controls unknown branch '" + *d.controls + "'");
        m.device_index[d.name] = static_cast<int32_t>(m.devices.size());
        m.devices.push_back(std::move(d));
    }
    if (internet_count != 1)
        throw ModelError("model requires exactly one Internet host, found " +
                         std::to_string(internet_count));
    if (m.devices.size() > 128)
        throw ModelError("device count " + std::to_string(m.devices.size()) +
                         " exceeds the 128-bit state encoding");

    // Attack trees, when present, restrict which vulnerabilities count
    // toward exploit probabilities; connectivity remains the reachability
    // gate either way.
    std::set<std::string> usable;
    bool restrict = !m.threat.trees.empty();
    if (restrict) {
        std::function<void(const AttackTreeNode&)> collect = [&](const AttackTreeNode& n) {
            if (n.kind == AttackTreeNode::Kind::Leaf) usable.insert(n.vuln_id);
            for (const auto& c : n.children) collect(c);
        };
        for (const auto& t : m.threat.trees) collect(t.root);
    }
    for (const auto& v : m.threat.vulnerabilities) {
        if (restrict && !usable.count(v.id)) continue;
        auto it = m.device_index.find(v.host);
        if (it == m.device_index.end()) continue;  // vulnerability on the Internet node
        m.devices[it->second].exploit_probabilities.push_back(vulnerability_probability(v));
    }

    for (const auto& name : m.connectivity.hosts)
        if (name != m.internet && !m.device_index.count(name))
            throw ModelError("connectivity host '" + name + "' missing from the device order");
    return m;
}

double CyberPhysicalModel::exploit_probability(int32_t target) const {
    return aggregate_vulnerabilities(devices.at(target).exploit_probabilities, epsilon);
}

std::vector<std::string> CyberPhysicalModel::relay_branches() const {
    std::vector<std::string> out;
    for (const auto& d : devices)
        if (d.is_relay && d.controls &&
            std::find(out.begin(), out.end(), *d.controls) == out.end())
            out.push_back(*d.controls);
    std::sort(out.begin(), out.end());
    return out;
}

const std::vector<AdversarialAction>& Pomdp::actions_of(u128 s) const {
    auto it = state_pos.find(s);
    if (it == state_pos.end()) throw ModelError("state " + u128_to_string(s) + " not explored");
    return actions[it->second];
}

namespace {

std::vector<AdversarialAction> enumerate_actions(const CyberPhysicalModel& model, u128 s,
                                                 const std::vector<size_t>& device_pos,
                                                 size_t internet_pos) {
    std::vector<AdversarialAction> out;
    const auto& allowed = model.connectivity.allowed;
    for (int32_t t = 0; t < static_cast<int32_t>(model.devices.size()); ++t) {
        if ((s >> t) & 1) continue;
        double p = model.exploit_probability(t);
        if (allowed[internet_pos][device_pos[t]])
            out.push_back({kInternetSource, t, p});
        for (int32_t src = 0; src < static_cast<int32_t>(model.devices.size()); ++src)
            if (((s >> src) & 1) && allowed[device_pos[src]][device_pos[t]])
                out.push_back({src, t, p});
    }
    return out;
}

}  // namespace

Pomdp generate_state_space(const CyberPhysicalModel& model, u128 root, int depth, double gamma) {
    if (!(gamma > 0.0) || !(gamma < 1.0)) throw ModelError("gamma must lie in (0,1)");
    if (depth < 0) throw ModelError("depth must be non-negative");
    if (model.devices.size() < 128 && (root >> model.devices.size()) != 0)
        throw ModelError("root state references devices beyond the model");

    std::vector<size_t> device_pos(model.devices.size());
    for (size_t i = 0; i < model.devices.size(); ++i)
        device_pos[i] = model.connectivity.index.at(model.devices[i].name);
    size_t internet_pos = model.connectivity.index.at(model.internet);

    Pomdp p;
    p.model = &model;
    p.gamma = gamma;
    p.depth = depth;
    p.root = root;

    std::unordered_map<u128, std::vector<AdversarialAction>, U128Hash> expanded;
    std::vector<u128> frontier{root};
    expanded[root] = {};
    for (int level = 0; level < depth && !frontier.empty(); ++level) {
        std::vector<u128> next;
        for (u128 s : frontier) {
            auto acts = enumerate_actions(model, s, device_pos, internet_pos);
            for (const auto& a : acts) {
                u128 succ = Pomdp::successor(s, a);
                if (!expanded.count(succ)) {
                    expanded[succ] = {};
                    next.push_back(succ);
                }
            }
            expanded[s] = std::move(acts);
        }
        frontier = std::move(next);
    }
    // States at the horizon keep empty action lists: they exist as leaves
    // but are never expanded.

    p.states.reserve(expanded.size());
    for (const auto& [s, _] : expanded) p.states.push_back(s);
    std::sort(p.states.begin(), p.states.end(), [](u128 a, u128 b) {
        int pa = popcount128(a), pb = popcount128(b);
        if (pa != pb) return pa < pb;
        return a < b;
    });
    p.actions.resize(p.states.size());
    for (size_t i = 0; i < p.states.size(); ++i) {
        p.state_pos[p.states[i]] = i;
        p.actions[i] = std::move(expanded[p.states[i]]);
    }
    return p;
}

LocalSeverityEvaluator::LocalSeverityEvaluator(const PowerCase& pcase, SeverityConfig config)
    : pcase_(pcase), config_(config) {}

double LocalSeverityEvaluator::evaluate(const std::vector<std::string>& outage_branches,
                                        bool& penalized) {
    penalized = false;
    PowerCase outaged = apply_outages(
        pcase_, std::set<std::string>(outage_branches.begin(), outage_branches.end()));
    ++solves_;
    FlowSolution sol = config_.mode == FlowMode::Dc ? solve_dc(outaged)
                                                    : solve_ac(outaged, config_.ac);
    if (!sol.converged) {
        penalized = true;
        return config_.divergence_penalty;
    }
    return performance_index(sol, outaged);
}

namespace {

u128 relay_mask(const CyberPhysicalModel& model) {
    u128 mask = 0;
    for (size_t i = 0; i < model.devices.size(); ++i)
        if (model.devices[i].is_relay && model.devices[i].controls) mask |= u128(1) << i;
    return mask;
}

std::vector<std::string> outage_set(const CyberPhysicalModel& model, u128 relay_bits) {
    std::vector<std::string> out;
    for (size_t i = 0; i < model.devices.size(); ++i)
        if ((relay_bits >> i) & 1) {
            const auto& br = *model.devices[i].controls;
            if (std::find(out.begin(), out.end(), br) == out.end()) out.push_back(br);
        }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

double state_severity(Pomdp& pomdp, u128 state, SeverityEvaluator& evaluator) {
    auto it = pomdp.severity.find(state);
    if (it != pomdp.severity.end()) return it->second;
    if (!pomdp.contains(state))
        throw ModelError("state " + u128_to_string(state) + " not explored");
    const CyberPhysicalModel& model = *pomdp.model;
    u128 mask = state & relay_mask(model);
    // States sharing the relay pattern share the power-flow result.
    for (const auto& [other, f] : pomdp.severity)
        if ((other & relay_mask(model)) == mask) {
            pomdp.severity[state] = f;
            if (pomdp.penalized.count(other)) pomdp.penalized.insert(state);
            return f;
        }
    bool pen = false;
    double f = evaluator.evaluate(outage_set(model, mask), pen);
    pomdp.severity[state] = f;
    if (pen) pomdp.penalized.insert(state);
    return f;
}

void evaluate_severities(Pomdp& pomdp, SeverityEvaluator& evaluator) {
    const CyberPhysicalModel& model = *pomdp.model;
    const u128 mask = relay_mask(model);
    std::unordered_map<u128, std::pair<double, bool>, U128Hash> by_mask;
    for (u128 s : pomdp.states) {
        u128 m = s & mask;
        auto it = by_mask.find(m);
        if (it == by_mask.end()) {
            bool pen = false;
            double f = evaluator.evaluate(outage_set(model, m), pen);
            it = by_mask.emplace(m, std::make_pair(f, pen)).first;
        }
        pomdp.severity[s] = it->second.first;
        if (it->second.second) pomdp.penalized.insert(s);
    }
}

void compute_security_index(Pomdp& pomdp) {
    for (u128 s : pomdp.states)
        if (!pomdp.severity.count(s))
            throw ModelError("severities must be evaluated before the index pass");
    for (auto it = pomdp.states.rbegin(); it != pomdp.states.rend(); ++it) {
        u128 s = *it;
        const auto& acts = pomdp.actions[pomdp.state_pos.at(s)];
        double best = 0.0;  // stopping is always available and worth nothing
        double fs = pomdp.severity.at(s);
        for (const auto& a : acts) {
            u128 succ = Pomdp::successor(s, a);
            if (popcount128(succ) != popcount128(s) + 1)
                throw ModelError("transition cycle detected");
            double value =
                pomdp.gamma * a.probability *
                (pomdp.severity.at(succ) - fs + pomdp.index.at(succ));
            best = std::max(best, value);
        }
        pomdp.index[s] = best;
    }
}

Belief point_belief(u128 state) {
    Belief b;
    b.probabilities[state] = 1.0;
    return b;
}

ObservationModel ObservationModel::uniform(size_t devices, double tpr, double fpr) {
    ObservationModel m;
    m.tpr.assign(devices, tpr);
    m.fpr.assign(devices, fpr);
    return m;
}

namespace {

void check_normalized(const Belief& belief) {
    double total = 0.0;
    for (const auto& [s, p] : belief.probabilities) {
        if (p < 0.0) throw ModelError("belief carries a negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ModelError("belief is not normalized (sum " + fmt_double(total) + ")");
}

}  // namespace

double belief_reward(const Pomdp& pomdp, const Belief& belief, const AdversarialAction& action) {
    check_normalized(belief);
    double r = 0.0;
    for (const auto& [s, b] : belief.probabilities) {
        if (b == 0.0 || !pomdp.contains(s)) continue;
        for (const auto& a : pomdp.actions[pomdp.state_pos.at(s)]) {
            if (a.source != action.source || a.target != action.target) continue;
            u128 succ = Pomdp::successor(s, a);
            r += b * a.probability *
                 (pomdp.severity.at(succ) - pomdp.severity.at(s) + pomdp.index.at(succ));
            break;
        }
    }
    return r;
}

Belief update_belief(const Pomdp& pomdp, const Belief& belief,
                     const std::set<std::string>& alerted_devices, const ObservationModel& obs,
                     PredictPolicy policy) {
    check_normalized(belief);
    const CyberPhysicalModel& model = *pomdp.model;
    if (obs.tpr.size() != model.devices.size() || obs.fpr.size() != model.devices.size())
        throw ModelError("observation model does not cover every device");
    std::vector<bool> alerted(model.devices.size(), false);
    for (const auto& name : alerted_devices) {
        auto it = model.device_index.find(name);
        if (it == model.device_index.end()) throw ModelError("unknown device '" + name + "'");
        alerted[it->second] = true;
    }

    std::map<u128, double> predicted;
    if (policy == PredictPolicy::Static) {
        predicted = belief.probabilities;
    } else {
        for (const auto& [s, b] : belief.probabilities) {
            if (b == 0.0) continue;
            const std::vector<AdversarialAction>* acts = nullptr;
            if (pomdp.contains(s)) acts = &pomdp.actions[pomdp.state_pos.at(s)];
            size_t options = 1 + (acts ? acts->size() : 0);
            double w = b / static_cast<double>(options);
            predicted[s] += w;  // the attacker stays put
            if (!acts) continue;
            for (const auto& a : *acts) {
                predicted[Pomdp::successor(s, a)] += w * a.probability;
                predicted[s] += w * (1.0 - a.probability);
            }
        }
    }

    Belief out;
    double total = 0.0;
    for (const auto& [s, pb] : predicted) {
        if (pb == 0.0) continue;
        double like = 1.0;
        for (size_t d = 0; d < model.devices.size(); ++d) {
            bool bit = (s >> d) & 1;
            like *= alerted[d] ? (bit ? obs.tpr[d] : obs.fpr[d])
                               : (bit ? 1.0 - obs.tpr[d] : 1.0 - obs.fpr[d]);
        }
        double post = pb * like;
        if (post > 0.0) out.probabilities[s] = post;
        total += post;
    }
    if (total <= 0.0)
        throw ModelError("alerts are inconsistent with the belief support");
    for (auto& [s, p] : out.probabilities) p /= total;
    return out;
}

u128 ml_state(const Belief& belief) {
    if (belief.probabilities.empty()) throw ModelError("belief is empty");
    u128 best = 0;
    double best_p = -1.0;
    for (const auto& [s, p] : belief.probabilities)
        if (p > best_p) {  // map order makes ties resolve to the smallest id
            best = s;
            best_p = p;
        }
    return best;
}

namespace {

struct PartialPath {
    double bound = 0.0;
    double score = 0.0;
    double carry = 1.0;  // gamma^t * prod of success probabilities so far
    u128 tip = 0;
    std::vector<PathStep> steps;
};

struct PartialOrder {
    bool operator()(const PartialPath& a, const PartialPath& b) const {
        if (a.bound != b.bound) return a.bound < b.bound;  // max-heap on bound
        // Deterministic tie-break: prefer the lexicographically smaller
        // action trail.
        size_t n = std::min(a.steps.size(), b.steps.size());
        for (size_t i = 0; i < n; ++i) {
            const auto& x = a.steps[i];
            const auto& y = b.steps[i];
            if (x.target != y.target) return x.target > y.target;
            if (x.source != y.source) return x.source > y.source;
        }
        return a.steps.size() > b.steps.size();
    }
};

}  // namespace

std::vector<RankedPath> rank_paths(const Pomdp& pomdp, u128 root, size_t k) {
    if (!pomdp.contains(root))
        throw ModelError("state " + u128_to_string(root) + " not explored");
    if (!pomdp.index.count(root))
        throw ModelError("indices must be computed before ranking paths");
    std::vector<RankedPath> out;
    if (k == 0 || pomdp.actions_of(root).empty()) return out;

    std::priority_queue<PartialPath, std::vector<PartialPath>, PartialOrder> queue;
    queue.push({pomdp.index.at(root), 0.0, 1.0, root, {}});
    while (!queue.empty() && out.size() < k) {
        PartialPath cur = queue.top();
        queue.pop();
        const auto& acts = pomdp.actions_of(cur.tip);
        if (acts.empty()) {
            out.push_back({std::move(cur.steps), cur.score});
            continue;
        }
        for (const auto& a : acts) {
            u128 succ = Pomdp::successor(cur.tip, a);
            PartialPath next;
            next.carry = cur.carry * pomdp.gamma * a.probability;
            next.score = cur.score +
                         next.carry * (pomdp.severity.at(succ) - pomdp.severity.at(cur.tip));
            next.bound = next.score + next.carry * pomdp.index.at(succ);
            next.tip = succ;
            next.steps = cur.steps;
            next.steps.push_back(
                {cur.tip, succ, a.source, a.target, a.probability, pomdp.index.at(succ)});
            queue.push(std::move(next));
        }
    }
    return out;
}

}  // namespace gridsentry
