#include "gridsentry/power_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gridsentry/util.hpp"

namespace gridsentry {

const Bus* PowerCase::find_bus(std::string_view id) const {
    for (const auto& b : buses)
        if (b.id == id) return &b;
    return nullptr;
}

const Branch* PowerCase::find_branch(std::string_view id) const {
    for (const auto& b : branches)
        if (b.id == id) return &b;
    return nullptr;
}

namespace {

SwitchStatus parse_status(const std::string& tok, const std::string& file, int line) {
    if (tok == "OPEN") return SwitchStatus::Open;
    if (tok == "CLOSED") return SwitchStatus::Closed;
    throw ParseError(file, line, "expected OPEN or CLOSED, got '" + tok + "'");
}

double num(const std::string& tok, const std::string& file, int line) {
    try {
        return parse_double(tok);
    } catch (const std::invalid_argument& e) {
        throw ParseError(file, line, e.what());
    }
}

}  // namespace

PowerCase parse_case(std::string_view text, std::string_view filename) {
    const std::string file(filename);
    PowerCase pc;
    NodeBreakerTopology topo;
    bool has_topo = false;

    std::unordered_set<std::string> bus_ids, branch_ids, node_ids;

    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view stripped = strip_comment(raw);
        if (stripped.empty()) continue;
        std::vector<std::string> tok;
        try {
            tok = split_tokens(stripped);
        } catch (const std::invalid_argument& e) {
            throw ParseError(file, lineno, e.what());
        }
        const std::string& kw = tok[0];
        auto want = [&](size_t lo, size_t hi) {
            if (tok.size() < lo + 1 || tok.size() > hi + 1)
                throw ParseError(file, lineno, kw + ": wrong number of fields");
        };
        if (kw == "BASEMVA") {
            want(1, 1);
            pc.base_mva = num(tok[1], file, lineno);
            if (pc.base_mva <= 0) throw ParseError(file, lineno, "BASEMVA must be positive");
        } else if (kw == "BUS") {
            want(3, 4);
            Bus b;
            b.id = tok[1];
            b.injection_mw = num(tok[2], file, lineno);
            long slack = 0;
            try {
                slack = parse_long(tok[3]);
            } catch (const std::invalid_argument& e) {
                throw ParseError(file, lineno, e.what());
            }
            if (slack != 0 && slack != 1) throw ParseError(file, lineno, "slack flag must be 0 or 1");
            b.is_slack = slack == 1;
            if (tok.size() == 5) b.voltage_setpoint_pu = num(tok[4], file, lineno);
            if (!std::isfinite(b.injection_mw))
                throw ParseError(file, lineno, "injection must be finite");
            if (!bus_ids.insert(b.id).second)
                throw ParseError(file, lineno, "duplicate bus id '" + b.id + "'");
            pc.buses.push_back(std::move(b));
        } else if (kw == "BRANCH") {
            want(7, 7);
            Branch b;
            b.id = tok[1];
            b.from_bus = tok[2];
            b.to_bus = tok[3];
            b.resistance_pu = num(tok[4], file, lineno);
            b.reactance_pu = num(tok[5], file, lineno);
            b.flow_limit_mw = num(tok[6], file, lineno);
            b.status = parse_status(tok[7], file, lineno);
            if (b.from_bus == b.to_bus)
                throw ParseError(file, lineno, "branch endpoints must differ");
            if (b.reactance_pu <= 0)
                throw ParseError(file, lineno, "reactance must be strictly positive");
            if (b.resistance_pu < 0)
                throw ParseError(file, lineno, "resistance must be non-negative");
            if (b.flow_limit_mw <= 0)
                throw ParseError(file, lineno, "flow limit must be strictly positive");
            if (!branch_ids.insert(b.id).second)
                throw ParseError(file, lineno, "duplicate branch id '" + b.id + "'");
            pc.branches.push_back(std::move(b));
        } else if (kw == "NODE") {
            want(1, 2);
            has_topo = true;
            if (!node_ids.insert(tok[1]).second)
                throw ParseError(file, lineno, "duplicate node id '" + tok[1] + "'");
            topo.nodes.push_back(tok[1]);
            if (tok.size() == 3) topo.bus_map[tok[1]] = tok[2];
        } else if (kw == "BREAKER") {
            want(4, 4);
            has_topo = true;
            SwitchingDevice d;
            d.id = tok[1];
            d.node_a = tok[2];
            d.node_b = tok[3];
            d.status = parse_status(tok[4], file, lineno);
            topo.devices.push_back(std::move(d));
        } else if (kw == "TERMINAL") {
            want(3, 3);
            has_topo = true;
            topo.terminal_map[tok[1]] = BranchTerminals{tok[2], tok[3]};
        } else {
            throw ParseError(file, lineno, "unknown keyword '" + kw + "'");
        }
    }

    // Cross-reference validation.
    for (const auto& b : pc.branches) {
        if (!bus_ids.count(b.from_bus))
            throw ParseError(file, 0, "branch '" + b.id + "' references unknown bus '" + b.from_bus + "'");
        if (!bus_ids.count(b.to_bus))
            throw ParseError(file, 0, "branch '" + b.id + "' references unknown bus '" + b.to_bus + "'");
    }
    if (has_topo) {
        for (const auto& d : topo.devices) {
            if (!node_ids.count(d.node_a) || !node_ids.count(d.node_b))
                throw ParseError(file, 0, "breaker '" + d.id + "' references unknown node");
        }
        for (const auto& [node, bus] : topo.bus_map) {
            if (!bus_ids.count(bus))
                throw ParseError(file, 0, "node '" + node + "' maps to unknown bus '" + bus + "'");
        }
        for (const auto& [branch, term] : topo.terminal_map) {
            if (!branch_ids.count(branch))
                throw ParseError(file, 0, "terminal entry references unknown branch '" + branch + "'");
            if (!node_ids.count(term.node_a) || !node_ids.count(term.node_b))
                throw ParseError(file, 0, "terminal of branch '" + branch + "' references unknown node");
        }
        pc.topology = std::move(topo);
    }

    double imbalance = 0.0;
    for (const auto& b : pc.buses) imbalance += b.injection_mw;
    if (std::abs(imbalance) > 1e-6 * std::max(1.0, pc.base_mva))
        std::cerr << "warning: " << file << ": generation/load imbalance of " << imbalance
                  << " MW is carried by the slack\n";

    return pc;
}

std::map<std::string, SwitchStatus> process_topology(const NodeBreakerTopology& topo,
                                                     const std::vector<Branch>& branches) {
    // Connected components of the closed-device graph.
    std::unordered_map<std::string, int> comp;
    std::unordered_map<std::string, std::vector<std::string>> adj;
    for (const auto& d : topo.devices) {
        if (d.status != SwitchStatus::Closed) continue;
        adj[d.node_a].push_back(d.node_b);
        adj[d.node_b].push_back(d.node_a);
    }
    int next = 0;
    for (const auto& n : topo.nodes) {
        if (comp.count(n)) continue;
        int c = next++;
        std::deque<std::string> q{n};
        comp[n] = c;
        while (!q.empty()) {
            std::string cur = q.front();
            q.pop_front();
            for (const auto& nb : adj[cur]) {
                if (!comp.count(nb)) {
                    comp[nb] = c;
                    q.push_back(nb);
                }
            }
        }
    }

    // Component -> set of bus ids it touches.
    std::unordered_map<int, std::unordered_set<std::string>> comp_buses;
    for (const auto& [node, bus] : topo.bus_map) {
        auto it = comp.find(node);
        if (it != comp.end()) comp_buses[it->second].insert(bus);
    }

    std::map<std::string, SwitchStatus> out;
    for (const auto& [branch_id, term] : topo.terminal_map) {
        const Branch* br = nullptr;
        for (const auto& b : branches)
            if (b.id == branch_id) {
                br = &b;
                break;
            }
        if (!br) throw ModelError("terminal references unknown branch '" + branch_id + "'");
        auto ca = comp.find(term.node_a);
        auto cb = comp.find(term.node_b);
        if (ca == comp.end() || cb == comp.end())
            throw ModelError("branch '" + branch_id + "' terminal node missing from node set");
        bool a_ok = comp_buses[ca->second].count(br->from_bus) > 0;
        bool b_ok = comp_buses[cb->second].count(br->to_bus) > 0;
        out[branch_id] = (a_ok && b_ok) ? SwitchStatus::Closed : SwitchStatus::Open;
    }
    return out;
}

PowerCase apply_outages(const PowerCase& pcase, const std::set<std::string>& branch_ids) {
    for (const auto& id : branch_ids)
        if (!pcase.find_branch(id)) throw ModelError("unknown branch id '" + id + "'");
    PowerCase out = pcase;
    for (auto& b : out.branches)
        if (branch_ids.count(b.id)) b.status = SwitchStatus::Open;
    return out;
}

PowerCase resolve_topology(const PowerCase& pcase) {
    if (!pcase.topology) return pcase;
    PowerCase out = pcase;
    auto status = process_topology(*pcase.topology, pcase.branches);
    for (auto& b : out.branches) {
        auto it = status.find(b.id);
        if (it != status.end()) b.status = it->second;
    }
    return out;
}

}  // namespace gridsentry
