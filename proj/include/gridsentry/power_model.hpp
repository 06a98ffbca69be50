#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gridsentry/errors.hpp"

namespace gridsentry {

enum class SwitchStatus { Open, Closed };

struct Bus {
    std::string id;
    double injection_mw = 0.0;  // generation positive, load negative
    bool is_slack = false;
    double voltage_setpoint_pu = 1.0;
};

struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double resistance_pu = 0.0;
    double reactance_pu = 0.0;
    double flow_limit_mw = 0.0;
    SwitchStatus status = SwitchStatus::Closed;
};

struct SwitchingDevice {
    std::string id;
    std::string node_a;
    std::string node_b;
    SwitchStatus status = SwitchStatus::Closed;
};

struct BranchTerminals {
    std::string node_a;  // attachment on the from_bus side
    std::string node_b;  // attachment on the to_bus side
};

/// Breaker-level switching layer. Line status is implied: a branch is in
/// service only while both of its terminal nodes can reach their bus
/// through closed switching devices.
struct NodeBreakerTopology {
    std::vector<std::string> nodes;
    std::vector<SwitchingDevice> devices;
    std::map<std::string, BranchTerminals> terminal_map;  // branch id -> terminals
    std::map<std::string, std::string> bus_map;           // node id -> bus id
};

struct PowerCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::optional<NodeBreakerTopology> topology;

    const Bus* find_bus(std::string_view id) const;
    const Branch* find_branch(std::string_view id) const;
};

/// Parses the line-oriented case format:
///   BASEMVA <number>
///   BUS <id> <injection_mw> <slack:0|1> [<v_setpoint_pu>]
///   BRANCH <id> <from> <to> <r_pu> <x_pu> <limit_mw> <OPEN|CLOSED>
///   NODE <id> [<bus_id>]
///   BREAKER <id> <node_a> <node_b> <OPEN|CLOSED>
///   TERMINAL <branch_id> <node_a> <node_b>
/// '#' starts a comment. Ids containing spaces are single-quoted.
PowerCase parse_case(std::string_view text, std::string_view filename = "<case>");

/// Derives each mapped branch's status from breaker statuses: Closed iff
/// both terminal nodes reach a node of their respective bus over
/// closed-device edges only.
std::map<std::string, SwitchStatus> process_topology(const NodeBreakerTopology& topo,
                                                     const std::vector<Branch>& branches);

/// Copy of the case with the listed branches forced Open. Pure; the input
/// case is untouched. Unknown ids raise ModelError.
PowerCase apply_outages(const PowerCase& pcase, const std::set<std::string>& branch_ids);

/// Copy of the case with branch statuses overwritten by process_topology
/// for every branch that has terminals in the switching layer. Cases
/// without a topology come back unchanged.
PowerCase resolve_topology(const PowerCase& pcase);

}  // namespace gridsentry
