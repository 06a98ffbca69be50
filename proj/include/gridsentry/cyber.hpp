#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridsentry {

enum class HostKind { Internet, ControlHost, RelayController };

struct Host {
    std::string id;
    HostKind kind = HostKind::ControlHost;
    std::optional<std::string> controls;  // branch id, RelayController only
};

enum class RuleAction { Allow, Deny };

// Wildcard fields are stored as nullopt.
struct FirewallRule {
    RuleAction action = RuleAction::Deny;
    std::optional<std::string> src;
    std::optional<std::string> dst;
    std::optional<int> port;
};

struct ConnectivityMatrix {
    std::vector<std::string> hosts;  // model order
    std::unordered_map<std::string, size_t> index;
    std::vector<std::vector<bool>> allowed;

    bool is_allowed(const std::string& src, const std::string& dst) const;
};

enum class Difficulty { Easy, Medium, Hard };

struct Vulnerability {
    std::string id;
    std::string host;
    Difficulty difficulty = Difficulty::Medium;
    std::optional<double> probability_override;
};

struct AttackTreeNode {
    enum class Kind { Or, And, Leaf };
    Kind kind = Kind::Or;
    std::string vuln_id;  // Leaf only
    std::vector<AttackTreeNode> children;
};

struct AttackTree {
    std::string goal;
    AttackTreeNode root;
};

struct ThreatModel {
    std::vector<Vulnerability> vulnerabilities;
    std::vector<AttackTree> trees;

    const Vulnerability* find_vulnerability(const std::string& id) const;
};

std::vector<Host> parse_hosts(const std::string& text, const std::string& filename = "<hosts>");
std::vector<FirewallRule> parse_ruleset(const std::string& text, const std::vector<Host>& hosts,
                                        const std::string& filename = "<rules>");
ThreatModel parse_threat(const std::string& text, const std::vector<Host>& hosts,
                         const std::string& filename = "<threat>");

ConnectivityMatrix build_connectivity(const std::vector<FirewallRule>& rules,
                                      const std::vector<Host>& hosts);
// Hosts newly reachable in one hop from the compromised set; the seed hosts
// themselves are excluded. Unknown seed names raise ModelError.
std::set<std::string> reachable_from(const ConnectivityMatrix& matrix,
                                     const std::set<std::string>& compromised);

double difficulty_to_probability(Difficulty d);
double vulnerability_probability(const Vulnerability& v);
// 1 - prod(1 - p_i); empty list falls back to the unknown-exploit floor.
double aggregate_vulnerabilities(const std::vector<double>& probabilities, double epsilon = 0.01);

// Candidate exploit edge contributed by an attack tree. Edges under an AND
// ancestor are tagged conjunctive and list the sibling hosts that must also
// be compromised before the AND goal fires.
struct TreeEdge {
    std::string src;
    std::string dst;
    bool conjunctive = false;
    std::vector<std::string> corequisite_hosts;
};

std::vector<TreeEdge> tree_feasible_edges(const AttackTree& tree, const ThreatModel& threat,
                                          const ConnectivityMatrix& matrix);
bool tree_goal_satisfied(const AttackTree& tree, const ThreatModel& threat,
                         const std::set<std::string>& compromised_hosts);

}  // namespace gridsentry
