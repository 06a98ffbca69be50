#include "gridsentry/cyber.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "gridsentry/errors.hpp"
#include "gridsentry/util.hpp"

namespace gridsentry {

namespace {

struct LineReader {
    std::istringstream in;
    std::string filename;
    int line_no = 0;
    explicit LineReader(const std::string& text, std::string file)
        : in(text), filename(std::move(file)) {}
    bool next(std::string& raw) {
        if (!std::getline(in, raw)) return false;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        ++line_no;
        return true;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(filename, line_no, what);
    }
};

std::vector<std::string> tokens_or_fail(const LineReader& rd, std::string_view body) {
    try {
        return split_tokens(body);
    } catch (const std::invalid_argument& e) {
        rd.fail(e.what());
    }
}

const std::unordered_map<std::string, size_t> host_index(const std::vector<Host>& hosts) {
    std::unordered_map<std::string, size_t> ix;
    for (size_t i = 0; i < hosts.size(); ++i) ix[hosts[i].id] = i;
    return ix;
}

}  // namespace

bool ConnectivityMatrix::is_allowed(const std::string& src, const std::string& dst) const {
    auto s = index.find(src);
    auto d = index.find(dst);
    if (s == index.end()) throw ModelError("unknown host '" + src + "'");
    if (d == index.end()) throw ModelError("unknown host '" + dst + "'");
    return allowed[s->second][d->second];
}

const Vulnerability* ThreatModel::find_vulnerability(const std::string& id) const {
    for (const auto& v : vulnerabilities)
        if (v.id == id) return &v;
    return nullptr;
}

std::vector<Host> parse_hosts(const std::string& text, const std::string& filename) {
    LineReader rd(text, filename);
    std::vector<Host> hosts;
    std::string raw;
    int internet_count = 0;
    while (rd.next(raw)) {
        std::string_view body = strip_comment(raw);
        if (body.empty()) continue;
        auto tok = tokens_or_fail(rd, body);
        if (tok[0] != "HOST") rd.fail("expected HOST record, got '" + tok[0] + "'");
        if (tok.size() < 3 || tok.size() > 4)
            rd.fail("HOST takes <id> <kind> [controls=<branch>]");
        Host h;
        h.id = tok[1];
        for (const auto& prev : hosts)
            if (prev.id == h.id) rd.fail("duplicate host id '" + h.id + "'");
        if (tok[2] == "INTERNET")
            h.kind = HostKind::Internet;
        else if (tok[2] == "CONTROL")
            h.kind = HostKind::ControlHost;
        else if (tok[2] == "RELAY")
            h.kind = HostKind::RelayController;
        else
            rd.fail("host kind must be INTERNET, CONTROL, or RELAY, got '" + tok[2] + "'");
        if (tok.size() == 4) {
            if (tok[3].rfind("controls=", 0) != 0)
                rd.fail("unexpected token '" + tok[3] + "' (expected controls=<branch>)");
            if (h.kind != HostKind::RelayController)
                rd.fail("only RELAY hosts may carry a controls= mapping");
            std::string branch = tok[3].substr(9);
            if (branch.empty()) rd.fail("controls= requires a branch id");
            h.controls = branch;
        }
        if (h.kind == HostKind::Internet) ++internet_count;
        hosts.push_back(std::move(h));
    }
    if (internet_count != 1)
        throw ParseError(filename, rd.line_no,
                         "model requires exactly one INTERNET host, found " +
                             std::to_string(internet_count));
    return hosts;
}

std::vector<FirewallRule> parse_ruleset(const std::string& text, const std::vector<Host>& hosts,
                                        const std::string& filename) {
    LineReader rd(text, filename);
    auto ix = host_index(hosts);
    std::vector<FirewallRule> rules;
    std::string raw;
    while (rd.next(raw)) {
        std::string_view body = strip_comment(raw);
        if (body.empty()) continue;
        auto tok = tokens_or_fail(rd, body);
        if (tok.size() != 4) rd.fail("rule takes ALLOW|DENY <src|*> <dst|*> <port|*>");
        FirewallRule r;
        if (tok[0] == "ALLOW")
            r.action = RuleAction::Allow;
        else if (tok[0] == "DENY")
            r.action = RuleAction::Deny;
        else
            rd.fail("rule action must be ALLOW or DENY, got '" + tok[0] + "'");
        for (int f = 1; f <= 2; ++f) {
            if (tok[f] == "*") continue;
            if (!ix.count(tok[f])) rd.fail("unknown host '" + tok[f] + "'");
            (f == 1 ? r.src : r.dst) = tok[f];
        }
        if (tok[3] != "*") {
            long port = 0;
            try {
                port = parse_long(tok[3]);
            } catch (const std::invalid_argument&) {
                rd.fail("port must be an integer or '*', got '" + tok[3] + "'");
            }
            if (port < 0 || port > 65535) rd.fail("port out of range: " + tok[3]);
            r.port = static_cast<int>(port);
        }
        rules.push_back(std::move(r));
    }
    return rules;
}

ThreatModel parse_threat(const std::string& text, const std::vector<Host>& hosts,
                         const std::string& filename) {
    LineReader rd(text, filename);
    auto ix = host_index(hosts);
    ThreatModel tm;
    std::string raw;
    bool pending = false;  // one line of lookahead for the tree block parser

    auto indent_of = [](const std::string& s) {
        size_t i = 0;
        while (i < s.size() && s[i] == ' ') ++i;
        return i;
    };

    // Parses the indented node list under `TREE`; returns the single root.
    std::function<AttackTreeNode(size_t, std::string&, bool&)> parse_node =
        [&](size_t my_indent, std::string& line, bool& have_line) -> AttackTreeNode {
        auto tok = tokens_or_fail(rd, strip_comment(line));
        AttackTreeNode node;
        if (tok[0] == "OR")
            node.kind = AttackTreeNode::Kind::Or;
        else if (tok[0] == "AND")
            node.kind = AttackTreeNode::Kind::And;
        else if (tok[0] == "LEAF") {
            if (tok.size() != 2) rd.fail("LEAF takes one vulnerability id");
            node.kind = AttackTreeNode::Kind::Leaf;
            node.vuln_id = tok[1];
        } else
            rd.fail("tree node must be OR, AND, or LEAF, got '" + tok[0] + "'");
        if (node.kind != AttackTreeNode::Kind::Leaf && tok.size() != 1)
            rd.fail(tok[0] + " node takes no arguments");

        auto finish = [&]() {
            if (node.kind != AttackTreeNode::Kind::Leaf && node.children.empty())
                rd.fail(std::string(node.kind == AttackTreeNode::Kind::Or ? "OR" : "AND") +
                        " node requires at least one child");
        };

        have_line = false;
        bool carried = false;  // `line` still holds a record a child handed back
        while (carried || rd.next(line)) {
            carried = false;
            if (strip_comment(line).empty()) continue;
            have_line = true;
            size_t ind = indent_of(line);
            if (ind <= my_indent) {  // sibling or outer scope; caller consumes it
                finish();
                return node;
            }
            if (node.kind == AttackTreeNode::Kind::Leaf)
                rd.fail("LEAF nodes take no children");
            node.children.push_back(parse_node(ind, line, have_line));
            if (have_line) carried = true;
        }
        have_line = false;
        finish();
        return node;
    };

    while (pending || rd.next(raw)) {
        pending = false;
        std::string_view body = strip_comment(raw);
        if (body.empty()) continue;
        auto tok = tokens_or_fail(rd, body);
        if (tok[0] == "VULN") {
            if (tok.size() < 4 || tok.size() > 5)
                rd.fail("VULN takes <id> <host> <difficulty> [p=<value>]");
            Vulnerability v;
            v.id = tok[1];
            for (const auto& prev : tm.vulnerabilities)
                if (prev.id == v.id) rd.fail("duplicate vulnerability id '" + v.id + "'");
            if (!ix.count(tok[2])) rd.fail("unknown host '" + tok[2] + "'");
            v.host = tok[2];
            if (tok[3] == "EASY")
                v.difficulty = Difficulty::Easy;
            else if (tok[3] == "MEDIUM")
                v.difficulty = Difficulty::Medium;
            else if (tok[3] == "HARD")
                v.difficulty = Difficulty::Hard;
            else
                rd.fail("difficulty must be EASY, MEDIUM, or HARD, got '" + tok[3] + "'");
            if (tok.size() == 5) {
                if (tok[4].rfind("p=", 0) != 0)
                    rd.fail("unexpected token '" + tok[4] + "' (expected p=<value>)");
                double p = 0;
                try {
                    p = parse_double(tok[4].substr(2));
                } catch (const std::invalid_argument&) {
                    rd.fail("bad probability value '" + tok[4] + "'");
                }
                if (!(p > 0.0) || p > 1.0) rd.fail("probability override must be in (0,1]");
                v.probability_override = p;
            }
            tm.vulnerabilities.push_back(std::move(v));
        } else if (tok[0] == "TREE") {
            if (tok.size() != 2) rd.fail("TREE takes one goal name");
            AttackTree tree;
            tree.goal = tok[1];
            bool have_line = false;
            std::string line;
            while (rd.next(line)) {
                if (strip_comment(line).empty()) continue;
                have_line = true;
                break;
            }
            if (!have_line || indent_of(line) == 0)
                rd.fail("TREE block requires an indented root node");
            tree.root = parse_node(indent_of(line), line, have_line);
            tm.trees.push_back(std::move(tree));
            if (have_line) {
                if (indent_of(line) != 0) rd.fail("unexpected indentation after tree block");
                raw = line;
                pending = true;
            }
        } else {
            rd.fail("expected VULN or TREE record, got '" + tok[0] + "'");
        }
    }

    // Leaf references may point at vulnerabilities declared later in the
    // file, so they are validated after the full pass.
    std::function<void(const AttackTreeNode&)> check = [&](const AttackTreeNode& n) {
        if (n.kind == AttackTreeNode::Kind::Leaf) {
            if (!tm.find_vulnerability(n.vuln_id))
                throw ParseError(filename, 0,
                                 "tree leaf references unknown vulnerability '" + n.vuln_id + "'");
        }
        for (const auto& c : n.children) check(c);
    };
    for (const auto& t : tm.trees) check(t.root);
    return tm;
}

ConnectivityMatrix build_connectivity(const std::vector<FirewallRule>& rules,
                                      const std::vector<Host>& hosts) {
    ConnectivityMatrix m;
    for (const auto& h : hosts) {
        m.index[h.id] = m.hosts.size();
        m.hosts.push_back(h.id);
    }
    const size_t n = m.hosts.size();
    m.allowed.assign(n, std::vector<bool>(n, false));

    // Rules only distinguish ports they mention, so one representative of
    // "every other port" is enough to decide any-port reachability.
    std::set<int> ports;
    for (const auto& r : rules)
        if (r.port) ports.insert(*r.port);
    ports.insert(65536);  // matches only wildcard port rules

    auto decide = [&](const std::string& src, const std::string& dst, int port) {
        for (const auto& r : rules) {
            if (r.src && *r.src != src) continue;
            if (r.dst && *r.dst != dst) continue;
            if (r.port && *r.port != port) continue;
            return r.action == RuleAction::Allow;
        }
        return false;  // default deny
    };

    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            if (i == j) {
                m.allowed[i][j] = true;
                continue;
            }
            for (int port : ports)
                if (decide(m.hosts[i], m.hosts[j], port)) {
                    m.allowed[i][j] = true;
                    break;
                }
        }
    return m;
}

std::set<std::string> reachable_from(const ConnectivityMatrix& matrix,
                                     const std::set<std::string>& compromised) {
    for (const auto& c : compromised)
        if (!matrix.index.count(c)) throw ModelError("unknown host '" + c + "'");
    std::set<std::string> out;
    for (const auto& c : compromised) {
        size_t row = matrix.index.at(c);
        for (size_t j = 0; j < matrix.hosts.size(); ++j)
            if (matrix.allowed[row][j] && !compromised.count(matrix.hosts[j]))
                out.insert(matrix.hosts[j]);
    }
    return out;
}

double difficulty_to_probability(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return 0.75;
        case Difficulty::Medium: return 0.5;
        case Difficulty::Hard: return 0.25;
    }
    throw ModelError("unreachable difficulty value");
}

double vulnerability_probability(const Vulnerability& v) {
    if (v.probability_override) return *v.probability_override;
    return difficulty_to_probability(v.difficulty);
}

double aggregate_vulnerabilities(const std::vector<double>& probabilities, double epsilon) {
    if (probabilities.empty()) return epsilon;
    double miss = 1.0;
    for (double p : probabilities) miss *= 1.0 - p;
    return 1.0 - miss;
}

namespace {

struct LeafInfo {
    std::string host;
    bool conjunctive = false;
    std::vector<std::string> corequisites;
};

void collect_leaves(const AttackTreeNode& node, const ThreatModel& threat,
                    std::vector<const AttackTreeNode*>& and_stack, std::vector<LeafInfo>& out) {
    if (node.kind == AttackTreeNode::Kind::Leaf) {
        const Vulnerability* v = threat.find_vulnerability(node.vuln_id);
        if (!v) throw ModelError("tree leaf references unknown vulnerability '" + node.vuln_id + "'");
        LeafInfo info;
        info.host = v->host;
        info.conjunctive = !and_stack.empty();
        if (info.conjunctive) {
            // Siblings of the outermost AND scope bound what must fall together.
            std::function<void(const AttackTreeNode&)> hosts_under = [&](const AttackTreeNode& n) {
                if (n.kind == AttackTreeNode::Kind::Leaf) {
                    const Vulnerability* lv = threat.find_vulnerability(n.vuln_id);
                    if (lv && lv->host != v->host &&
                        std::find(info.corequisites.begin(), info.corequisites.end(), lv->host) ==
                            info.corequisites.end())
                        info.corequisites.push_back(lv->host);
                }
                for (const auto& c : n.children) hosts_under(c);
            };
            hosts_under(*and_stack.front());
        }
        out.push_back(std::move(info));
        return;
    }
    bool pushed = node.kind == AttackTreeNode::Kind::And;
    if (pushed) and_stack.push_back(&node);
    for (const auto& c : node.children) collect_leaves(c, threat, and_stack, out);
    if (pushed) and_stack.pop_back();
}

}  // namespace

std::vector<TreeEdge> tree_feasible_edges(const AttackTree& tree, const ThreatModel& threat,
                                          const ConnectivityMatrix& matrix) {
    std::vector<const AttackTreeNode*> and_stack;
    std::vector<LeafInfo> leaves;
    collect_leaves(tree.root, threat, and_stack, leaves);

    std::vector<TreeEdge> edges;
    auto seen = [&](const TreeEdge& e) {
        for (const auto& prev : edges)
            if (prev.src == e.src && prev.dst == e.dst) return true;
        return false;
    };
    for (const auto& leaf : leaves) {
        if (!matrix.index.count(leaf.host))
            throw ModelError("tree leaf targets unknown host '" + leaf.host + "'");
        size_t dst = matrix.index.at(leaf.host);
        for (size_t s = 0; s < matrix.hosts.size(); ++s) {
            if (s == dst || !matrix.allowed[s][dst]) continue;
            TreeEdge e;
            e.src = matrix.hosts[s];
            e.dst = leaf.host;
            e.conjunctive = leaf.conjunctive;
            e.corequisite_hosts = leaf.corequisites;
            if (!seen(e)) edges.push_back(std::move(e));
        }
    }
    return edges;
}

bool tree_goal_satisfied(const AttackTree& tree, const ThreatModel& threat,
                         const std::set<std::string>& compromised_hosts) {
    std::function<bool(const AttackTreeNode&)> eval = [&](const AttackTreeNode& n) -> bool {
        switch (n.kind) {
            case AttackTreeNode::Kind::Leaf: {
                const Vulnerability* v = threat.find_vulnerability(n.vuln_id);
                if (!v)
                    throw ModelError("tree leaf references unknown vulnerability '" + n.vuln_id +
                                     "'");
                return compromised_hosts.count(v->host) > 0;
            }
            case AttackTreeNode::Kind::Or:
                for (const auto& c : n.children)
                    if (eval(c)) return true;
                return false;
            case AttackTreeNode::Kind::And:
                for (const auto& c : n.children)
                    if (!eval(c)) return false;
                return true;
        }
        return false;
    };
    return eval(tree.root);
}

}  // namespace gridsentry
