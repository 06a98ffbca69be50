#include "gridsentry/analysis.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridsentry/errors.hpp"

namespace gridsentry {

CyberPhysicalModel load_model(const std::string& case_path, const std::string& hosts_path,
                              const std::string& rules_path, const std::string& threat_path,
                              double epsilon) {
    std::string case_text = read_file(case_path);
    std::string hosts_text = read_file(hosts_path);
    std::string rules_text = read_file(rules_path);
    std::string threat_text = read_file(threat_path);

    PowerCase pcase = resolve_topology(parse_case(case_text, case_path));
    auto hosts = parse_hosts(hosts_text, hosts_path);
    auto rules = parse_ruleset(rules_text, hosts, rules_path);
    auto threat = parse_threat(threat_text, hosts, threat_path);
    return CyberPhysicalModel::assemble(std::move(pcase), std::move(case_text), std::move(hosts),
                                        std::move(rules), std::move(threat), epsilon);
}

AnalysisResult run_analysis(const CyberPhysicalModel& model, u128 root,
                            const AnalysisOptions& options, SeverityEvaluator& evaluator) {
    AnalysisResult result;
    result.pomdp = generate_state_space(model, root, options.depth, options.gamma);
    evaluate_severities(result.pomdp, evaluator);
    compute_security_index(result.pomdp);
    result.paths = rank_paths(result.pomdp, root, options.top_k);
    return result;
}

AnalysisResult run_analysis(const CyberPhysicalModel& model, u128 root,
                            const AnalysisOptions& options) {
    LocalSeverityEvaluator evaluator(model.pcase, options.severity_config());
    return run_analysis(model, root, options, evaluator);
}

std::string format_report(const CyberPhysicalModel& model, const AnalysisResult& result) {
    const Pomdp& p = result.pomdp;
    std::string out;
    for (u128 s : p.states) {
        out += "STATE " + u128_to_string(s) + " F=" + fmt_double(p.severity.at(s)) +
               " I=" + fmt_double(p.index.at(s)) + "\n";
    }
    for (u128 s : p.penalized) out += "PENALIZED " + u128_to_string(s) + "\n";
    auto device_name = [&](int32_t idx) {
        return idx == kInternetSource ? model.internet : model.devices.at(idx).name;
    };
    for (size_t i = 0; i < result.paths.size(); ++i) {
        out += "PATH " + std::to_string(i + 1) + "\n";
        for (const auto& step : result.paths[i].steps)
            out += "STEP " + device_name(step.source) + " -> " + device_name(step.target) +
                   " I=" + fmt_double(step.successor_index) + "\n";
    }
    return out;
}

uint64_t model_fingerprint(const std::string& case_text, const std::string& hosts_text,
                           const std::string& rules_text, const std::string& threat_text) {
    uint64_t h = fnv1a64(case_text);
    h = fnv1a64(hosts_text, h);
    h = fnv1a64(rules_text, h);
    h = fnv1a64(threat_text, h);
    return h;
}

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string serialize_session(const Session& session) {
    std::string out = "GRIDSENTRY SESSION v1\n";
    out += "FINGERPRINT " + hex64(session.fingerprint) + "\n";
    out += "ROOT " + u128_to_string(session.root) + "\n";
    out += "GAMMA " + g17(session.gamma) + "\n";
    out += "DEPTH " + std::to_string(session.depth) + "\n";
    out += std::string("MODE ") + (session.mode == FlowMode::Dc ? "dc" : "ac") + "\n";
    out += "EPSILON " + g17(session.epsilon) + "\n";
    out += "PENALTY " + g17(session.divergence_penalty) + "\n";
    out += "SEED " + std::to_string(session.seed) + "\n";
    for (const auto& [s, p] : session.belief)
        out += "BELIEF " + u128_to_string(s) + " " + g17(p) + "\n";
    return out;
}

Session parse_session(const std::string& text, const std::string& filename) {
    std::istringstream in(text);
    Session s;
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) -> void {
        throw ParseError(filename, line_no, what);
    };
    auto parse_state_id = [&](const std::string& id) -> u128 {
        auto v = u128_from_string(id);
        if (!v) fail("bad state id '" + id + "'");
        return *v;
    };
    if (!std::getline(in, line)) fail("empty session file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "GRIDSENTRY SESSION v1") fail("unrecognized session header '" + line + "'");
    bool saw_fingerprint = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        try {
            if (key == "FINGERPRINT") {
                std::string hex;
                ls >> hex;
                if (hex.size() != 16) fail("fingerprint must be 16 hex digits");
                s.fingerprint = std::stoull(hex, nullptr, 16);
                saw_fingerprint = true;
            } else if (key == "ROOT") {
                std::string id;
                ls >> id;
                s.root = parse_state_id(id);
            } else if (key == "GAMMA") {
                ls >> s.gamma;
            } else if (key == "DEPTH") {
                ls >> s.depth;
            } else if (key == "MODE") {
                std::string mode;
                ls >> mode;
                if (mode == "dc")
                    s.mode = FlowMode::Dc;
                else if (mode == "ac")
                    s.mode = FlowMode::Ac;
                else
                    fail("mode must be dc or ac, got '" + mode + "'");
            } else if (key == "EPSILON") {
                ls >> s.epsilon;
            } else if (key == "PENALTY") {
                ls >> s.divergence_penalty;
            } else if (key == "SEED") {
                ls >> s.seed;
            } else if (key == "BELIEF") {
                std::string id;
                double p = 0;
                ls >> id >> p;
                s.belief.emplace_back(parse_state_id(id), p);
            } else {
                fail("unknown session key '" + key + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            fail(std::string("bad value: ") + e.what());
        }
        if (ls.fail()) fail("missing or malformed value for '" + key + "'");
    }
    if (!saw_fingerprint) fail("session lacks a FINGERPRINT line");
    return s;
}

void save_session(const std::string& path, const Session& session) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write session file '" + path + "'");
    out << serialize_session(session);
    if (!out.flush()) throw std::runtime_error("failed writing session file '" + path + "'");
}

Session load_session(const std::string& path) { return parse_session(read_file(path), path); }

}  // namespace gridsentry
