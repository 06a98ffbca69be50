#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridsentry/pomdp.hpp"

namespace gridsentry {

struct AnalysisOptions {
    double gamma = 0.9;
    int depth = 4;
    FlowMode mode = FlowMode::Dc;
    AcOptions ac;
    double epsilon = 0.01;
    double divergence_penalty = 10.0;
    size_t top_k = 3;
    uint64_t seed = 0;

    SeverityConfig severity_config() const { return {mode, ac, divergence_penalty}; }
};

CyberPhysicalModel load_model(const std::string& case_path, const std::string& hosts_path,
                              const std::string& rules_path, const std::string& threat_path,
                              double epsilon = 0.01);

struct AnalysisResult {
    Pomdp pomdp;
    std::vector<RankedPath> paths;
};

AnalysisResult run_analysis(const CyberPhysicalModel& model, u128 root,
                            const AnalysisOptions& options, SeverityEvaluator& evaluator);
AnalysisResult run_analysis(const CyberPhysicalModel& model, u128 root,
                            const AnalysisOptions& options);

// STATE lines in state order, PENALIZED markers when divergence penalties
// were substituted, then the ranked PATH blocks with host-name steps.
std::string format_report(const CyberPhysicalModel& model, const AnalysisResult& result);

struct Session {
    uint64_t fingerprint = 0;
    u128 root = 0;
    double gamma = 0.9;
    int depth = 4;
    FlowMode mode = FlowMode::Dc;
    double epsilon = 0.01;
    double divergence_penalty = 10.0;
    uint64_t seed = 0;
    std::vector<std::pair<u128, double>> belief;  // state id, probability
};

uint64_t model_fingerprint(const std::string& case_text, const std::string& hosts_text,
                           const std::string& rules_text, const std::string& threat_text);

std::string serialize_session(const Session& session);
Session parse_session(const std::string& text, const std::string& filename = "<session>");
void save_session(const std::string& path, const Session& session);
Session load_session(const std::string& path);

}  // namespace gridsentry
