#include <CLI11.hpp>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "gridsentry/analysis.hpp"
#include "gridsentry/errors.hpp"
#include "gridsentry/net.hpp"
#include "gridsentry/pomdp.hpp"
#include "gridsentry/protocol.hpp"

namespace gs = gridsentry;

namespace {

struct CommonArgs {
    std::string case_path, hosts_path, rules_path, threat_path;
    gs::AnalysisOptions options;
    std::string mode = "dc";
    bool force_depth = false;
};

void add_model_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--case", args.case_path, "power case file")->required();
    cmd->add_option("--hosts", args.hosts_path, "host/mapping file")->required();
    cmd->add_option("--rules", args.rules_path, "firewall ruleset file")->required();
    cmd->add_option("--threat", args.threat_path, "threat model file")->required();
}

void add_analysis_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--depth", args.options.depth, "look-ahead depth");
    cmd->add_option("--gamma", args.options.gamma, "discount factor in (0,1)");
    cmd->add_option("--mode", args.mode, "power-flow mode: dc or ac")
        ->check(CLI::IsMember({"dc", "ac"}));
    cmd->add_option("--top", args.options.top_k, "ranked paths to report");
    cmd->add_option("--epsilon", args.options.epsilon, "unknown-exploit probability floor");
    cmd->add_option("--penalty", args.options.divergence_penalty,
                    "severity charged for non-convergent outage cases");
    cmd->add_option("--tol", args.options.ac.tol_mw, "AC mismatch tolerance in MW");
    cmd->add_option("--max-iter", args.options.ac.max_iter, "AC iteration cap");
    cmd->add_option("--seed", args.options.seed, "random seed for the studies");
    cmd->add_flag("--force-depth", args.force_depth, "lift the depth<=6 guard");
}

void finish_options(CommonArgs& args) {
    args.options.mode = args.mode == "ac" ? gs::FlowMode::Ac : gs::FlowMode::Dc;
    if (!(args.options.gamma > 0.0) || !(args.options.gamma < 1.0))
        throw gs::ModelError("gamma must lie in (0,1)");
    if (args.options.depth < 0 || (args.options.depth > 6 && !args.force_depth))
        throw gs::ModelError("depth must lie in [0,6]; pass --force-depth to go deeper");
}

gs::CyberPhysicalModel load(const CommonArgs& args) {
    return gs::load_model(args.case_path, args.hosts_path, args.rules_path, args.threat_path,
                          args.options.epsilon);
}

gs::Session fresh_session(const gs::CyberPhysicalModel& model, const CommonArgs& args,
                          gs::u128 root, const gs::Belief& belief) {
    gs::Session s;
    s.fingerprint = gs::model_fingerprint(
        model.case_text, gs::read_file(args.hosts_path), gs::read_file(args.rules_path),
        gs::read_file(args.threat_path));
    s.root = root;
    s.gamma = args.options.gamma;
    s.depth = args.options.depth;
    s.mode = args.options.mode;
    s.epsilon = args.options.epsilon;
    s.divergence_penalty = args.options.divergence_penalty;
    s.seed = args.options.seed;
    for (const auto& [state, p] : belief.probabilities) s.belief.emplace_back(state, p);
    return s;
}

int cmd_analyze(CommonArgs& args, const std::string& session_path) {
    finish_options(args);
    auto model = load(args);
    auto result = gs::run_analysis(model, 0, args.options);
    std::cout << gs::format_report(model, result);
    if (!session_path.empty())
        gs::save_session(session_path, fresh_session(model, args, 0, gs::point_belief(0)));
    return 0;
}

int cmd_serve(CommonArgs& args, const std::string& endpoint_text, bool once) {
    finish_options(args);
    auto model = load(args);
    gs::Endpoint ep = gs::parse_endpoint(endpoint_text, gs::default_port());
    gs::TcpListener listener = gs::TcpListener::bind(ep.host, ep.port);
    std::cerr << "gridsentry: listening on " << ep.host << ":" << listener.port() << "\n";
    gs::ServerOptions options;
    options.analysis = args.options;
    options.once = once;
    gs::run_server(listener, model, options);
    return 0;
}

int cmd_client(const std::string& endpoint_text, const std::string& mode, double tol,
               int max_iter, double penalty, int retries, int backoff_ms, bool once) {
    gs::Endpoint ep = gs::parse_endpoint(endpoint_text, gs::default_port());
    gs::ClientOptions options;
    options.config.mode = mode == "ac" ? gs::FlowMode::Ac : gs::FlowMode::Dc;
    options.config.ac.tol_mw = tol;
    options.config.ac.max_iter = max_iter;
    options.config.divergence_penalty = penalty;
    options.max_retries = retries;
    options.backoff_ms = backoff_ms;
    options.exit_on_disconnect = once;
    gs::run_client(ep, options);
    return 0;
}

int cmd_inject_alert(CommonArgs& args, const std::string& session_path,
                     const std::vector<std::string>& alerts, double tpr, double fpr) {
    auto model = load(args);
    gs::Session session = gs::load_session(session_path);
    uint64_t fp = gs::model_fingerprint(model.case_text, gs::read_file(args.hosts_path),
                                        gs::read_file(args.rules_path),
                                        gs::read_file(args.threat_path));
    if (fp != session.fingerprint)
        throw gs::ModelError("model files changed since the session was created");

    args.options.gamma = session.gamma;
    args.options.depth = session.depth;
    args.options.mode = session.mode;
    args.options.epsilon = session.epsilon;
    args.options.divergence_penalty = session.divergence_penalty;
    args.options.seed = session.seed;

    // Rebuild the exploration the belief lives in, then filter and re-root.
    gs::Pomdp pomdp = gs::generate_state_space(model, session.root, session.depth, session.gamma);
    gs::LocalSeverityEvaluator evaluator(model.pcase, args.options.severity_config());
    gs::evaluate_severities(pomdp, evaluator);
    gs::compute_security_index(pomdp);

    gs::Belief belief;
    for (const auto& [state, p] : session.belief) belief.probabilities[state] = p;
    std::set<std::string> alerted(alerts.begin(), alerts.end());
    auto obs = gs::ObservationModel::uniform(model.devices.size(), tpr, fpr);
    gs::Belief updated = gs::update_belief(pomdp, belief, alerted, obs);
    gs::u128 root = gs::ml_state(updated);

    auto result = gs::run_analysis(model, root, args.options);
    std::cout << gs::format_report(model, result);

    gs::Session next = session;
    next.root = root;
    next.belief.clear();
    for (const auto& [state, p] : updated.probabilities) next.belief.emplace_back(state, p);
    gs::save_session(session_path, next);
    return 0;
}

int cmd_study(CommonArgs& args, const std::string& kind, int max_depth,
              std::vector<double> deltas, int trials, int top_n) {
    finish_options(args);
    auto model = load(args);
    if (kind == "depth" || kind == "time") {
        auto rows = gs::depth_study(model, args.options.gamma, args.options.severity_config(),
                                    max_depth);
        if (kind == "depth") {
            std::cout << "depth\tstates\n";
            for (const auto& r : rows) std::cout << r.depth << "\t" << r.state_count << "\n";
        } else {
            std::cout << "depth\tseconds\n";
            for (const auto& r : rows)
                std::cout << r.depth << "\t" << gs::fmt_double(r.seconds) << "\n";
        }
        return 0;
    }
    if (kind == "robustness") {
        if (deltas.empty()) deltas = {0.0, 0.05, 0.10, 0.15, 0.20, 0.25};
        auto result = gs::run_analysis(model, 0, args.options);
        std::cout << "delta\tmean_rank_stddev\n";
        for (double d : deltas) {
            auto study = gs::sensitivity_study(result.pomdp, d, trials, top_n, args.options.seed);
            std::cout << gs::fmt_double(d) << "\t" << gs::fmt_double(study.mean_rank_stddev)
                      << "\n";
        }
        return 0;
    }
    throw gs::ModelError("unknown study kind '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"online cyber-physical contingency analysis"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string session_path;
    std::string endpoint_text;
    bool once = false;

    auto* analyze = app.add_subcommand("analyze", "offline analysis of one model");
    add_model_flags(analyze, args);
    add_analysis_flags(analyze, args);
    analyze->add_option("--session", session_path, "write a session file for later updates");

    auto* serve = app.add_subcommand("serve", "analysis server driving a power-flow client");
    add_model_flags(serve, args);
    add_analysis_flags(serve, args);
    serve->add_option("--endpoint", endpoint_text, "listen address host:port");
    serve->add_flag("--once", once, "exit after the first completed analysis");

    std::string client_mode = "dc";
    double client_tol = 1e-3, client_penalty = 10.0;
    int client_max_iter = 20, retries = 5, backoff_ms = 200;
    bool client_once = false;
    auto* client = app.add_subcommand("client", "power-flow client serving a remote analysis");
    client->add_option("--endpoint", endpoint_text, "server address host:port");
    client->add_option("--mode", client_mode, "power-flow mode: dc or ac")
        ->check(CLI::IsMember({"dc", "ac"}));
    client->add_option("--tol", client_tol, "AC mismatch tolerance in MW");
    client->add_option("--max-iter", client_max_iter, "AC iteration cap");
    client->add_option("--penalty", client_penalty, "severity for non-convergent cases");
    client->add_option("--retries", retries, "connection attempts before giving up");
    client->add_option("--backoff-ms", backoff_ms, "initial reconnect backoff");
    client->add_flag("--once", client_once, "exit when the server disconnects");

    std::vector<std::string> alerts;
    double tpr = 0.9, fpr = 0.1;
    auto* inject = app.add_subcommand("inject-alert", "fold detector alerts into a session");
    add_model_flags(inject, args);
    inject->add_option("--session", session_path, "session file to update")->required();
    inject->add_option("--alert", alerts, "alerted device id (repeatable)");
    inject->add_option("--tpr", tpr, "alert true-positive rate");
    inject->add_option("--fpr", fpr, "alert false-positive rate");
    inject->add_option("--top", args.options.top_k, "ranked paths to report");

    std::string study_kind;
    int max_depth = 6, trials = 100, top_n = 10;
    std::vector<double> deltas;
    auto* study = app.add_subcommand("study", "depth, time, or robustness study");
    study->add_option("kind", study_kind, "depth | time | robustness")
        ->required()
        ->check(CLI::IsMember({"depth", "time", "robustness"}));
    add_model_flags(study, args);
    add_analysis_flags(study, args);
    study->add_option("--max-depth", max_depth, "largest depth for depth/time studies");
    study->add_option("--delta", deltas, "probability deviation (repeatable)");
    study->add_option("--trials", trials, "perturbation trials per delta");
    study->add_option("--top-n", top_n, "contingencies tracked by the robustness study");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) return cmd_analyze(args, session_path);
        if (serve->parsed()) return cmd_serve(args, endpoint_text, once);
        if (client->parsed())
            return cmd_client(endpoint_text, client_mode, client_tol, client_max_iter,
                              client_penalty, retries, backoff_ms, client_once);
        if (inject->parsed()) return cmd_inject_alert(args, session_path, alerts, tpr, fpr);
        if (study->parsed()) return cmd_study(args, study_kind, max_depth, deltas, trials, top_n);
    } catch (const std::exception& e) {
        std::cerr << "gridsentry: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
