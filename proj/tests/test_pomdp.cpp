#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gridsentry/analysis.hpp"
#include "gridsentry/pomdp.hpp"
#include "gridsentry/util.hpp"
#include "oracles.hpp"

using namespace gridsentry;

namespace {
std::string fx(const std::string& name) { return std::string(FIXTURE_DIR) + "/" + name; }

CyberPhysicalModel load_fixture(const std::string& stem) {
    return load_model(fx(stem + ".case"), fx(stem + ".hosts"), fx(stem + ".rules"),
                      fx(stem + ".threat"));
}

Pomdp analyzed(const CyberPhysicalModel& model, int depth, double gamma = 0.9) {
    Pomdp p = generate_state_space(model, 0, depth, gamma);
    LocalSeverityEvaluator ev(model.pcase, SeverityConfig{});
    evaluate_severities(p, ev);
    compute_security_index(p);
    return p;
}
}  // namespace

TEST_CASE("assemble: devices are the non-Internet hosts in file order") {
    auto model = load_fixture("sevenbus");
    CHECK(model.internet == "internet");
    REQUIRE(model.devices.size() == 4);
    CHECK(model.devices[0].name == "fw-dmz");
    CHECK_FALSE(model.devices[0].is_relay);
    CHECK(model.devices[2].name == "rtu-a");
    CHECK(model.devices[2].is_relay);
    CHECK(model.devices[2].controls == "Capital City$BRK$4647");
    CHECK(model.device_index.at("rtu-b") == 3);

    CHECK(model.exploit_probability(0) == doctest::Approx(0.75));  // easy
    CHECK(model.exploit_probability(1) == doctest::Approx(0.5));   // medium
    CHECK(model.exploit_probability(2) == doctest::Approx(0.25));  // hard
    CHECK(model.exploit_probability(3) == doctest::Approx(0.35));  // override

    auto relays = model.relay_branches();
    REQUIRE(relays.size() == 2);
    CHECK(relays[0] == "Capital City$BRK$4647");
    CHECK(relays[1] == "L4");
}

TEST_CASE("assemble: a relay pointing at a missing branch is rejected") {
    auto pc = resolve_topology(parse_case(read_file(fx("dbl.case")), "dbl.case"));
    auto hosts = parse_hosts(read_file(fx("chain.hosts")), "chain.hosts");
    auto rules = parse_ruleset(read_file(fx("chain.rules")), hosts, "chain.rules");
    auto threat = parse_threat(read_file(fx("chain.threat")), hosts, "chain.threat");
    // chain's relay H2 controls L1, which dbl.case does not have.
    CHECK_THROWS_AS(CyberPhysicalModel::assemble(pc, "", hosts, rules, threat), ModelError);
}

TEST_CASE("assemble: difficulty tiers feed the exploit probabilities") {
    auto model = load_fixture("clique3");
    // Every host has exactly one vulnerability; spot-check aggregation.
    CHECK(model.exploit_probability(0) == doctest::Approx(0.75));
    CHECK(model.exploit_probability(1) == doctest::Approx(0.5));
    CHECK(model.exploit_probability(2) == doctest::Approx(0.25));
    CHECK(model.epsilon == 0.01);
}

TEST_CASE("trees restrict which vulnerabilities count") {
    auto model = load_fixture("dbl");
    // All three vulnerabilities are tree leaves, so each host keeps its own.
    CHECK(model.exploit_probability(0) == doctest::Approx(0.9));
    CHECK(model.exploit_probability(1) == doctest::Approx(0.8));
    CHECK(model.exploit_probability(2) == doctest::Approx(0.8));
}

TEST_CASE("state space: two-hop chain explores exactly three states") {
    auto model = load_fixture("chain");
    auto p = generate_state_space(model, 0, 2);
    REQUIRE(p.states.size() == 3);
    CHECK(p.states[0] == 0);
    CHECK(p.states[1] == 1);
    CHECK(p.states[2] == 3);

    const auto& a0 = p.actions_of(0);
    REQUIRE(a0.size() == 1);
    CHECK(a0[0].source == kInternetSource);
    CHECK(a0[0].target == 0);
    CHECK(a0[0].probability == doctest::Approx(1.0));

    const auto& a1 = p.actions_of(1);
    REQUIRE(a1.size() == 1);
    CHECK(a1[0].source == 0);  // H1 pivots, the outside cannot reach H2
    CHECK(a1[0].target == 1);

    CHECK(p.actions_of(3).empty());  // horizon
}

TEST_CASE("state space: merged privilege sets, sorted by size then bits") {
    auto model = load_fixture("clique3");
    auto p = generate_state_space(model, 0, 3);
    REQUIRE(p.states.size() == 8);
    for (size_t i = 1; i < p.states.size(); ++i) {
        int pa = popcount128(p.states[i - 1]);
        int pb = popcount128(p.states[i]);
        CHECK((pa < pb || (pa == pb && p.states[i - 1] < p.states[i])));
    }
    // Full clique: three actions from the root, each into a singleton.
    CHECK(p.actions_of(0).size() == 3);
    CHECK(p.actions_of(7).empty());
}

TEST_CASE("state space: equals exhaustive sequence enumeration") {
    for (const std::string stem : {"clique3", "dbl", "chain", "wellsep"}) {
        auto model = load_fixture(stem);
        auto allowed = [&](int src, int dst) {
            const std::string& s =
                src < 0 ? model.internet : model.devices[(size_t)src].name;
            return model.connectivity.is_allowed(s, model.devices[(size_t)dst].name);
        };
        for (int depth = 0; depth <= 6; ++depth) {
            auto p = generate_state_space(model, 0, depth);
            auto want = oracles::reachable_sets(allowed, (int)model.devices.size(), 0, depth);
            REQUIRE(p.states.size() == want.size());
            for (u128 s : p.states) CHECK(want.count(s) == 1);
        }
    }
}

TEST_CASE("state space: non-zero roots and bad roots") {
    auto model = load_fixture("clique3");
    auto p = generate_state_space(model, 3, 2);
    CHECK(p.root == 3);
    CHECK(p.contains(3));
    CHECK(p.contains(7));
    CHECK_FALSE(p.contains(0));

    CHECK_THROWS_AS(generate_state_space(model, u128(1) << 100, 1), ModelError);
}

TEST_CASE("state space: depth zero is just the root") {
    auto model = load_fixture("chain");
    auto p = generate_state_space(model, 0, 0);
    REQUIRE(p.states.size() == 1);
    CHECK(p.actions_of(0).empty());
}

TEST_CASE("severities: one power flow per distinct relay pattern") {
    auto model = load_fixture("dbl");
    auto p = generate_state_space(model, 0, 3);
    LocalSeverityEvaluator ev(model.pcase, SeverityConfig{});
    evaluate_severities(p, ev);
    // States {}, {H1}, {H1,RA}, {H1,RB}, {H1,RA,RB} share relay patterns
    // {}, {}, {RA}, {RB}, {RA,RB}: four distinct solves.
    CHECK(p.states.size() == 5);
    CHECK(ev.solve_count() == 4);
    CHECK(p.severity.at(0) == 0.0);
    CHECK(p.severity.at(1) == 0.0);
    CHECK(p.severity.at(3) == doctest::Approx(0.03125).epsilon(1e-12));
    CHECK(p.severity.at(5) == doctest::Approx(0.03125).epsilon(1e-12));
    CHECK(p.severity.at(7) == doctest::Approx(1.5625).epsilon(1e-12));
    CHECK(p.penalized.empty());
}

TEST_CASE("severities: diverging outage takes the penalty and is flagged") {
    auto model = load_fixture("acdiv");
    auto p = generate_state_space(model, 0, 1);
    SeverityConfig cfg;
    cfg.mode = FlowMode::Ac;
    LocalSeverityEvaluator ev(model.pcase, cfg);
    evaluate_severities(p, ev);
    CHECK(p.severity.at(0) == 0.0);
    CHECK(p.severity.at(1) == 10.0);
    CHECK(p.penalized.count(1) == 1);
}

TEST_CASE("security index: hand-worked two-hop chain") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    CHECK(std::abs(p.index.at(3)) == 0.0);
    CHECK(p.index.at(1) == doctest::Approx(0.9 * 1.0 * 0.04).epsilon(1e-12));
    CHECK(p.index.at(0) == doctest::Approx(0.0324).epsilon(1e-12));
}

TEST_CASE("security index: requires severities first") {
    auto model = load_fixture("chain");
    auto p = generate_state_space(model, 0, 2);
    CHECK_THROWS_AS(compute_security_index(p), ModelError);
}

TEST_CASE("security index: never negative even when severity drops") {
    Pomdp p;
    p.gamma = 0.9;
    p.states = {0, 1};
    p.state_pos[0] = 0;
    p.state_pos[1] = 1;
    p.actions.resize(2);
    p.actions[0].push_back({kInternetSource, 0, 1.0});
    p.severity[0] = 5.0;  // attacking from here only makes things better
    p.severity[1] = 1.0;
    compute_security_index(p);
    CHECK(p.index.at(1) == 0.0);
    CHECK(p.index.at(0) == 0.0);
}

TEST_CASE("security index: matches the recursive oracle on random graphs") {
    std::mt19937_64 rng(5150);
    for (int trial = 0; trial < 60; ++trial) {
        auto p = oracles::random_pomdp(rng, 12);
        compute_security_index(p);
        std::map<u128, double> memo;
        for (u128 s : p.states)
            CHECK(std::abs(p.index.at(s) - oracles::security_index(p, s, memo)) < 1e-12);
    }
}

TEST_CASE("belief: point mass and maximum-likelihood tie-breaking") {
    auto b = point_belief(4);
    CHECK(b.probabilities.at(4) == 1.0);
    CHECK(ml_state(b) == 4);

    Belief tie;
    tie.probabilities[5] = 0.5;
    tie.probabilities[2] = 0.5;
    CHECK(ml_state(tie) == 2);  // smallest id wins ties
    CHECK_THROWS_AS(ml_state(Belief{}), ModelError);
}

TEST_CASE("belief: hand Bayes update on the chain fixture") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    auto obs = ObservationModel::uniform(model.devices.size(), 0.9, 0.1);
    auto post = update_belief(p, point_belief(0), {"H1"}, obs);
    REQUIRE(post.probabilities.size() == 2);
    CHECK(post.probabilities.at(0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(post.probabilities.at(1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(ml_state(post) == 1);
}

TEST_CASE("belief: static policy skips prediction") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    auto obs = ObservationModel::uniform(model.devices.size(), 0.9, 0.1);
    auto post = update_belief(p, point_belief(0), {}, obs, PredictPolicy::Static);
    // No prediction, no alert: the point mass only gets reweighed, and a
    // lone state renormalizes back to one.
    REQUIRE(post.probabilities.size() == 1);
    CHECK(post.probabilities.at(0) == doctest::Approx(1.0));
}

TEST_CASE("belief: uninformative sensors return the predicted prior") {
    auto model = load_fixture("dbl");
    auto p = analyzed(model, 3);
    auto flat = ObservationModel::uniform(model.devices.size(), 0.5, 0.5);
    Belief prior;
    prior.probabilities[0] = 0.25;
    prior.probabilities[1] = 0.75;

    auto posterior = update_belief(p, prior, {"RA"}, flat);
    // Compare against prediction alone (uninformative correction).
    std::map<u128, double> predicted;
    for (const auto& [s, b] : prior.probabilities) {
        const auto& acts = p.actions_of(s);
        double w = b / (1.0 + (double)acts.size());
        predicted[s] += w;
        for (const auto& a : acts) {
            predicted[Pomdp::successor(s, a)] += w * a.probability;
            predicted[s] += w * (1.0 - a.probability);
        }
    }
    for (const auto& [s, v] : predicted)
        CHECK(posterior.probabilities.at(s) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("belief: agreement with the standalone oracle on random updates") {
    auto model = load_fixture("dbl");
    auto p = analyzed(model, 3);
    size_t nd = model.devices.size();
    std::mt19937_64 rng(60601);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Belief prior;
        double total = 0.0;
        for (u128 s : p.states) {
            double w = unit(rng);
            prior.probabilities[s] = w;
            total += w;
        }
        for (auto& [s, w] : prior.probabilities) w /= total;

        std::set<std::string> alerts;
        std::vector<bool> mask(nd, false);
        for (size_t d = 0; d < nd; ++d) {
            if (rng() % 2) {
                alerts.insert(model.devices[d].name);
                mask[d] = true;
            }
        }
        std::vector<double> tpr(nd), fpr(nd);
        for (size_t d = 0; d < nd; ++d) {
            tpr[d] = 0.55 + 0.4 * unit(rng);
            fpr[d] = 0.05 + 0.4 * unit(rng);
        }
        ObservationModel obs{tpr, fpr};
        auto got = update_belief(p, prior, alerts, obs);
        auto want = oracles::belief_update(p, prior.probabilities, mask, tpr, fpr, nd);

        double sum = 0.0;
        REQUIRE(got.probabilities.size() == want.size());
        for (const auto& [s, v] : got.probabilities) {
            CHECK(v == doctest::Approx(want.at(s)).epsilon(1e-9));
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("belief: impossible evidence and bad inputs raise") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    auto obs = ObservationModel::uniform(model.devices.size(), 0.9, 0.1);
    CHECK_THROWS_AS(update_belief(p, point_belief(0), {"nosuch"}, obs), ModelError);

    Belief junk;
    junk.probabilities[0] = 0.7;  // not normalized
    CHECK_THROWS_AS(update_belief(p, junk, {}, obs), ModelError);

    auto perfect = ObservationModel::uniform(model.devices.size(), 1.0, 0.0);
    // Perfect sensor, silent H1, but the belief insists H1 is owned.
    CHECK_THROWS_AS(update_belief(p, point_belief(1), {}, perfect), ModelError);

    ObservationModel tooshort;
    tooshort.tpr = {0.9};
    tooshort.fpr = {0.1};
    CHECK_THROWS_AS(update_belief(p, point_belief(0), {}, tooshort), ModelError);
}

TEST_CASE("belief_reward prices one action against a belief") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    AdversarialAction a{kInternetSource, 0, 1.0};
    double r = belief_reward(p, point_belief(0), a);
    CHECK(r == doctest::Approx(1.0 * (0.0 + p.index.at(1))).epsilon(1e-12));

    Belief half;
    half.probabilities[0] = 0.5;
    half.probabilities[3] = 0.5;  // no such action from 3: contributes nothing
    CHECK(belief_reward(p, half, a) == doctest::Approx(0.5 * p.index.at(1)).epsilon(1e-12));
}

TEST_CASE("rank_paths: single corridor yields the hand-checked chain") {
    auto model = load_fixture("chain");
    auto p = analyzed(model, 2);
    auto paths = rank_paths(p, 0, 3);
    REQUIRE(paths.size() == 1);
    REQUIRE(paths[0].steps.size() == 2);
    CHECK(paths[0].steps[0].source == kInternetSource);
    CHECK(paths[0].steps[0].target == 0);
    CHECK(paths[0].steps[0].successor_index == doctest::Approx(0.036).epsilon(1e-12));
    CHECK(paths[0].steps[1].target == 1);
    CHECK(paths[0].steps[1].successor_index == 0.0);
    // gamma^2 * p1 p2 * dF = 0.81 * 0.04
    CHECK(paths[0].score == doctest::Approx(0.0324).epsilon(1e-12));
    CHECK(paths[0].score == doctest::Approx(oracles::path_score(p, paths[0])).epsilon(1e-12));
}

TEST_CASE("rank_paths: symmetric double outage ties break deterministically") {
    auto model = load_fixture("dbl");
    auto p = analyzed(model, 3);
    auto paths = rank_paths(p, 0, 5);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].score == doctest::Approx(paths[1].score).epsilon(1e-12));
    // Lower device index first on ties.
    CHECK(paths[0].steps[1].target == 1);
    CHECK(paths[1].steps[1].target == 2);
    // Both reach the double-outage state.
    CHECK(paths[0].steps.back().to == 7);
    CHECK(paths[1].steps.back().to == 7);
}

TEST_CASE("rank_paths: matches exhaustive enumeration on the ten-island fixture") {
    auto model = load_fixture("tencont");
    auto p = analyzed(model, 2);
    auto paths = rank_paths(p, 0, 10);
    std::vector<double> all;
    oracles::all_paths(p, 0, 1.0, 0, 0.0, all);
    std::sort(all.rbegin(), all.rend());
    REQUIRE(paths.size() == 10);
    for (size_t i = 0; i < paths.size(); ++i) {
        CHECK(paths[i].score == doctest::Approx(all[i]).epsilon(1e-9));
        if (i) CHECK(paths[i].score <= paths[i - 1].score + 1e-12);
        CHECK(paths[i].score ==
              doctest::Approx(oracles::path_score(p, paths[i])).epsilon(1e-12));
    }
}

TEST_CASE("rank_paths: k bounds and error cases") {
    auto model = load_fixture("dbl");
    auto p = analyzed(model, 3);
    CHECK(rank_paths(p, 0, 0).empty());
    CHECK(rank_paths(p, 0, 100).size() == 2);
    CHECK(rank_paths(p, 7, 3).empty());  // no actions from the full set
    CHECK_THROWS_AS(rank_paths(p, 999, 3), ModelError);

    auto fresh = generate_state_space(model, 0, 3);
    CHECK_THROWS_AS(rank_paths(fresh, 0, 3), ModelError);  // no indices yet
}

TEST_CASE("sensitivity: baseline ranking reflects score order on ten islands") {
    auto model = load_fixture("tencont");
    auto p = analyzed(model, 2);
    auto res = sensitivity_study(p, 0.0, 5, 10, 1);
    REQUIRE(res.contingencies.size() == 10);
    // Expected order: R10, R9, R8, R7, R6, R5, R4, R3, R2, R1.
    for (int i = 0; i < 10; ++i) {
        int reli = 10 - i;
        u128 expect = (u128(1) << 0) | (u128(1) << reli);
        CHECK(res.contingencies[(size_t)i].state == expect);
        CHECK(res.contingencies[(size_t)i].baseline_rank == i + 1);
        CHECK(res.contingencies[(size_t)i].rank_stddev == 0.0);
    }
    CHECK(res.mean_rank_stddev == 0.0);
}

TEST_CASE("sensitivity: reproducible under a fixed seed, argument checks") {
    auto model = load_fixture("tencont");
    auto p = analyzed(model, 2);
    auto a = sensitivity_study(p, 0.15, 40, 10, 99);
    auto b = sensitivity_study(p, 0.15, 40, 10, 99);
    CHECK(a.mean_rank_stddev == b.mean_rank_stddev);
    auto c = sensitivity_study(p, 0.15, 40, 10, 100);
    CHECK(a.mean_rank_stddev != c.mean_rank_stddev);

    CHECK_THROWS_AS(sensitivity_study(p, -0.01, 10, 5, 1), ModelError);
    CHECK_THROWS_AS(sensitivity_study(p, 0.26, 10, 5, 1), ModelError);
    CHECK_THROWS_AS(sensitivity_study(p, 0.1, 0, 5, 1), ModelError);
    CHECK_THROWS_AS(sensitivity_study(p, 0.1, 10, 0, 1), ModelError);
}

TEST_CASE("depth study: counts saturate and match hand enumeration") {
    auto model = load_fixture("clique3");
    auto rows = depth_study(model, 0.9, SeverityConfig{}, 6);
    REQUIRE(rows.size() == 6);
    size_t expect[] = {4, 7, 8, 8, 8, 8};
    for (int d = 0; d < 6; ++d) {
        CHECK(rows[(size_t)d].depth == d + 1);
        CHECK(rows[(size_t)d].state_count == expect[d]);
        CHECK(rows[(size_t)d].seconds >= 0.0);
        if (d) CHECK(rows[(size_t)d].state_count >= rows[(size_t)d - 1].state_count);
    }

    auto chain_rows = depth_study(load_fixture("chain"), 0.9, SeverityConfig{}, 4);
    size_t chain_expect[] = {2, 3, 3, 3};
    for (int d = 0; d < 4; ++d) CHECK(chain_rows[(size_t)d].state_count == chain_expect[d]);
}
