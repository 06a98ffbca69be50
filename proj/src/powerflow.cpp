#include "gridsentry/powerflow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <unordered_map>

#include "gridsentry/errors.hpp"

namespace gridsentry {

namespace {

struct CaseIndex {
    std::unordered_map<std::string, size_t> bus_of;
    std::vector<size_t> closed;                   // indices into pcase.branches
    std::vector<std::vector<size_t>> island_bus;  // island -> bus indices
    std::vector<int> island_of;                   // bus index -> island
};

CaseIndex index_case(const PowerCase& pc) {
    CaseIndex ix;
    for (size_t i = 0; i < pc.buses.size(); ++i) ix.bus_of[pc.buses[i].id] = i;
    std::vector<std::vector<size_t>> adj(pc.buses.size());
    for (size_t b = 0; b < pc.branches.size(); ++b) {
        if (pc.branches[b].status != SwitchStatus::Closed) continue;
        ix.closed.push_back(b);
        size_t f = ix.bus_of.at(pc.branches[b].from_bus);
        size_t t = ix.bus_of.at(pc.branches[b].to_bus);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    ix.island_of.assign(pc.buses.size(), -1);
    for (size_t i = 0; i < pc.buses.size(); ++i) {
        if (ix.island_of[i] >= 0) continue;
        int isl = static_cast<int>(ix.island_bus.size());
        ix.island_bus.emplace_back();
        std::deque<size_t> q{i};
        ix.island_of[i] = isl;
        while (!q.empty()) {
            size_t cur = q.front();
            q.pop_front();
            ix.island_bus[isl].push_back(cur);
            for (size_t nb : adj[cur])
                if (ix.island_of[nb] < 0) {
                    ix.island_of[nb] = isl;
                    q.push_back(nb);
                }
        }
    }
    return ix;
}

// Angle/voltage reference of one island: the slack if present (two slacks
// is an error), otherwise the generation bus with the largest injection.
// Islands with no slack and no positive injection are de-energized.
std::optional<size_t> pick_reference(const PowerCase& pc, const std::vector<size_t>& buses,
                                     const std::optional<std::string>& override_id) {
    std::optional<size_t> slack;
    for (size_t b : buses) {
        if (!pc.buses[b].is_slack) continue;
        if (slack)
            throw PowerflowError("island has more than one slack bus ('" + pc.buses[*slack].id +
                                 "' and '" + pc.buses[b].id + "')");
        slack = b;
    }
    if (override_id) {
        for (size_t b : buses)
            if (pc.buses[b].id == *override_id) return b;
    }
    if (slack) return slack;
    std::optional<size_t> best;
    for (size_t b : buses) {
        if (pc.buses[b].injection_mw <= 0) continue;
        if (!best || pc.buses[b].injection_mw > pc.buses[*best].injection_mw ||
            (pc.buses[b].injection_mw == pc.buses[*best].injection_mw &&
             pc.buses[b].id < pc.buses[*best].id))
            best = b;
    }
    return best;  // nullopt -> de-energized
}

void fill_islands(const PowerCase& pc, const CaseIndex& ix, FlowSolution& sol) {
    for (const auto& isl : ix.island_bus) {
        std::set<std::string> s;
        for (size_t b : isl) s.insert(pc.buses[b].id);
        sol.islands.push_back(std::move(s));
    }
}

}  // namespace

FlowSolution solve_dc(const PowerCase& pc, const DcOptions& opt) {
    CaseIndex ix = index_case(pc);
    FlowSolution sol;
    sol.converged = true;
    sol.iterations = 0;
    fill_islands(pc, ix, sol);

    std::vector<double> theta(pc.buses.size(), 0.0);
    std::vector<bool> energized(ix.island_bus.size(), false);

    for (size_t isl = 0; isl < ix.island_bus.size(); ++isl) {
        const auto& buses = ix.island_bus[isl];
        auto ref = pick_reference(pc, buses, opt.reference_bus);
        if (!ref) continue;  // dead island: angles stay 0, flows stay 0
        energized[isl] = true;

        // Row/column positions of the non-reference buses.
        std::unordered_map<size_t, int> pos;
        for (size_t b : buses)
            if (b != *ref) {
                int p = static_cast<int>(pos.size());
                pos[b] = p;
            }
        const int n = static_cast<int>(pos.size());
        if (n == 0) continue;  // single-bus island

        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd P = Eigen::VectorXd::Zero(n);
        for (size_t b : buses)
            if (b != *ref) P(pos[b]) = pc.buses[b].injection_mw / pc.base_mva;
        for (size_t bi : ix.closed) {
            const Branch& br = pc.branches[bi];
            size_t f = ix.bus_of.at(br.from_bus);
            size_t t = ix.bus_of.at(br.to_bus);
            if (ix.island_of[f] != static_cast<int>(isl)) continue;
            double w = 1.0 / br.reactance_pu;
            auto pf = pos.find(f);
            auto pt = pos.find(t);
            if (pf != pos.end()) B(pf->second, pf->second) += w;
            if (pt != pos.end()) B(pt->second, pt->second) += w;
            if (pf != pos.end() && pt != pos.end()) {
                B(pf->second, pt->second) -= w;
                B(pt->second, pf->second) -= w;
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        if (!lu.isInvertible())
            throw PowerflowError("singular island susceptance matrix");
        Eigen::VectorXd th = lu.solve(P);
        for (const auto& [b, p] : pos) theta[b] = th(p);
    }

    for (const auto& bus : pc.buses) sol.bus_voltages_pu[bus.id] = 1.0;
    for (size_t i = 0; i < pc.buses.size(); ++i) sol.bus_angles_rad[pc.buses[i].id] = theta[i];
    for (const auto& br : pc.branches) {
        double flow = 0.0;
        if (br.status == SwitchStatus::Closed) {
            size_t f = ix.bus_of.at(br.from_bus);
            size_t t = ix.bus_of.at(br.to_bus);
            if (energized[ix.island_of[f]])
                flow = (theta[f] - theta[t]) / br.reactance_pu * pc.base_mva;
        }
        sol.branch_flows_mw[br.id] = flow;
    }
    return sol;
}

FlowSolution solve_ac(const PowerCase& pc, const AcOptions& opt) {
    using cplx = std::complex<double>;
    CaseIndex ix = index_case(pc);
    FlowSolution sol;
    fill_islands(pc, ix, sol);

    const size_t nb = pc.buses.size();
    std::vector<double> V(nb, 1.0), TH(nb, 0.0);
    std::vector<bool> energized(ix.island_bus.size(), false);
    std::vector<bool> is_ref(nb, false);

    // Ybus from series impedances of closed branches.
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(nb, nb);
    for (size_t bi : ix.closed) {
        const Branch& br = pc.branches[bi];
        size_t f = ix.bus_of.at(br.from_bus);
        size_t t = ix.bus_of.at(br.to_bus);
        cplx y = 1.0 / cplx(br.resistance_pu, br.reactance_pu);
        Y(f, f) += y;
        Y(t, t) += y;
        Y(f, t) -= y;
        Y(t, f) -= y;
    }

    std::vector<size_t> pq;  // unknown buses across all energized islands
    for (size_t isl = 0; isl < ix.island_bus.size(); ++isl) {
        auto ref = pick_reference(pc, ix.island_bus[isl], std::nullopt);
        if (!ref) {
            for (size_t b : ix.island_bus[isl]) V[b] = 0.0;
            continue;
        }
        energized[isl] = true;
        is_ref[*ref] = true;
        V[*ref] = pc.buses[*ref].voltage_setpoint_pu;
        for (size_t b : ix.island_bus[isl])
            if (b != *ref) pq.push_back(b);
    }
    std::sort(pq.begin(), pq.end());
    const int n = static_cast<int>(pq.size());

    auto calc_power = [&](size_t i) {
        cplx vi = std::polar(V[i], TH[i]);
        cplx s = 0.0;
        for (size_t j = 0; j < nb; ++j) {
            if (Y(i, j) == cplx(0.0) && i != j) continue;
            s += vi * std::conj(Y(i, j) * std::polar(V[j], TH[j]));
        }
        return s;
    };

    auto max_mismatch = [&](Eigen::VectorXd& mis) {
        double worst = 0.0;
        for (int k = 0; k < n; ++k) {
            size_t i = pq[k];
            cplx s = calc_power(i);
            double dp = pc.buses[i].injection_mw / pc.base_mva - s.real();
            double dq = 0.0 - s.imag();  // no reactive injections in the data model
            mis(k) = dp;
            mis(n + k) = dq;
            worst = std::max({worst, std::abs(dp), std::abs(dq)});
        }
        return worst * pc.base_mva;
    };

    Eigen::VectorXd mis(2 * n);
    bool converged = n == 0 ? true : false;
    int iter = 0;
    if (n > 0 && max_mismatch(mis) < opt.tol_mw) converged = true;

    while (!converged && iter < opt.max_iter) {
        // Polar Jacobian: [dP/dth dP/dV; dQ/dth dQ/dV].
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        for (int a = 0; a < n; ++a) {
            size_t i = pq[a];
            cplx si = calc_power(i);
            double Pi = si.real(), Qi = si.imag();
            double Gii = Y(i, i).real(), Bii = Y(i, i).imag();
            for (int b = 0; b < n; ++b) {
                size_t j = pq[b];
                if (i == j) {
                    J(a, b) = -Qi - Bii * V[i] * V[i];
                    J(a, n + b) = Pi / V[i] + Gii * V[i];
                    J(n + a, b) = Pi - Gii * V[i] * V[i];
                    J(n + a, n + b) = Qi / V[i] - Bii * V[i];
                } else {
                    double G = Y(i, j).real(), B = Y(i, j).imag();
                    if (G == 0.0 && B == 0.0) continue;
                    double th = TH[i] - TH[j];
                    double c = std::cos(th), s = std::sin(th);
                    J(a, b) = V[i] * V[j] * (G * s - B * c);
                    J(a, n + b) = V[i] * (G * c + B * s);
                    J(n + a, b) = -V[i] * V[j] * (G * c + B * s);
                    J(n + a, n + b) = V[i] * (G * s - B * c);
                }
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) throw PowerflowError("singular power-flow Jacobian");
        Eigen::VectorXd dx = lu.solve(mis);
        if (!dx.allFinite()) break;  // numerical blow-up counts as divergence
        for (int k = 0; k < n; ++k) {
            TH[pq[k]] += dx(k);
            V[pq[k]] += dx(n + k);
        }
        ++iter;
        bool sane = true;
        for (int k = 0; k < n; ++k)
            if (!(V[pq[k]] > 1e-6) || !std::isfinite(V[pq[k]]) || !std::isfinite(TH[pq[k]]))
                sane = false;
        if (!sane) break;
        if (max_mismatch(mis) < opt.tol_mw) converged = true;
    }

    sol.converged = converged;
    sol.iterations = iter;
    for (size_t i = 0; i < nb; ++i) {
        sol.bus_voltages_pu[pc.buses[i].id] = V[i];
        sol.bus_angles_rad[pc.buses[i].id] = TH[i];
    }
    for (const auto& br : pc.branches) {
        double flow = 0.0;
        if (br.status == SwitchStatus::Closed) {
            size_t f = ix.bus_of.at(br.from_bus);
            size_t t = ix.bus_of.at(br.to_bus);
            if (energized[ix.island_of[f]] && converged) {
                cplx y = 1.0 / cplx(br.resistance_pu, br.reactance_pu);
                cplx vf = std::polar(V[f], TH[f]);
                cplx vt = std::polar(V[t], TH[t]);
                cplx s_from = vf * std::conj((vf - vt) * y);
                flow = std::abs(s_from) * pc.base_mva;
            }
        }
        sol.branch_flows_mw[br.id] = flow;
    }
    return sol;
}

double performance_index(const FlowSolution& solution, const PowerCase& pcase) {
    if (!solution.converged)
        throw PowerflowError("performance index requires a converged solution");
    double f = 0.0;
    for (const auto& br : pcase.branches) {
        if (br.status != SwitchStatus::Closed) continue;
        auto it = solution.branch_flows_mw.find(br.id);
        double flow = it == solution.branch_flows_mw.end() ? 0.0 : it->second;
        double excess = std::max(std::abs(flow) / br.flow_limit_mw - 1.0, 0.0);
        f += excess * excess;
    }
    return f;
}

}  // namespace gridsentry
