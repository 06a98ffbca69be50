#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridsentry/power_model.hpp"

namespace gridsentry {

enum class FlowMode { Dc, Ac };

struct FlowSolution {
    // Flow per closed branch: MW for DC, sending-end MVA for AC. Open
    // branches and branches of de-energized islands carry 0.
    std::map<std::string, double> branch_flows_mw;
    std::map<std::string, double> bus_angles_rad;
    std::map<std::string, double> bus_voltages_pu;  // 1.0 for DC
    bool converged = false;
    int iterations = 0;
    std::vector<std::set<std::string>> islands;
};

struct DcOptions {
    // Test hook: force the angle reference of the island containing this
    // bus. Flows are gauge-invariant, so results must not depend on it.
    std::optional<std::string> reference_bus;
};

/// Linear lossless solve of B'theta = P per energized island. Always
/// converges; throws PowerflowError on a singular island matrix or on a
/// duplicate slack within one island.
FlowSolution solve_dc(const PowerCase& pcase, const DcOptions& opt = {});

struct AcOptions {
    double tol_mw = 1e-3;  // max |P or Q mismatch|, MW / MVAr
    int max_iter = 20;
};

/// Full Newton-Raphson in polar form from a flat start. Loads and
/// non-slack generators are PQ with zero reactive injection; the slack
/// holds magnitude and angle. Non-convergence is reported in the
/// solution, not thrown.
FlowSolution solve_ac(const PowerCase& pcase, const AcOptions& opt = {});

/// Overload severity of a solved operating point:
///   F = sum over closed lines of max{f/f_max - 1, 0}^2
/// Zero when nothing is loaded above its limit. Rejects non-converged
/// input; the divergence-penalty policy belongs to the analysis layer.
double performance_index(const FlowSolution& solution, const PowerCase& pcase);

}  // namespace gridsentry
