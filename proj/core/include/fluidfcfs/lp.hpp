#pragma once

#include <string>
#include <vector>

#include "fluidfcfs/pooling.hpp"
#include "fluidfcfs/system.hpp"

namespace fluidfcfs::lp {

// Optimal basic solution of the throughput-maximizing allocation program:
//   max mu  s.t.  sum_{c in C(s_j)} eta_{s_j,c} = 1            (per server)
//                 mu - sum_{s in S(c_i)} (mu_{s,c_i}/alpha_i) eta + theta_i = 0
//                 eta, theta >= 0.
// Duals: y per server row, z per customer row; the per-edge dual slack is
// x_{s,c} = y_s - (mu_{s,c}/alpha_c) z_c >= 0.
struct LpSolution {
    double mu_star = 0.0;
    std::vector<double> eta;   // per edge, document order
    std::vector<double> theta; // per customer type
    std::vector<double> y;     // per server
    std::vector<double> z;     // per customer type
    std::vector<double> x;     // per edge
    std::vector<int> basic_arcs; // edge indices whose eta column is basic
    std::string status = "OPTIMAL";

    std::string to_json_text(const SystemSpec& spec, int indent = 2) const;
};

// Deterministic solve: dense revised simplex, Bland's rule, lowest-index
// tie-breaking. Throws InternalError if any certified invariant of the
// optimal solution fails (acyclic basic arcs, duality gap, slackness).
LpSolution solve_static_plan(const SystemSpec& spec);

struct DesignBlock {
    Mask servers = 0;
    Mask customers = 0;
    std::vector<int> tree_edges; // global edge indices kept in the design
    std::vector<double> r;       // matching rate per kept edge, sums to 1
    std::vector<int> zero_arcs;  // basic arcs erased for having eta = 0
    double mu = 0.0;             // block optimum with original alphas
    pooling::PoolingKind kind = pooling::PoolingKind::COMPLETE;
};

struct OptimalDesign {
    std::vector<DesignBlock> blocks;
    // Set when some stage's zero-slack customer set split into several
    // components; the stage is then emitted as one block per component,
    // all sharing the stage rate.
    bool had_disconnected_stage = false;

    std::string to_json_text(const SystemSpec& spec, int indent = 2) const;
    // The pruned system (union of the block trees) in the document format,
    // ready to feed back into the fluid or simulation front ends.
    std::string design_spec_json(const SystemSpec& spec) const;
};

// Peels zero-slack customer sets per the optimal solution, re-solving on
// each remainder; block rates increase strictly stage over stage.
OptimalDesign extract_design(const SystemSpec& spec, const LpSolution& sol);

// r_{s,c} = mu_{s,c} eta_{s,c} / mu on a tree with a positive allocation;
// result is per edge in document order and sums to 1.
std::vector<double> matching_rates_tree(const SystemSpec& spec,
                                        const std::vector<double>& eta,
                                        double mu);

struct CompleteRates {
    std::vector<double> r;         // dense J x I, server-major: r[j*I + i]
    std::vector<double> mu_server; // effective service rate per server
    double mu = 0.0;               // pooled rate
};

// Closed-form matching rates on a complete graph: the mean service time of
// server s_j is the alpha-mixture of its edge means, and rates split
// proportionally: r_{s_j,c_i} = (mu_{s_j}/mu) alpha_{c_i}.
CompleteRates matching_rates_complete(const SystemSpec& spec);

} // namespace fluidfcfs::lp
