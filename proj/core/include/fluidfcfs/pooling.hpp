#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fluidfcfs/system.hpp"

namespace fluidfcfs::pooling {

enum class PoolingKind { COMPLETE, WEAK, VIOLATED };

std::string to_string(PoolingKind kind);

// Inequalities are compared with this contract everywhere in the module:
// |lhs - rhs| < tol * max(1, |lhs|) counts as equality.
inline constexpr double kStrictnessTol = 1e-9;

inline bool nearly_equal(double a, double b) {
    return std::abs(a - b) < kStrictnessTol * std::max(1.0, std::abs(a));
}
inline bool strictly_greater(double a, double b) {
    return a > b && !nearly_equal(a, b);
}

struct PoolingVerdict {
    PoolingKind kind = PoolingKind::COMPLETE;
    // Witness subsets (equality witnesses for WEAK, strict violators for
    // VIOLATED) as identifier lists: server subsets for the server-side
    // condition, customer subsets for the customer-side one, edge pairs
    // for tree systems.
    std::vector<std::vector<std::string>> witnesses;

    std::string to_json_text(int indent = 2) const;
};

struct DecompositionBlock {
    Mask servers = 0;
    Mask customers = 0;
    double mu = 0.0;          // pooled service rate of the block
    double lambda_crit = 0.0; // critical arrival rate of the block
};

struct Decomposition {
    std::vector<DecompositionBlock> blocks;
    std::string to_json_text(const SystemSpec& spec, int indent = 2) const;
};

struct TreeSolution {
    PoolingVerdict verdict;
    std::vector<double> eta; // per edge, document order
    double mu = 0.0;         // pooled rate
};

// Server-side pooling condition: beta_S > alpha_{U(S)} for every proper
// nonempty server subset. SD mode only.
PoolingVerdict check_crp_sd(const SystemSpec& spec);

// Customer-side pooling condition: |S(C)|/J > (sum_{c in C} alpha_c m_c) /
// (sum over all types) for every proper nonempty customer subset. CD only.
PoolingVerdict check_crp_cd(const SystemSpec& spec);

// Solves the square linear system over a tree compatibility graph:
// per server, allocations sum to 1; per customer type, weighted allocations
// sum to the common rate mu. Pooling holds iff the solution is positive.
TreeSolution check_crp_tree(const SystemSpec& spec);

// Unique ordered decomposition of an SD system into pooled blocks with
// strictly increasing critical rates. Throws ValidationError when a weak
// boundary makes the decomposition ambiguous.
Decomposition decompose_sd(const SystemSpec& spec);

// ---------------------------------------------------------------------
// Weighted pooling engine. Both rate modes reduce to one functional: give
// each server a weight w_s and each type a weight w_c, then the drain
// ratio of a server subset B inside a subsystem (T, D) is
//     v(B) = sum_{j in B} w_s[j] / sum_{c in D, c has no edge to T\B} w_c[c]
// (infinite when the denominator set is empty). A subsystem pools
// completely iff T is the unique minimizer of v; the ordered decomposition
// peels maximal minimizer blocks, which yields strictly increasing speeds.
// SD uses w_s = mu_j, w_c = alpha_c. CD uses w_s = 1, w_c = alpha_c m_c.
// ---------------------------------------------------------------------

struct PoolWeights {
    std::vector<double> server;   // indexed by server
    std::vector<double> customer; // indexed by customer type
};

PoolWeights sd_weights(const SystemSpec& spec);
PoolWeights cd_weights(const SystemSpec& spec);

// Types of D with no edge into T \ B (B's unique customers within (T, D)).
Mask unique_within(const SystemSpec& spec, Mask T, Mask D, Mask B);

// Drain ratio v(B) within (T, D); +infinity when B has no unique types.
double drain_ratio(const SystemSpec& spec, const PoolWeights& w,
                   Mask T, Mask D, Mask B);

struct PeeledBlocks {
    std::vector<DecompositionBlock> blocks; // mu/lambda_crit in weight units
    // True when some block contains a proper subset tying its drain ratio,
    // i.e. the block pools only weakly (a boundary case).
    bool weak_tie = false;
};

// Greedy maximal-minimizer peel of subsystem (T, D). Blocks come out
// slowest first with strictly increasing drain ratios; each block's
// customers are its unique types at the moment it is peeled.
PeeledBlocks peel_blocks(const SystemSpec& spec, const PoolWeights& w,
                         Mask T, Mask D);

} // namespace fluidfcfs::pooling
