#include "fluidfcfs/pooling.hpp"

#include <limits>

#include <json.hpp>

namespace fluidfcfs::pooling {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Subset enumeration is the workhorse here; keep it honest about scale.
void guard_enumerable(int n, const char* what) {
    if (n > 22)
        throw ModeError(std::string(what) +
                        " enumerates subsets and supports at most 22 entities, got " +
                        std::to_string(n));
}

std::vector<std::string> mask_names(const std::vector<std::string>& names, Mask m) {
    std::vector<std::string> out;
    for_each_bit(m, [&](int k) { out.push_back(names[k]); });
    return out;
}

} // namespace

std::string to_string(PoolingKind kind) {
    switch (kind) {
        case PoolingKind::COMPLETE: return "COMPLETE";
        case PoolingKind::WEAK: return "WEAK";
        case PoolingKind::VIOLATED: return "VIOLATED";
    }
    return "VIOLATED";
}

std::string PoolingVerdict::to_json_text(int indent) const {
    json doc;
    doc["kind"] = to_string(kind);
    doc["witnesses"] = witnesses;
    return doc.dump(indent) + "\n";
}

std::string Decomposition::to_json_text(const SystemSpec& spec, int indent) const {
    json arr = json::array();
    for (const auto& b : blocks) {
        json jb;
        jb["servers"] = mask_names(spec.servers(), b.servers);
        jb["customers"] = mask_names(spec.customers(), b.customers);
        jb["mu"] = b.mu;
        jb["lambda_crit"] = b.lambda_crit;
        arr.push_back(jb);
    }
    return arr.dump(indent) + "\n";
}

PoolingVerdict check_crp_sd(const SystemSpec& spec) {
    if (spec.mode() != RateMode::SD)
        throw ModeError("server-side pooling check requires SD mode, got " +
                        fluidfcfs::to_string(spec.mode()));
    guard_enumerable(spec.server_count(), "check_crp_sd");

    PoolingVerdict verdict;
    std::vector<std::vector<std::string>> weak;
    const Mask all = spec.all_servers();
    bool violated = false;
    for_each_proper_submask(all, [&](Mask S) {
        double lhs = spec.beta(S);
        double rhs = spec.alpha_sum(spec.unique_customers_of(S));
        if (nearly_equal(lhs, rhs)) {
            weak.push_back(mask_names(spec.servers(), S));
        } else if (lhs < rhs) {
            violated = true;
            verdict.witnesses.push_back(mask_names(spec.servers(), S));
        }
    });
    if (violated) {
        verdict.kind = PoolingKind::VIOLATED;
    } else if (!weak.empty()) {
        verdict.kind = PoolingKind::WEAK;
        verdict.witnesses = std::move(weak);
    } else {
        verdict.kind = PoolingKind::COMPLETE;
    }
    return verdict;
}

PoolingVerdict check_crp_cd(const SystemSpec& spec) {
    if (spec.mode() != RateMode::CD)
        throw ModeError("customer-side pooling check requires CD mode, got " +
                        fluidfcfs::to_string(spec.mode()));
    guard_enumerable(spec.customer_count(), "check_crp_cd");

    // Work share of a type set: sum of alpha_c * m_c.
    auto work = [&](Mask C) {
        double sum = 0.0;
        for_each_bit(C, [&](int i) { sum += spec.alpha(i) / spec.rates().per_customer[i]; });
        return sum;
    };
    const double total_work = work(spec.all_customers());
    const double J = spec.server_count();

    PoolingVerdict verdict;
    std::vector<std::vector<std::string>> weak;
    bool violated = false;
    for_each_proper_submask(spec.all_customers(), [&](Mask C) {
        double lhs = popcount(spec.servers_of(C)) / J;
        double rhs = work(C) / total_work;
        if (nearly_equal(lhs, rhs)) {
            weak.push_back(mask_names(spec.customers(), C));
        } else if (lhs < rhs) {
            violated = true;
            verdict.witnesses.push_back(mask_names(spec.customers(), C));
        }
    });
    if (violated) {
        verdict.kind = PoolingKind::VIOLATED;
    } else if (!weak.empty()) {
        verdict.kind = PoolingKind::WEAK;
        verdict.witnesses = std::move(weak);
    } else {
        verdict.kind = PoolingKind::COMPLETE;
    }
    return verdict;
}

TreeSolution check_crp_tree(const SystemSpec& spec) {
    if (!spec.is_tree_graph())
        throw ModeError("compatibility graph is not a tree (connected with I+J-1 edges)");

    const int J = spec.server_count();
    const int I = spec.customer_count();
    const int E = spec.edge_count();
    const int n_nodes = J + I; // servers 0..J-1, customers J..J+I-1

    // Each allocation eta_e stays affine in mu during elimination:
    // eta_e = p[e] + q[e] * mu.
    std::vector<double> p(E, 0.0), q(E, 0.0);
    // Residual right-hand side per node, also affine in mu.
    std::vector<double> node_r(n_nodes, 0.0), node_s(n_nodes, 0.0);
    for (int j = 0; j < J; ++j) node_r[j] = 1.0;       // sum of eta at server = 1
    for (int i = 0; i < I; ++i) node_s[J + i] = 1.0;   // weighted sum at customer = mu

    std::vector<int> degree(n_nodes, 0);
    std::vector<std::vector<int>> incident(n_nodes);
    for (int e = 0; e < E; ++e) {
        const Edge& ed = spec.edge(e);
        incident[ed.server].push_back(e);
        incident[J + ed.customer].push_back(e);
        ++degree[ed.server];
        ++degree[J + ed.customer];
    }
    std::vector<bool> edge_done(E, false), node_done(n_nodes, false);
    std::vector<int> leaves;
    for (int n = 0; n < n_nodes; ++n)
        if (degree[n] == 1) leaves.push_back(n);

    int eliminated = 0;
    while (!leaves.empty()) {
        int n = leaves.back();
        leaves.pop_back();
        if (node_done[n] || degree[n] != 1) continue;
        int e = -1;
        for (int cand : incident[n])
            if (!edge_done[cand]) { e = cand; break; }
        if (e < 0) break;
        const Edge& ed = spec.edge(e);
        double pe, qe;
        if (n < J) {
            // Server leaf: its remaining equation is eta_e = r + s*mu.
            pe = node_r[n];
            qe = node_s[n];
        } else {
            // Customer leaf i: (mu_e / alpha_i) eta_e = r + s*mu.
            double coef = spec.alpha(ed.customer) / spec.edge_rate(e);
            pe = coef * node_r[n];
            qe = coef * node_s[n];
        }
        p[e] = pe;
        q[e] = qe;
        edge_done[e] = true;
        node_done[n] = true;
        ++eliminated;

        int other = (n < J) ? J + ed.customer : ed.server;
        if (other < J) {
            node_r[other] -= pe;
            node_s[other] -= qe;
        } else {
            double coef = spec.edge_rate(e) / spec.alpha(other - J);
            node_r[other] -= coef * pe;
            node_s[other] -= coef * qe;
        }
        if (--degree[other] == 1 && !node_done[other]) leaves.push_back(other);
        --degree[n];
    }
    if (eliminated != E)
        throw InternalError("tree elimination left edges unprocessed");

    // One node's equation is left over; it pins mu: 0 = r + s*mu.
    int last = -1;
    for (int n = 0; n < n_nodes; ++n)
        if (!node_done[n]) { last = n; break; }
    if (last < 0) throw InternalError("tree elimination consumed every equation");
    double r = node_r[last], s = node_s[last];
    if (std::abs(s) < 1e-14 * std::max(1.0, std::abs(r)))
        throw InternalError("tree system is singular");
    TreeSolution sol;
    sol.mu = -r / s;
    sol.eta.resize(E);
    bool any_zero = false;
    std::vector<std::vector<std::string>> negative;
    std::vector<std::vector<std::string>> zero;
    for (int e = 0; e < E; ++e) {
        sol.eta[e] = p[e] + q[e] * sol.mu;
        const Edge& ed = spec.edge(e);
        std::vector<std::string> name{spec.server_name(ed.server),
                                      spec.customer_name(ed.customer)};
        if (nearly_equal(sol.eta[e], 0.0)) {
            any_zero = true;
            zero.push_back(name);
        } else if (sol.eta[e] < 0.0) {
            negative.push_back(name);
        }
    }
    if (!negative.empty()) {
        sol.verdict.kind = PoolingKind::VIOLATED;
        sol.verdict.witnesses = std::move(negative);
    } else if (any_zero) {
        sol.verdict.kind = PoolingKind::WEAK;
        sol.verdict.witnesses = std::move(zero);
    } else {
        sol.verdict.kind = PoolingKind::COMPLETE;
    }
    return sol;
}

PoolWeights sd_weights(const SystemSpec& spec) {
    if (spec.mode() != RateMode::SD)
        throw ModeError("sd_weights requires SD mode");
    PoolWeights w;
    w.server = spec.rates().per_server;
    w.customer = spec.alphas();
    return w;
}

PoolWeights cd_weights(const SystemSpec& spec) {
    if (spec.mode() != RateMode::CD)
        throw ModeError("cd_weights requires CD mode");
    PoolWeights w;
    w.server.assign(spec.server_count(), 1.0);
    w.customer.resize(spec.customer_count());
    for (int i = 0; i < spec.customer_count(); ++i)
        w.customer[i] = spec.alpha(i) / spec.rates().per_customer[i];
    return w;
}

Mask unique_within(const SystemSpec& spec, Mask T, Mask D, Mask B) {
    return D & ~spec.customers_of(T & ~B);
}

double drain_ratio(const SystemSpec& spec, const PoolWeights& w,
                   Mask T, Mask D, Mask B) {
    double den = 0.0;
    for_each_bit(unique_within(spec, T, D, B), [&](int i) { den += w.customer[i]; });
    if (den == 0.0) return kInf;
    double numer = 0.0;
    for_each_bit(B, [&](int j) { numer += w.server[j]; });
    return numer / den;
}

PeeledBlocks peel_blocks(const SystemSpec& spec, const PoolWeights& w,
                         Mask T, Mask D) {
    guard_enumerable(popcount(T), "peel_blocks");
    PeeledBlocks out;
    double prev = -kInf;
    while (T != 0) {
        // Pass 1: exact minimum drain ratio over the nonempty subsets of T.
        double best = drain_ratio(spec, w, T, D, T);
        for_each_proper_submask(T, [&](Mask B) {
            best = std::min(best, drain_ratio(spec, w, T, D, B));
        });
        // Pass 2: union of every subset in the tolerance band of the
        // minimum. Minimizers are closed under union (the numerator is
        // additive, the unique-customer weight is supermodular), so the
        // union is itself a minimizer and is the maximal one: the block.
        // Two or more in-band sets means a proper subset of the block ties
        // it, i.e. the block pools only weakly.
        auto in_band = [&](double v) {
            return (std::isinf(v) && std::isinf(best)) || nearly_equal(v, best);
        };
        Mask block = 0;
        int band_count = 0;
        for (Mask B = T;; B = (B - 1) & T) {
            if (B != 0 && in_band(drain_ratio(spec, w, T, D, B))) {
                block |= B;
                ++band_count;
            }
            if (B == 0) break;
        }
        if (band_count >= 2) out.weak_tie = true;
        double ratio = drain_ratio(spec, w, T, D, block);
        Mask blockD = unique_within(spec, T, D, block);

        DecompositionBlock b;
        b.servers = block;
        b.customers = blockD;
        double mu = 0.0;
        for_each_bit(block, [&](int j) { mu += w.server[j]; });
        b.mu = mu;
        b.lambda_crit = ratio;
        if (!(std::isinf(prev) && std::isinf(ratio)) && !(ratio > prev))
            throw InternalError("peel produced non-increasing drain ratios");
        prev = ratio;
        out.blocks.push_back(b);
        T &= ~block;
        D &= ~blockD;
    }
    return out;
}

namespace {

// Exhaustive ordered-partition search used for small systems: counts the
// partitions meeting the strict pooling conditions, keeping the first.
struct ExhaustiveSearch {
    const SystemSpec& spec;
    const PoolWeights& w;
    std::vector<double> server_weight_of;   // per mask, 2^J
    std::vector<Mask> customers_of_mask;    // per mask, 2^J
    std::vector<DecompositionBlock> current;
    std::vector<DecompositionBlock> first;
    int solutions = 0;

    explicit ExhaustiveSearch(const SystemSpec& s, const PoolWeights& weights)
        : spec(s), w(weights) {
        const int J = spec.server_count();
        const size_t n = size_t{1} << J;
        server_weight_of.assign(n, 0.0);
        customers_of_mask.assign(n, 0);
        for (Mask m = 1; m < n; ++m) {
            int low = std::countr_zero(m);
            server_weight_of[m] = server_weight_of[m & (m - 1)] + w.server[low];
            customers_of_mask[m] =
                customers_of_mask[m & (m - 1)] | spec.customers_of_server(low);
        }
    }

    double customer_weight(Mask C) const {
        double sum = 0.0;
        for_each_bit(C, [&](int i) { sum += w.customer[i]; });
        return sum;
    }

    double ratio(Mask T, Mask D, Mask B) const {
        double den = customer_weight(D & ~customers_of_mask[T & ~B]);
        return den == 0.0 ? kInf : server_weight_of[B] / den;
    }

    // Strict pooling for block B with type universe DB: every proper
    // nonempty subset must drain strictly slower than the block.
    bool block_strict(Mask B, Mask DB, double block_ratio) const {
        bool ok = true;
        for_each_proper_submask(B, [&](Mask A) {
            if (!ok) return;
            double den = customer_weight(DB & ~customers_of_mask[B & ~A]);
            double v = den == 0.0 ? kInf : server_weight_of[A] / den;
            if (!strictly_greater(v, block_ratio)) ok = false;
        });
        return ok;
    }

    void search(Mask T, Mask D, double last_ratio) {
        if (solutions >= 2) return;
        if (T == 0) {
            if (++solutions == 1) first = current;
            return;
        }
        for (Mask B = T;; B = (B - 1) & T) {
            if (B != 0) {
                Mask DB = D & ~customers_of_mask[T & ~B];
                if (DB != 0) {
                    double v = server_weight_of[B] / customer_weight(DB);
                    if (strictly_greater(v, last_ratio) && block_strict(B, DB, v)) {
                        current.push_back({B, DB, server_weight_of[B], v});
                        search(T & ~B, D & ~DB, v);
                        current.pop_back();
                        if (solutions >= 2) return;
                    }
                }
            }
            if (B == 0) break;
        }
    }
};

} // namespace

Decomposition decompose_sd(const SystemSpec& spec) {
    if (spec.mode() != RateMode::SD)
        throw ModeError("decompose_sd requires SD mode");
    guard_enumerable(spec.server_count(), "decompose_sd");
    PoolWeights w = sd_weights(spec);

    Decomposition out;
    if (spec.server_count() <= 10) {
        ExhaustiveSearch search(spec, w);
        search.search(spec.all_servers(), spec.all_customers(), -kInf);
        if (search.solutions == 0)
            throw ValidationError(
                "decomposition is ambiguous: no ordered partition satisfies the "
                "strict pooling conditions (weak boundary case)");
        if (search.solutions > 1)
            throw ValidationError(
                "decomposition is ambiguous: more than one ordered partition "
                "satisfies the pooling conditions (weak boundary case)");
        out.blocks = std::move(search.first);
    } else {
        PeeledBlocks peeled = peel_blocks(spec, w, spec.all_servers(), spec.all_customers());
        if (peeled.weak_tie)
            throw ValidationError(
                "decomposition is ambiguous: a block pools only weakly (weak "
                "boundary case)");
        out.blocks = std::move(peeled.blocks);
    }
    return out;
}

} // namespace fluidfcfs::pooling
