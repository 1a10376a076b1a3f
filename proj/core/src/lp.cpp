#include "fluidfcfs/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace fluidfcfs::lp {

using nlohmann::json;

namespace {

constexpr double kTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Square dense LU with partial pivoting for the basis systems. Sizes stay
// at J+I <= 126, so a fresh factorization per pivot is cheap and avoids
// drift from incremental updates.
struct Lu {
    int m = 0;
    std::vector<double> a;
    std::vector<int> perm; // (PA) row r is input row perm[r]

    bool factor(std::vector<double> matrix, int size) {
        m = size;
        a = std::move(matrix);
        perm.resize(m);
        std::iota(perm.begin(), perm.end(), 0);
        for (int k = 0; k < m; ++k) {
            int piv = k;
            double best = std::abs(a[perm[k] * m + k]);
            for (int r = k + 1; r < m; ++r) {
                double v = std::abs(a[perm[r] * m + k]);
                if (v > best) { best = v; piv = r; }
            }
            if (best < 1e-13) return false;
            std::swap(perm[k], perm[piv]);
            double d = a[perm[k] * m + k];
            for (int r = k + 1; r < m; ++r) {
                double f = a[perm[r] * m + k] / d;
                a[perm[r] * m + k] = f;
                for (int c = k + 1; c < m; ++c)
                    a[perm[r] * m + c] -= f * a[perm[k] * m + c];
            }
        }
        return true;
    }

    std::vector<double> solve(const std::vector<double>& b) const {
        std::vector<double> x(m);
        for (int r = 0; r < m; ++r) {
            double v = b[perm[r]];
            for (int c = 0; c < r; ++c) v -= a[perm[r] * m + c] * x[c];
            x[r] = v;
        }
        for (int r = m - 1; r >= 0; --r) {
            double v = x[r];
            for (int c = r + 1; c < m; ++c) v -= a[perm[r] * m + c] * x[c];
            x[r] = v / a[perm[r] * m + r];
        }
        return x;
    }

    // Solves A^T x = b using A^T = U^T L^T P.
    std::vector<double> solve_transposed(const std::vector<double>& b) const {
        std::vector<double> t(m);
        for (int r = 0; r < m; ++r) {
            double v = b[r];
            for (int c = 0; c < r; ++c) v -= a[perm[c] * m + r] * t[c];
            t[r] = v / a[perm[r] * m + r];
        }
        for (int r = m - 1; r >= 0; --r) {
            double v = t[r];
            for (int c = r + 1; c < m; ++c) v -= a[perm[c] * m + r] * t[c];
            t[r] = v;
        }
        std::vector<double> x(m);
        for (int r = 0; r < m; ++r) x[perm[r]] = t[r];
        return x;
    }
};

struct Arc {
    int server;
    int customer;
};

// The allocation program over an induced subgraph, with the original (not
// renormalized) alpha values, so the optimum is the subsystem's critical
// arrival rate.
struct Problem {
    int J = 0, I = 0;
    std::vector<Arc> arcs;
    std::vector<double> rate;  // mu_{s,c} per arc
    std::vector<double> alpha; // per local customer

    int num_arcs() const { return static_cast<int>(arcs.size()); }
    int rows() const { return J + I; }
    int cols() const { return num_arcs() + I + 1; }
    int mu_col() const { return num_arcs() + I; }
    double coef(int e) const { return rate[e] / alpha[arcs[e].customer]; }
    double objective(int c) const { return c == mu_col() ? 1.0 : 0.0; }

    void column(int c, std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        if (c < num_arcs()) {
            out[arcs[c].server] = 1.0;
            out[J + arcs[c].customer] = -coef(c);
        } else if (c < num_arcs() + I) {
            out[J + (c - num_arcs())] = 1.0;
        } else {
            for (int i = 0; i < I; ++i) out[J + i] = 1.0;
        }
    }
};

struct BasicSolution {
    double mu = 0.0;
    std::vector<double> eta, theta;
    std::vector<double> y, z;
    std::vector<int> basis; // basic column per row
};

BasicSolution simplex(const Problem& p) {
    const int m = p.rows(), E = p.num_arcs();
    // Initial feasible basis: each server parks on its first arc, every
    // slack column is basic. Block triangular, hence nonsingular, and the
    // slack values come out nonnegative.
    std::vector<int> first_arc(p.J, -1);
    for (int e = 0; e < E; ++e)
        if (first_arc[p.arcs[e].server] < 0) first_arc[p.arcs[e].server] = e;
    std::vector<int> basis;
    for (int j = 0; j < p.J; ++j) {
        if (first_arc[j] < 0)
            throw InternalError("allocation program: server without arcs");
        basis.push_back(first_arc[j]);
    }
    for (int i = 0; i < p.I; ++i) basis.push_back(E + i);

    std::vector<double> b(m, 0.0);
    for (int j = 0; j < p.J; ++j) b[j] = 1.0;
    std::vector<bool> in_basis(p.cols(), false);
    for (int c : basis) in_basis[c] = true;

    std::vector<double> col(m);
    std::vector<double> xb, duals;
    Lu lu;
    const int max_iter = 200 * (p.cols() + m) + 1000;
    for (int iter = 0;; ++iter) {
        if (iter > max_iter)
            throw InternalError("allocation program: iteration cap hit");
        std::vector<double> mat(static_cast<size_t>(m) * m, 0.0);
        for (int k = 0; k < m; ++k) {
            p.column(basis[k], col);
            for (int r = 0; r < m; ++r) mat[r * m + k] = col[r];
        }
        if (!lu.factor(std::move(mat), m))
            throw InternalError("allocation program: singular basis");
        xb = lu.solve(b);
        std::vector<double> cb(m);
        for (int k = 0; k < m; ++k) cb[k] = p.objective(basis[k]);
        duals = lu.solve_transposed(cb);

        // Bland's rule: lowest-index column with a positive reduced cost.
        int enter = -1;
        for (int c = 0; c < p.cols() && enter < 0; ++c) {
            if (in_basis[c]) continue;
            p.column(c, col);
            double d = p.objective(c);
            for (int r = 0; r < m; ++r) d -= duals[r] * col[r];
            if (d > kTol) enter = c;
        }
        if (enter < 0) break;

        p.column(enter, col);
        std::vector<double> dir = lu.solve(col);
        int leave = -1;
        double best = 0.0;
        for (int k = 0; k < m; ++k) {
            if (dir[k] <= 1e-11) continue;
            double ratio = std::max(xb[k], 0.0) / dir[k];
            if (leave < 0 || ratio < best - 1e-12) {
                best = ratio;
                leave = k;
            } else if (ratio <= best + 1e-12 && basis[k] < basis[leave]) {
                best = std::min(best, ratio);
                leave = k;
            }
        }
        if (leave < 0)
            throw InternalError("allocation program: unbounded direction");
        in_basis[basis[leave]] = false;
        in_basis[enter] = true;
        basis[leave] = enter;
    }

    BasicSolution out;
    out.eta.assign(E, 0.0);
    out.theta.assign(p.I, 0.0);
    for (int k = 0; k < m; ++k) {
        if (basis[k] < E) out.eta[basis[k]] = xb[k];
        else if (basis[k] < E + p.I) out.theta[basis[k] - E] = xb[k];
        else out.mu = xb[k];
    }
    out.y.assign(duals.begin(), duals.begin() + p.J);
    out.z.assign(duals.begin() + p.J, duals.end());
    out.basis = std::move(basis);
    return out;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

// Every certified invariant of an optimal basic solution; a failure is a
// solver bug, not a property of the input.
void certify(const Problem& p, const BasicSolution& s) {
    const int E = p.num_arcs();
    auto near = [](double v, double scale) {
        return std::abs(v) <= kTol * std::max(1.0, std::abs(scale));
    };
    if (!(s.mu > kTol)) throw InternalError("allocation optimum is not positive");

    for (int j = 0; j < p.J; ++j) {
        double sum = -1.0;
        for (int e = 0; e < E; ++e)
            if (p.arcs[e].server == j) sum += s.eta[e];
        if (!near(sum, 1.0)) throw InternalError("server allocation row not tight");
    }
    for (int i = 0; i < p.I; ++i) {
        double sum = s.mu + s.theta[i];
        for (int e = 0; e < E; ++e)
            if (p.arcs[e].customer == i) sum -= p.coef(e) * s.eta[e];
        if (!near(sum, s.mu)) throw InternalError("customer allocation row violated");
    }
    for (double v : s.eta)
        if (v < -kTol) throw InternalError("negative allocation in solution");
    for (double v : s.theta)
        if (v < -kTol) throw InternalError("negative slack in solution");

    double zsum = 0.0, ysum = 0.0;
    for (double v : s.z) {
        if (v < -kTol) throw InternalError("negative customer dual");
        zsum += v;
    }
    for (double v : s.y) {
        if (v < -kTol) throw InternalError("negative server dual");
        ysum += v;
    }
    if (!near(zsum - 1.0, 1.0)) throw InternalError("customer duals do not sum to 1");
    if (!near(ysum - s.mu, s.mu)) throw InternalError("duality gap at optimum");
    for (int e = 0; e < E; ++e) {
        double slack = s.y[p.arcs[e].server] - p.coef(e) * s.z[p.arcs[e].customer];
        if (slack < -kTol * std::max(1.0, p.coef(e)))
            throw InternalError("dual infeasibility on an arc");
        if (std::abs(slack * s.eta[e]) > kTol * std::max(1.0, p.coef(e)))
            throw InternalError("complementary slackness violated on an arc");
    }
    for (int i = 0; i < p.I; ++i)
        if (std::abs(s.theta[i] * s.z[i]) > kTol)
            throw InternalError("complementary slackness violated on a slack");

    // Basic arcs span no cycle in the bipartite graph.
    UnionFind uf(p.J + p.I);
    int positive = 0;
    for (int k : s.basis) {
        if (k >= E) continue;
        if (!uf.unite(p.arcs[k].server, p.J + p.arcs[k].customer))
            throw InternalError("basic arcs contain a cycle");
    }
    for (double v : s.eta) positive += v > kTol;
    if (positive < std::min(p.I, p.J) || positive > p.I + p.J - 1)
        throw InternalError("positive-arc count outside the basic-solution range");
}

struct SubProblem {
    Problem p;
    std::vector<int> global_arc; // per local arc: edge index in the spec
    std::vector<int> server_g;   // local server -> global index
    std::vector<int> customer_g; // local customer -> global index
};

SubProblem make_problem(const SystemSpec& spec, Mask S, Mask C) {
    SubProblem sp;
    std::vector<int> sl(spec.server_count(), -1), cl(spec.customer_count(), -1);
    for_each_bit(S, [&](int j) {
        sl[j] = sp.p.J++;
        sp.server_g.push_back(j);
    });
    for_each_bit(C, [&](int i) {
        cl[i] = sp.p.I++;
        sp.customer_g.push_back(i);
        sp.p.alpha.push_back(spec.alpha(i));
    });
    for (int e = 0; e < spec.edge_count(); ++e) {
        const Edge& ed = spec.edge(e);
        if (sl[ed.server] >= 0 && cl[ed.customer] >= 0) {
            sp.p.arcs.push_back({sl[ed.server], cl[ed.customer]});
            sp.p.rate.push_back(spec.edge_rate(e));
            sp.global_arc.push_back(e);
        }
    }
    return sp;
}

// Connected components of the induced bipartite subgraph, ordered by their
// lowest server index.
std::vector<std::pair<Mask, Mask>> split_components(const SystemSpec& spec,
                                                    Mask S, Mask C) {
    std::vector<std::pair<Mask, Mask>> out;
    Mask unseen = S;
    while (unseen != 0) {
        Mask cs = bit(std::countr_zero(unseen)), cc = 0;
        for (;;) {
            Mask nc = (spec.customers_of(cs) & C) | cc;
            Mask ns = (spec.servers_of(nc) & S) | cs;
            if (nc == cc && ns == cs) break;
            cc = nc;
            cs = ns;
        }
        out.push_back({cs, cc});
        unseen &= ~cs;
    }
    return out;
}

json edge_name(const SystemSpec& spec, int e) {
    return json::array({spec.server_name(spec.edge(e).server),
                        spec.customer_name(spec.edge(e).customer)});
}

} // namespace

LpSolution solve_static_plan(const SystemSpec& spec) {
    SubProblem sp = make_problem(spec, spec.all_servers(), spec.all_customers());
    BasicSolution bs = simplex(sp.p);
    certify(sp.p, bs);

    LpSolution sol;
    sol.mu_star = bs.mu;
    sol.eta = std::move(bs.eta);
    sol.theta = std::move(bs.theta);
    sol.y = std::move(bs.y);
    sol.z = std::move(bs.z);
    sol.x.resize(spec.edge_count());
    for (int e = 0; e < spec.edge_count(); ++e)
        sol.x[e] = sol.y[spec.edge(e).server] -
                   spec.edge_rate(e) / spec.alpha(spec.edge(e).customer) *
                       sol.z[spec.edge(e).customer];
    for (int k : bs.basis)
        if (k < spec.edge_count()) sol.basic_arcs.push_back(k);
    std::sort(sol.basic_arcs.begin(), sol.basic_arcs.end());
    return sol;
}

OptimalDesign extract_design(const SystemSpec& spec, const LpSolution& sol) {
    if (static_cast<int>(sol.eta.size()) != spec.edge_count() ||
        static_cast<int>(sol.theta.size()) != spec.customer_count())
        throw ValidationError("solution does not match the system layout");

    OptimalDesign out;
    Mask S_rem = spec.all_servers(), C_rem = spec.all_customers();
    std::vector<double> theta = sol.theta;
    std::vector<double> eta_g = sol.eta;
    double mu_cur = sol.mu_star;
    double prev_stage_mu = -kInf;

    while (C_rem != 0) {
        Mask zero_theta = 0, slack = 0;
        for_each_bit(C_rem, [&](int i) {
            if (theta[i] <= kTol) zero_theta |= bit(i);
            else slack |= bit(i);
        });
        // A type the basis parked exactly at the pooled rate is not genuinely
        // rate-limited when an adjacent server still holds allocation it
        // could shift over from a slack (or likewise liftable) type; an
        // exchange along that alternating path yields another optimum where
        // the type has slack. Lift such types until stable and peel the rest.
        Mask lifted = 0;
        for (;;) {
            Mask target = slack | lifted;
            Mask spare = 0;
            for (int e = 0; e < spec.edge_count(); ++e) {
                const Edge& ed = spec.edge(e);
                if ((S_rem & bit(ed.server)) != 0 &&
                    (target & bit(ed.customer)) != 0 && eta_g[e] > kTol)
                    spare |= bit(ed.server);
            }
            Mask newly = zero_theta & spec.customers_of(spare) & ~lifted;
            if (newly == 0) break;
            lifted |= newly;
        }
        Mask C1 = zero_theta & ~lifted;
        if (C1 == 0)
            throw InternalError("design extraction: no zero-slack types at optimum");
        Mask S1 = spec.servers_of(C1) & S_rem;
        if (S1 == 0)
            throw InternalError("design extraction: zero-slack types with no servers");

        auto comps = split_components(spec, S1, C1);
        if (comps.size() > 1) out.had_disconnected_stage = true;
        if (!pooling::strictly_greater(mu_cur, prev_stage_mu))
            throw InternalError("design extraction: stage rates not increasing");
        prev_stage_mu = mu_cur;

        for (const auto& [Sk, Ck] : comps) {
            SubProblem sp = make_problem(spec, Sk, Ck);
            BasicSolution bs = simplex(sp.p);
            certify(sp.p, bs);
            if (std::abs(bs.mu - mu_cur) > 1e-8 * std::max(1.0, mu_cur))
                throw InternalError("design extraction: component rate mismatch");

            DesignBlock blk;
            blk.servers = Sk;
            blk.customers = Ck;
            blk.mu = bs.mu;
            // The block as a standalone system has alpha renormalized by the
            // block mass, which scales its pooled rate to mu * alpha_sum.
            double mu_block = bs.mu * spec.alpha_sum(Ck);
            for (int k : bs.basis) {
                if (k >= sp.p.num_arcs()) continue;
                int ge = sp.global_arc[k];
                if (bs.eta[k] > kTol) {
                    blk.tree_edges.push_back(ge);
                    blk.r.push_back(spec.edge_rate(ge) * bs.eta[k] / mu_block);
                } else {
                    blk.zero_arcs.push_back(ge);
                }
            }
            // Keep the per-block listings in document order.
            std::vector<size_t> order(blk.tree_edges.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                return blk.tree_edges[a] < blk.tree_edges[b];
            });
            std::vector<int> te;
            std::vector<double> r;
            for (size_t idx : order) {
                te.push_back(blk.tree_edges[idx]);
                r.push_back(blk.r[idx]);
            }
            blk.tree_edges = std::move(te);
            blk.r = std::move(r);
            std::sort(blk.zero_arcs.begin(), blk.zero_arcs.end());
            blk.kind = blk.zero_arcs.empty() ? pooling::PoolingKind::COMPLETE
                                             : pooling::PoolingKind::WEAK;
            out.blocks.push_back(std::move(blk));
        }

        S_rem &= ~S1;
        C_rem &= ~C1;
        if (C_rem != 0) {
            if (S_rem == 0)
                throw InternalError("design extraction: types left without servers");
            SubProblem rest = make_problem(spec, S_rem, C_rem);
            BasicSolution bs = simplex(rest.p);
            certify(rest.p, bs);
            mu_cur = bs.mu;
            for (int li = 0; li < rest.p.I; ++li)
                theta[rest.customer_g[li]] = bs.theta[li];
            for (size_t a = 0; a < rest.global_arc.size(); ++a)
                eta_g[rest.global_arc[a]] = bs.eta[a];
        }
    }
    if (S_rem != 0)
        throw InternalError("design extraction: servers left unassigned");
    return out;
}

std::vector<double> matching_rates_tree(const SystemSpec& spec,
                                        const std::vector<double>& eta,
                                        double mu) {
    if (!spec.is_tree_graph())
        throw ModeError("matching rates by allocation require a tree graph");
    if (static_cast<int>(eta.size()) != spec.edge_count())
        throw ValidationError("allocation does not match the edge list");
    if (!(mu > 0.0)) throw ValidationError("pooled rate must be positive");
    std::vector<double> r(eta.size());
    for (int e = 0; e < spec.edge_count(); ++e) {
        if (eta[e] <= pooling::kStrictnessTol)
            throw ValidationError(
                "matching rates need a strictly positive allocation, but (" +
                spec.server_name(spec.edge(e).server) + ", " +
                spec.customer_name(spec.edge(e).customer) + ") has none");
        r[e] = spec.edge_rate(e) * eta[e] / mu;
    }
    return r;
}

CompleteRates matching_rates_complete(const SystemSpec& spec) {
    if (!spec.is_complete_graph())
        throw ModeError("closed-form matching rates require a complete graph");
    const int J = spec.server_count(), I = spec.customer_count();
    CompleteRates out;
    out.mu_server.resize(J);
    for (int j = 0; j < J; ++j) {
        double mean = 0.0;
        for (int i = 0; i < I; ++i) mean += spec.alpha(i) * spec.mean(j, i);
        out.mu_server[j] = 1.0 / mean;
        out.mu += out.mu_server[j];
    }
    out.r.resize(static_cast<size_t>(J) * I);
    for (int j = 0; j < J; ++j)
        for (int i = 0; i < I; ++i)
            out.r[j * I + i] = out.mu_server[j] / out.mu * spec.alpha(i);
    return out;
}

std::string LpSolution::to_json_text(const SystemSpec& spec, int indent) const {
    json doc;
    doc["status"] = status;
    doc["mu_star"] = mu_star;
    json etas = json::array(), xs = json::array();
    for (int e = 0; e < spec.edge_count(); ++e) {
        json row = edge_name(spec, e);
        row.push_back(eta[e]);
        etas.push_back(row);
        json xr = edge_name(spec, e);
        xr.push_back(x[e]);
        xs.push_back(xr);
    }
    doc["eta"] = etas;
    json th = json::object(), zs = json::object(), ys = json::object();
    for (int i = 0; i < spec.customer_count(); ++i) {
        th[spec.customer_name(i)] = theta[i];
        zs[spec.customer_name(i)] = z[i];
    }
    for (int j = 0; j < spec.server_count(); ++j) ys[spec.server_name(j)] = y[j];
    doc["theta"] = th;
    doc["duals"] = {{"y", ys}, {"z", zs}, {"x", xs}};
    json arcs = json::array();
    for (int e : basic_arcs) arcs.push_back(edge_name(spec, e));
    doc["basic_arcs"] = arcs;
    return doc.dump(indent) + "\n";
}

std::string OptimalDesign::to_json_text(const SystemSpec& spec, int indent) const {
    json doc;
    doc["had_disconnected_stage"] = had_disconnected_stage;
    json blocks_json = json::array();
    for (const DesignBlock& b : blocks) {
        json jb;
        json servers = json::array(), customers = json::array();
        for_each_bit(b.servers, [&](int j) { servers.push_back(spec.server_name(j)); });
        for_each_bit(b.customers, [&](int i) { customers.push_back(spec.customer_name(i)); });
        jb["servers"] = servers;
        jb["customers"] = customers;
        jb["mu"] = b.mu;
        jb["kind"] = pooling::to_string(b.kind);
        json tree = json::array();
        for (size_t k = 0; k < b.tree_edges.size(); ++k) {
            json row = edge_name(spec, b.tree_edges[k]);
            row.push_back(b.r[k]);
            tree.push_back(row);
        }
        jb["tree"] = tree;
        json erased = json::array();
        for (int e : b.zero_arcs) erased.push_back(edge_name(spec, e));
        jb["erased_zero_arcs"] = erased;
        blocks_json.push_back(jb);
    }
    doc["blocks"] = blocks_json;
    return doc.dump(indent) + "\n";
}

std::string OptimalDesign::design_spec_json(const SystemSpec& spec) const {
    std::vector<int> kept;
    for (const DesignBlock& b : blocks)
        kept.insert(kept.end(), b.tree_edges.begin(), b.tree_edges.end());
    std::sort(kept.begin(), kept.end());

    std::vector<Edge> edges;
    RateModel rates;
    rates.mode = spec.mode();
    rates.per_server = spec.rates().per_server;
    rates.per_customer = spec.rates().per_customer;
    for (int e : kept) {
        edges.push_back(spec.edge(e));
        if (spec.mode() == RateMode::GENERAL)
            rates.per_edge.push_back(spec.rates().per_edge[e]);
    }
    SystemSpec pruned = SystemSpec::make(
        spec.servers(), spec.customers(), spec.alphas(), edges, rates,
        spec.has_lambda() ? std::optional<double>(spec.lambda()) : std::nullopt);
    return pruned.to_json_text();
}

} // namespace fluidfcfs::lp
