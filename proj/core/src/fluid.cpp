#include "fluidfcfs/fluid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "fluidfcfs/lp.hpp"
#include "fluidfcfs/pooling.hpp"

namespace fluidfcfs::fluid {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Relative speeds below this never close a gap; keeps weak ties from
// scheduling events at astronomical times.
constexpr double kSpeedTie = 1e-12;
constexpr int kEventBudget = 10000;
// Design blocks whose rates agree to this relative tolerance belong to the
// same stage of a split and keep moving together.
constexpr double kStageTie = 1e-6;

double lambda_of(const SystemSpec& spec) {
    return spec.has_lambda() ? spec.lambda() : kInf;
}

// Every position speed is bounded by the fastest any single type can be
// consumed: max over types of (sum of compatible rates) / alpha.
double speed_bound(const SystemSpec& spec) {
    std::vector<double> per_type(spec.customer_count(), 0.0);
    for (int e = 0; e < spec.edge_count(); ++e)
        per_type[spec.edge(e).customer] += spec.edge_rate(e);
    double bound = 0.0;
    for (int i = 0; i < spec.customer_count(); ++i)
        bound = std::max(bound, per_type[i] / spec.alpha(i));
    return bound;
}

double sd_group_speed(const SystemSpec& spec, Mask group, Mask eff) {
    return spec.mu_server_sum(group) / spec.alpha_sum(eff);
}

double cd_group_speed(const SystemSpec& spec, Mask group, Mask eff) {
    double load = 0.0;
    for_each_bit(eff, [&](int i) {
        load += spec.alpha(i) / spec.rates().per_customer[i];
    });
    return popcount(group) / load;
}

// Drain speed of one leapfrogging block where every server can serve every
// type of the block: each server contributes the reciprocal of its
// alpha-weighted mean service time.
double complete_block_speed(const SystemSpec& spec, Mask servers, Mask customers) {
    double total = 0.0;
    for_each_bit(servers, [&](int j) {
        double mean = 0.0;
        for_each_bit(customers, [&](int i) { mean += spec.alpha(i) * spec.mean(j, i); });
        total += 1.0 / mean;
    });
    return total;
}

bool block_is_complete(const SystemSpec& spec, Mask servers, Mask customers) {
    bool complete = true;
    for_each_bit(servers, [&](int j) {
        if ((spec.customers_of_server(j) & customers) != customers) complete = false;
    });
    return complete;
}

// Solves the square drain system of a connected tree block: allocations of
// each server sum to 1 and the weighted allocations of each type sum to
// speed * alpha. Every allocation stays affine in the unknown speed while
// leaves are eliminated; the last node's equation closes the system.
double tree_block_speed(const SystemSpec& spec, Mask servers, Mask customers) {
    std::vector<int> sv = mask_to_indices(servers);
    std::vector<int> cv = mask_to_indices(customers);
    int ns = static_cast<int>(sv.size());
    int n = ns + static_cast<int>(cv.size());
    std::vector<int> node_of_customer(spec.customer_count(), -1);
    for (int k = 0; k < static_cast<int>(cv.size()); ++k) node_of_customer[cv[k]] = ns + k;

    struct LocalEdge {
        int snode, cnode;
        double rate;
        double a = 0.0, b = 0.0; // resolved allocation a + b * speed
        bool resolved = false;
    };
    std::vector<LocalEdge> le;
    std::vector<std::vector<int>> incident(n);
    for (int k = 0; k < ns; ++k) {
        for_each_bit(spec.customers_of_server(sv[k]) & customers, [&](int i) {
            int id = static_cast<int>(le.size());
            le.push_back({k, node_of_customer[i], spec.rate(sv[k], i)});
            incident[k].push_back(id);
            incident[node_of_customer[i]].push_back(id);
        });
    }

    // Per node: sum of resolved incident contributions, allocation-weighted
    // for servers and rate-weighted for customers.
    std::vector<double> sum_a(n, 0.0), sum_b(n, 0.0);
    std::vector<int> open(n);
    for (int x = 0; x < n; ++x) open[x] = static_cast<int>(incident[x].size());
    std::vector<char> used(n, 0);
    std::vector<int> stack;
    for (int x = 0; x < n; ++x)
        if (open[x] == 1) stack.push_back(x);

    auto alpha_of_node = [&](int x) { return spec.alpha(cv[x - ns]); };

    int resolved = 0;
    while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        if (open[x] != 1 || used[x]) continue;
        used[x] = 1;
        int eid = -1;
        for (int id : incident[x])
            if (!le[id].resolved) eid = id;
        LocalEdge& e = le[eid];
        if (x < ns) {
            e.a = 1.0 - sum_a[x];
            e.b = -sum_b[x];
        } else {
            e.a = -sum_a[x] / e.rate;
            e.b = (alpha_of_node(x) - sum_b[x]) / e.rate;
        }
        e.resolved = true;
        ++resolved;
        for (int y : {e.snode, e.cnode}) {
            --open[y];
            if (y < ns) {
                sum_a[y] += e.a;
                sum_b[y] += e.b;
            } else {
                sum_a[y] += e.rate * e.a;
                sum_b[y] += e.rate * e.b;
            }
            if (open[y] == 1 && !used[y]) stack.push_back(y);
        }
    }
    if (resolved != static_cast<int>(le.size()))
        throw InternalError("fluid: tree drain solve did not reduce to a root");
    int root = -1;
    for (int x = 0; x < n; ++x)
        if (!used[x]) root = x;
    if (root < 0) throw InternalError("fluid: tree drain solve lost its root");
    double num, den;
    if (root < ns) {
        num = 1.0 - sum_a[root];
        den = sum_b[root];
    } else {
        num = sum_a[root];
        den = alpha_of_node(root) - sum_b[root];
    }
    if (std::abs(den) < 1e-13) throw InternalError("fluid: tree drain solve is singular");
    return num / den;
}

// General rates: split the group's effective subgraph into connected
// blocks, solve each (complete blocks by harmonic means, tree blocks by
// leaf elimination), and require a common speed. A group pinned to the
// arrival frontier is exempt from the agreement requirement: its parts are
// all at least as fast as the arrivals, so the slowest part bounds the
// free speed and the arrival cap decides the rest.
double general_group_speed(const SystemSpec& spec, Mask group, Mask eff, bool slowest_part) {
    double speed = 0.0;
    bool have = false;
    Mask rest = group;
    while (rest != 0) {
        Mask comp_s = bit(std::countr_zero(rest));
        Mask comp_c = 0;
        for (;;) {
            Mask c2 = spec.customers_of(comp_s) & eff;
            Mask s2 = (spec.servers_of(c2) & group) | comp_s;
            if (s2 == comp_s && c2 == comp_c) break;
            comp_s = s2;
            comp_c = c2;
        }
        int edge_total = 0;
        for_each_bit(comp_s, [&](int j) {
            edge_total += popcount(spec.customers_of_server(j) & comp_c);
        });
        double v;
        if (block_is_complete(spec, comp_s, comp_c)) {
            v = complete_block_speed(spec, comp_s, comp_c);
        } else if (edge_total == popcount(comp_s) + popcount(comp_c) - 1) {
            v = tree_block_speed(spec, comp_s, comp_c);
        } else {
            throw ModeError(
                "general service rates need tree or complete blocks within each fluid group");
        }
        if (have && slowest_part) {
            speed = std::min(speed, v);
        } else {
            if (have && !pooling::nearly_equal(speed, v))
                throw ValidationError("fluid group spans parts with different drain rates");
            speed = v;
        }
        have = true;
        rest &= ~comp_s;
    }
    return speed;
}

std::vector<Mask> suffix_customers(const SystemSpec& spec, const std::vector<Mask>& groups) {
    std::vector<Mask> ahead(groups.size(), 0);
    for (int k = static_cast<int>(groups.size()) - 2; k >= 0; --k)
        ahead[k] = ahead[k + 1] | spec.customers_of(groups[k + 1]);
    return ahead;
}

// Splits a co-located server set against its effective types into ordered
// blocks, slowest first; one block means the set keeps moving together.
// SD and CD use the weighted peel; general rates recover the stages of the
// allocation design on the renormalized subsystem.
std::vector<Mask> lp_split(const SystemSpec& spec, Mask T, Mask D) {
    std::vector<int> sv = mask_to_indices(T);
    std::vector<int> cv = mask_to_indices(D);
    std::vector<int> slocal(spec.server_count(), -1), clocal(spec.customer_count(), -1);
    std::vector<std::string> snames, cnames;
    for (size_t k = 0; k < sv.size(); ++k) {
        slocal[sv[k]] = static_cast<int>(k);
        snames.push_back(spec.server_name(sv[k]));
    }
    double alpha_d = spec.alpha_sum(D);
    std::vector<double> alpha;
    for (size_t k = 0; k < cv.size(); ++k) {
        clocal[cv[k]] = static_cast<int>(k);
        cnames.push_back(spec.customer_name(cv[k]));
        alpha.push_back(spec.alpha(cv[k]) / alpha_d);
    }
    std::vector<Edge> edges;
    RateModel rm;
    rm.mode = RateMode::GENERAL;
    for (int e = 0; e < spec.edge_count(); ++e) {
        const Edge& ed = spec.edge(e);
        if (contains(T, ed.server) && contains(D, ed.customer)) {
            edges.push_back({slocal[ed.server], clocal[ed.customer]});
            rm.per_edge.push_back(spec.edge_rate(e));
        }
    }
    SystemSpec sub = SystemSpec::make(std::move(snames), std::move(cnames), std::move(alpha),
                                      std::move(edges), std::move(rm));
    lp::OptimalDesign design = lp::extract_design(sub, lp::solve_static_plan(sub));
    std::vector<Mask> stages;
    double stage_mu = 0.0;
    for (const lp::DesignBlock& b : design.blocks) {
        Mask m = 0;
        for_each_bit(b.servers, [&](int ls) { m |= bit(sv[ls]); });
        if (!stages.empty() && std::abs(b.mu - stage_mu) <= kStageTie * std::max(1.0, stage_mu)) {
            stages.back() |= m;
        } else {
            stages.push_back(m);
            stage_mu = b.mu;
        }
    }
    return stages;
}

std::vector<Mask> split_cluster(const SystemSpec& spec, Mask T, Mask D) {
    if (popcount(T) == 1) return {T};
    if (spec.mode() == RateMode::GENERAL) return lp_split(spec, T, D);
    pooling::PoolWeights w =
        spec.mode() == RateMode::SD ? pooling::sd_weights(spec) : pooling::cd_weights(spec);
    pooling::PeeledBlocks peeled = pooling::peel_blocks(spec, w, T, D);
    std::vector<Mask> out;
    out.reserve(peeled.blocks.size());
    for (const pooling::DecompositionBlock& b : peeled.blocks) out.push_back(b.servers);
    return out;
}

struct Working {
    std::vector<Mask> groups; // ascending position, most lagging first
    std::vector<double> pos;
    bool locked = false; // frontmost group rides the arrival frontier
};

// Rebuilds a valid ordered partition at time t: coalesces co-located
// groups, jumps servers whose entire work lies ahead (instant merges),
// splits each co-located set with the mode's decomposition, and at the
// frontier detaches the blocks too slow to keep pace while locking the
// rest onto it.
void resolve(const SystemSpec& spec, double lambda, double t, Working& st,
             std::vector<FluidEvent>& events, bool emit_merges) {
    bool was_locked = st.locked;

    std::vector<Mask> cm;
    std::vector<double> cp;
    std::vector<int> width;
    for (size_t g = 0; g < st.groups.size(); ++g) {
        if (!cm.empty() && st.pos[g] - cp.back() <= kMergeSnap) {
            cm.back() |= st.groups[g];
            cp.back() = std::max(cp.back(), st.pos[g]);
            ++width.back();
        } else {
            cm.push_back(st.groups[g]);
            cp.push_back(st.pos[g]);
            width.push_back(1);
        }
    }
    bool at_frontier = false;
    if (std::isfinite(lambda)) {
        double frontier = lambda * t;
        if (frontier - cp.back() <= kMergeSnap) {
            cp.back() = frontier;
            at_frontier = true;
        }
    }
    if (emit_merges) {
        for (size_t k = 0; k < cm.size(); ++k)
            if (width[k] > 1) events.push_back({t, EventKind::MERGE, cm[k]});
    }

    // A server whose compatible types are all served ahead of it has no
    // work at its own position; in fluid time it closes the gap instantly.
    for (;;) {
        bool moved = false;
        std::vector<Mask> ahead = suffix_customers(spec, cm);
        for (size_t k = 0; k + 1 < cm.size(); ++k) {
            Mask eff = spec.customers_of(cm[k]) & ~ahead[k];
            Mask starved = 0;
            for_each_bit(cm[k], [&](int s) {
                if ((spec.customers_of_server(s) & eff) == 0) starved |= bit(s);
            });
            if (starved == 0) continue;
            events.push_back({t, EventKind::INSTANT_MERGE, starved});
            cm[k] &= ~starved;
            cm[k + 1] |= starved;
            if (cm[k] == 0) {
                cm.erase(cm.begin() + k);
                cp.erase(cp.begin() + k);
            }
            moved = true;
            break;
        }
        if (!moved) break;
    }

    std::vector<Mask> out_g;
    std::vector<double> out_p;
    size_t front_begin = 0;
    {
        std::vector<Mask> ahead = suffix_customers(spec, cm);
        for (size_t k = 0; k < cm.size(); ++k) {
            Mask eff = spec.customers_of(cm[k]) & ~ahead[k];
            std::vector<Mask> blocks = split_cluster(spec, cm[k], eff);
            if (k + 1 == cm.size()) front_begin = out_g.size();
            for (Mask b : blocks) {
                out_g.push_back(b);
                out_p.push_back(cp[k]);
            }
        }
    }

    st.locked = false;
    if (at_frontier) {
        std::vector<bool> flags(out_g.size(), false);
        SegmentSpeeds sp = segment_speeds(spec, out_g, flags);
        size_t keep_from = front_begin;
        while (keep_from < out_g.size() && sp.speed[keep_from] < lambda &&
               !pooling::nearly_equal(sp.speed[keep_from], lambda))
            ++keep_from;
        if (keep_from < out_g.size()) {
            Mask kept = 0;
            for (size_t k = keep_from; k < out_g.size(); ++k) kept |= out_g[k];
            out_g.resize(keep_from);
            out_p.resize(keep_from);
            out_g.push_back(kept);
            out_p.push_back(lambda * t);
            st.locked = true;
            if (!was_locked) events.push_back({t, EventKind::FRONTIER_CONTACT, kept});
        }
    }

    st.groups = std::move(out_g);
    st.pos = std::move(out_p);
}

double pooled_rate_of(const SystemSpec& spec) {
    if (spec.is_complete_graph())
        return complete_block_speed(spec, spec.all_servers(), spec.all_customers());
    switch (spec.mode()) {
        case RateMode::SD:
            return spec.mu_total();
        case RateMode::CD:
            return cd_group_speed(spec, spec.all_servers(), spec.all_customers());
        case RateMode::GENERAL:
            return pooling::check_crp_tree(spec).mu;
    }
    throw InternalError("fluid: unknown rate mode");
}

void complete_fast_path(FluidTrajectory& traj, const SystemSpec& spec,
                        const std::vector<double>& pos0, double horizon, double lambda) {
    double mu = complete_block_speed(spec, spec.all_servers(), spec.all_customers());
    double p0 = *std::max_element(pos0.begin(), pos0.end());
    Mask all = spec.all_servers();
    Mask movers = 0;
    for (int j = 0; j < spec.server_count(); ++j)
        if (pos0[j] < p0 - kMergeSnap) movers |= bit(j);
    if (movers != 0) traj.events.push_back({0.0, EventKind::INSTANT_MERGE, movers});

    auto push_segment = [&](double a, double b, double p, double v, bool lockflag) {
        traj.segments.push_back({a, b, {all}, {p}, {v}, {lockflag}});
    };
    if (!std::isfinite(lambda)) {
        push_segment(0.0, horizon, p0, mu, false);
        traj.steady = true;
    } else if (p0 >= -kMergeSnap) {
        if (mu > lambda || pooling::nearly_equal(mu, lambda)) {
            traj.events.push_back({0.0, EventKind::FRONTIER_CONTACT, all});
            push_segment(0.0, horizon, 0.0, lambda, true);
        } else {
            push_segment(0.0, horizon, 0.0, mu, false);
        }
        traj.steady = true;
    } else if (pooling::strictly_greater(mu, lambda)) {
        double contact = -p0 / (mu - lambda);
        if (contact < horizon) {
            push_segment(0.0, contact, p0, mu, false);
            traj.events.push_back({contact, EventKind::FRONTIER_CONTACT, all});
            push_segment(contact, horizon, lambda * contact, lambda, true);
            traj.steady = true;
        } else {
            push_segment(0.0, horizon, p0, mu, false);
            traj.steady = false;
        }
    } else {
        push_segment(0.0, horizon, p0, mu, false);
        traj.steady = true;
    }
    for (const TrajectorySegment& seg : traj.segments) traj.breakpoints.push_back(seg.t_begin);
}

FluidTrajectory run_trace(const SystemSpec& spec, const std::vector<double>& pos0,
                          double horizon) {
    double lambda = lambda_of(spec);
    FluidTrajectory traj{spec};
    traj.lambda = lambda;
    traj.horizon = horizon;
    if (spec.is_complete_graph()) {
        complete_fast_path(traj, spec, pos0, horizon, lambda);
        return traj;
    }

    int J = spec.server_count();
    std::vector<int> order(J);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pos0[a] < pos0[b]; });
    Working st;
    for (int j : order) {
        st.groups.push_back(bit(j));
        st.pos.push_back(pos0[j]);
    }

    double bound = speed_bound(spec);
    double t = 0.0;
    bool first = true;
    for (int iter = 0;; ++iter) {
        if (iter > kEventBudget) throw InternalError("fluid trace exceeded its event budget");
        resolve(spec, lambda, t, st, traj.events, !first);
        first = false;

        std::vector<bool> flags(st.groups.size(), false);
        if (st.locked) flags.back() = true;
        SegmentSpeeds sp = segment_speeds(spec, st.groups, flags);
        for (size_t g = 0; g < sp.speed.size(); ++g) {
            if (sp.instant_merge[g])
                throw InternalError("fluid trace left an instant merge unresolved");
            if (sp.speed[g] > bound * (1.0 + 1e-9) + 1e-12)
                throw InternalError("fluid speed exceeded the service bound");
        }

        double dt = kInf;
        for (size_t g = 0; g + 1 < st.groups.size(); ++g) {
            double rel = sp.speed[g] - sp.speed[g + 1];
            if (rel > kSpeedTie) dt = std::min(dt, (st.pos[g + 1] - st.pos[g]) / rel);
        }
        if (std::isfinite(lambda) && !st.locked) {
            double rel = sp.speed.back() - lambda;
            if (rel > kSpeedTie) dt = std::min(dt, (lambda * t - st.pos.back()) / rel);
        }

        TrajectorySegment seg;
        seg.t_begin = t;
        seg.groups = st.groups;
        seg.start_position = st.pos;
        seg.speed = sp.speed;
        seg.arrival_constrained = flags;
        double t_next = t + dt;
        if (t_next >= horizon) {
            seg.t_end = horizon;
            traj.segments.push_back(std::move(seg));
            traj.steady = std::isinf(dt);
            break;
        }
        seg.t_end = t_next;
        traj.segments.push_back(std::move(seg));
        for (size_t g = 0; g < st.groups.size(); ++g) st.pos[g] += sp.speed[g] * dt;
        t = t_next;
    }
    for (const TrajectorySegment& seg : traj.segments) traj.breakpoints.push_back(seg.t_begin);
    return traj;
}

void validate_positions(const SystemSpec& spec, const std::vector<double>& pos) {
    if (static_cast<int>(pos.size()) != spec.server_count())
        throw ValidationError("fluid trace needs one initial position per server");
    for (double p : pos) {
        if (!std::isfinite(p)) throw ValidationError("initial positions must be finite");
        if (p > 0.0)
            throw ValidationError("initial positions must be at or behind the arrival frontier");
    }
}

void validate_mode(const SystemSpec& spec) {
    if (spec.mode() == RateMode::GENERAL && !spec.is_tree_graph() && !spec.is_complete_graph())
        throw ModeError(
            "general service rates trace only on tree or complete compatibility graphs");
}

json names_json(const SystemSpec& spec, Mask servers) {
    json arr = json::array();
    for_each_bit(servers, [&](int j) { arr.push_back(spec.server_name(j)); });
    return arr;
}

std::string group_label(const SystemSpec& spec, Mask servers) {
    std::string label;
    for_each_bit(servers, [&](int j) {
        if (!label.empty()) label += '+';
        label += spec.server_name(j);
    });
    return label;
}

json finite_or_null(double x) {
    return std::isfinite(x) ? json(x) : json(nullptr);
}

} // namespace

std::string to_string(EventKind kind) {
    switch (kind) {
        case EventKind::MERGE: return "MERGE";
        case EventKind::INSTANT_MERGE: return "INSTANT_MERGE";
        case EventKind::FRONTIER_CONTACT: return "FRONTIER_CONTACT";
    }
    throw InternalError("unknown fluid event kind");
}

SegmentSpeeds segment_speeds(const SystemSpec& spec, const std::vector<Mask>& partition,
                             const std::vector<bool>& arrival_constrained) {
    size_t G = partition.size();
    if (G == 0) throw ValidationError("fluid partition must not be empty");
    if (arrival_constrained.size() != G)
        throw ValidationError("fluid partition needs one arrival flag per group");
    Mask seen = 0;
    for (Mask m : partition) {
        if (m == 0) throw ValidationError("fluid groups must not be empty");
        if ((m & ~spec.all_servers()) != 0)
            throw ValidationError("fluid group names an unknown server");
        if ((m & seen) != 0) throw ValidationError("fluid groups must not overlap");
        seen |= m;
    }
    if (seen != spec.all_servers())
        throw ValidationError("fluid groups must cover every server");
    for (size_t g = 0; g + 1 < G; ++g)
        if (arrival_constrained[g])
            throw ValidationError("only the leading group can be arrival-constrained");
    if (arrival_constrained[G - 1] && !spec.has_lambda())
        throw ValidationError("an arrival-constrained group needs an arrival rate");

    std::vector<Mask> ahead = suffix_customers(spec, partition);
    SegmentSpeeds out;
    out.speed.resize(G, 0.0);
    out.instant_merge.assign(G, false);
    for (size_t g = 0; g < G; ++g) {
        Mask eff = spec.customers_of(partition[g]) & ~ahead[g];
        if (eff == 0) {
            // Only possible behind other groups; all of this group's work is
            // handled ahead, so the gap closes in zero fluid time.
            out.speed[g] = kInf;
            out.instant_merge[g] = true;
            continue;
        }
        bool starved = false;
        for_each_bit(partition[g], [&](int s) {
            if ((spec.customers_of_server(s) & eff) == 0) starved = true;
        });
        if (starved)
            throw ValidationError("a fluid group server has no effective customer types");
        double v;
        switch (spec.mode()) {
            case RateMode::SD: v = sd_group_speed(spec, partition[g], eff); break;
            case RateMode::CD: v = cd_group_speed(spec, partition[g], eff); break;
            case RateMode::GENERAL:
                v = general_group_speed(spec, partition[g], eff, arrival_constrained[g]);
                break;
            default: throw InternalError("fluid: unknown rate mode");
        }
        if (arrival_constrained[g]) v = std::min(v, spec.lambda());
        out.speed[g] = v;
    }
    return out;
}

FluidTrajectory trace(const SystemSpec& spec, const std::vector<double>& initial_positions,
                      double horizon) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ValidationError("fluid horizon must be positive and finite");
    validate_positions(spec, initial_positions);
    validate_mode(spec);
    return run_trace(spec, initial_positions, horizon);
}

StabilityVerdict stability(const SystemSpec& spec,
                           const std::vector<double>& initial_positions) {
    if (!spec.has_lambda()) throw ValidationError("stability needs an arrival rate");
    validate_positions(spec, initial_positions);
    validate_mode(spec);
    FluidTrajectory traj = run_trace(spec, initial_positions, kInf);

    StabilityVerdict v;
    v.pooled_rate = pooled_rate_of(spec);
    v.merge_time = kInf;
    v.drain_time = kInf;
    size_t merged_from = traj.segments.size();
    while (merged_from > 0 && traj.segments[merged_from - 1].groups.size() == 1) --merged_from;
    if (merged_from < traj.segments.size())
        v.merge_time = traj.segments[merged_from].t_begin;
    size_t drained_from = traj.segments.size();
    while (drained_from > 0 && traj.segments[drained_from - 1].groups.size() == 1 &&
           traj.segments[drained_from - 1].arrival_constrained.back())
        --drained_from;
    if (drained_from < traj.segments.size()) {
        v.drain_time = traj.segments[drained_from].t_begin;
        v.stable = true;
    }
    return v;
}

namespace {

size_t locate_segment(const FluidTrajectory& traj, double t) {
    if (t < 0.0 || t > traj.horizon)
        throw ValidationError("time outside the traced horizon");
    size_t k = std::upper_bound(traj.breakpoints.begin(), traj.breakpoints.end(), t) -
               traj.breakpoints.begin();
    return k - 1;
}

} // namespace

FluidState FluidTrajectory::state_at(double t) const {
    const TrajectorySegment& seg = segments[locate_segment(*this, t)];
    FluidState state;
    state.time = t;
    state.lambda = lambda;
    state.arrival_frontier = std::isfinite(lambda) ? lambda * t : kInf;
    for (size_t g = 0; g < seg.groups.size(); ++g) {
        state.groups.push_back({seg.groups[g],
                                seg.start_position[g] + seg.speed[g] * (t - seg.t_begin),
                                seg.arrival_constrained[g]});
    }
    return state;
}

std::vector<double> FluidTrajectory::server_positions(double t) const {
    FluidState state = state_at(t);
    std::vector<double> out(spec.server_count(), 0.0);
    for (const FluidGroup& g : state.groups)
        for_each_bit(g.servers, [&](int j) { out[j] = g.position; });
    return out;
}

std::vector<std::vector<double>> FluidTrajectory::queue_profile(double t) const {
    if (!std::isfinite(lambda))
        throw ValidationError("queue profile needs an arrival rate");
    FluidState state = state_at(t);
    int I = spec.customer_count();
    std::vector<std::vector<double>> mass(state.groups.size(), std::vector<double>(I, 0.0));
    Mask prefix = 0;
    for (size_t g = 0; g < state.groups.size(); ++g) {
        prefix |= state.groups[g].servers;
        if (g + 1 < state.groups.size()) {
            double gap = state.groups[g + 1].position - state.groups[g].position;
            Mask unique = spec.unique_customers_of(prefix);
            for_each_bit(unique, [&](int i) { mass[g][i] = spec.alpha(i) * gap; });
        } else {
            double gap = std::max(0.0, lambda * t - state.groups[g].position);
            for (int i = 0; i < I; ++i) mass[g][i] = spec.alpha(i) * gap;
        }
    }
    return mass;
}

std::string FluidTrajectory::to_json_text(int indent) const {
    json j;
    j["lambda"] = finite_or_null(lambda);
    j["horizon"] = horizon;
    j["steady"] = steady;
    j["breakpoints"] = breakpoints;
    json segs = json::array();
    for (const TrajectorySegment& seg : segments) {
        json groups = json::array();
        for (size_t g = 0; g < seg.groups.size(); ++g) {
            groups.push_back({{"servers", names_json(spec, seg.groups[g])},
                              {"position", seg.start_position[g]},
                              {"speed", seg.speed[g]},
                              {"arrival_constrained",
                               static_cast<bool>(seg.arrival_constrained[g])}});
        }
        segs.push_back(
            {{"t_begin", seg.t_begin}, {"t_end", seg.t_end}, {"groups", std::move(groups)}});
    }
    j["segments"] = std::move(segs);
    json evs = json::array();
    for (const FluidEvent& e : events) {
        evs.push_back({{"time", e.time},
                       {"kind", to_string(e.kind)},
                       {"servers", names_json(spec, e.servers)}});
    }
    j["events"] = std::move(evs);
    return j.dump(indent);
}

std::string FluidTrajectory::to_csv(double resolution) const {
    if (!(resolution > 0.0) || !std::isfinite(resolution))
        throw ValidationError("csv resolution must be positive");
    std::string out = "t,server_group,position\n";
    char buf[64];
    for (long k = 0;; ++k) {
        double t = k * resolution;
        if (t > horizon + 1e-12) break;
        t = std::min(t, horizon);
        const TrajectorySegment& seg = segments[locate_segment(*this, t)];
        for (size_t g = 0; g < seg.groups.size(); ++g) {
            double p = seg.start_position[g] + seg.speed[g] * (t - seg.t_begin);
            std::snprintf(buf, sizeof buf, "%.12g", t);
            out += buf;
            out += ',';
            out += group_label(spec, seg.groups[g]);
            out += ',';
            std::snprintf(buf, sizeof buf, "%.12g", p);
            out += buf;
            out += '\n';
        }
    }
    return out;
}

std::string StabilityVerdict::to_json_text(int indent) const {
    json j;
    j["stable"] = stable;
    j["merge_time"] = finite_or_null(merge_time);
    j["drain_time"] = finite_or_null(drain_time);
    j["pooled_rate"] = pooled_rate;
    return j.dump(indent);
}

} // namespace fluidfcfs::fluid
