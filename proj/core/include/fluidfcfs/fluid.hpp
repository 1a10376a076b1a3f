#pragma once

#include <string>
#include <vector>

#include "fluidfcfs/system.hpp"

namespace fluidfcfs::fluid {

// Positions within this absolute distance count as co-located. Event times
// are solved in closed form from linear motion, so the snap only has to
// absorb rounding from chained events, not integration drift.
inline constexpr double kMergeSnap = 1e-9;

// One block of servers moving together, ordered most-lagging first inside
// FluidState. arrival_constrained marks a group sitting on the arrival
// frontier whose speed is capped at lambda.
struct FluidGroup {
    Mask servers = 0;
    double position = 0.0;
    bool arrival_constrained = false;
};

// Snapshot of the fluid system: group positions strictly increase along
// the list and the last group never passes the arrival frontier. lambda
// and arrival_frontier are +infinity for an infinite-supply trace.
struct FluidState {
    double time = 0.0;
    std::vector<FluidGroup> groups;
    double arrival_frontier = 0.0;
    double lambda = 0.0;
};

enum class EventKind {
    MERGE,            // groups met and (at least partly) joined
    INSTANT_MERGE,    // a group or server with no effective work jumped ahead
    FRONTIER_CONTACT, // the leading group reached the arrival frontier
};

std::string to_string(EventKind kind);

struct FluidEvent {
    double time = 0.0;
    EventKind kind = EventKind::MERGE;
    Mask servers = 0;
};

// Per-group drain speeds for an ordered partition (most lagging first).
// A non-leading group whose effective customer set is empty closes its gap
// in zero fluid time; it is flagged instant_merge with infinite speed
// rather than treated as an error.
struct SegmentSpeeds {
    std::vector<double> speed;
    std::vector<bool> instant_merge;
};

// Evaluates the drain speed of every group in the ordered partition. Each
// group's effective customer set is C(group) minus the types any group
// ahead of it can serve. Server-dependent and customer-dependent rates use
// their closed forms; general rates solve each connected block of the
// group's subgraph (tree blocks by leaf elimination, complete blocks by
// the per-server harmonic means) and require the block speeds to agree.
// Groups flagged arrival_constrained are capped at lambda.
SegmentSpeeds segment_speeds(const SystemSpec& spec,
                             const std::vector<Mask>& partition,
                             const std::vector<bool>& arrival_constrained);

// Trajectory piece on [t_begin, t_end): a fixed ordered partition with
// constant per-group speeds. Positions interpolate linearly from
// start_position. Only the last group can be arrival-constrained.
struct TrajectorySegment {
    double t_begin = 0.0;
    double t_end = 0.0;
    std::vector<Mask> groups;
    std::vector<double> start_position;
    std::vector<double> speed;
    std::vector<bool> arrival_constrained;
};

// Piecewise-linear fluid trajectory over [0, horizon]. breakpoints[k] is
// segments[k].t_begin; the last segment ends at the horizon. steady means
// no further event would ever occur, so the final partition persists
// beyond the horizon. Immutable once returned by trace().
struct FluidTrajectory {
    SystemSpec spec;
    double lambda = 0.0; // +infinity when the spec has no arrival rate
    double horizon = 0.0;
    bool steady = false;
    std::vector<double> breakpoints;
    std::vector<TrajectorySegment> segments;
    std::vector<FluidEvent> events;

    FluidState state_at(double t) const;
    // Position of every server at time t, indexed like spec.servers().
    std::vector<double> server_positions(double t) const;
    // Fluid queue mass per group gap and customer type: entry [g][i] is the
    // mass of type i between group g and the next group (for the last
    // group, between it and the arrival frontier). Types some group ahead
    // could serve carry zero mass in the gaps behind it.
    std::vector<std::vector<double>> queue_profile(double t) const;

    std::string to_json_text(int indent = 2) const;
    // Long-format sampling "t,server_group,position" every `resolution`
    // time units, for plotting.
    std::string to_csv(double resolution) const;
};

// Traces the exact fluid trajectory from per-server initial positions
// (all <= 0) up to the horizon. Supported inputs: server-dependent or
// customer-dependent rates on any graph, and general rates on tree or
// complete compatibility graphs. Co-located sets are split with the
// pooling decomposition for the rate mode; complete graphs follow the
// closed form min(Y(0) + mu t, lambda t).
FluidTrajectory trace(const SystemSpec& spec,
                      const std::vector<double>& initial_positions,
                      double horizon);

// Outcome of running the fluid model to its limit behaviour. merge_time
// and drain_time are +infinity when the corresponding event never happens.
struct StabilityVerdict {
    bool stable = false;
    double merge_time = 0.0; // first time all servers move as one group
    double drain_time = 0.0; // first time every position sits on lambda t
    double pooled_rate = 0.0;

    std::string to_json_text(int indent = 2) const;
};

// Runs the trace until the partition stops changing and reports whether
// the fluid drains (every group reaches the arrival frontier in finite
// time). Requires an arrival rate in the spec.
StabilityVerdict stability(const SystemSpec& spec,
                           const std::vector<double>& initial_positions);

} // namespace fluidfcfs::fluid
