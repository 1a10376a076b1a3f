#pragma once

// Discrete-event simulation of the FCFS-ALIS service system: servers take
// the compatible customer that has waited longest, arriving customers take
// the compatible server that has idled longest. Studies measure empirical
// matching rates (the fraction of services on each compatibility edge),
// the server span, and the distribution of server orderings, replicated
// under independent random streams for hypothesis testing.

#include <fluidfcfs/system.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fluidfcfs::sim {

enum class LawFamily { EXPONENTIAL, PARETO, UNIFORM_WIDE, UNIFORM_NARROW };

// Accepts the CLI spellings "exponential", "pareto", "uniform-wide",
// "uniform-narrow"; throws ValidationError otherwise.
LawFamily parse_law(const std::string& name);
std::string to_string(LawFamily family);

// A service-time distribution at a given rate. Every family has mean
// 1/rate: exponential(rate); Pareto with scale rate/2 (density
// 3g(gx+1)^-4, finite variance, heavy tail); U(0, 2/rate); and
// U(.9/rate, 1.1/rate).
struct ServiceLaw {
    LawFamily family = LawFamily::EXPONENTIAL;
    double rate = 1.0;

    // Inverse CDF at u in [0, 1).
    double sample(double u) const;
};

struct Protocol {
    std::uint64_t warmup_services = 100000;
    std::uint64_t measured_services = 1000000;
};

struct RunOptions {
    // With infinite supply the waiting stream never empties: customer types
    // are drawn i.i.d. on demand and servers never idle. This is the
    // default regime for matching-rate studies. When off, the spec's
    // lambda drives Poisson arrivals.
    bool infinite_supply = true;
    // Finite-lambda runs with lambda <= maximal throughput are refused by
    // default because matching-rate estimates are regime-dependent there.
    bool allow_any_regime = false;
};

// Complete record of assignment decisions, for replaying a run against an
// independent brute-force implementation of the FCFS/ALIS rules.
struct DecisionLog {
    struct Event {
        enum Kind { COMPLETION, ARRIVAL };
        Kind kind = COMPLETION;
        int server = -1;                    // completing server
        std::uint64_t customer = 0;         // arriving customer index
        int type = -1;                      // arriving customer type
        bool assigned = false;
        int assigned_server = -1;
        std::uint64_t assigned_customer = 0;
        int assigned_type = -1;
    };
    // Customer type by arrival index; the first J entries are the forced
    // initial customers (index j served by server j).
    std::vector<int> arrival_types;
    std::vector<Event> events;
};

// Orderings are tallied only up to this many servers (J! table rows).
inline constexpr int kMaxPermutationServers = 8;

// Per-replication ordering vectors are serialized only up to this many
// servers (the aggregate table is still produced through
// kMaxPermutationServers).
inline constexpr int kMaxOrderingVectorServers = 6;

struct ReplicationRecord {
    // Fraction of measured services per compatibility edge, in spec edge
    // order; sums to 1.
    std::vector<double> edge_fractions;
    std::vector<std::uint64_t> edge_counts;
    // Distance between the most advanced and most lagging server position,
    // sampled at every measured service completion.
    std::map<std::uint64_t, std::uint64_t> span_histogram;
    // Count per server ordering, indexed by lexicographic rank; empty when
    // J > kMaxPermutationServers.
    std::vector<std::uint64_t> permutation_counts;
    std::uint64_t idle_events = 0; // post-warmup transitions into idleness
    std::uint64_t seed = 0;
    std::uint32_t replication = 0;
};

// Runs one replication: warmup_services completions, counter reset, then
// measured_services completions. Deterministic given (seed, replication).
ReplicationRecord run_replication(const SystemSpec& spec, LawFamily law,
                                  const Protocol& protocol, std::uint64_t seed,
                                  std::uint32_t replication = 0,
                                  const RunOptions& options = {},
                                  DecisionLog* log = nullptr);

struct SimEstimate {
    SystemSpec spec;
    std::string law;
    Protocol protocol;
    std::uint64_t seed_base = 0;
    std::size_t replications = 0;
    // Mean of the replication vectors, unfolded to customer-by-server
    // matrix form (zero off the compatibility edges).
    std::vector<std::vector<double>> r_hat;
    // One vector per replication, spec edge order, each summing to 1.
    std::vector<std::vector<double>> replication_vectors;
    // Per-replication ordering frequencies (lexicographic rank order, J!
    // entries each), kept when J <= kMaxOrderingVectorServers so the
    // serialized study stays a reasonable size. Feeds the same hypothesis
    // tests as the matching-rate vectors.
    std::vector<std::vector<double>> ordering_replication_vectors;
    std::map<std::uint64_t, std::uint64_t> span_histogram;
    // Frequency per server ordering in lexicographic order, labels like
    // "2-1-3"; empty when J > kMaxPermutationServers.
    std::vector<std::pair<std::string, double>> permutation_frequencies;

    // Matrix CSV: header "type,<server names>", one row per customer type.
    std::string r_hat_to_csv() const;
    std::string span_to_csv() const;          // "span,count"
    std::string permutations_to_csv() const;  // "ordering,frequency"
    // Everything above plus the replication vectors, for the test command.
    std::string to_json_text(int indent = 2) const;
};

// Runs `replications` independent replications (>= 2) and aggregates.
// Identical seed_base gives a bitwise-identical estimate; with jobs > 1
// replications run on worker threads and the merge is keyed by replication
// index, so the thread schedule cannot change the result.
SimEstimate run_study(const SystemSpec& spec, LawFamily law, const Protocol& protocol,
                      std::size_t replications, std::uint64_t seed_base,
                      const RunOptions& options = {}, int jobs = 1);

// Stationary distribution of server orderings for server-dependent rates
// under complete resource pooling: the ordering (S_1, ..., S_J) has weight
// proportional to the product over prefixes of
// 1 / (beta_prefix - alpha_of_unique_customers(prefix)). Labels and order
// match the simulated table. Throws when a prefix factor is not positive
// (pooling too weak for the closed form).
std::vector<std::pair<std::string, double>>
permutation_distribution_theoretical(const SystemSpec& spec);

} // namespace fluidfcfs::sim
