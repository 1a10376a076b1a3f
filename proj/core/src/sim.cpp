#include <fluidfcfs/sim.hpp>

#include <fluidfcfs/errors.hpp>
#include <fluidfcfs/lp.hpp>
#include <fluidfcfs/rng.hpp>
#include <fluidfcfs/subset.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <thread>
#include <vector>

namespace fluidfcfs::sim {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream purposes within a replication. Per-edge service streams follow,
// one per compatibility edge, so adding an edge never shifts the others.
constexpr std::uint32_t kPurposeInterarrival = 0;
constexpr std::uint32_t kPurposeType = 1;
constexpr std::uint32_t kPurposeEdgeBase = 2;

std::uint64_t factorial(int n) {
    std::uint64_t f = 1;
    for (int k = 2; k <= n; ++k) f *= static_cast<std::uint64_t>(k);
    return f;
}

// Lexicographic rank of a permutation of {0..n-1}.
std::uint64_t permutation_rank(const std::vector<int>& perm) {
    int n = static_cast<int>(perm.size());
    std::uint64_t rank = 0;
    for (int k = 0; k < n; ++k) {
        int smaller_later = 0;
        for (int j = k + 1; j < n; ++j)
            if (perm[j] < perm[k]) ++smaller_later;
        rank += static_cast<std::uint64_t>(smaller_later) * factorial(n - 1 - k);
    }
    return rank;
}

std::vector<int> permutation_unrank(std::uint64_t rank, int n) {
    std::vector<int> pool(n);
    for (int k = 0; k < n; ++k) pool[k] = k;
    std::vector<int> perm;
    perm.reserve(n);
    for (int k = n; k >= 1; --k) {
        std::uint64_t block = factorial(k - 1);
        std::uint64_t pick = rank / block;
        rank %= block;
        perm.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return perm;
}

std::string ordering_label(const std::vector<int>& perm) {
    std::string label;
    for (std::size_t k = 0; k < perm.size(); ++k) {
        if (k) label += '-';
        label += std::to_string(perm[k] + 1);
    }
    return label;
}

// The running system. One instance per replication; all randomness comes
// from counter-based streams keyed by (seed, replication, purpose).
class Engine {
public:
    Engine(const SystemSpec& spec, LawFamily family, std::uint64_t seed,
           std::uint32_t replication, const RunOptions& options, DecisionLog* log)
        : spec_(spec),
          options_(options),
          log_(log),
          J_(spec.server_count()),
          I_(spec.customer_count()),
          type_stream_(seed, replication, kPurposeType),
          arrival_stream_(seed, replication, kPurposeInterarrival),
          tally_orderings_(J_ <= kMaxPermutationServers) {
        edge_laws_.reserve(spec.edges().size());
        edge_streams_.reserve(spec.edges().size());
        for (int e = 0; e < static_cast<int>(spec.edges().size()); ++e) {
            edge_laws_.push_back(ServiceLaw{family, spec.edge_rate(e)});
            edge_streams_.emplace_back(seed, replication,
                                       kPurposeEdgeBase + static_cast<std::uint32_t>(e));
        }
        busy_.assign(J_, 0);
        position_.assign(J_, 0);
        serving_type_.assign(J_, -1);
        waiting_.assign(I_, {});
        edge_counts_.assign(spec.edges().size(), 0);
        if (tally_orderings_) ordering_counts_.assign(factorial(J_), 0);
        if (!options_.infinite_supply) lambda_ = spec.lambda();
    }

    void run(const Protocol& protocol) {
        initialize();
        std::uint64_t target = protocol.warmup_services + protocol.measured_services;
        while (completions_ < target) {
            // Completions win simultaneous-event ties; under continuous
            // service laws ties have probability zero anyway.
            double completion_time = heap_.empty() ? kInf : heap_.top().first;
            if (next_arrival_ < completion_time)
                process_arrival();
            else
                process_completion(protocol);
        }
    }

    ReplicationRecord record(const Protocol& protocol, std::uint64_t seed,
                             std::uint32_t replication) const {
        ReplicationRecord rec;
        rec.edge_counts = edge_counts_;
        rec.edge_fractions.resize(edge_counts_.size());
        for (std::size_t e = 0; e < edge_counts_.size(); ++e)
            rec.edge_fractions[e] = static_cast<double>(edge_counts_[e]) /
                                    static_cast<double>(protocol.measured_services);
        rec.span_histogram = span_histogram_;
        rec.permutation_counts = ordering_counts_;
        rec.idle_events = idle_events_;
        rec.seed = seed;
        rec.replication = replication;
        return rec;
    }

private:
    void initialize() {
        // Every server starts busy on one of the first J customers, index
        // equal to its own, with the type drawn uniformly from the server's
        // compatibility set.
        for (int j = 0; j < J_; ++j) {
            Mask compat = spec_.customers_of_server(j);
            std::vector<int> types = mask_to_indices(compat);
            double u = type_stream_.next_uniform();
            int pick = std::min(static_cast<int>(u * types.size()),
                                static_cast<int>(types.size()) - 1);
            int type = types[pick];
            if (log_) log_->arrival_types.push_back(type);
            start_service(j, static_cast<std::uint64_t>(j), type);
        }
        next_index_ = static_cast<std::uint64_t>(J_);
        if (!options_.infinite_supply) {
            arrivals_ = next_index_;
            schedule_arrival();
        }
    }

    void schedule_arrival() {
        double u = arrival_stream_.next_uniform();
        next_arrival_ = clock_ + (-std::log1p(-u) / lambda_);
    }

    int draw_type() {
        double u = type_stream_.next_uniform();
        double acc = 0.0;
        for (int i = 0; i < I_; ++i) {
            acc += spec_.alpha(i);
            if (u < acc) return i;
        }
        return I_ - 1;
    }

    void start_service(int j, std::uint64_t customer, int type) {
        int e = spec_.edge_index(j, type);
        double u = edge_streams_[static_cast<std::size_t>(e)].next_uniform();
        double duration = edge_laws_[static_cast<std::size_t>(e)].sample(u);
        busy_[j] = 1;
        position_[j] = customer;
        serving_type_[j] = type;
        heap_.emplace(clock_ + duration, j);
    }

    // Earliest skipped-or-waiting customer compatible with server j, if any.
    bool earliest_waiting(int j, std::uint64_t& customer, int& type) const {
        bool found = false;
        std::uint64_t best = 0;
        int best_type = -1;
        for_each_bit(spec_.customers_of_server(j), [&](int i) {
            if (!waiting_[i].empty() && (!found || waiting_[i].front() < best)) {
                found = true;
                best = waiting_[i].front();
                best_type = i;
            }
        });
        if (!found) return false;
        customer = best;
        type = best_type;
        return true;
    }

    void process_completion(const Protocol& protocol) {
        auto [time, j] = heap_.top();
        heap_.pop();
        clock_ = time;
        int completed_type = serving_type_[j];
        busy_[j] = 0;

        ++completions_;
        bool measured = completions_ > protocol.warmup_services;
        if (measured)
            ++edge_counts_[static_cast<std::size_t>(spec_.edge_index(j, completed_type))];

        DecisionLog::Event event;
        event.kind = DecisionLog::Event::COMPLETION;
        event.server = j;

        std::uint64_t customer;
        int type;
        if (earliest_waiting(j, customer, type)) {
            waiting_[type].pop_front();
            start_service(j, customer, type);
            event.assigned = true;
            event.assigned_server = j;
            event.assigned_customer = customer;
            event.assigned_type = type;
        } else if (options_.infinite_supply) {
            // Draw fresh arrivals until one is compatible; the skipped ones
            // queue up for other servers.
            for (;;) {
                int fresh = draw_type();
                if (log_) log_->arrival_types.push_back(fresh);
                std::uint64_t index = next_index_++;
                if (spec_.compatible(j, fresh)) {
                    start_service(j, index, fresh);
                    event.assigned = true;
                    event.assigned_server = j;
                    event.assigned_customer = index;
                    event.assigned_type = fresh;
                    break;
                }
                waiting_[fresh].push_back(index);
            }
        } else {
            idle_.push_back(j);
            if (measured) ++idle_events_;
        }
        if (log_) log_->events.push_back(event);
        if (measured) sample_state();
    }

    void process_arrival() {
        clock_ = next_arrival_;
        int type = draw_type();
        std::uint64_t index = next_index_++;
        arrivals_ = next_index_;
        if (log_) log_->arrival_types.push_back(type);

        DecisionLog::Event event;
        event.kind = DecisionLog::Event::ARRIVAL;
        event.customer = index;
        event.type = type;

        auto it = std::find_if(idle_.begin(), idle_.end(),
                               [&](int s) { return spec_.compatible(s, type); });
        if (it != idle_.end()) {
            int server = *it;
            idle_.erase(it);
            start_service(server, index, type);
            event.assigned = true;
            event.assigned_server = server;
            event.assigned_customer = index;
            event.assigned_type = type;
        } else {
            waiting_[type].push_back(index);
        }
        if (log_) log_->events.push_back(event);
        schedule_arrival();
    }

    // Span and ordering statistics, sampled after the completion epoch has
    // been fully processed. Idle servers sit at the arrival frontier in
    // idleness order (always busy in infinite-supply mode).
    void sample_state() {
        std::uint64_t frontier = arrivals_;
        static thread_local std::vector<std::pair<std::uint64_t, int>> order;
        order.clear();
        for (int j = 0; j < J_; ++j)
            if (busy_[j]) order.emplace_back(position_[j], j);
        for (int s : idle_) order.emplace_back(frontier++, s);
        std::sort(order.begin(), order.end());

        std::uint64_t span = order.back().first - order.front().first;
        ++span_histogram_[span];

        if (tally_orderings_) {
            static thread_local std::vector<int> perm;
            perm.clear();
            for (const auto& [pos, server] : order) perm.push_back(server);
            ++ordering_counts_[permutation_rank(perm)];
        }
    }

    const SystemSpec& spec_;
    const RunOptions& options_;
    DecisionLog* log_;
    int J_;
    int I_;
    rng::Stream type_stream_;
    rng::Stream arrival_stream_;
    std::vector<rng::Stream> edge_streams_;
    std::vector<ServiceLaw> edge_laws_;

    std::vector<char> busy_;
    std::vector<std::uint64_t> position_;
    std::vector<int> serving_type_;
    std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                        std::greater<>> heap_;
    std::vector<std::deque<std::uint64_t>> waiting_;
    std::deque<int> idle_;
    std::uint64_t next_index_ = 0;
    std::uint64_t arrivals_ = 0;
    double next_arrival_ = kInf;
    double lambda_ = 0.0;
    double clock_ = 0.0;
    std::uint64_t completions_ = 0;

    bool tally_orderings_;
    std::vector<std::uint64_t> edge_counts_;
    std::map<std::uint64_t, std::uint64_t> span_histogram_;
    std::vector<std::uint64_t> ordering_counts_;
    std::uint64_t idle_events_ = 0;
};

std::string csv_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

} // namespace

LawFamily parse_law(const std::string& name) {
    if (name == "exponential") return LawFamily::EXPONENTIAL;
    if (name == "pareto") return LawFamily::PARETO;
    if (name == "uniform-wide") return LawFamily::UNIFORM_WIDE;
    if (name == "uniform-narrow") return LawFamily::UNIFORM_NARROW;
    throw ValidationError("unknown service law '" + name +
                          "' (expected exponential, pareto, uniform-wide, or uniform-narrow)");
}

std::string to_string(LawFamily family) {
    switch (family) {
        case LawFamily::EXPONENTIAL: return "exponential";
        case LawFamily::PARETO: return "pareto";
        case LawFamily::UNIFORM_WIDE: return "uniform-wide";
        case LawFamily::UNIFORM_NARROW: return "uniform-narrow";
    }
    throw InternalError("unhandled service law");
}

double ServiceLaw::sample(double u) const {
    switch (family) {
        case LawFamily::EXPONENTIAL:
            return -std::log1p(-u) / rate;
        case LawFamily::PARETO: {
            double scale = rate / 2.0;
            return (std::pow(1.0 - u, -1.0 / 3.0) - 1.0) / scale;
        }
        case LawFamily::UNIFORM_WIDE:
            return 2.0 * u / rate;
        case LawFamily::UNIFORM_NARROW:
            return (0.9 + 0.2 * u) / rate;
    }
    throw InternalError("unhandled service law");
}

ReplicationRecord run_replication(const SystemSpec& spec, LawFamily law,
                                  const Protocol& protocol, std::uint64_t seed,
                                  std::uint32_t replication, const RunOptions& options,
                                  DecisionLog* log) {
    if (protocol.measured_services == 0)
        throw ValidationError("a replication needs at least one measured service");
    if (!options.infinite_supply) {
        if (!spec.has_lambda())
            throw ValidationError("finite-supply simulation needs an arrival rate in the spec");
        if (!options.allow_any_regime) {
            double mu_star = lp::solve_static_plan(spec).mu_star;
            if (spec.lambda() <= mu_star) {
                std::ostringstream msg;
                msg << "arrival rate " << spec.lambda() << " does not exceed the maximal "
                    << "throughput " << mu_star
                    << "; matching rates are regime-dependent below saturation "
                    << "(set the any-regime option to run anyway)";
                throw ValidationError(msg.str());
            }
        }
    }
    Engine engine(spec, law, seed, replication, options, log);
    engine.run(protocol);
    return engine.record(protocol, seed, replication);
}

SimEstimate run_study(const SystemSpec& spec, LawFamily law, const Protocol& protocol,
                      std::size_t replications, std::uint64_t seed_base,
                      const RunOptions& options, int jobs) {
    if (replications < 2)
        throw ValidationError("a study needs at least two replications for covariance");
    if (jobs < 1) jobs = 1;
    jobs = std::min<int>(jobs, static_cast<int>(replications));

    std::vector<ReplicationRecord> records(replications);
    std::vector<std::exception_ptr> failures(replications);
    auto worker = [&](int worker_id) {
        for (std::size_t r = static_cast<std::size_t>(worker_id); r < replications;
             r += static_cast<std::size_t>(jobs)) {
            try {
                records[r] = run_replication(spec, law, protocol, seed_base,
                                             static_cast<std::uint32_t>(r), options);
            } catch (...) {
                failures[r] = std::current_exception();
            }
        }
    };
    if (jobs == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& failure : failures)
        if (failure) std::rethrow_exception(failure);

    SimEstimate estimate{spec};
    estimate.law = to_string(law);
    estimate.protocol = protocol;
    estimate.seed_base = seed_base;
    estimate.replications = replications;

    std::size_t edge_count = spec.edges().size();
    std::vector<double> mean_fractions(edge_count, 0.0);
    for (const ReplicationRecord& rec : records) {
        estimate.replication_vectors.push_back(rec.edge_fractions);
        for (std::size_t e = 0; e < edge_count; ++e)
            mean_fractions[e] += rec.edge_fractions[e];
        for (const auto& [span, count] : rec.span_histogram)
            estimate.span_histogram[span] += count;
    }
    for (double& f : mean_fractions) f /= static_cast<double>(replications);

    estimate.r_hat.assign(static_cast<std::size_t>(spec.customer_count()),
                          std::vector<double>(static_cast<std::size_t>(spec.server_count()), 0.0));
    for (std::size_t e = 0; e < edge_count; ++e) {
        const Edge& edge = spec.edge(static_cast<int>(e));
        estimate.r_hat[static_cast<std::size_t>(edge.customer)]
                      [static_cast<std::size_t>(edge.server)] = mean_fractions[e];
    }

    if (spec.server_count() <= kMaxPermutationServers) {
        std::uint64_t table = factorial(spec.server_count());
        std::vector<std::uint64_t> totals(table, 0);
        for (const ReplicationRecord& rec : records)
            for (std::uint64_t rank = 0; rank < table; ++rank)
                totals[rank] += rec.permutation_counts[rank];
        if (spec.server_count() <= kMaxOrderingVectorServers) {
            for (const ReplicationRecord& rec : records) {
                std::vector<double> freqs(table);
                for (std::uint64_t rank = 0; rank < table; ++rank)
                    freqs[rank] = static_cast<double>(rec.permutation_counts[rank]) /
                                  static_cast<double>(protocol.measured_services);
                estimate.ordering_replication_vectors.push_back(std::move(freqs));
            }
        }
        double samples = static_cast<double>(replications) *
                         static_cast<double>(protocol.measured_services);
        for (std::uint64_t rank = 0; rank < table; ++rank) {
            std::vector<int> perm = permutation_unrank(rank, spec.server_count());
            estimate.permutation_frequencies.emplace_back(
                ordering_label(perm), static_cast<double>(totals[rank]) / samples);
        }
    }
    return estimate;
}

std::vector<std::pair<std::string, double>>
permutation_distribution_theoretical(const SystemSpec& spec) {
    if (spec.rates().mode != RateMode::SD)
        throw ModeError("the ordering distribution closed form needs server-dependent rates");
    int J = spec.server_count();
    if (J > kMaxPermutationServers)
        throw ValidationError("ordering table would need " + std::to_string(J) +
                              "! rows; at most " + std::to_string(kMaxPermutationServers) +
                              " servers are supported");

    std::vector<int> perm(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) perm[static_cast<std::size_t>(j)] = j;

    std::vector<std::pair<std::string, double>> table;
    double total = 0.0;
    do {
        double weight = 1.0;
        Mask prefix = 0;
        for (int l = 0; l + 1 < J; ++l) {
            prefix |= bit(perm[static_cast<std::size_t>(l)]);
            double factor = spec.beta(prefix) -
                            spec.alpha_sum(spec.unique_customers_of(prefix));
            if (factor <= 0.0) {
                std::ostringstream msg;
                msg << "ordering weight factor is not positive for server prefix {";
                bool first = true;
                for_each_bit(prefix, [&](int j) {
                    if (!first) msg << ", ";
                    msg << spec.server_name(j);
                    first = false;
                });
                msg << "}; the closed form needs strictly pooled capacity";
                throw ValidationError(msg.str());
            }
            weight /= factor;
        }
        table.emplace_back(ordering_label(perm), weight);
        total += weight;
    } while (std::next_permutation(perm.begin(), perm.end()));

    for (auto& [label, p] : table) p /= total;
    return table;
}

std::string SimEstimate::r_hat_to_csv() const {
    std::string out = "type";
    for (int j = 0; j < spec.server_count(); ++j) out += "," + spec.server_name(j);
    out += "\n";
    for (int i = 0; i < spec.customer_count(); ++i) {
        out += spec.customer_name(i);
        for (int j = 0; j < spec.server_count(); ++j)
            out += "," + csv_number(r_hat[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(j)]);
        out += "\n";
    }
    return out;
}

std::string SimEstimate::span_to_csv() const {
    std::string out = "span,count\n";
    for (const auto& [span, count] : span_histogram)
        out += std::to_string(span) + "," + std::to_string(count) + "\n";
    return out;
}

std::string SimEstimate::permutations_to_csv() const {
    std::string out = "ordering,frequency\n";
    for (const auto& [label, freq] : permutation_frequencies)
        out += label + "," + csv_number(freq) + "\n";
    return out;
}

std::string SimEstimate::to_json_text(int indent) const {
    json j;
    j["law"] = law;
    j["protocol"] = {{"warmup_services", protocol.warmup_services},
                     {"measured_services", protocol.measured_services}};
    j["replications"] = replications;
    j["seed_base"] = seed_base;
    json order = json::array();
    for (const Edge& e : spec.edges())
        order.push_back({spec.server_name(e.server), spec.customer_name(e.customer)});
    j["edge_order"] = order;
    j["r_hat"] = r_hat;
    j["replication_vectors"] = replication_vectors;
    j["ordering_replication_vectors"] = ordering_replication_vectors;
    json spans = json::array();
    for (const auto& [span, count] : span_histogram) spans.push_back({span, count});
    j["span_histogram"] = spans;
    json perms = json::array();
    for (const auto& [label, freq] : permutation_frequencies)
        perms.push_back({label, freq});
    j["permutation_frequencies"] = perms;
    return j.dump(indent) + "\n";
}

} // namespace fluidfcfs::sim
