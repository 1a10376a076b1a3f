#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include <fluidfcfs/errors.hpp>
#include <fluidfcfs/rng.hpp>
#include <fluidfcfs/sim.hpp>
#include <fluidfcfs/system.hpp>

#include "support/random_specs.hpp"
#include "support/systems.hpp"

using namespace fluidfcfs;
using namespace testsupport;
using sim::DecisionLog;
using sim::LawFamily;
using sim::Protocol;
using sim::ReplicationRecord;
using sim::RunOptions;

namespace {

// r for system 1, rows by customer type, columns by server.
const std::vector<std::vector<double>> kSystem1Rates = {
    {0.0, 0.1, 0.1}, {0.3, 0.0, 0.3}, {0.1, 0.1, 0.0}};

SystemSpec make_single_pair() {
    RateModel rates;
    rates.mode = RateMode::SD;
    rates.per_server = {1.0};
    return SystemSpec::make({"s1"}, {"c1"}, {1.0}, {{0, 0}}, rates);
}

SystemSpec make_complete_two(std::optional<double> lambda = std::nullopt) {
    RateModel rates;
    rates.mode = RateMode::SD;
    rates.per_server = {1.0, 1.0};
    return SystemSpec::make({"s1", "s2"}, {"c1", "c2"}, {0.5, 0.5},
                            {{0, 0}, {0, 1}, {1, 0}, {1, 1}}, rates, lambda);
}

// Independent replay of the FCFS/ALIS rules from the recorded arrival-type
// sequence: a freed server scans all customers in arrival order and takes
// the first unserved compatible one; an arriving customer scans the idle
// servers in idleness order and takes the first compatible one. Checks
// every assignment the engine made.
void replay_and_check(const SystemSpec& spec, const DecisionLog& log,
                      bool infinite_supply) {
    int J = spec.server_count();
    std::vector<char> consumed(log.arrival_types.size(), 0);
    std::vector<char> busy(static_cast<std::size_t>(J), 1);
    std::vector<std::uint64_t> serving(static_cast<std::size_t>(J), 0);
    std::deque<int> idle;
    std::size_t arrived = static_cast<std::size_t>(J);

    for (int j = 0; j < J; ++j) {
        REQUIRE(spec.compatible(j, log.arrival_types[static_cast<std::size_t>(j)]));
        consumed[static_cast<std::size_t>(j)] = 1;
        serving[static_cast<std::size_t>(j)] = static_cast<std::uint64_t>(j);
    }

    for (const DecisionLog::Event& ev : log.events) {
        if (ev.kind == DecisionLog::Event::COMPLETION) {
            REQUIRE(busy[static_cast<std::size_t>(ev.server)]);
            busy[static_cast<std::size_t>(ev.server)] = 0;
            std::size_t limit = infinite_supply ? log.arrival_types.size() : arrived;
            std::size_t pick = limit;
            for (std::size_t idx = 0; idx < limit; ++idx) {
                if (consumed[idx]) continue;
                if (spec.compatible(ev.server, log.arrival_types[idx])) {
                    pick = idx;
                    break;
                }
            }
            if (pick == limit) {
                REQUIRE(!infinite_supply);
                REQUIRE(!ev.assigned);
                idle.push_back(ev.server);
            } else {
                REQUIRE(ev.assigned);
                REQUIRE(ev.assigned_server == ev.server);
                REQUIRE(ev.assigned_customer == pick);
                REQUIRE(ev.assigned_type == log.arrival_types[pick]);
                consumed[pick] = 1;
                busy[static_cast<std::size_t>(ev.server)] = 1;
                serving[static_cast<std::size_t>(ev.server)] = pick;
            }
        } else {
            REQUIRE(ev.customer == arrived);
            REQUIRE(ev.type == log.arrival_types[static_cast<std::size_t>(ev.customer)]);
            ++arrived;
            auto it = std::find_if(idle.begin(), idle.end(), [&](int s) {
                return spec.compatible(s, ev.type);
            });
            if (it == idle.end()) {
                REQUIRE(!ev.assigned);
            } else {
                REQUIRE(ev.assigned);
                REQUIRE(ev.assigned_server == *it);
                REQUIRE(ev.assigned_customer == ev.customer);
                REQUIRE(ev.assigned_type == ev.type);
                consumed[static_cast<std::size_t>(ev.customer)] = 1;
                busy[static_cast<std::size_t>(*it)] = 1;
                serving[static_cast<std::size_t>(*it)] = ev.customer;
                idle.erase(it);
            }
        }
        std::size_t busy_count = 0;
        for (char b : busy) busy_count += static_cast<std::size_t>(b);
        REQUIRE(busy_count + idle.size() == static_cast<std::size_t>(J));
    }
}

double vector_sum(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

} // namespace

TEST_CASE("single server and type routes every service on the one edge") {
    SystemSpec spec = make_single_pair();
    ReplicationRecord rec =
        sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{50, 500}, 7);
    REQUIRE(rec.edge_fractions.size() == 1);
    CHECK(rec.edge_fractions[0] == 1.0);
    CHECK(rec.edge_counts[0] == 500);
    CHECK(rec.idle_events == 0);
    // Only one ordering exists for a single server.
    REQUIRE(rec.permutation_counts.size() == 1);
    CHECK(rec.permutation_counts[0] == 500);
}

TEST_CASE("symmetric complete pair splits services evenly") {
    SystemSpec spec = make_complete_two();
    sim::SimEstimate est = sim::run_study(spec, LawFamily::EXPONENTIAL,
                                          Protocol{10000, 100000}, 4, 11);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(std::abs(est.r_hat[i][j] - 0.25) < 0.01);
}

TEST_CASE("system 1 single replication reproduces the matching rates") {
    SystemSpec spec = make_system1();
    ReplicationRecord rec =
        sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{100000, 1000000}, 20260301);

    CHECK(std::abs(vector_sum(rec.edge_fractions) - 1.0) < 1e-12);
    for (double f : rec.edge_fractions) CHECK(f > 0.0);
    CHECK(rec.idle_events == 0);

    for (int e = 0; e < static_cast<int>(spec.edges().size()); ++e) {
        const Edge& edge = spec.edge(e);
        double want = kSystem1Rates[edge.customer][edge.server];
        CHECK(std::abs(rec.edge_fractions[static_cast<std::size_t>(e)] - want) < 0.01);
    }

    // Span counts one sample per measured service and never drops below
    // J - 1 (positions are distinct).
    std::uint64_t total = 0;
    for (const auto& [span, count] : rec.span_histogram) {
        CHECK(span >= 2);
        total += count;
    }
    CHECK(total == 1000000);
}

TEST_CASE("study aggregates have edge support and unit mass") {
    SystemSpec spec = make_system1();
    sim::SimEstimate est = sim::run_study(spec, LawFamily::PARETO,
                                          Protocol{2000, 20000}, 5, 99);
    REQUIRE(est.replication_vectors.size() == 5);
    for (const std::vector<double>& v : est.replication_vectors) {
        REQUIRE(v.size() == spec.edges().size());
        CHECK(std::abs(vector_sum(v) - 1.0) < 1e-12);
        for (double f : v) CHECK(f > 0.0);
    }
    for (int i = 0; i < spec.customer_count(); ++i)
        for (int j = 0; j < spec.server_count(); ++j) {
            if (spec.compatible(j, i))
                CHECK(est.r_hat[i][j] > 0.0);
            else
                CHECK(est.r_hat[i][j] == 0.0);
        }
}

TEST_CASE("assignment decisions match a brute-force replay") {
    SUBCASE("infinite supply on the benchmark systems") {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            DecisionLog log;
            sim::run_replication(make_system1(), LawFamily::PARETO, Protocol{100, 400},
                                 seed, 0, RunOptions{}, &log);
            replay_and_check(make_system1(), log, true);
        }
        DecisionLog log2;
        sim::run_replication(make_system2(), LawFamily::UNIFORM_WIDE, Protocol{100, 400},
                             5, 0, RunOptions{}, &log2);
        replay_and_check(make_system2(), log2, true);
    }

    SUBCASE("infinite supply on random specs") {
        std::mt19937_64 rng(404);
        for (int trial = 0; trial < 20; ++trial) {
            SystemSpec spec = random_sd_spec(rng, 3, 4);
            DecisionLog log;
            sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{50, 200},
                                 trial, 0, RunOptions{}, &log);
            replay_and_check(spec, log, true);
        }
    }

    SUBCASE("overloaded finite arrivals") {
        SystemSpec spec = make_complete_two(3.0);
        RunOptions options;
        options.infinite_supply = false;
        DecisionLog log;
        sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{100, 400},
                             17, 0, options, &log);
        replay_and_check(spec, log, false);
    }

    SUBCASE("underloaded finite arrivals exercise idle servers") {
        SystemSpec spec = make_complete_two(0.8);
        RunOptions options;
        options.infinite_supply = false;
        options.allow_any_regime = true;
        DecisionLog log;
        ReplicationRecord rec = sim::run_replication(
            spec, LawFamily::EXPONENTIAL, Protocol{100, 400}, 23, 0, options, &log);
        replay_and_check(spec, log, false);
        CHECK(rec.idle_events > 0);
        bool saw_arrival_assignment = false;
        for (const DecisionLog::Event& ev : log.events)
            if (ev.kind == DecisionLog::Event::ARRIVAL && ev.assigned)
                saw_arrival_assignment = true;
        CHECK(saw_arrival_assignment);
    }
}

TEST_CASE("finite arrivals below the throughput bound are refused by default") {
    SystemSpec spec = make_complete_two(0.8);
    RunOptions options;
    options.infinite_supply = false;
    CHECK_THROWS_WITH_AS(
        sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{10, 10}, 1, 0, options),
        doctest::Contains("throughput"), ValidationError);

    SystemSpec no_lambda = make_complete_two();
    CHECK_THROWS_AS(
        sim::run_replication(no_lambda, LawFamily::EXPONENTIAL, Protocol{10, 10}, 1, 0, options),
        ValidationError);

    options.allow_any_regime = true;
    ReplicationRecord rec =
        sim::run_replication(spec, LawFamily::EXPONENTIAL, Protocol{10, 100}, 1, 0, options);
    CHECK(std::abs(vector_sum(rec.edge_fractions) - 1.0) < 1e-12);
}

TEST_CASE("service law samplers hit their common mean") {
    const double rate = 0.4;
    const std::size_t n = 1000000;
    for (LawFamily family : {LawFamily::EXPONENTIAL, LawFamily::PARETO,
                             LawFamily::UNIFORM_WIDE, LawFamily::UNIFORM_NARROW}) {
        sim::ServiceLaw law{family, rate};
        rng::Stream stream(8675309, static_cast<std::uint32_t>(family), 0);
        double sum = 0.0;
        double min_seen = 1e300;
        for (std::size_t k = 0; k < n; ++k) {
            double x = law.sample(stream.next_uniform());
            REQUIRE(x >= 0.0);
            sum += x;
            min_seen = std::min(min_seen, x);
        }
        double mean = sum / static_cast<double>(n);
        INFO("family ", sim::to_string(family));
        CHECK(std::abs(mean - 1.0 / rate) < 0.01 / rate);
        if (family == LawFamily::UNIFORM_NARROW) CHECK(min_seen >= 0.9 / rate);
    }
}

TEST_CASE("law names round-trip and reject unknowns") {
    for (const char* name : {"exponential", "pareto", "uniform-wide", "uniform-narrow"})
        CHECK(sim::to_string(sim::parse_law(name)) == name);
    CHECK_THROWS_AS(sim::parse_law("lognormal"), ValidationError);
}

TEST_CASE("studies are reproducible and insensitive to the thread count") {
    SystemSpec spec = make_system1();
    Protocol protocol{1000, 5000};
    sim::SimEstimate a = sim::run_study(spec, LawFamily::EXPONENTIAL, protocol, 4, 42);
    sim::SimEstimate b = sim::run_study(spec, LawFamily::EXPONENTIAL, protocol, 4, 42);
    sim::SimEstimate c =
        sim::run_study(spec, LawFamily::EXPONENTIAL, protocol, 4, 42, RunOptions{}, 3);
    CHECK(a.replication_vectors == b.replication_vectors);
    CHECK(a.replication_vectors == c.replication_vectors);
    CHECK(a.r_hat == b.r_hat);
    CHECK(a.r_hat == c.r_hat);
    CHECK(a.span_histogram == c.span_histogram);
    CHECK(a.permutation_frequencies == c.permutation_frequencies);

    sim::SimEstimate d = sim::run_study(spec, LawFamily::EXPONENTIAL, protocol, 4, 43);
    CHECK(a.replication_vectors != d.replication_vectors);

    CHECK_THROWS_AS(sim::run_study(spec, LawFamily::EXPONENTIAL, protocol, 1, 42),
                    ValidationError);
}

TEST_CASE("server ordering frequencies match the closed form within noise") {
    SystemSpec spec = make_system1();
    auto theory = sim::permutation_distribution_theoretical(spec);
    const std::size_t reps = 10;
    const Protocol protocol{20000, 100000};

    std::vector<std::vector<double>> freqs(theory.size());
    for (std::size_t r = 0; r < reps; ++r) {
        ReplicationRecord rec = sim::run_replication(
            spec, LawFamily::EXPONENTIAL, protocol, 314159, static_cast<std::uint32_t>(r));
        REQUIRE(rec.permutation_counts.size() == theory.size());
        for (std::size_t k = 0; k < theory.size(); ++k)
            freqs[k].push_back(static_cast<double>(rec.permutation_counts[k]) /
                               static_cast<double>(protocol.measured_services));
    }

    // Replications are independent, so the spread across them is an honest
    // standard error even though samples within one run are correlated.
    for (std::size_t k = 0; k < theory.size(); ++k) {
        double mean = vector_sum(freqs[k]) / static_cast<double>(reps);
        double ss = 0.0;
        for (double f : freqs[k]) ss += (f - mean) * (f - mean);
        double se = std::sqrt(ss / static_cast<double>(reps - 1)) /
                    std::sqrt(static_cast<double>(reps));
        INFO("ordering ", theory[k].first, " mean ", mean, " theory ", theory[k].second,
             " se ", se);
        CHECK(std::abs(mean - theory[k].second) < 3.0 * se);
    }
}

TEST_CASE("ordering distribution closed form") {
    SUBCASE("benchmark system 1") {
        auto table = sim::permutation_distribution_theoretical(make_system1());
        REQUIRE(table.size() == 6);
        const std::vector<std::pair<std::string, double>> want = {
            {"1-2-3", 0.1}, {"1-3-2", 0.2}, {"2-1-3", 0.2},
            {"2-3-1", 0.2}, {"3-1-2", 0.2}, {"3-2-1", 0.1}};
        for (std::size_t k = 0; k < want.size(); ++k) {
            CHECK(table[k].first == want[k].first);
            CHECK(std::abs(table[k].second - want[k].second) < 1e-12);
        }
        double total = 0.0;
        for (const auto& [label, p] : table) total += p;
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    SUBCASE("single server is deterministic") {
        auto table = sim::permutation_distribution_theoretical(make_single_pair());
        REQUIRE(table.size() == 1);
        CHECK(table[0].first == "1");
        CHECK(table[0].second == 1.0);
    }

    SUBCASE("weak pooling is rejected") {
        // c1 feeds only s1 and overwhelms it: the {s1} prefix factor is
        // 0.5 - 0.9 < 0.
        RateModel rates;
        rates.mode = RateMode::SD;
        rates.per_server = {0.5, 0.5};
        SystemSpec weak = SystemSpec::make({"s1", "s2"}, {"c1", "c2"}, {0.9, 0.1},
                                           {{0, 0}, {0, 1}, {1, 1}}, rates);
        CHECK_THROWS_WITH_AS(sim::permutation_distribution_theoretical(weak),
                             doctest::Contains("not positive"), ValidationError);
    }

    SUBCASE("rate mode must be server-dependent") {
        std::mt19937_64 rng(7);
        SystemSpec cd = random_cd_spec(rng, 3, 3);
        CHECK_THROWS_AS(sim::permutation_distribution_theoretical(cd), ModeError);
    }
}

TEST_CASE("estimate serialization carries the study artifacts") {
    SystemSpec spec = make_system1();
    sim::SimEstimate est =
        sim::run_study(spec, LawFamily::EXPONENTIAL, Protocol{500, 2000}, 3, 5);

    std::string matrix = est.r_hat_to_csv();
    CHECK(matrix.rfind("type,s1,s2,s3\n", 0) == 0);
    CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 4);

    std::string spans = est.span_to_csv();
    CHECK(spans.rfind("span,count\n", 0) == 0);

    std::string perms = est.permutations_to_csv();
    CHECK(perms.rfind("ordering,frequency\n", 0) == 0);
    CHECK(perms.find("1-2-3,") != std::string::npos);
    CHECK(std::count(perms.begin(), perms.end(), '\n') == 7);

    nlohmann::json j = nlohmann::json::parse(est.to_json_text());
    CHECK(j["law"] == "exponential");
    CHECK(j["replications"] == 3);
    CHECK(j["protocol"]["warmup_services"] == 500);
    CHECK(j["edge_order"].size() == spec.edges().size());
    CHECK(j["replication_vectors"].size() == 3);
    CHECK(j["r_hat"].size() == 3);
    CHECK(j["permutation_frequencies"].size() == 6);

    REQUIRE(est.ordering_replication_vectors.size() == 3);
    for (const std::vector<double>& v : est.ordering_replication_vectors) {
        REQUIRE(v.size() == 6);
        CHECK(std::abs(vector_sum(v) - 1.0) < 1e-12);
    }
}
