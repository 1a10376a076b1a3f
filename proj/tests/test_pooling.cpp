#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <fluidfcfs/pooling.hpp>
#include <fluidfcfs/system.hpp>

#include "support/random_specs.hpp"
#include "support/systems.hpp"

using namespace fluidfcfs;
namespace pl = fluidfcfs::pooling;
using doctest::Contains;

namespace {

SystemSpec disjoint_pair(std::vector<double> alpha, std::vector<double> mu) {
    RateModel rates;
    rates.mode = RateMode::SD;
    rates.per_server = std::move(mu);
    return SystemSpec::make({"s1", "s2"}, {"c1", "c2"}, std::move(alpha),
                            {{0, 0}, {1, 1}}, rates);
}

SystemSpec cd_pair(std::vector<double> alpha, std::vector<double> rate) {
    RateModel rates;
    rates.mode = RateMode::CD;
    rates.per_customer = std::move(rate);
    return SystemSpec::make({"s1", "s2"}, {"c1", "c2"}, std::move(alpha),
                            {{0, 0}, {1, 1}}, rates);
}

SystemSpec small_tree(std::vector<double> alpha) {
    RateModel rates;
    rates.mode = RateMode::GENERAL;
    rates.per_edge = {1.0, 1.0, 1.0};
    return SystemSpec::make({"s1", "s2"}, {"c1", "c2"}, std::move(alpha),
                            {{0, 0}, {0, 1}, {1, 1}}, rates);
}

bool has_witness(const pl::PoolingVerdict& v, std::vector<std::string> names) {
    return std::find(v.witnesses.begin(), v.witnesses.end(), names) !=
           v.witnesses.end();
}

// Independent verdict oracle: classifies each of the three equivalent
// pooling conditions separately, building adjacency straight from the edge
// list. lhs > rhs strictly everywhere is COMPLETE; an equality (under the
// library's tolerance contract) somewhere downgrades to WEAK; a strict
// reversal anywhere is VIOLATED.
struct ThreeForms {
    int J, I;
    std::vector<Mask> server_adj;   // per server: compatible types
    std::vector<Mask> customer_adj; // per type: compatible servers
    std::vector<double> alpha, mu;
    double mu_all = 0.0;

    explicit ThreeForms(const SystemSpec& spec)
        : J(spec.server_count()), I(spec.customer_count()),
          server_adj(J, 0), customer_adj(I, 0),
          alpha(spec.alphas()), mu(spec.rates().per_server) {
        for (const Edge& e : spec.edges()) {
            server_adj[e.server] |= bit(e.customer);
            customer_adj[e.customer] |= bit(e.server);
        }
        for (double m : mu) mu_all += m;
    }

    double alpha_of(Mask C) const {
        double s = 0.0;
        for_each_bit(C, [&](int i) { s += alpha[i]; });
        return s;
    }
    double beta_of(Mask S) const {
        double s = 0.0;
        for_each_bit(S, [&](int j) { s += mu[j]; });
        return s / mu_all;
    }
    Mask reach_customers(Mask S) const {
        Mask out = 0;
        for_each_bit(S, [&](int j) { out |= server_adj[j]; });
        return out;
    }
    Mask reach_servers(Mask C) const {
        Mask out = 0;
        for_each_bit(C, [&](int i) { out |= customer_adj[i]; });
        return out;
    }

    // Folds one comparison into a running verdict.
    static void fold(pl::PoolingKind& k, double lhs, double rhs) {
        if (pl::nearly_equal(lhs, rhs)) {
            if (k == pl::PoolingKind::COMPLETE) k = pl::PoolingKind::WEAK;
        } else if (lhs < rhs) {
            k = pl::PoolingKind::VIOLATED;
        }
    }

    // Form 1: over customer subsets, beta of the reachable servers beats
    // the subset's arrival share.
    pl::PoolingKind form_customer_side() const {
        pl::PoolingKind k = pl::PoolingKind::COMPLETE;
        for_each_proper_submask(full_mask(I), [&](Mask C) {
            fold(k, beta_of(reach_servers(C)), alpha_of(C));
        });
        return k;
    }
    // Form 2: over server subsets, the reachable arrival share beats beta.
    pl::PoolingKind form_reachable_share() const {
        pl::PoolingKind k = pl::PoolingKind::COMPLETE;
        for_each_proper_submask(full_mask(J), [&](Mask S) {
            fold(k, alpha_of(reach_customers(S)), beta_of(S));
        });
        return k;
    }
    // Form 3: over server subsets, beta beats the share of types reachable
    // from nowhere else.
    pl::PoolingKind form_unique_share() const {
        pl::PoolingKind k = pl::PoolingKind::COMPLETE;
        for_each_proper_submask(full_mask(J), [&](Mask S) {
            Mask unique = full_mask(I) & ~reach_customers(full_mask(J) & ~S);
            fold(k, beta_of(S), alpha_of(unique));
        });
        return k;
    }
};

// Block restricted to its own servers/types with renormalized arrival
// fractions; rates carry over unchanged.
SystemSpec restrict_to_block(const SystemSpec& spec, const pl::DecompositionBlock& b) {
    std::vector<std::string> servers, customers;
    std::vector<double> alpha;
    std::vector<int> snew(spec.server_count(), -1), cnew(spec.customer_count(), -1);
    RateModel rates;
    rates.mode = RateMode::SD;
    for_each_bit(b.servers, [&](int j) {
        snew[j] = static_cast<int>(servers.size());
        servers.push_back(spec.server_name(j));
        rates.per_server.push_back(spec.rates().per_server[j]);
    });
    double total = spec.alpha_sum(b.customers);
    for_each_bit(b.customers, [&](int i) {
        cnew[i] = static_cast<int>(customers.size());
        customers.push_back(spec.customer_name(i));
        alpha.push_back(spec.alpha(i) / total);
    });
    std::vector<Edge> edges;
    for (const Edge& e : spec.edges())
        if (snew[e.server] >= 0 && cnew[e.customer] >= 0)
            edges.push_back({snew[e.server], cnew[e.customer]});
    return SystemSpec::make(std::move(servers), std::move(customers),
                            std::move(alpha), std::move(edges), rates);
}

} // namespace

TEST_CASE("server-side pooling verdicts on the benchmark systems") {
    CHECK(pl::check_crp_sd(testsupport::make_system1()).kind ==
          pl::PoolingKind::COMPLETE);
    CHECK(pl::check_crp_sd(testsupport::make_system2()).kind ==
          pl::PoolingKind::COMPLETE);
    CHECK(pl::check_crp_sd(testsupport::make_system3()).kind ==
          pl::PoolingKind::COMPLETE);
    CHECK(pl::check_crp_sd(testsupport::make_system1()).witnesses.empty());
}

TEST_CASE("server-side pooling on split and boundary systems") {
    pl::PoolingVerdict violated = pl::check_crp_sd(disjoint_pair({0.8, 0.2}, {0.4, 0.6}));
    CHECK(violated.kind == pl::PoolingKind::VIOLATED);
    REQUIRE(violated.witnesses.size() == 1);
    CHECK(violated.witnesses[0] == std::vector<std::string>{"s1"});

    pl::PoolingVerdict weak = pl::check_crp_sd(disjoint_pair({0.5, 0.5}, {0.5, 0.5}));
    CHECK(weak.kind == pl::PoolingKind::WEAK);
    CHECK(has_witness(weak, {"s1"}));
    CHECK(has_witness(weak, {"s2"}));

    CHECK_THROWS_AS(pl::check_crp_sd(cd_pair({0.5, 0.5}, {1.0, 1.0})), ModeError);
}

TEST_CASE("customer-side pooling verdicts") {
    RateModel cd;
    cd.mode = RateMode::CD;
    cd.per_customer = {1.0, 1.0, 1.0};
    SystemSpec sys1cd = SystemSpec::make(
        {"s1", "s2", "s3"}, {"c1", "c2", "c3"}, {0.2, 0.6, 0.2},
        {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}}, cd);
    CHECK(pl::check_crp_cd(sys1cd).kind == pl::PoolingKind::COMPLETE);

    pl::PoolingVerdict weak = pl::check_crp_cd(cd_pair({0.5, 0.5}, {1.0, 1.0}));
    CHECK(weak.kind == pl::PoolingKind::WEAK);
    CHECK(has_witness(weak, {"c1"}));

    pl::PoolingVerdict violated = pl::check_crp_cd(cd_pair({0.8, 0.2}, {1.0, 1.0}));
    CHECK(violated.kind == pl::PoolingKind::VIOLATED);
    CHECK(has_witness(violated, {"c1"}));

    CHECK_THROWS_AS(pl::check_crp_cd(testsupport::make_system1()), ModeError);
}

TEST_CASE("verdict structure invariant and json form") {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 100; ++k) {
        SystemSpec sys = testsupport::random_sd_spec(rng, 6, 6);
        pl::PoolingVerdict v = pl::check_crp_sd(sys);
        if (v.kind == pl::PoolingKind::COMPLETE) CHECK(v.witnesses.empty());
        if (v.kind == pl::PoolingKind::VIOLATED) CHECK(!v.witnesses.empty());
    }
    std::string text =
        pl::check_crp_sd(disjoint_pair({0.8, 0.2}, {0.4, 0.6})).to_json_text();
    CHECK(text.find("\"kind\": \"VIOLATED\"") != std::string::npos);
    CHECK(text.find("\"s1\"") != std::string::npos);
}

TEST_CASE("three equivalent condition forms give identical verdicts") {
    std::mt19937_64 rng(20250819);
    std::vector<SystemSpec> pool{testsupport::make_system1(),
                                 testsupport::make_system2(),
                                 testsupport::make_system3(),
                                 disjoint_pair({0.8, 0.2}, {0.4, 0.6}),
                                 disjoint_pair({0.5, 0.5}, {0.5, 0.5})};
    for (int k = 0; k < 200; ++k) {
        // Mix sparse and dense graphs so all three verdicts show up.
        pool.push_back(testsupport::random_sd_spec(rng, 6, 6, k % 2 ? 0.2 : 0.5));
    }
    int seen_complete = 0, seen_weak = 0, seen_violated = 0;
    for (const SystemSpec& sys : pool) {
        ThreeForms oracle(sys);
        pl::PoolingKind expect = oracle.form_unique_share();
        CHECK(oracle.form_customer_side() == expect);
        CHECK(oracle.form_reachable_share() == expect);
        CHECK(pl::check_crp_sd(sys).kind == expect);
        seen_complete += expect == pl::PoolingKind::COMPLETE;
        seen_weak += expect == pl::PoolingKind::WEAK;
        seen_violated += expect == pl::PoolingKind::VIOLATED;
    }
    CHECK(seen_complete > 20);
    CHECK(seen_violated > 20);
    CHECK(seen_weak >= 1); // the symmetric boundary system at least
}

TEST_CASE("tree allocation solver on hand-solved systems") {
    pl::TreeSolution complete = pl::check_crp_tree(small_tree({0.4, 0.6}));
    CHECK(complete.verdict.kind == pl::PoolingKind::COMPLETE);
    CHECK(complete.mu == doctest::Approx(2.0));
    REQUIRE(complete.eta.size() == 3);
    CHECK(complete.eta[0] == doctest::Approx(0.8));
    CHECK(complete.eta[1] == doctest::Approx(0.2));
    CHECK(complete.eta[2] == doctest::Approx(1.0));

    pl::TreeSolution weak = pl::check_crp_tree(small_tree({0.5, 0.5}));
    CHECK(weak.verdict.kind == pl::PoolingKind::WEAK);
    CHECK(weak.mu == doctest::Approx(2.0));
    CHECK(std::abs(weak.eta[1]) < 1e-12);
    CHECK(has_witness(weak.verdict, {"s1", "c2"}));

    pl::TreeSolution violated = pl::check_crp_tree(small_tree({0.6, 0.4}));
    CHECK(violated.verdict.kind == pl::PoolingKind::VIOLATED);
    CHECK(violated.eta[1] == doctest::Approx(-0.2));
    CHECK(has_witness(violated.verdict, {"s1", "c2"}));

    RateModel single;
    single.mode = RateMode::GENERAL;
    single.per_edge = {5.0};
    SystemSpec one = SystemSpec::make({"s1"}, {"c1"}, {1.0}, {{0, 0}}, single);
    pl::TreeSolution sol = pl::check_crp_tree(one);
    CHECK(sol.verdict.kind == pl::PoolingKind::COMPLETE);
    CHECK(sol.mu == doctest::Approx(5.0));
    CHECK(sol.eta[0] == doctest::Approx(1.0));

    CHECK_THROWS_WITH_AS(pl::check_crp_tree(testsupport::make_system1()),
                         Contains("not a tree"), ModeError);
}

TEST_CASE("tree solutions satisfy both equation families") {
    std::mt19937_64 rng(424242);
    for (int k = 0; k < 120; ++k) {
        SystemSpec sys = testsupport::random_tree_spec(rng, 7, 7);
        pl::TreeSolution sol = pl::check_crp_tree(sys);
        for (int j = 0; j < sys.server_count(); ++j) {
            double sum = 0.0;
            for (int e = 0; e < sys.edge_count(); ++e)
                if (sys.edge(e).server == j) sum += sol.eta[e];
            CHECK(std::abs(sum - 1.0) < 1e-10);
        }
        for (int i = 0; i < sys.customer_count(); ++i) {
            double sum = 0.0;
            for (int e = 0; e < sys.edge_count(); ++e)
                if (sys.edge(e).customer == i)
                    sum += sys.edge_rate(e) / sys.alpha(i) * sol.eta[e];
            CHECK(std::abs(sum - sol.mu) < 1e-10 * std::max(1.0, std::abs(sol.mu)));
        }
    }
}

TEST_CASE("ordered decomposition on hand-solved systems") {
    pl::Decomposition split = pl::decompose_sd(disjoint_pair({0.8, 0.2}, {0.4, 0.6}));
    REQUIRE(split.blocks.size() == 2);
    CHECK(split.blocks[0].servers == bit(0));
    CHECK(split.blocks[0].customers == bit(0));
    CHECK(split.blocks[0].mu == doctest::Approx(0.4));
    CHECK(split.blocks[0].lambda_crit == doctest::Approx(0.5));
    CHECK(split.blocks[1].servers == bit(1));
    CHECK(split.blocks[1].customers == bit(1));
    CHECK(split.blocks[1].lambda_crit == doctest::Approx(3.0));

    pl::Decomposition whole = pl::decompose_sd(testsupport::make_system1());
    REQUIRE(whole.blocks.size() == 1);
    CHECK(whole.blocks[0].servers == testsupport::make_system1().all_servers());
    CHECK(whole.blocks[0].lambda_crit == doctest::Approx(1.0));

    RateModel solo;
    solo.mode = RateMode::SD;
    solo.per_server = {0.7};
    SystemSpec single = SystemSpec::make({"s1"}, {"c1", "c2"}, {0.4, 0.6},
                                         {{0, 0}, {0, 1}}, solo);
    pl::Decomposition one = pl::decompose_sd(single);
    REQUIRE(one.blocks.size() == 1);
    CHECK(one.blocks[0].lambda_crit == doctest::Approx(0.7));

    CHECK_THROWS_WITH_AS(pl::decompose_sd(disjoint_pair({0.5, 0.5}, {0.5, 0.5})),
                         Contains("ambiguous"), ValidationError);
    CHECK_THROWS_AS(pl::decompose_sd(cd_pair({0.5, 0.5}, {1.0, 1.0})), ModeError);

    std::string text = split.to_json_text(disjoint_pair({0.8, 0.2}, {0.4, 0.6}));
    CHECK(text.find("\"lambda_crit\"") != std::string::npos);
    CHECK(text.find("\"s2\"") != std::string::npos);
}

TEST_CASE("decomposition blocks partition the system and pool internally") {
    std::mt19937_64 rng(5150);
    int decomposed = 0, multi_block = 0, ambiguous = 0;
    for (int k = 0; k < 250; ++k) {
        SystemSpec sys = testsupport::random_sd_spec(rng, 6, 6, k % 2 ? 0.15 : 0.4);
        pl::Decomposition dec;
        try {
            dec = pl::decompose_sd(sys);
        } catch (const ValidationError&) {
            ++ambiguous;
            continue;
        }
        ++decomposed;
        multi_block += dec.blocks.size() > 1;

        Mask servers_seen = 0, customers_seen = 0, prefix = 0;
        double prev = -1.0;
        for (size_t l = 0; l < dec.blocks.size(); ++l) {
            const pl::DecompositionBlock& b = dec.blocks[l];
            CHECK((servers_seen & b.servers) == 0);
            CHECK((customers_seen & b.customers) == 0);
            // Prefix identity: a block's types are exactly the types newly
            // locked in by extending the prefix with it.
            Mask before = sys.unique_customers_of(prefix);
            prefix |= b.servers;
            CHECK(b.customers == (sys.unique_customers_of(prefix) & ~before));
            // Critical rate matches its defining ratio.
            CHECK(b.lambda_crit ==
                  doctest::Approx(sys.mu_server_sum(b.servers) /
                                  sys.alpha_sum(b.customers)));
            CHECK(b.lambda_crit > prev);
            prev = b.lambda_crit;
            servers_seen |= b.servers;
            customers_seen |= b.customers;

            // Each block, renormalized, pools completely on its own.
            CHECK(pl::check_crp_sd(restrict_to_block(sys, b)).kind ==
                  pl::PoolingKind::COMPLETE);
        }
        CHECK(servers_seen == sys.all_servers());
        CHECK(customers_seen == sys.all_customers());

        // A complete system is exactly a one-block decomposition at mu_total.
        if (pl::check_crp_sd(sys).kind == pl::PoolingKind::COMPLETE) {
            CHECK(dec.blocks.size() == 1);
            CHECK(dec.blocks[0].lambda_crit == doctest::Approx(sys.mu_total()));
        }
    }
    // The generator mix must actually exercise the interesting paths.
    CHECK(decomposed > 200);
    CHECK(multi_block > 30);
    CHECK(ambiguous < 10);
}

TEST_CASE("greedy peel matches the exhaustive decomposition") {
    std::mt19937_64 rng(867);
    for (int k = 0; k < 150; ++k) {
        SystemSpec sys = testsupport::random_sd_spec(rng, 7, 7, k % 2 ? 0.15 : 0.4);
        pl::Decomposition dec;
        try {
            dec = pl::decompose_sd(sys); // exhaustive branch for these sizes
        } catch (const ValidationError&) {
            continue;
        }
        pl::PeeledBlocks peeled = pl::peel_blocks(sys, pl::sd_weights(sys),
                                                  sys.all_servers(), sys.all_customers());
        CHECK(!peeled.weak_tie);
        REQUIRE(peeled.blocks.size() == dec.blocks.size());
        for (size_t l = 0; l < dec.blocks.size(); ++l) {
            CHECK(peeled.blocks[l].servers == dec.blocks[l].servers);
            CHECK(peeled.blocks[l].customers == dec.blocks[l].customers);
            CHECK(peeled.blocks[l].lambda_crit ==
                  doctest::Approx(dec.blocks[l].lambda_crit));
        }
    }
}

TEST_CASE("rate scaling leaves verdicts and block structure unchanged") {
    std::mt19937_64 rng(3344);
    for (int k = 0; k < 60; ++k) {
        SystemSpec sys = testsupport::random_sd_spec(rng, 5, 5);
        RateModel scaled = sys.rates();
        for (double& m : scaled.per_server) m *= 37.5;
        SystemSpec big = SystemSpec::make(sys.servers(), sys.customers(),
                                          sys.alphas(), sys.edges(), scaled);
        CHECK(pl::check_crp_sd(big).kind == pl::check_crp_sd(sys).kind);
        CHECK(pl::check_crp_sd(big).witnesses == pl::check_crp_sd(sys).witnesses);

        bool ok_a = true, ok_b = true;
        pl::Decomposition da, db;
        try { da = pl::decompose_sd(sys); } catch (const ValidationError&) { ok_a = false; }
        try { db = pl::decompose_sd(big); } catch (const ValidationError&) { ok_b = false; }
        CHECK(ok_a == ok_b);
        if (ok_a) {
            REQUIRE(da.blocks.size() == db.blocks.size());
            for (size_t l = 0; l < da.blocks.size(); ++l) {
                CHECK(da.blocks[l].servers == db.blocks[l].servers);
                CHECK(da.blocks[l].customers == db.blocks[l].customers);
                CHECK(db.blocks[l].lambda_crit ==
                      doctest::Approx(37.5 * da.blocks[l].lambda_crit));
            }
        }
    }
}
