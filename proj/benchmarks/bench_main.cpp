#include <benchmark/benchmark.h>

#include <fluidfcfs/pooling.hpp>
#include <fluidfcfs/system.hpp>

// Benchmark inputs grow with module coverage; the circulant ring below is
// the structured family the analysis paths care about.

namespace {

fluidfcfs::SystemSpec ring_system(int n) {
    std::vector<std::string> servers, customers;
    std::vector<double> alpha(n, 1.0 / n);
    std::vector<fluidfcfs::Edge> edges;
    fluidfcfs::RateModel rates;
    rates.mode = fluidfcfs::RateMode::SD;
    for (int j = 0; j < n; ++j) {
        servers.push_back("s" + std::to_string(j + 1));
        customers.push_back("c" + std::to_string(j + 1));
        rates.per_server.push_back(0.5 + 0.1 * j);
        for (int d : {-1, 0, 1}) edges.push_back({j, (j + d + n) % n});
    }
    return fluidfcfs::SystemSpec::make(servers, customers, alpha, edges, rates);
}

void BM_check_crp_sd(benchmark::State& state) {
    fluidfcfs::SystemSpec sys = ring_system(static_cast<int>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(fluidfcfs::pooling::check_crp_sd(sys));
}
BENCHMARK(BM_check_crp_sd)->Arg(8)->Arg(12)->Arg(16);

void BM_decompose_sd(benchmark::State& state) {
    fluidfcfs::SystemSpec sys = ring_system(static_cast<int>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(fluidfcfs::pooling::decompose_sd(sys));
}
BENCHMARK(BM_decompose_sd)->Arg(8)->Arg(10);

} // namespace

BENCHMARK_MAIN();
