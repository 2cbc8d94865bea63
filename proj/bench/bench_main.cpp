// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "csbrnn/csb.hpp"
#include "csbrnn/schedule.hpp"
#include "csbrnn/suite.hpp"

using namespace csbrnn;

namespace {

const CsbMatrix& matrix(std::size_t block) {
    static std::map<std::size_t, CsbMatrix> cache;
    auto it = cache.find(block);
    if (it == cache.end()) {
        SuiteSpec spec;
        spec.count = 1;
        spec.rows = spec.cols = 1024;
        it = cache.emplace(block, prune_entry(imbalance_suite(spec)[0], {block, block}, 0.75)).first;
    }
    return it->second;
}

Vector input(std::size_t n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector x(n);
    for (auto& v : x) v = u(rng);
    return x;
}

void BM_CsbMvmSerial(benchmark::State& state) {
    const CsbMatrix& csb = matrix(std::size_t(state.range(0)));
    const Vector x = input(csb.cols);
    for (auto _ : state) benchmark::DoNotOptimize(csb_mvm(csb, x));
    state.SetItemsProcessed(state.iterations() * std::int64_t(csb.val.size()));
}

void BM_CsbMvmParallel(benchmark::State& state) {
    const CsbMatrix& csb = matrix(std::size_t(state.range(0)));
    const Vector x = input(csb.cols);
    for (auto _ : state) benchmark::DoNotOptimize(csb_mvm_parallel(csb, x));
    state.SetItemsProcessed(state.iterations() * std::int64_t(csb.val.size()));
}

void BM_CompileMicroSerial(benchmark::State& state) {
    const CsbMatrix& csb = matrix(std::size_t(state.range(0)));
    EngineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(compile_micro_serial(csb, cfg));
}

void BM_CompileMicroParallel(benchmark::State& state) {
    const CsbMatrix& csb = matrix(std::size_t(state.range(0)));
    EngineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(compile_micro(csb, cfg));
}

}  // namespace

BENCHMARK(BM_CsbMvmSerial)->Arg(16)->Arg(64);
BENCHMARK(BM_CsbMvmParallel)->Arg(16)->Arg(64);
BENCHMARK(BM_CompileMicroSerial)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CompileMicroParallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
