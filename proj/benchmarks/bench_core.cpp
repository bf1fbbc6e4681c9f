#include <benchmark/benchmark.h>

#include "bilevel/data.hpp"
#include "bilevel/foe.hpp"
#include "bilevel/image.hpp"
#include "bilevel/tvdisc.hpp"

using namespace bilevel;

namespace {

Image fixture_image(int size) { return data::gen_synthetic_image(size, 7); }

void ConvolveDirect5x5(benchmark::State& state) {
    const Image img = fixture_image(static_cast<int>(state.range(0)));
    const Kernel ker = make_gaussian_kernel(5, 1.0);
    for (auto _ : state) {
        Image out = periodic_convolve_direct(img, ker);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * img.size());
}
BENCHMARK(ConvolveDirect5x5)->Arg(64)->Arg(128)->Arg(256);

void ConvolveFft5x5(benchmark::State& state) {
    const Image img = fixture_image(static_cast<int>(state.range(0)));
    const Kernel ker = make_gaussian_kernel(5, 1.0);
    for (auto _ : state) {
        Image out = periodic_convolve_fft(img, ker);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * img.size());
}
BENCHMARK(ConvolveFft5x5)->Arg(64)->Arg(128)->Arg(256);

void ProxDataBlur(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Image g = fixture_image(n);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.5));
    const tvdisc::ProxDataSolver solver(op, g, 0.35, n, n);
    const Image u_bar = fixture_image(n);
    for (auto _ : state) {
        Image out = solver.apply(u_bar);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(ProxDataBlur)->Arg(64)->Arg(256);

void ProxDataDecimated(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Image fine = fixture_image(n);
    const DegradationOp op = DegradationOp::decimated_blur(make_gaussian_kernel(5, 0.5), 2);
    const Image g = apply_degradation(op, fine);
    const tvdisc::ProxDataSolver solver(op, g, 0.35, n, n);
    for (auto _ : state) {
        Image out = solver.apply(fine);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(ProxDataDecimated)->Arg(64)->Arg(256);

void PiggybackIteration(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Image g = data::gen_edge_image(0.6, 0.2, n);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.5));
    const Image f = apply_degradation(op, g);
    const tvdisc::FilterFamily fam = tvdisc::fd_family(2);
    tvdisc::PiggybackConfig cfg = tvdisc::default_piggyback_config(fam, n, n, 1);
    tvdisc::SaddleState sad = tvdisc::make_saddle_state(op, f, fam.count());
    tvdisc::AdjointState adj = tvdisc::make_adjoint_state(n, n, fam.count());
    for (auto _ : state) {
        auto run = tvdisc::piggyback_pd(fam, op, f, &g, cfg, std::move(sad), std::move(adj));
        sad = std::move(run.saddle);
        adj = std::move(run.adjoint);
        benchmark::DoNotOptimize(sad.u.data());
    }
}
BENCHMARK(PiggybackIteration)->Arg(32)->Arg(64);

void FoeGradient(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Image g = fixture_image(n);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.0));
    const Image f = apply_degradation(op, g);
    const foe::FoEParams params = foe::init_params(4, 5, 0.1, 0.1, 11);
    for (auto _ : state) {
        Image grad = foe::foe_grad_u(g, params, f, op);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(FoeGradient)->Arg(64)->Arg(100);

void GroupShrink(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::vector<tvdisc::DualPair> z;
    for (int l = 0; l < 2; ++l)
        z.push_back({fixture_image(n), fixture_image(n)});
    for (auto _ : state) {
        auto out = tvdisc::group_shrink(z, 0.2);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(GroupShrink)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
