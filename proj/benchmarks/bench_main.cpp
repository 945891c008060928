#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "driftlab/losses.hpp"
#include "driftlab/models.hpp"
#include "driftlab/sdc.hpp"

using namespace driftlab;

namespace {

nn::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = n(rng);
    return nn::Tensor::matrix(rows, cols, std::move(v));
}

std::vector<int> cycling_labels(std::size_t n, int classes) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i) % classes;
    return labels;
}

}  // namespace

// one training step of the MNIST-sized embedding net: forward, triplet loss, backward
static void BM_EmbeddingStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    EmbeddingModel model(EmbeddingModel::Options{});
    const auto x = random_matrix(batch, 784, 1);
    const auto labels = cycling_labels(batch, 2);
    std::mt19937_64 rng(2);
    for (auto _ : state) {
        nn::Graph g;
        const auto z = model.embed(g, g.constant_view(x));
        const auto triplets = mine_triplets(labels, g.value(z), Mining::Semihard, 0.2, rng);
        const auto loss = triplet_loss(g, z, triplets);
        g.backward(loss);
        model.zero_grad();
        benchmark::DoNotOptimize(g.value(loss).item());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EmbeddingStep)->Arg(32)->Arg(128);

static void BM_EmbedInference(benchmark::State& state) {
    EmbeddingModel model(EmbeddingModel::Options{});
    const auto x = random_matrix(1000, 784, 3);
    for (auto _ : state) benchmark::DoNotOptimize(model.embed(x));
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_EmbedInference);

static void BM_InterpolateDrift(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto field = make_drift_field(random_matrix(n, 64, 4), random_matrix(n, 64, 5));
    const auto query = random_matrix(1, 64, 6).values();
    const KernelConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(interpolate_drift(field, query, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_InterpolateDrift)->Arg(800)->Arg(4000);

static void BM_NcmClassify(benchmark::State& state) {
    PrototypeBook book;
    const auto protos = random_matrix(10, 64, 7);
    for (int c = 0; c < 10; ++c) {
        const auto row = protos.values();
        book.add(c, Vec(row.begin() + c * 64, row.begin() + (c + 1) * 64), 1);
    }
    const auto z = random_matrix(1000, 64, 8);
    for (auto _ : state) benchmark::DoNotOptimize(ncm_classify(z, book));
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_NcmClassify);

BENCHMARK_MAIN();
