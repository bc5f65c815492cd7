#include <benchmark/benchmark.h>

#include "privshield/data.hpp"
#include "privshield/losses.hpp"
#include "privshield/metrics.hpp"
#include "privshield/nets.hpp"
#include "privshield/rng.hpp"
#include "privshield/trainer.hpp"

using namespace privshield;

namespace {

Tensor random_images(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 3, size, size});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

EncoderSpec bench_encoder(int size) {
  EncoderSpec e;
  e.image_size = size;
  e.stages = {{8, 2, Act::Relu}, {16, 2, Act::Relu}, {32, 2, Act::Relu}, {64, 2, Act::Relu}};
  e.tap_layer = "fc";
  e.latent_dim = 64;
  return e;
}

}  // namespace

static void EncoderForward(benchmark::State& state) {
  const auto spec = bench_encoder(32);
  const auto params = build_encoder(spec, 1);
  const Tensor x = random_images(static_cast<int>(state.range(0)), 32, 2);
  for (auto _ : state) {
    Tensor z = encode(spec, params, x);
    benchmark::DoNotOptimize(z);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(EncoderForward)->Arg(1)->Arg(8)->Arg(32);

static void ProtectorStep(benchmark::State& state) {
  SynthConfig sc;
  sc.n_identities = 8;
  sc.samples_per_identity = 16;
  sc.k_attributes = 8;
  sc.image_size = 32;
  sc.channels = 3;
  sc.seed = 3;
  auto ds = std::make_shared<Dataset>(generate_synthetic(sc));
  const SplitSet s = split_dataset(ds, 0.5, 0.3, 0.2, 4);

  const EncoderSpec enc = bench_encoder(32);
  TrainConfig cfg;
  cfg.hp = {1, 0, 0, 0};
  cfg.batch_size = static_cast<int>(state.range(0));
  cfg.seed = 5;
  PerceptualSpec g;
  g.stages = {{8, 2, Act::Relu}, {16, 2, Act::Relu}};
  DiscriminatorSpec disc;
  disc.stages = {{8, 2, Act::LeakyRelu}};
  AlternatingTrainer trainer(cfg, enc, mirror_decoder_spec(enc, "fc"),
                             ClassifierSpec{64, 64, 8}, disc, g, 7002, s.x1, s.x2);
  BatchIterator batches(s.x1, cfg.batch_size, 6);
  for (auto _ : state) {
    auto losses = trainer.protector_update_step(batches.next());
    benchmark::DoNotOptimize(losses);
  }
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(ProtectorStep)->Arg(8)->Arg(32);

static void AdversaryStep(benchmark::State& state) {
  SynthConfig sc;
  sc.n_identities = 8;
  sc.samples_per_identity = 16;
  sc.k_attributes = 8;
  sc.image_size = 32;
  sc.channels = 3;
  sc.seed = 3;
  auto ds = std::make_shared<Dataset>(generate_synthetic(sc));
  const SplitSet s = split_dataset(ds, 0.5, 0.3, 0.2, 4);

  const EncoderSpec enc = bench_encoder(32);
  TrainConfig cfg;
  cfg.hp = {1, 0, 0, 0};
  cfg.batch_size = static_cast<int>(state.range(0));
  cfg.seed = 5;
  PerceptualSpec g;
  g.stages = {{8, 2, Act::Relu}, {16, 2, Act::Relu}};
  DiscriminatorSpec disc;
  disc.stages = {{8, 2, Act::LeakyRelu}};
  AlternatingTrainer trainer(cfg, enc, mirror_decoder_spec(enc, "fc"),
                             ClassifierSpec{64, 64, 8}, disc, g, 7002, s.x1, s.x2);
  BatchIterator batches(s.x1, cfg.batch_size, 6);
  for (auto _ : state) {
    auto losses = trainer.adversary_update_step(batches.next());
    benchmark::DoNotOptimize(losses);
  }
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(AdversaryStep)->Arg(8)->Arg(32);

static void SsimPair(benchmark::State& state) {
  Rng rng(7);
  Tensor a({3, 32, 32}), b({3, 32, 32});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform();
  }
  for (auto _ : state) {
    real v = ssim(a, b);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(SsimPair);

static void MeanMccThroughput(benchmark::State& state) {
  Rng rng(8);
  const int n = static_cast<int>(state.range(0));
  Tensor scores({n, 8}), labels({n, 8});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.uniform() < 0.5 ? 0 : 1;
  }
  for (auto _ : state) {
    real v = mean_mcc(scores, labels);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(MeanMccThroughput)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
