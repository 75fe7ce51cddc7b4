#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "protojunk/io.hpp"
#include "protojunk/metrics.hpp"
#include "protojunk/sampler.hpp"
#include "protojunk/trainer.hpp"

namespace protojunk {

// Episode ids resolved against the store, ready for the loss.
EpisodeData resolve_episode(const Episode& episode, const EmbeddingStore& store);

// The image assignment a training run derives from its seed. Evaluation must
// be given the same run seed to land on identical partition pools.
DatasetAssignment run_assignment(const ClassSplit& split, const Manifest& manifest,
                                 std::uint64_t run_seed);

struct TrainRunOptions {
    int way = 3;
    int shots = 5;
    double junk_probability = 0.25;
    TrainConfig train;
    // partition to draw junk queries from during validation episodes; needed
    // when the val partition has no classes beyond the episode's own
    std::optional<Partition> val_junk_pool;
};

struct TrainRunResult {
    TrainReport report;
    DatasetAssignment assignment;
};

// Assignment + samplers + training, seeded entirely from options.train.seed.
TrainRunResult run_training(const EmbeddingStore& store, const Manifest& manifest,
                            const ClassSplit& split, const TrainRunOptions& options);

struct EvalRunOptions {
    Partition partition = Partition::test;
    int way = 3;
    int shots = 5;
    double junk_probability = 0.25;
    std::int64_t episodes = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<Partition> junk_pool;
};

// Samples episodes, classifies each query, and records the junk-vs-classes
// log-odds margin as the detection score.
std::vector<EvalRecord> run_eval(const EmbeddingStore& store,
                                 const DatasetAssignment& assignment,
                                 const ModelParams& params, Distance distance,
                                 const EvalRunOptions& options);

}  // namespace protojunk
