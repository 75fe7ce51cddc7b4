#pragma once

#include <cstdint>
#include <vector>

#include "protojunk/io.hpp"
#include "protojunk/rng.hpp"
#include "protojunk/sampler.hpp"
#include "protojunk/trainer.hpp"

namespace protojunk {

// In-memory Gaussian-cluster dataset shaped like a real ingest: one embedding
// store, one manifest with single-category images, and a class split.
struct SyntheticDataset {
    EmbeddingStore store;
    Manifest manifest;
    ClassSplit split;
};

// Category means sit on a randomly rotated orthonormal frame scaled so every
// pair of means is exactly `separation` apart (requires n_categories <= dim).
// Images are mean + N(0, sigma^2 I). Categories are split by index into
// train/val/test blocks of the given sizes; test-category images carry the
// "val" source tag so the overlap rules route them to the test partition.
SyntheticDataset make_gaussian_dataset(int n_categories, int dim, double sigma,
                                       double separation, int images_per_category,
                                       std::array<std::int64_t, 3> split_sizes,
                                       std::uint64_t seed);

// Random episode with standard-normal support and query; for gradient checks.
EpisodeData random_episode(Rng& rng, int dim, int way, int shots, int label);

// Alternating junk / non-junk labels across a batch of random episodes.
std::vector<EpisodeData> random_episodes(std::uint64_t seed, int count, int dim, int way,
                                         const std::vector<int>& shots_choices);

}  // namespace protojunk
