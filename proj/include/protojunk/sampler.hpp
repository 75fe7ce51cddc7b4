#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "protojunk/errors.hpp"
#include "protojunk/io.hpp"
#include "protojunk/rng.hpp"

namespace protojunk {

struct ClassSplit {
    std::vector<std::int64_t> train_classes;
    std::vector<std::int64_t> val_classes;
    std::vector<std::int64_t> test_classes;
    int split_id = 0;
    std::uint64_t seed = 0;
};

// n_splits independent uniform partitions of the category set into
// (train, val, test) of the given sizes; leftover categories stay unused.
std::vector<ClassSplit> make_splits(const std::vector<std::int64_t>& categories,
                                    int n_splits,
                                    std::array<std::int64_t, 3> sizes,
                                    std::uint64_t seed);

void write_split(const ClassSplit& split, const std::string& path);
ClassSplit read_split(const std::string& path);

enum class Partition : std::uint8_t { train = 0, val = 1, test = 2, ignored = 3 };

const char* partition_name(Partition p);
Partition partition_from_name(const std::string& name);

// Result of pushing every manifest image through the overlap rules:
//  - source-train, all categories in one partition's class set: that partition
//  - source-train, train categories mixed with val/test ones: coin flip,
//    heads train, tails val when a val category is present, otherwise ignored
//  - source-train, val+test mix without train: val
//  - source-train, only test categories: ignored
//  - source-val: test when any test category is present, otherwise ignored
struct DatasetAssignment {
    std::unordered_map<std::uint64_t, Partition> partition_of;
    std::unordered_map<std::uint64_t, std::vector<std::int64_t>> categories_of;
    // class id -> image ids (sorted) for each of train/val/test
    std::array<std::map<std::int64_t, std::vector<std::uint64_t>>, 3> pools;

    const std::map<std::int64_t, std::vector<std::uint64_t>>& pool(Partition p) const;
};

DatasetAssignment assign_images(const ClassSplit& split, const Manifest& manifest,
                                std::uint64_t seed);
DatasetAssignment assign_images(const ClassSplit& split, const Manifest& train_manifest,
                                const Manifest& val_manifest, std::uint64_t seed);

// Concatenation with role checks: every record of the first manifest must be
// tagged "train", every record of the second "val"; ids must not overlap.
Manifest merge_manifests(const Manifest& train_manifest, const Manifest& val_manifest);

void write_assignment(const DatasetAssignment& assignment, const std::string& path);
std::unordered_map<std::uint64_t, Partition> read_assignment(const std::string& path);

struct Episode {
    int way = 0;
    int shots = 0;
    std::vector<std::int64_t> classes;               // episode class ids, one per way
    std::vector<std::vector<std::uint64_t>> support;  // way lists of shot image ids
    std::uint64_t query = 0;
    int label = 0;  // 0..way-1, or way for junk
    bool junk_enabled = false;
};

// One episode from the given partition. Junk queries come from
// `junk_pool` (defaults to the same partition) restricted to classes outside
// the episode; support and query pools for a class exclude images that also
// contain another episode class.
Episode sample_episode(const DatasetAssignment& assignment, Partition partition,
                       int way, int shots, double junk_probability, Rng& rng,
                       std::optional<Partition> junk_pool = std::nullopt);

// Stream of episodes over one partition with its own seed.
class EpisodeSampler {
public:
    EpisodeSampler(const DatasetAssignment& assignment, Partition partition, int way,
                   int shots, double junk_probability, std::uint64_t seed,
                   std::optional<Partition> junk_pool = std::nullopt);

    Episode next() {
        return sample_episode(*assignment_, partition_, way_, shots_, junk_probability_,
                              rng_, junk_pool_);
    }

private:
    const DatasetAssignment* assignment_;
    Partition partition_;
    int way_;
    int shots_;
    double junk_probability_;
    Rng rng_;
    std::optional<Partition> junk_pool_;
};

}  // namespace protojunk
