#include "protojunk/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace protojunk {

std::vector<ClassSplit> make_splits(const std::vector<std::int64_t>& categories,
                                    int n_splits,
                                    std::array<std::int64_t, 3> sizes,
                                    std::uint64_t seed) {
    if (n_splits < 1) throw InvalidInput("make_splits: n_splits must be >= 1");
    for (auto s : sizes) {
        if (s < 0) throw InvalidInput("make_splits: negative split size");
    }
    const std::int64_t total = sizes[0] + sizes[1] + sizes[2];
    std::vector<std::int64_t> cats(categories);
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    if (total > static_cast<std::int64_t>(cats.size())) {
        throw InvalidInput("make_splits: sizes sum to " + std::to_string(total) +
                           " but only " + std::to_string(cats.size()) + " categories given");
    }
    std::vector<ClassSplit> splits;
    splits.reserve(n_splits);
    for (int i = 0; i < n_splits; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::vector<std::int64_t> pool(cats);
        rng.shuffle(pool);
        ClassSplit split;
        split.split_id = i;
        split.seed = seed;
        auto it = pool.begin();
        split.train_classes.assign(it, it + sizes[0]);
        it += sizes[0];
        split.val_classes.assign(it, it + sizes[1]);
        it += sizes[1];
        split.test_classes.assign(it, it + sizes[2]);
        std::sort(split.train_classes.begin(), split.train_classes.end());
        std::sort(split.val_classes.begin(), split.val_classes.end());
        std::sort(split.test_classes.begin(), split.test_classes.end());
        splits.push_back(std::move(split));
    }
    return splits;
}

void write_split(const ClassSplit& split, const std::string& path) {
    nlohmann::json j;
    j["split_id"] = split.split_id;
    j["seed"] = split.seed;
    j["train"] = split.train_classes;
    j["val"] = split.val_classes;
    j["test"] = split.test_classes;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw Error("write failed for " + path);
}

ClassSplit read_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    ClassSplit split;
    try {
        split.split_id = j.at("split_id").get<int>();
        split.seed = j.at("seed").get<std::uint64_t>();
        split.train_classes = j.at("train").get<std::vector<std::int64_t>>();
        split.val_classes = j.at("val").get<std::vector<std::int64_t>>();
        split.test_classes = j.at("test").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    std::set<std::int64_t> seen;
    for (const auto* part : {&split.train_classes, &split.val_classes, &split.test_classes}) {
        for (auto c : *part) {
            if (!seen.insert(c).second) {
                throw IntegrityError(path + ": category " + std::to_string(c) +
                                     " appears in more than one partition");
            }
        }
    }
    return split;
}

const char* partition_name(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::val: return "val";
        case Partition::test: return "test";
        case Partition::ignored: return "ignored";
    }
    return "?";
}

Partition partition_from_name(const std::string& name) {
    if (name == "train") return Partition::train;
    if (name == "val") return Partition::val;
    if (name == "test") return Partition::test;
    if (name == "ignored") return Partition::ignored;
    throw InvalidInput("unknown partition name \"" + name + "\"");
}

const std::map<std::int64_t, std::vector<std::uint64_t>>& DatasetAssignment::pool(
    Partition p) const {
    if (p == Partition::ignored) throw InvalidInput("no image pool for the ignored partition");
    return pools[static_cast<std::size_t>(p)];
}

DatasetAssignment assign_images(const ClassSplit& split, const Manifest& manifest,
                                std::uint64_t seed) {
    std::unordered_map<std::int64_t, Partition> class_partition;
    for (auto c : split.train_classes) class_partition[c] = Partition::train;
    for (auto c : split.val_classes) class_partition[c] = Partition::val;
    for (auto c : split.test_classes) class_partition[c] = Partition::test;

    DatasetAssignment out;
    Rng coin(seed);
    for (const auto& rec : manifest.records) {
        bool has_train = false, has_val = false, has_test = false;
        for (auto c : rec.categories) {
            auto it = class_partition.find(c);
            if (it == class_partition.end()) {
                throw InvalidInput("image " + std::to_string(rec.id) + " references category " +
                                   std::to_string(c) + " absent from the class split");
            }
            has_train |= it->second == Partition::train;
            has_val |= it->second == Partition::val;
            has_test |= it->second == Partition::test;
        }
        Partition part;
        if (rec.source == "val") {
            part = has_test ? Partition::test : Partition::ignored;
        } else if (has_train && !has_val && !has_test) {
            part = Partition::train;
        } else if (has_val && !has_train && !has_test) {
            part = Partition::val;
        } else if (has_train) {
            // train class alongside val and/or test classes: coin flip
            if (coin.bernoulli(0.5)) {
                part = Partition::train;
            } else {
                part = has_val ? Partition::val : Partition::ignored;
            }
        } else if (has_val) {
            part = Partition::val;
        } else {
            part = Partition::ignored;  // only test classes in a source-train image
        }
        out.partition_of[rec.id] = part;
        out.categories_of[rec.id] = rec.categories;
        if (part != Partition::ignored) {
            auto& pool = out.pools[static_cast<std::size_t>(part)];
            const Partition pool_part = part;
            for (auto c : rec.categories) {
                // an image only feeds the pools of classes living in its partition
                if (class_partition[c] == pool_part) pool[c].push_back(rec.id);
            }
        }
    }
    for (auto& pool : out.pools) {
        for (auto& [cls, images] : pool) std::sort(images.begin(), images.end());
    }
    return out;
}

DatasetAssignment assign_images(const ClassSplit& split, const Manifest& train_manifest,
                                const Manifest& val_manifest, std::uint64_t seed) {
    return assign_images(split, merge_manifests(train_manifest, val_manifest), seed);
}

Manifest merge_manifests(const Manifest& train_manifest, const Manifest& val_manifest) {
    Manifest combined;
    combined.records.reserve(train_manifest.records.size() + val_manifest.records.size());
    for (const auto& rec : train_manifest.records) {
        if (rec.source != "train") {
            throw IntegrityError("record " + std::to_string(rec.id) +
                                 " in the train manifest is tagged \"" + rec.source + "\"");
        }
        combined.records.push_back(rec);
    }
    std::set<std::uint64_t> train_ids;
    for (const auto& rec : train_manifest.records) train_ids.insert(rec.id);
    for (const auto& rec : val_manifest.records) {
        if (rec.source != "val") {
            throw IntegrityError("record " + std::to_string(rec.id) +
                                 " in the val manifest is tagged \"" + rec.source + "\"");
        }
        if (train_ids.count(rec.id)) {
            throw IntegrityError("image id " + std::to_string(rec.id) +
                                 " appears in both manifests");
        }
        combined.records.push_back(rec);
    }
    return combined;
}

void write_assignment(const DatasetAssignment& assignment, const std::string& path) {
    std::vector<std::uint64_t> ids;
    ids.reserve(assignment.partition_of.size());
    for (const auto& [id, part] : assignment.partition_of) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    for (auto id : ids) {
        nlohmann::json j;
        j["id"] = id;
        j["partition"] = partition_name(assignment.partition_of.at(id));
        out << j.dump() << "\n";
    }
    if (!out) throw Error("write failed for " + path);
}

std::unordered_map<std::uint64_t, Partition> read_assignment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::unordered_map<std::uint64_t, Partition> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": " + e.what(), lineno);
        }
        if (!j.contains("id") || !j["id"].is_number_unsigned() || !j.contains("partition")) {
            throw ParseError(path + ": record needs id and partition", lineno);
        }
        const auto id = j["id"].get<std::uint64_t>();
        if (!out.emplace(id, partition_from_name(j["partition"].get<std::string>())).second) {
            throw IntegrityError(path + ": duplicate image id " + std::to_string(id));
        }
    }
    return out;
}

namespace {

// Images of `cls` usable in an episode: they must not contain any other
// episode class, otherwise the label would be ambiguous.
std::vector<std::uint64_t> eligible_images(const DatasetAssignment& assignment,
                                           const std::vector<std::uint64_t>& pool,
                                           const std::vector<std::int64_t>& episode_classes,
                                           std::int64_t cls) {
    std::vector<std::uint64_t> out;
    out.reserve(pool.size());
    for (auto id : pool) {
        const auto& cats = assignment.categories_of.at(id);
        bool clash = false;
        for (auto c : cats) {
            if (c != cls &&
                std::find(episode_classes.begin(), episode_classes.end(), c) !=
                    episode_classes.end()) {
                clash = true;
                break;
            }
        }
        if (!clash) out.push_back(id);
    }
    return out;
}

}  // namespace

Episode sample_episode(const DatasetAssignment& assignment, Partition partition,
                       int way, int shots, double junk_probability, Rng& rng,
                       std::optional<Partition> junk_pool) {
    if (way < 1) throw InvalidInput("sample_episode: way must be >= 1");
    if (shots < 1) throw InvalidInput("sample_episode: shots must be >= 1");
    if (junk_probability < 0.0 || junk_probability > 1.0) {
        throw InvalidInput("sample_episode: junk_probability must be in [0, 1]");
    }
    const auto& pool = assignment.pool(partition);

    // classes able to supply shots + a query
    std::vector<std::int64_t> candidates;
    for (const auto& [cls, images] : pool) {
        if (static_cast<int>(images.size()) >= shots + 1) candidates.push_back(cls);
    }
    if (static_cast<int>(candidates.size()) < way) {
        throw InvalidInput("sample_episode: partition " +
                           std::string(partition_name(partition)) + " has only " +
                           std::to_string(candidates.size()) + " classes with " +
                           std::to_string(shots + 1) + "+ images, need " + std::to_string(way));
    }

    Episode ep;
    ep.way = way;
    ep.shots = shots;
    ep.junk_enabled = junk_probability > 0.0;
    for (auto idx : rng.sample_indices(candidates.size(), static_cast<std::size_t>(way))) {
        ep.classes.push_back(candidates[idx]);
    }

    std::vector<std::vector<std::uint64_t>> eligible(way);
    ep.support.resize(way);
    for (int k = 0; k < way; ++k) {
        eligible[k] = eligible_images(assignment, pool.at(ep.classes[k]), ep.classes,
                                      ep.classes[k]);
        if (static_cast<int>(eligible[k].size()) < shots + 1) {
            throw InvalidInput("sample_episode: class " + std::to_string(ep.classes[k]) +
                               " has only " + std::to_string(eligible[k].size()) +
                               " images free of other episode classes, need " +
                               std::to_string(shots + 1));
        }
        for (auto idx : rng.sample_indices(eligible[k].size(), static_cast<std::size_t>(shots))) {
            ep.support[k].push_back(eligible[k][idx]);
        }
    }

    if (rng.bernoulli(junk_probability)) {
        const auto& jpool = assignment.pool(junk_pool.value_or(partition));
        std::vector<std::pair<std::int64_t, std::vector<std::uint64_t>>> junk_classes;
        for (const auto& [cls, images] : jpool) {
            if (std::find(ep.classes.begin(), ep.classes.end(), cls) != ep.classes.end()) {
                continue;
            }
            auto ok = eligible_images(assignment, images, ep.classes, cls);
            if (!ok.empty()) junk_classes.emplace_back(cls, std::move(ok));
        }
        if (junk_classes.empty()) {
            throw InvalidInput("sample_episode: no junk class with images disjoint from the "
                               "episode classes");
        }
        const auto& [cls, images] = junk_classes[rng.below(junk_classes.size())];
        ep.query = images[rng.below(images.size())];
        ep.label = way;
    } else {
        const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(way)));
        std::vector<std::uint64_t> remaining;
        for (auto id : eligible[k]) {
            if (std::find(ep.support[k].begin(), ep.support[k].end(), id) ==
                ep.support[k].end()) {
                remaining.push_back(id);
            }
        }
        if (remaining.empty()) {
            throw InvalidInput("sample_episode: class " + std::to_string(ep.classes[k]) +
                               " has no query image left after support selection");
        }
        ep.query = remaining[rng.below(remaining.size())];
        ep.label = k;
    }
    return ep;
}

EpisodeSampler::EpisodeSampler(const DatasetAssignment& assignment, Partition partition,
                               int way, int shots, double junk_probability,
                               std::uint64_t seed, std::optional<Partition> junk_pool)
    : assignment_(&assignment),
      partition_(partition),
      way_(way),
      shots_(shots),
      junk_probability_(junk_probability),
      rng_(seed),
      junk_pool_(junk_pool) {
    // surface impossible configurations immediately rather than mid-run
    const auto& pool = assignment.pool(partition);
    int usable = 0;
    for (const auto& [cls, images] : pool) {
        if (static_cast<int>(images.size()) >= shots + 1) ++usable;
    }
    if (usable < way) {
        throw InvalidInput("partition " + std::string(partition_name(partition)) +
                           " has only " + std::to_string(usable) + " classes with " +
                           std::to_string(shots + 1) + "+ images, need " + std::to_string(way));
    }
    if (junk_probability > 0.0) {
        const auto& jpool = assignment.pool(junk_pool.value_or(partition));
        const int extra = junk_pool.has_value() && *junk_pool != partition
                              ? static_cast<int>(jpool.size())
                              : static_cast<int>(jpool.size()) - way;
        if (extra < 1) {
            throw InvalidInput("junk pool " +
                               std::string(partition_name(junk_pool.value_or(partition))) +
                               " has no classes to draw junk from beyond the episode classes");
        }
    }
}

}  // namespace protojunk
