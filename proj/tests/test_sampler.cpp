#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "protojunk/sampler.hpp"

using namespace protojunk;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const char* name) {
    auto d = fs::temp_directory_path() / "protojunk_test_sampler";
    fs::create_directories(d);
    return (d / name).string();
}

std::vector<std::int64_t> iota_categories(int n) {
    std::vector<std::int64_t> cats(n);
    for (int i = 0; i < n; ++i) cats[i] = i;
    return cats;
}

// one partition of `n_classes` single-label classes, `per_class` images each;
// class class_base + c owns image ids base + 100*c + 1 ... base + 100*c + per_class
DatasetAssignment single_label_assignment(Partition part, int n_classes, int per_class,
                                          std::uint64_t base = 0,
                                          std::int64_t class_base = 0) {
    DatasetAssignment a;
    for (int c = 0; c < n_classes; ++c) {
        auto& pool = a.pools[static_cast<std::size_t>(part)][class_base + c];
        for (int i = 1; i <= per_class; ++i) {
            const std::uint64_t id = base + 100ULL * c + i;
            a.partition_of[id] = part;
            a.categories_of[id] = {class_base + c};
            pool.push_back(id);
        }
    }
    return a;
}

ClassSplit toy_split() {
    ClassSplit split;
    split.train_classes = {1, 2};
    split.val_classes = {3};
    split.test_classes = {4};
    return split;
}

ManifestRecord rec(std::uint64_t id, std::vector<std::int64_t> cats, const char* source) {
    ManifestRecord r;
    r.id = id;
    r.categories = std::move(cats);
    r.source = source;
    return r;
}

}  // namespace

TEST_CASE("make_splits produces disjoint sets of the requested sizes") {
    const auto cats = iota_categories(80);
    auto splits = make_splits(cats, 12, {57, 8, 15}, 99);
    REQUIRE(splits.size() == 12);
    for (int i = 0; i < 12; ++i) {
        const auto& s = splits[i];
        CHECK(s.split_id == i);
        CHECK(s.seed == 99);
        CHECK(s.train_classes.size() == 57);
        CHECK(s.val_classes.size() == 8);
        CHECK(s.test_classes.size() == 15);
        std::set<std::int64_t> all;
        for (const auto* part : {&s.train_classes, &s.val_classes, &s.test_classes}) {
            for (auto c : *part) {
                CHECK(all.insert(c).second);  // pairwise disjoint
                CHECK(c >= 0);
                CHECK(c < 80);
            }
        }
        CHECK(all.size() == 80);
    }
    // different split ids shuffle differently
    CHECK(splits[0].train_classes != splits[1].train_classes);
}

TEST_CASE("make_splits is deterministic and validates sizes") {
    const auto cats = iota_categories(80);
    auto a = make_splits(cats, 3, {57, 8, 15}, 7);
    auto b = make_splits(cats, 3, {57, 8, 15}, 7);
    for (int i = 0; i < 3; ++i) {
        CHECK(a[i].train_classes == b[i].train_classes);
        CHECK(a[i].val_classes == b[i].val_classes);
        CHECK(a[i].test_classes == b[i].test_classes);
    }
    auto c = make_splits(cats, 1, {57, 8, 15}, 8);
    CHECK(c[0].train_classes != a[0].train_classes);

    auto full = make_splits(cats, 1, {80, 0, 0}, 1);
    CHECK(full[0].train_classes.size() == 80);
    CHECK(full[0].val_classes.empty());
    CHECK(full[0].test_classes.empty());

    CHECK_THROWS_AS(make_splits(cats, 1, {70, 8, 15}, 1), InvalidInput);
    CHECK_THROWS_AS(make_splits(cats, 0, {57, 8, 15}, 1), InvalidInput);
}

TEST_CASE("splits round-trip through files and reject overlap") {
    auto splits = make_splits(iota_categories(20), 1, {10, 4, 6}, 5);
    const auto path = tmp_path("split.json");
    write_split(splits[0], path);
    auto back = read_split(path);
    CHECK(back.split_id == splits[0].split_id);
    CHECK(back.seed == splits[0].seed);
    CHECK(back.train_classes == splits[0].train_classes);
    CHECK(back.val_classes == splits[0].val_classes);
    CHECK(back.test_classes == splits[0].test_classes);

    splits[0].val_classes.push_back(splits[0].train_classes[0]);
    write_split(splits[0], path);
    CHECK_THROWS_AS(read_split(path), IntegrityError);

    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(read_split(path), FormatError);
    CHECK_THROWS_AS(read_split(tmp_path("missing.json")), InvalidInput);
}

TEST_CASE("assign_images follows the overlap rules") {
    const auto split = toy_split();
    Manifest m;
    m.records = {
        rec(10, {1}, "train"),        // all train -> train
        rec(11, {1, 2}, "train"),     // all train -> train
        rec(12, {3}, "train"),        // all val -> val
        rec(13, {3, 4}, "train"),     // val+test, no train -> val
        rec(14, {4}, "train"),        // only test -> ignored
        rec(15, {4}, "val"),          // source val with test class -> test
        rec(16, {1, 4}, "val"),       // source val with test class -> test
        rec(17, {1}, "val"),          // source val, no test class -> ignored
        rec(18, {3}, "val"),          // source val, no test class -> ignored
    };
    auto a = assign_images(split, m, 123);
    CHECK(a.partition_of.at(10) == Partition::train);
    CHECK(a.partition_of.at(11) == Partition::train);
    CHECK(a.partition_of.at(12) == Partition::val);
    CHECK(a.partition_of.at(13) == Partition::val);
    CHECK(a.partition_of.at(14) == Partition::ignored);
    CHECK(a.partition_of.at(15) == Partition::test);
    CHECK(a.partition_of.at(16) == Partition::test);
    CHECK(a.partition_of.at(17) == Partition::ignored);
    CHECK(a.partition_of.at(18) == Partition::ignored);

    // pools collect an image under every category of its own partition
    CHECK(a.pool(Partition::train).at(1) == std::vector<std::uint64_t>{10, 11});
    CHECK(a.pool(Partition::train).at(2) == std::vector<std::uint64_t>{11});
    CHECK(a.pool(Partition::val).at(3) == std::vector<std::uint64_t>{12, 13});
    CHECK(a.pool(Partition::test).at(4) == std::vector<std::uint64_t>{15, 16});
    // categories from other partitions contribute nothing
    CHECK(a.pool(Partition::val).count(4) == 0);
    CHECK(a.pool(Partition::test).count(1) == 0);

    Manifest unknown;
    unknown.records = {rec(1, {9}, "train")};
    CHECK_THROWS_AS(assign_images(split, unknown, 1), InvalidInput);
}

TEST_CASE("mixed-class coin flips are fair and deterministic") {
    const auto split = toy_split();
    Manifest m;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        // train class mixed with a val class: heads train, tails val
        m.records.push_back(rec(1 + i, {1, 3}, "train"));
    }
    auto a = assign_images(split, m, 42);
    int train_count = 0;
    for (const auto& [id, part] : a.partition_of) {
        REQUIRE((part == Partition::train || part == Partition::val));
        train_count += part == Partition::train;
    }
    const double frac = static_cast<double>(train_count) / n;
    // 3 sigma for a fair coin at n draws
    CHECK(std::abs(frac - 0.5) < 3.0 * std::sqrt(0.25 / n));

    auto b = assign_images(split, m, 42);
    CHECK(a.partition_of == b.partition_of);
    auto c = assign_images(split, m, 43);
    CHECK(a.partition_of != c.partition_of);
}

TEST_CASE("mixed train/test images without val classes are train or ignored") {
    const auto split = toy_split();
    Manifest m;
    for (int i = 0; i < 4000; ++i) m.records.push_back(rec(1 + i, {1, 4}, "train"));
    auto a = assign_images(split, m, 9);
    int train_count = 0, ignored_count = 0;
    for (const auto& [id, part] : a.partition_of) {
        REQUIRE((part == Partition::train || part == Partition::ignored));
        train_count += part == Partition::train;
        ignored_count += part == Partition::ignored;
    }
    CHECK(train_count > 1700);
    CHECK(ignored_count > 1700);
    // ignored images leave no pool trace
    for (const auto& [cls, images] : a.pool(Partition::train)) {
        CHECK(static_cast<int>(images.size()) == train_count);
    }
}

TEST_CASE("two-manifest assignment validates source tags and id overlap") {
    const auto split = toy_split();
    Manifest train_m, val_m;
    train_m.records = {rec(1, {1}, "train"), rec(2, {3}, "train")};
    val_m.records = {rec(3, {4}, "val"), rec(4, {1}, "val")};
    auto a = assign_images(split, train_m, val_m, 5);
    CHECK(a.partition_of.at(1) == Partition::train);
    CHECK(a.partition_of.at(2) == Partition::val);
    CHECK(a.partition_of.at(3) == Partition::test);
    CHECK(a.partition_of.at(4) == Partition::ignored);
    // source-val images never land in train or val
    for (const auto& r : val_m.records) {
        const auto part = a.partition_of.at(r.id);
        CHECK(part != Partition::train);
        CHECK(part != Partition::val);
    }

    Manifest mislabeled;
    mislabeled.records = {rec(9, {1}, "val")};
    CHECK_THROWS_AS(assign_images(split, mislabeled, val_m, 5), IntegrityError);

    Manifest dup;
    dup.records = {rec(1, {4}, "val")};
    CHECK_THROWS_AS(assign_images(split, train_m, dup, 5), IntegrityError);
}

TEST_CASE("assignments round-trip through files") {
    const auto split = toy_split();
    Manifest m;
    m.records = {rec(10, {1}, "train"), rec(11, {3}, "train"), rec(12, {4}, "val"),
                 rec(13, {4}, "train")};
    auto a = assign_images(split, m, 77);
    const auto path = tmp_path("assignment.jsonl");
    write_assignment(a, path);
    auto back = read_assignment(path);
    REQUIRE(back.size() == a.partition_of.size());
    for (const auto& [id, part] : a.partition_of) CHECK(back.at(id) == part);

    std::ofstream(path) << R"({"id": 1, "partition": "train"})" << "\n"
                        << R"({"id": 1, "partition": "val"})" << "\n";
    CHECK_THROWS_AS(read_assignment(path), IntegrityError);
    std::ofstream(path) << R"({"id": 1, "partition": "nowhere"})" << "\n";
    CHECK_THROWS_AS(read_assignment(path), InvalidInput);
    std::ofstream(path) << "junk\n";
    CHECK_THROWS_AS(read_assignment(path), ParseError);
}

TEST_CASE("episodes are pure, closed over the partition, and labeled consistently") {
    auto a = single_label_assignment(Partition::train, 10, 12);
    EpisodeSampler sampler(a, Partition::train, 3, 4, 0.25, 31);
    const auto& classes = a.pool(Partition::train);
    for (int i = 0; i < 2000; ++i) {
        auto ep = sampler.next();
        CHECK(ep.way == 3);
        CHECK(ep.shots == 4);
        CHECK(ep.junk_enabled);
        REQUIRE(ep.classes.size() == 3);
        REQUIRE(ep.support.size() == 3);
        CHECK(std::set<std::int64_t>(ep.classes.begin(), ep.classes.end()).size() == 3);

        std::set<std::uint64_t> seen;
        for (int k = 0; k < 3; ++k) {
            CHECK(classes.count(ep.classes[k]) == 1);
            REQUIRE(ep.support[k].size() == 4);
            for (auto id : ep.support[k]) {
                CHECK(seen.insert(id).second);  // no image twice in one episode
                CHECK(a.categories_of.at(id) == std::vector<std::int64_t>{ep.classes[k]});
            }
        }
        CHECK(seen.insert(ep.query).second);  // query never among support
        REQUIRE(ep.label >= 0);
        REQUIRE(ep.label <= 3);
        const auto& query_cats = a.categories_of.at(ep.query);
        if (ep.label == 3) {
            for (auto c : query_cats) {
                CHECK(std::find(ep.classes.begin(), ep.classes.end(), c) == ep.classes.end());
            }
        } else {
            CHECK(query_cats == std::vector<std::int64_t>{ep.classes[ep.label]});
        }
    }
}

TEST_CASE("junk rate and class frequencies match their targets") {
    auto a = single_label_assignment(Partition::train, 10, 12);
    EpisodeSampler sampler(a, Partition::train, 3, 2, 0.25, 32);
    const int n = 10000;
    int junk = 0;
    std::map<std::int64_t, int> class_count;
    for (int i = 0; i < n; ++i) {
        auto ep = sampler.next();
        junk += ep.label == 3;
        for (auto c : ep.classes) class_count[c] += 1;
    }
    const double junk_frac = static_cast<double>(junk) / n;
    CHECK(std::abs(junk_frac - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / n));
    // each class appears in an episode with probability 3/10
    const double expect = n * 0.3;
    const double sigma = std::sqrt(n * 0.3 * 0.7);
    for (const auto& [cls, count] : class_count) {
        CHECK(std::abs(count - expect) < 4.0 * sigma);
    }
}

TEST_CASE("junk_probability zero never yields junk labels") {
    auto a = single_label_assignment(Partition::train, 4, 6);
    EpisodeSampler sampler(a, Partition::train, 3, 2, 0.0, 33);
    for (int i = 0; i < 500; ++i) {
        auto ep = sampler.next();
        CHECK(ep.label < 3);
        CHECK(!ep.junk_enabled);
    }
}

TEST_CASE("five way without junk works when the pool has exactly five classes") {
    auto a = single_label_assignment(Partition::train, 5, 8);
    EpisodeSampler sampler(a, Partition::train, 5, 5, 0.0, 34);
    auto ep = sampler.next();
    CHECK(ep.way == 5);
    CHECK(ep.label < 5);
    // junk on is impossible: no class left outside the episode
    CHECK_THROWS_AS(EpisodeSampler(a, Partition::train, 5, 5, 0.25, 34), InvalidInput);
}

TEST_CASE("identical seeds reproduce the episode stream") {
    auto a = single_label_assignment(Partition::train, 8, 10);
    EpisodeSampler s1(a, Partition::train, 3, 3, 0.25, 35);
    EpisodeSampler s2(a, Partition::train, 3, 3, 0.25, 35);
    EpisodeSampler s3(a, Partition::train, 3, 3, 0.25, 36);
    bool any_diff = false;
    for (int i = 0; i < 200; ++i) {
        auto e1 = s1.next(), e2 = s2.next(), e3 = s3.next();
        CHECK(e1.classes == e2.classes);
        CHECK(e1.support == e2.support);
        CHECK(e1.query == e2.query);
        CHECK(e1.label == e2.label);
        any_diff |= e1.classes != e3.classes || e1.query != e3.query;
    }
    CHECK(any_diff);
}

TEST_CASE("junk pool can be routed to a different partition") {
    auto a = single_label_assignment(Partition::train, 6, 8);
    auto v = single_label_assignment(Partition::val, 3, 5, 5000, 20);
    // merge the val partition into a
    for (const auto& [id, part] : v.partition_of) a.partition_of[id] = part;
    for (const auto& [id, cats] : v.categories_of) a.categories_of[id] = cats;
    a.pools[static_cast<std::size_t>(Partition::val)] =
        v.pools[static_cast<std::size_t>(Partition::val)];

    EpisodeSampler sampler(a, Partition::train, 3, 2, 0.5, 37, Partition::val);
    int junk = 0;
    for (int i = 0; i < 400; ++i) {
        auto ep = sampler.next();
        for (int k = 0; k < 3; ++k) {
            for (auto id : ep.support[k]) CHECK(a.partition_of.at(id) == Partition::train);
        }
        if (ep.label == 3) {
            ++junk;
            CHECK(a.partition_of.at(ep.query) == Partition::val);
        } else {
            CHECK(a.partition_of.at(ep.query) == Partition::train);
        }
    }
    CHECK(junk > 100);
}

TEST_CASE("multi-label images are excluded from clashing episodes") {
    // class 0 and 1 share images 901..902; class 0 keeps 3 clean images
    DatasetAssignment a = single_label_assignment(Partition::train, 3, 6);
    for (std::uint64_t id : {901, 902}) {
        a.partition_of[id] = Partition::train;
        a.categories_of[id] = {0, 1};
        a.pools[0][0].push_back(id);
        a.pools[0][1].push_back(id);
    }
    EpisodeSampler sampler(a, Partition::train, 2, 2, 0.25, 38);
    for (int i = 0; i < 1000; ++i) {
        auto ep = sampler.next();
        const bool both = std::set<std::int64_t>(ep.classes.begin(), ep.classes.end()) ==
                          std::set<std::int64_t>{0, 1};
        for (int k = 0; k < 2; ++k) {
            for (auto id : ep.support[k]) {
                if (both) {
                    CHECK(id != 901);
                    CHECK(id != 902);
                }
            }
        }
        if (both) {
            CHECK(ep.query != 901);
            CHECK(ep.query != 902);
        }
        if (ep.label == 2) {
            // junk queries avoid every episode class
            const auto& cats = a.categories_of.at(ep.query);
            for (auto c : cats) {
                CHECK(std::find(ep.classes.begin(), ep.classes.end(), c) == ep.classes.end());
            }
        }
    }
}

TEST_CASE("impossible configurations are rejected up front") {
    auto a = single_label_assignment(Partition::train, 3, 4);
    // fine: 3 classes with 4 images each support way=3 shots=3
    EpisodeSampler ok(a, Partition::train, 3, 3, 0.0, 39);
    // shots+1 exceeds pool size
    CHECK_THROWS_AS(EpisodeSampler(a, Partition::train, 3, 4, 0.0, 39), InvalidInput);
    // more ways than classes
    CHECK_THROWS_AS(EpisodeSampler(a, Partition::train, 4, 2, 0.0, 39), InvalidInput);
    // empty partition
    CHECK_THROWS_AS(EpisodeSampler(a, Partition::val, 1, 1, 0.0, 39), InvalidInput);
    Rng rng(1);
    CHECK_THROWS_AS(sample_episode(a, Partition::train, 0, 1, 0.0, rng), InvalidInput);
    CHECK_THROWS_AS(sample_episode(a, Partition::train, 1, 0, 0.0, rng), InvalidInput);
    CHECK_THROWS_AS(sample_episode(a, Partition::train, 1, 1, 1.5, rng), InvalidInput);
}
