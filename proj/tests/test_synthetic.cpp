#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "protojunk/sampler.hpp"
#include "protojunk/synthetic.hpp"

using namespace protojunk;

TEST_CASE("gaussian dataset has the documented shape") {
    auto data = make_gaussian_dataset(6, 8, 1e-6, 10.0, 5, {3, 2, 1}, 81);
    CHECK(data.store.count() == 30);
    CHECK(data.store.dim == 8);
    REQUIRE(data.manifest.records.size() == 30);
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < 30; ++i) {
        const auto& rec = data.manifest.records[i];
        CHECK(rec.id == i + 1);
        CHECK(ids.insert(rec.id).second);
        CHECK(data.store.has(rec.id));
        REQUIRE(rec.categories.size() == 1);
        CHECK(rec.categories[0] == static_cast<std::int64_t>(i / 5));
        // test-block categories carry the source-val tag, everyone else source-train
        CHECK(rec.source == (rec.categories[0] >= 5 ? "val" : "train"));
    }
    CHECK(data.split.train_classes == std::vector<std::int64_t>{0, 1, 2});
    CHECK(data.split.val_classes == std::vector<std::int64_t>{3, 4});
    CHECK(data.split.test_classes == std::vector<std::int64_t>{5});
}

TEST_CASE("category means are pairwise equidistant") {
    const double sep = 10.0;
    auto data = make_gaussian_dataset(6, 8, 1e-6, sep, 5, {3, 2, 1}, 82);
    // with near-zero noise the per-category sample means recover the true means
    std::vector<Eigen::VectorXd> centers(6, Eigen::VectorXd::Zero(8));
    for (const auto& rec : data.manifest.records) {
        centers[rec.categories[0]] += data.store.embedding(rec.id);
    }
    for (auto& c : centers) c /= 5.0;
    for (int a = 0; a < 6; ++a) {
        for (int b = a + 1; b < 6; ++b) {
            CHECK((centers[a] - centers[b]).norm() == doctest::Approx(sep).epsilon(1e-4));
        }
    }
    // every mean has the same norm (they sit on a scaled orthonormal frame)
    for (const auto& c : centers) {
        CHECK(c.norm() == doctest::Approx(sep / std::sqrt(2.0)).epsilon(1e-4));
    }
}

TEST_CASE("gaussian dataset feeds the assignment rules cleanly") {
    auto data = make_gaussian_dataset(6, 8, 1.0, 10.0, 5, {3, 2, 1}, 83);
    auto assignment = assign_images(data.split, data.manifest, 1);
    int train = 0, val = 0, test = 0;
    for (const auto& rec : data.manifest.records) {
        switch (assignment.partition_of.at(rec.id)) {
            case Partition::train: ++train; break;
            case Partition::val: ++val; break;
            case Partition::test: ++test; break;
            case Partition::ignored: FAIL("no image should be ignored"); break;
        }
    }
    CHECK(train == 15);
    CHECK(val == 10);
    CHECK(test == 5);
    CHECK(assignment.pool(Partition::train).size() == 3);
    CHECK(assignment.pool(Partition::val).size() == 2);
    CHECK(assignment.pool(Partition::test).size() == 1);
    CHECK(assignment.pool(Partition::test).at(5).size() == 5);
}

TEST_CASE("gaussian dataset is deterministic in the seed") {
    auto a = make_gaussian_dataset(4, 6, 1.0, 8.0, 3, {2, 1, 1}, 84);
    auto b = make_gaussian_dataset(4, 6, 1.0, 8.0, 3, {2, 1, 1}, 84);
    auto c = make_gaussian_dataset(4, 6, 1.0, 8.0, 3, {2, 1, 1}, 85);
    REQUIRE(a.store.count() == b.store.count());
    CHECK(std::memcmp(a.store.values.data(), b.store.values.data(),
                      sizeof(float) * a.store.count() * a.store.dim) == 0);
    CHECK(std::memcmp(a.store.values.data(), c.store.values.data(),
                      sizeof(float) * a.store.count() * a.store.dim) != 0);
}

TEST_CASE("gaussian dataset rejects impossible shapes") {
    CHECK_THROWS_AS(make_gaussian_dataset(10, 8, 1.0, 10.0, 5, {5, 3, 2}, 1), InvalidInput);
    CHECK_THROWS_AS(make_gaussian_dataset(6, 8, 1.0, 10.0, 5, {3, 2, 2}, 1), InvalidInput);
    CHECK_THROWS_AS(make_gaussian_dataset(0, 8, 1.0, 10.0, 5, {0, 0, 0}, 1), InvalidInput);
    CHECK_THROWS_AS(make_gaussian_dataset(2, 2, 1.0, 10.0, 0, {1, 1, 0}, 1), InvalidInput);
}

TEST_CASE("random episode batches alternate labels and shot counts") {
    auto episodes = random_episodes(86, 8, 5, 3, {1, 5});
    REQUIRE(episodes.size() == 8);
    for (int i = 0; i < 8; ++i) {
        const auto& ep = episodes[i];
        CHECK(ep.label == i % 4);
        REQUIRE(ep.support.size() == 3);
        for (const auto& s : ep.support) {
            CHECK(s.rows() == (i % 2 == 0 ? 1 : 5));
            CHECK(s.cols() == 5);
        }
        CHECK(ep.query.size() == 5);
    }
    auto again = random_episodes(86, 8, 5, 3, {1, 5});
    CHECK(again[0].query == episodes[0].query);
    CHECK_THROWS_AS(random_episodes(86, 8, 5, 3, {}), InvalidInput);
}
