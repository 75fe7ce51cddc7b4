#include "protojunk/synthetic.hpp"

#include <Eigen/QR>
#include <cmath>

namespace protojunk {

SyntheticDataset make_gaussian_dataset(int n_categories, int dim, double sigma,
                                       double separation, int images_per_category,
                                       std::array<std::int64_t, 3> split_sizes,
                                       std::uint64_t seed) {
    if (n_categories < 1 || dim < 1 || images_per_category < 1) {
        throw InvalidInput("make_gaussian_dataset: counts must be >= 1");
    }
    if (n_categories > dim) {
        throw InvalidInput("make_gaussian_dataset: equidistant means need n_categories <= dim");
    }
    if (split_sizes[0] + split_sizes[1] + split_sizes[2] != n_categories) {
        throw InvalidInput("make_gaussian_dataset: split sizes must sum to n_categories");
    }
    Rng rng(seed);

    // random rotation via QR of a Gaussian matrix; orthonormal columns scaled
    // by separation / sqrt(2) put every pair of means exactly `separation` apart
    Eigen::MatrixXd raw(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) raw(i, j) = rng.normal();
    }
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ();
    const Eigen::MatrixXd means =
        Q.leftCols(n_categories) * (separation / std::sqrt(2.0));  // dim x n_categories

    SyntheticDataset data;
    std::vector<std::uint64_t> ids;
    std::vector<Eigen::VectorXd> vectors;
    std::uint64_t next_id = 1;
    for (int c = 0; c < n_categories; ++c) {
        const bool is_test = c >= split_sizes[0] + split_sizes[1];
        for (int i = 0; i < images_per_category; ++i) {
            Eigen::VectorXd v(dim);
            for (int j = 0; j < dim; ++j) v[j] = means(j, c) + rng.normal(0.0, sigma);
            ids.push_back(next_id);
            vectors.push_back(std::move(v));
            ManifestRecord rec;
            rec.id = next_id;
            rec.categories = {c};
            rec.source = is_test ? "val" : "train";
            data.manifest.records.push_back(std::move(rec));
            ++next_id;
        }
    }
    data.store = make_store(static_cast<std::uint32_t>(dim), ids, vectors);

    data.split.split_id = 0;
    data.split.seed = seed;
    for (int c = 0; c < n_categories; ++c) {
        if (c < split_sizes[0]) data.split.train_classes.push_back(c);
        else if (c < split_sizes[0] + split_sizes[1]) data.split.val_classes.push_back(c);
        else data.split.test_classes.push_back(c);
    }
    return data;
}

EpisodeData random_episode(Rng& rng, int dim, int way, int shots, int label) {
    EpisodeData ep;
    ep.support.resize(way);
    for (int k = 0; k < way; ++k) {
        ep.support[k].resize(shots, dim);
        for (int s = 0; s < shots; ++s) {
            for (int j = 0; j < dim; ++j) ep.support[k](s, j) = rng.normal();
        }
    }
    ep.query.resize(dim);
    for (int j = 0; j < dim; ++j) ep.query[j] = rng.normal();
    ep.label = label;
    return ep;
}

std::vector<EpisodeData> random_episodes(std::uint64_t seed, int count, int dim, int way,
                                         const std::vector<int>& shots_choices) {
    if (shots_choices.empty()) throw InvalidInput("random_episodes: no shot counts");
    Rng rng(seed);
    std::vector<EpisodeData> episodes;
    episodes.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int shots = shots_choices[i % shots_choices.size()];
        // alternate junk and each class label so both gradient branches appear
        const int label = i % (way + 1);
        episodes.push_back(random_episode(rng, dim, way, shots, label));
    }
    return episodes;
}

}  // namespace protojunk
