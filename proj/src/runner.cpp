#include "protojunk/runner.hpp"

#include <cmath>

#include "protojunk/parallel.hpp"

namespace protojunk {

namespace {

// seed-stream tags for the independent substreams of one run
constexpr std::uint64_t kTagAssign = 0x61736750;
constexpr std::uint64_t kTagTrainEpisodes = 0x74726150;
constexpr std::uint64_t kTagValEpisodes = 0x76616c50;
constexpr std::uint64_t kTagEvalEpisodes = 0x65766c50;

double logsumexp(const Eigen::VectorXd& v) {
    const double mx = v.maxCoeff();
    return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

EpisodeData resolve_episode(const Episode& episode, const EmbeddingStore& store) {
    EpisodeData data;
    data.support.resize(episode.way);
    for (int k = 0; k < episode.way; ++k) {
        data.support[k].resize(static_cast<Eigen::Index>(episode.support[k].size()), store.dim);
        for (std::size_t s = 0; s < episode.support[k].size(); ++s) {
            data.support[k].row(static_cast<Eigen::Index>(s)) =
                store.embedding(episode.support[k][s]).transpose();
        }
    }
    data.query = store.embedding(episode.query);
    data.label = episode.label;
    return data;
}

DatasetAssignment run_assignment(const ClassSplit& split, const Manifest& manifest,
                                 std::uint64_t run_seed) {
    return assign_images(split, manifest, derive_seed(run_seed, kTagAssign));
}

TrainRunResult run_training(const EmbeddingStore& store, const Manifest& manifest,
                            const ClassSplit& split, const TrainRunOptions& options) {
    TrainRunResult result;
    const std::uint64_t seed = options.train.seed;
    result.assignment = run_assignment(split, manifest, seed);

    EpisodeSampler train_sampler(result.assignment, Partition::train, options.way,
                                 options.shots, options.junk_probability,
                                 derive_seed(seed, kTagTrainEpisodes));
    EpisodeSampler val_sampler(result.assignment, Partition::val, options.way, options.shots,
                               options.junk_probability, derive_seed(seed, kTagValEpisodes),
                               options.val_junk_pool);

    result.report = train(
        options.train, static_cast<int>(store.dim),
        [&] { return resolve_episode(train_sampler.next(), store); },
        [&] { return resolve_episode(val_sampler.next(), store); });
    return result;
}

std::vector<EvalRecord> run_eval(const EmbeddingStore& store,
                                 const DatasetAssignment& assignment,
                                 const ModelParams& params, Distance distance,
                                 const EvalRunOptions& options) {
    if (options.episodes < 1) throw InvalidInput("run_eval: episodes must be >= 1");
    EpisodeSampler sampler(assignment, options.partition, options.way, options.shots,
                           options.junk_probability, derive_seed(options.seed, kTagEvalEpisodes),
                           options.junk_pool);
    std::vector<EpisodeData> episodes;
    episodes.reserve(static_cast<std::size_t>(options.episodes));
    for (std::int64_t i = 0; i < options.episodes; ++i) {
        episodes.push_back(resolve_episode(sampler.next(), store));
    }

    std::vector<EvalRecord> records(episodes.size());
    parallel_for(episodes.size(), options.threads, [&](std::size_t i) {
        const EpisodeData& ep = episodes[i];
        std::vector<std::pair<int, Eigen::VectorXd>> support;
        for (std::size_t k = 0; k < ep.support.size(); ++k) {
            for (Eigen::Index s = 0; s < ep.support[k].rows(); ++s) {
                support.emplace_back(static_cast<int>(k), ep.support[k].row(s).transpose());
            }
        }
        const PrototypeSet protos = compute_prototypes(params, support);
        const Prediction pred = predict(params, protos, ep.query, distance);
        EvalRecord rec;
        rec.way = static_cast<int>(ep.support.size());
        rec.true_label = ep.label;
        rec.predicted_label = pred.predicted_label;
        rec.junk_score = pred.junk_score - logsumexp(pred.class_scores);
        records[i] = rec;
    });
    return records;
}

}  // namespace protojunk
