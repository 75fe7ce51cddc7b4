#include "protojunk/simulator.hpp"

#include <cmath>

#include "protojunk/parallel.hpp"
#include "protojunk/rng.hpp"

namespace protojunk {

namespace {

constexpr double kZ95 = 1.959963984540054;

void check_config(const SimConfig& c) {
    if (c.way < 2) throw InvalidInput("simulate: way must be >= 2");
    if (c.n_classes < c.way) throw InvalidInput("simulate: n_classes must be >= way");
    if (c.dim < 1) throw InvalidInput("simulate: dim must be >= 1");
    if (c.sigma <= 0.0) throw InvalidInput("simulate: sigma must be > 0");
    if (c.episodes_per_point < 1) throw InvalidInput("simulate: episodes_per_point must be >= 1");
    for (int s : c.shots) {
        if (s < 1) throw InvalidInput("simulate: shot counts must be >= 1");
    }
}

// one episode; returns whether the nearest-center classification was correct
bool run_episode(const SimConfig& c, int shots, Rng& rng) {
    std::vector<std::vector<double>> means(c.n_classes, std::vector<double>(c.dim));
    for (auto& m : means) {
        for (double& v : m) v = rng.normal(0.0, c.mean_scale);
    }
    const auto chosen = rng.sample_indices(static_cast<std::size_t>(c.n_classes),
                                           static_cast<std::size_t>(c.way));
    std::vector<std::vector<double>> centers(c.way, std::vector<double>(c.dim, 0.0));
    for (int k = 0; k < c.way; ++k) {
        const auto& mean = means[chosen[k]];
        for (int s = 0; s < shots; ++s) {
            for (int j = 0; j < c.dim; ++j) {
                centers[k][j] += rng.normal(mean[j], c.sigma);
            }
        }
        for (int j = 0; j < c.dim; ++j) centers[k][j] /= static_cast<double>(shots);
    }
    const int qk = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.way)));
    std::vector<double> query(c.dim);
    for (int j = 0; j < c.dim; ++j) query[j] = rng.normal(means[chosen[qk]][j], c.sigma);

    int best = 0;
    double best_sq = 0.0;
    for (int k = 0; k < c.way; ++k) {
        double sq = 0.0;
        for (int j = 0; j < c.dim; ++j) {
            const double diff = query[j] - centers[k][j];
            sq += diff * diff;
        }
        if (k == 0 || sq < best_sq) {
            best_sq = sq;
            best = k;
        }
    }
    return best == qk;
}

}  // namespace

SimCurve simulate_curve(const SimConfig& config) {
    check_config(config);
    SimCurve curve;
    const std::int64_t n = config.episodes_per_point;
    for (std::size_t si = 0; si < config.shots.size(); ++si) {
        const int shots = config.shots[si];
        std::vector<unsigned char> correct(static_cast<std::size_t>(n));
        parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t e) {
            Rng rng(derive_seed(config.seed,
                                static_cast<std::uint64_t>(si) * static_cast<std::uint64_t>(n) +
                                    static_cast<std::uint64_t>(e)));
            correct[e] = run_episode(config, shots, rng) ? 1 : 0;
        });
        std::int64_t hits = 0;
        for (auto c : correct) hits += c;
        SimPoint point;
        point.shots = shots;
        point.episodes = n;
        point.accuracy = static_cast<double>(hits) / static_cast<double>(n);
        point.ci_half =
            kZ95 * std::sqrt(point.accuracy * (1.0 - point.accuracy) / static_cast<double>(n));
        curve.points.push_back(point);
    }
    return curve;
}

double expected_sq_distance(int shots, double sigma, int dim, std::int64_t trials,
                            std::uint64_t seed, int threads) {
    if (shots < 1) throw InvalidInput("expected_sq_distance: shots must be >= 1");
    if (trials < 1) throw InvalidInput("expected_sq_distance: trials must be >= 1");
    if (dim < 1) throw InvalidInput("expected_sq_distance: dim must be >= 1");
    if (sigma <= 0.0) throw InvalidInput("expected_sq_distance: sigma must be > 0");
    std::vector<double> sq(static_cast<std::size_t>(trials));
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        double acc = 0.0;
        for (int j = 0; j < dim; ++j) {
            double mean = 0.0;
            for (int s = 0; s < shots; ++s) mean += rng.normal(0.0, sigma);
            mean /= static_cast<double>(shots);
            const double fresh = rng.normal(0.0, sigma);
            const double diff = fresh - mean;
            acc += diff * diff;
        }
        sq[t] = acc;
    });
    double total = 0.0;
    for (double v : sq) total += v;  // fixed order
    return total / static_cast<double>(trials);
}

}  // namespace protojunk
