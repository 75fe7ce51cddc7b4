#pragma once

#include <cstdint>
#include <vector>

#include "protojunk/errors.hpp"

namespace protojunk {

// Gaussian toy model of the few-shot task: per episode, draw class means,
// estimate each chosen class's center from a handful of samples, then
// classify a fresh query to the nearest center.
struct SimConfig {
    int n_classes = 15;
    int way = 3;
    int dim = 16;
    double sigma = 1.0;
    double mean_scale = 0.75;  // sd of each mean component
    std::vector<int> shots = {1, 2, 5, 10, 15};
    std::int64_t episodes_per_point = 20000;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct SimPoint {
    int shots = 0;
    double accuracy = 0.0;
    double ci_half = 0.0;  // 95% normal-approximation half-width
    std::int64_t episodes = 0;
};

struct SimCurve {
    std::vector<SimPoint> points;
};

SimCurve simulate_curve(const SimConfig& config);

// Monte Carlo estimate of the expected squared distance between a fresh class
// sample and the mean of `shots` samples; analytic value (1 + 1/shots) * sigma^2 * dim.
double expected_sq_distance(int shots, double sigma, int dim, std::int64_t trials,
                            std::uint64_t seed, int threads = 1);

}  // namespace protojunk
