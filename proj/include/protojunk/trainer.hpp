#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "protojunk/io.hpp"
#include "protojunk/model.hpp"

namespace protojunk {

// Episode with embeddings resolved to vectors; what the loss actually sees.
struct EpisodeData {
    std::vector<Eigen::MatrixXd> support;  // way matrices, shots x D
    Eigen::VectorXd query;
    int label = 0;  // 0..way-1, or way for junk
};

struct Gradients {
    Eigen::MatrixXd g;
    double b_distance = 0.0;
    double b_magnitude = 0.0;
};

double episode_loss(const ModelParams& params, const EpisodeData& episode,
                    Distance distance = Distance::euclidean);

// Analytic gradient of the episode loss; the chain runs through the softmax,
// the junk score, the distances, the prototype means, and the projection.
Gradients episode_gradient(const ModelParams& params, const EpisodeData& episode,
                           Distance distance = Distance::euclidean,
                           double* loss_out = nullptr);

void adam_step(AdamState& state, ModelParams& params, const Gradients& grad, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

inline double default_decay() { return std::pow(0.1, 1.0 / 32000.0); }

// lr(t) = initial_lr * decay^t, t counted in mini-batches from 0
inline double scheduled_lr(double initial_lr, double decay, std::int64_t t) {
    return initial_lr * std::pow(decay, static_cast<double>(t));
}

enum class ScalarInit : std::uint8_t {
    // b_distance fixed small and positive, b_magnitude chosen from the
    // distance statistics of a few calibration episodes so the initial junk
    // logit sits between the best- and worst-class scores
    calibrated = 0,
    zero = 1,
};

struct TrainConfig {
    double initial_lr = 5e-4;
    int total_minibatches = 32000;
    int minibatch_size = 8;
    double decay = default_decay();  // lr(t) = initial_lr * decay^t
    int eval_every = 500;
    int patience = 10;  // evaluations without improvement before stopping
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Distance distance = Distance::euclidean;
    int proj_dim = kDefaultProjDim;
    ScalarInit scalar_init = ScalarInit::calibrated;
    int calibration_episodes = 64;
    double calibration_b_distance = 0.25;
    int validation_episodes = 1024;
    int threads = 1;
};

struct ValidationPoint {
    std::int64_t step = 0;
    double loss = 0.0;
};

struct TrainReport {
    std::vector<double> loss_curve;  // mean episode loss per mini-batch
    std::vector<ValidationPoint> validation_curve;
    std::int64_t best_step = 0;
    double best_validation_loss = 0.0;
    std::int64_t steps_run = 0;
    ModelParams params;  // parameters with the best validation loss
    AdamState opt;       // optimizer state at that same step
};

using EpisodeStream = std::function<EpisodeData()>;

// Mini-batch training with per-batch LR decay and best-checkpoint early
// stopping. Validation happens on a frozen set drawn from val_stream before
// training starts, at step 0 and every eval_every batches. When the scalar
// init is calibrated, the first calibration_episodes draws of train_stream
// feed the calibration pass instead of training.
TrainReport train(const TrainConfig& config, int dim, EpisodeStream train_stream,
                  EpisodeStream val_stream);

struct GradcheckReport {
    bool pass = false;
    double max_rel_error = 0.0;
    std::string worst_param;  // "g", "b_distance" or "b_magnitude"
    int worst_row = -1;
    int worst_col = -1;
    int episodes_checked = 0;
};

// Compares episode_gradient to central finite differences entry by entry.
GradcheckReport gradcheck(const ModelParams& params,
                          const std::vector<EpisodeData>& episodes, double step,
                          double tolerance, Distance distance = Distance::euclidean);

}  // namespace protojunk
