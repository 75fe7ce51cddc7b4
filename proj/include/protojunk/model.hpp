#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "protojunk/errors.hpp"

namespace protojunk {

enum class Distance : std::uint8_t { euclidean = 0, squared_euclidean = 1 };

// Trainable state: projection g plus the two junk-head scalars.
struct ModelParams {
    Eigen::MatrixXd g;  // D x P; projection of a query e is g^T e
    double b_distance = 0.0;
    double b_magnitude = 0.0;

    Eigen::Index dim() const { return g.rows(); }
    Eigen::Index proj_dim() const { return g.cols(); }
};

constexpr int kDefaultProjDim = 128;

// Per-class mean vectors in projected space, with shot counts so the mean can
// be extended one sample at a time in constant memory.
struct PrototypeSet {
    Eigen::MatrixXd prototypes;       // K x P, one row per class
    std::vector<std::int64_t> counts;  // shots folded into each prototype

    Eigen::Index way() const { return prototypes.rows(); }
};

struct Prediction {
    Eigen::VectorXd class_scores;   // K entries, -distance to each prototype
    double junk_score = 0.0;
    Eigen::VectorXd probabilities;  // K+1 entries ordered [class 0..K-1, junk]
    int predicted_label = 0;        // argmax; the value way() means junk
};

Eigen::VectorXd project(const ModelParams& params, const Eigen::VectorXd& e);

PrototypeSet compute_prototypes(
    const ModelParams& params,
    const std::vector<std::pair<int, Eigen::VectorXd>>& support);

// Folds one more projected sample into class k's running mean. Touches only
// that class, so the cost is independent of how many shots came before.
void update_prototype(PrototypeSet& set, int k, const Eigen::VectorXd& projected);

Eigen::VectorXd class_scores(const ModelParams& params, const PrototypeSet& set,
                             const Eigen::VectorXd& query,
                             Distance distance = Distance::euclidean);

// b_distance * sum of prototype distances + b_magnitude * projected-query
// magnitude. Under squared_euclidean both terms are squared.
double junk_score(const ModelParams& params, const PrototypeSet& set,
                  const Eigen::VectorXd& query,
                  Distance distance = Distance::euclidean);

Prediction predict(const ModelParams& params, const PrototypeSet& set,
                   const Eigen::VectorXd& query,
                   Distance distance = Distance::euclidean);

// Max-subtracted softmax shared by predict and the trainer.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace protojunk
