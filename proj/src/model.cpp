#include "protojunk/model.hpp"

#include <string>

namespace protojunk {

namespace {

void check_query_dim(const ModelParams& params, const Eigen::VectorXd& e) {
    if (e.size() != params.dim()) {
        throw InvalidInput("embedding dimension " + std::to_string(e.size()) +
                           " does not match model dimension " + std::to_string(params.dim()));
    }
}

double distance_value(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Distance distance) {
    const double sq = (a - b).squaredNorm();
    return distance == Distance::euclidean ? std::sqrt(sq) : sq;
}

double magnitude_value(const Eigen::VectorXd& v, Distance distance) {
    return distance == Distance::euclidean ? v.norm() : v.squaredNorm();
}

}  // namespace

Eigen::VectorXd project(const ModelParams& params, const Eigen::VectorXd& e) {
    check_query_dim(params, e);
    return params.g.transpose() * e;
}

PrototypeSet compute_prototypes(
    const ModelParams& params,
    const std::vector<std::pair<int, Eigen::VectorXd>>& support) {
    if (support.empty()) throw InvalidInput("compute_prototypes: empty support set");
    int way = 0;
    for (const auto& [k, e] : support) {
        if (k < 0) throw InvalidInput("compute_prototypes: negative class index");
        way = std::max(way, k + 1);
    }
    PrototypeSet set;
    set.prototypes = Eigen::MatrixXd::Zero(way, params.proj_dim());
    set.counts.assign(way, 0);
    for (const auto& [k, e] : support) {
        set.prototypes.row(k) += project(params, e).transpose();
        set.counts[k] += 1;
    }
    for (int k = 0; k < way; ++k) {
        if (set.counts[k] == 0) {
            throw InvalidInput("compute_prototypes: class " + std::to_string(k) +
                               " has no support embeddings");
        }
        set.prototypes.row(k) /= static_cast<double>(set.counts[k]);
    }
    return set;
}

void update_prototype(PrototypeSet& set, int k, const Eigen::VectorXd& projected) {
    if (k < 0 || k >= set.way()) {
        throw InvalidInput("update_prototype: class index " + std::to_string(k) +
                           " out of range for way " + std::to_string(set.way()));
    }
    if (projected.size() != set.prototypes.cols()) {
        throw InvalidInput("update_prototype: projected dimension mismatch");
    }
    const double n = static_cast<double>(set.counts[k]);
    set.prototypes.row(k) = (set.prototypes.row(k) * n + projected.transpose()) / (n + 1.0);
    set.counts[k] += 1;
}

Eigen::VectorXd class_scores(const ModelParams& params, const PrototypeSet& set,
                             const Eigen::VectorXd& query, Distance distance) {
    const Eigen::VectorXd q = project(params, query);
    Eigen::VectorXd scores(set.way());
    for (Eigen::Index k = 0; k < set.way(); ++k) {
        scores[k] = -distance_value(q, set.prototypes.row(k).transpose(), distance);
    }
    return scores;
}

double junk_score(const ModelParams& params, const PrototypeSet& set,
                  const Eigen::VectorXd& query, Distance distance) {
    const Eigen::VectorXd q = project(params, query);
    double dist_sum = 0.0;
    for (Eigen::Index k = 0; k < set.way(); ++k) {
        dist_sum += distance_value(q, set.prototypes.row(k).transpose(), distance);
    }
    return params.b_distance * dist_sum + params.b_magnitude * magnitude_value(q, distance);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd ex = (logits.array() - mx).exp();
    return ex / ex.sum();
}

Prediction predict(const ModelParams& params, const PrototypeSet& set,
                   const Eigen::VectorXd& query, Distance distance) {
    Prediction out;
    out.class_scores = class_scores(params, set, query, distance);
    out.junk_score = junk_score(params, set, query, distance);
    Eigen::VectorXd logits(set.way() + 1);
    logits.head(set.way()) = out.class_scores;
    logits[set.way()] = out.junk_score;
    out.probabilities = softmax(logits);
    // argmax over logits: identical to argmax over probabilities (softmax is
    // strictly increasing) but immune to exp underflow at extreme logit gaps
    out.predicted_label = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[out.predicted_label]) out.predicted_label = static_cast<int>(i);
    }
    return out;
}

}  // namespace protojunk
