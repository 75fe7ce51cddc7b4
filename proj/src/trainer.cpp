#include "protojunk/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "protojunk/parallel.hpp"
#include "protojunk/rng.hpp"

namespace protojunk {

namespace {

constexpr double kNormFloor = 1e-12;

struct Forward {
    Eigen::MatrixXd means;  // way x D support means
    Eigen::MatrixXd diff;   // way x P, projected query minus prototypes
    Eigen::VectorXd d;      // way distances (configured form)
    double mag = 0.0;
    Eigen::VectorXd q;      // projected query
    Eigen::VectorXd probs;  // way+1
    double loss = 0.0;
};

Forward forward(const ModelParams& params, const EpisodeData& ep, Distance distance) {
    const int way = static_cast<int>(ep.support.size());
    if (way < 1) throw InvalidInput("episode has no support classes");
    if (ep.label < 0 || ep.label > way) {
        throw InvalidInput("episode label " + std::to_string(ep.label) +
                           " out of range for way " + std::to_string(way));
    }
    if (ep.query.size() != params.dim()) {
        throw InvalidInput("episode query dimension mismatch");
    }
    Forward f;
    f.means.resize(way, params.dim());
    for (int k = 0; k < way; ++k) {
        if (ep.support[k].rows() < 1 || ep.support[k].cols() != params.dim()) {
            throw InvalidInput("episode support for class " + std::to_string(k) +
                               " is empty or mismatched");
        }
        f.means.row(k) = ep.support[k].colwise().mean();
    }
    f.q = params.g.transpose() * ep.query;
    const Eigen::MatrixXd protos = f.means * params.g;  // way x P
    f.diff = (-protos).rowwise() + f.q.transpose();
    f.d.resize(way);
    double dist_sum = 0.0;
    for (int k = 0; k < way; ++k) {
        const double sq = f.diff.row(k).squaredNorm();
        f.d[k] = distance == Distance::euclidean ? std::sqrt(sq) : sq;
        dist_sum += f.d[k];
    }
    f.mag = distance == Distance::euclidean ? f.q.norm() : f.q.squaredNorm();

    Eigen::VectorXd logits(way + 1);
    logits.head(way) = -f.d;
    logits[way] = params.b_distance * dist_sum + params.b_magnitude * f.mag;
    const double mx = logits.maxCoeff();
    const Eigen::ArrayXd ex = (logits.array() - mx).exp();
    const double lse = mx + std::log(ex.sum());
    f.probs = (ex / ex.sum()).matrix();
    f.loss = lse - logits[ep.label];
    return f;
}

}  // namespace

double episode_loss(const ModelParams& params, const EpisodeData& episode,
                    Distance distance) {
    return forward(params, episode, distance).loss;
}

Gradients episode_gradient(const ModelParams& params, const EpisodeData& episode,
                           Distance distance, double* loss_out) {
    const Forward f = forward(params, episode, distance);
    const int way = static_cast<int>(episode.support.size());
    if (loss_out) *loss_out = f.loss;

    Eigen::VectorXd a = f.probs;
    a[episode.label] -= 1.0;
    const double aJ = a[way];

    Gradients grad;
    grad.b_distance = aJ * f.d.sum();
    grad.b_magnitude = aJ * f.mag;

    // dL/d(distance_k) folds the class logit and the junk logit's distance sum
    Eigen::VectorXd dd(way);
    for (int k = 0; k < way; ++k) dd[k] = -a[k] + aJ * params.b_distance;

    Eigen::VectorXd dq = Eigen::VectorXd::Zero(params.proj_dim());
    Eigen::MatrixXd dp(way, params.proj_dim());
    for (int k = 0; k < way; ++k) {
        Eigen::VectorXd u;
        if (distance == Distance::euclidean) {
            u = f.d[k] > kNormFloor ? (f.diff.row(k) / f.d[k]).transpose()
                                    : Eigen::VectorXd::Zero(params.proj_dim()).eval();
        } else {
            u = 2.0 * f.diff.row(k).transpose();
        }
        dq += dd[k] * u;
        dp.row(k) = -dd[k] * u.transpose();
    }
    if (distance == Distance::euclidean) {
        if (f.mag > kNormFloor) dq += (aJ * params.b_magnitude / f.mag) * f.q;
    } else {
        dq += (2.0 * aJ * params.b_magnitude) * f.q;
    }

    grad.g = episode.query * dq.transpose() + f.means.transpose() * dp;
    return grad;
}

void adam_step(AdamState& state, ModelParams& params, const Gradients& grad, double lr,
               double beta1, double beta2, double epsilon) {
    if (state.m_g.rows() != params.g.rows() || state.m_g.cols() != params.g.cols()) {
        throw InvalidInput("adam_step: optimizer state shape does not match params");
    }
    if (!grad.g.allFinite() || !std::isfinite(grad.b_distance) ||
        !std::isfinite(grad.b_magnitude)) {
        throw Error("adam_step: non-finite gradient at optimizer step " +
                    std::to_string(state.step + 1));
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    state.m_g = beta1 * state.m_g + (1.0 - beta1) * grad.g;
    state.v_g = beta2 * state.v_g + (1.0 - beta2) * grad.g.array().square().matrix();
    params.g -= (lr * (state.m_g / bc1).array() /
                 ((state.v_g / bc2).array().sqrt() + epsilon))
                    .matrix();

    auto scalar = [&](double& m, double& v, double g, double& p) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + epsilon);
    };
    scalar(state.m_bd, state.v_bd, grad.b_distance, params.b_distance);
    scalar(state.m_bm, state.v_bm, grad.b_magnitude, params.b_magnitude);
}

namespace {

double validation_loss(const ModelParams& params, const std::vector<EpisodeData>& episodes,
                       Distance distance, int threads) {
    std::vector<double> losses(episodes.size());
    parallel_for(episodes.size(), threads, [&](std::size_t i) {
        losses[i] = episode_loss(params, episodes[i], distance);
    });
    double total = 0.0;
    for (double l : losses) total += l;  // fixed order
    return total / static_cast<double>(episodes.size());
}

void calibrate_scalars(ModelParams& params, const TrainConfig& config,
                       EpisodeStream& train_stream) {
    double sum_d = 0.0, sum_mag = 0.0, sum_min = 0.0, sum_max = 0.0;
    const int n = std::max(1, config.calibration_episodes);
    for (int i = 0; i < n; ++i) {
        const EpisodeData ep = train_stream();
        const int way = static_cast<int>(ep.support.size());
        const Eigen::VectorXd q = params.g.transpose() * ep.query;
        double dmin = 0.0, dmax = 0.0, dsum = 0.0;
        for (int k = 0; k < way; ++k) {
            const double sq =
                (q - params.g.transpose() * ep.support[k].colwise().mean().transpose())
                    .squaredNorm();
            const double d = config.distance == Distance::euclidean ? std::sqrt(sq) : sq;
            dsum += d;
            if (k == 0 || d < dmin) dmin = d;
            if (k == 0 || d > dmax) dmax = d;
        }
        sum_d += dsum;
        sum_min += dmin;
        sum_max += dmax;
        sum_mag += config.distance == Distance::euclidean ? q.norm() : q.squaredNorm();
    }
    const double A = sum_d / n;
    const double R = sum_mag / n;
    const double mid = 0.5 * (sum_min + sum_max) / n;
    params.b_distance = config.calibration_b_distance;
    params.b_magnitude = R > kNormFloor ? -(params.b_distance * A + mid) / R : 0.0;
}

}  // namespace

TrainReport train(const TrainConfig& config, int dim, EpisodeStream train_stream,
                  EpisodeStream val_stream) {
    if (dim < 1) throw InvalidInput("train: dimension must be >= 1");
    if (config.initial_lr <= 0.0) throw InvalidInput("train: initial_lr must be > 0");
    if (config.minibatch_size < 1) throw InvalidInput("train: minibatch_size must be >= 1");
    if (config.decay <= 0.0 || config.decay > 1.0) {
        throw InvalidInput("train: decay must be in (0, 1]");
    }
    if (config.proj_dim < 1) throw InvalidInput("train: proj_dim must be >= 1");
    if (config.total_minibatches < 0) {
        throw InvalidInput("train: total_minibatches must be >= 0");
    }
    if (config.eval_every < 1) throw InvalidInput("train: eval_every must be >= 1");
    if (config.validation_episodes < 1) {
        throw InvalidInput("train: validation_episodes must be >= 1");
    }

    ModelParams params;
    {
        Rng init_rng(derive_seed(config.seed, 0x696e6974));  // "init"
        params.g.resize(dim, config.proj_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        for (Eigen::Index i = 0; i < params.g.rows(); ++i) {
            for (Eigen::Index j = 0; j < params.g.cols(); ++j) {
                params.g(i, j) = (2.0 * init_rng.real01() - 1.0) * scale;
            }
        }
    }
    if (config.scalar_init == ScalarInit::calibrated) {
        calibrate_scalars(params, config, train_stream);
    }

    std::vector<EpisodeData> val_set;
    val_set.reserve(config.validation_episodes);
    for (int i = 0; i < config.validation_episodes; ++i) val_set.push_back(val_stream());

    AdamState opt;
    opt.m_g = Eigen::MatrixXd::Zero(dim, config.proj_dim);
    opt.v_g = Eigen::MatrixXd::Zero(dim, config.proj_dim);

    TrainReport report;
    report.loss_curve.reserve(config.total_minibatches);

    double best_loss = validation_loss(params, val_set, config.distance, config.threads);
    report.validation_curve.push_back({0, best_loss});
    report.best_step = 0;
    ModelParams best_params = params;
    AdamState best_opt = opt;
    int evals_since_best = 0;

    std::vector<EpisodeData> batch(config.minibatch_size);
    std::vector<Gradients> grads(config.minibatch_size);
    std::vector<double> losses(config.minibatch_size);

    std::int64_t step = 0;
    for (; step < config.total_minibatches; ++step) {
        const double lr = scheduled_lr(config.initial_lr, config.decay, step);
        for (int b = 0; b < config.minibatch_size; ++b) batch[b] = train_stream();
        parallel_for(static_cast<std::size_t>(config.minibatch_size), config.threads,
                     [&](std::size_t b) {
                         grads[b] = episode_gradient(params, batch[b], config.distance,
                                                     &losses[b]);
                     });
        Gradients mean = grads[0];
        double batch_loss = losses[0];
        for (int b = 1; b < config.minibatch_size; ++b) {
            mean.g += grads[b].g;
            mean.b_distance += grads[b].b_distance;
            mean.b_magnitude += grads[b].b_magnitude;
            batch_loss += losses[b];
        }
        const double inv = 1.0 / static_cast<double>(config.minibatch_size);
        mean.g *= inv;
        mean.b_distance *= inv;
        mean.b_magnitude *= inv;
        batch_loss *= inv;
        if (!std::isfinite(batch_loss)) {
            throw Error("training aborted: non-finite loss at mini-batch " +
                        std::to_string(step));
        }
        report.loss_curve.push_back(batch_loss);
        adam_step(opt, params, mean, lr, config.adam_beta1, config.adam_beta2,
                  config.adam_epsilon);

        if ((step + 1) % config.eval_every == 0) {
            const double vloss =
                validation_loss(params, val_set, config.distance, config.threads);
            report.validation_curve.push_back({step + 1, vloss});
            if (vloss < best_loss) {
                best_loss = vloss;
                report.best_step = step + 1;
                best_params = params;
                best_opt = opt;
                evals_since_best = 0;
            } else if (++evals_since_best >= config.patience) {
                ++step;
                break;
            }
        }
    }

    report.steps_run = step;
    report.best_validation_loss = best_loss;
    report.params = std::move(best_params);
    report.opt = std::move(best_opt);
    return report;
}

GradcheckReport gradcheck(const ModelParams& params,
                          const std::vector<EpisodeData>& episodes, double step,
                          double tolerance, Distance distance) {
    if (step <= 0.0) throw InvalidInput("gradcheck: step must be > 0");
    if (episodes.empty()) throw InvalidInput("gradcheck: no episodes");
    GradcheckReport report;
    report.episodes_checked = static_cast<int>(episodes.size());

    auto consider = [&](double analytic, double numeric, const char* name, int r, int c) {
        const double rel =
            std::abs(analytic - numeric) /
            std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = name;
            report.worst_row = r;
            report.worst_col = c;
        }
    };

    for (const auto& ep : episodes) {
        const Gradients analytic = episode_gradient(params, ep, distance);
        ModelParams probe = params;
        for (Eigen::Index i = 0; i < params.g.rows(); ++i) {
            for (Eigen::Index j = 0; j < params.g.cols(); ++j) {
                const double saved = probe.g(i, j);
                probe.g(i, j) = saved + step;
                const double hi = episode_loss(probe, ep, distance);
                probe.g(i, j) = saved - step;
                const double lo = episode_loss(probe, ep, distance);
                probe.g(i, j) = saved;
                consider(analytic.g(i, j), (hi - lo) / (2.0 * step), "g",
                         static_cast<int>(i), static_cast<int>(j));
            }
        }
        {
            ModelParams p2 = params;
            p2.b_distance += step;
            const double hi = episode_loss(p2, ep, distance);
            p2.b_distance -= 2.0 * step;
            const double lo = episode_loss(p2, ep, distance);
            consider(analytic.b_distance, (hi - lo) / (2.0 * step), "b_distance", -1, -1);
        }
        {
            ModelParams p2 = params;
            p2.b_magnitude += step;
            const double hi = episode_loss(p2, ep, distance);
            p2.b_magnitude -= 2.0 * step;
            const double lo = episode_loss(p2, ep, distance);
            consider(analytic.b_magnitude, (hi - lo) / (2.0 * step), "b_magnitude", -1, -1);
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace protojunk
