// Python surface of the engine: model math, episodic sampling, training,
// evaluation, metrics, the Gaussian simulator, and the file formats.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "protojunk/io.hpp"
#include "protojunk/metrics.hpp"
#include "protojunk/model.hpp"
#include "protojunk/rng.hpp"
#include "protojunk/runner.hpp"
#include "protojunk/sampler.hpp"
#include "protojunk/simulator.hpp"
#include "protojunk/synthetic.hpp"
#include "protojunk/trainer.hpp"

namespace py = pybind11;
using namespace protojunk;

PYBIND11_MODULE(_core, m) {
    m.doc() = "few-shot prototype classifier with a learned junk head";

    auto err = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidInput>(m, "InvalidInput", err);
    auto fmt = py::register_exception<FormatError>(m, "FormatError", err);
    py::register_exception<ParseError>(m, "ParseError", fmt);
    py::register_exception<CorruptionError>(m, "CorruptionError", fmt);
    py::register_exception<IntegrityError>(m, "IntegrityError", err);

    py::enum_<Distance>(m, "Distance")
        .value("euclidean", Distance::euclidean)
        .value("squared_euclidean", Distance::squared_euclidean);

    py::enum_<ScalarInit>(m, "ScalarInit")
        .value("calibrated", ScalarInit::calibrated)
        .value("zero", ScalarInit::zero);

    py::enum_<Partition>(m, "Partition")
        .value("train", Partition::train)
        .value("val", Partition::val)
        .value("test", Partition::test)
        .value("ignored", Partition::ignored);

    // ---- model ----

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init<>())
        .def(py::init([](Eigen::MatrixXd g, double b_distance, double b_magnitude) {
                 return ModelParams{std::move(g), b_distance, b_magnitude};
             }),
             py::arg("g"), py::arg("b_distance") = 0.0, py::arg("b_magnitude") = 0.0)
        .def_readwrite("g", &ModelParams::g)
        .def_readwrite("b_distance", &ModelParams::b_distance)
        .def_readwrite("b_magnitude", &ModelParams::b_magnitude)
        .def_property_readonly("dim", &ModelParams::dim)
        .def_property_readonly("proj_dim", &ModelParams::proj_dim);

    m.attr("DEFAULT_PROJ_DIM") = kDefaultProjDim;

    py::class_<PrototypeSet>(m, "PrototypeSet")
        .def_readwrite("prototypes", &PrototypeSet::prototypes)
        .def_readwrite("counts", &PrototypeSet::counts)
        .def_property_readonly("way", &PrototypeSet::way);

    py::class_<Prediction>(m, "Prediction")
        .def_readonly("class_scores", &Prediction::class_scores)
        .def_readonly("junk_score", &Prediction::junk_score)
        .def_readonly("probabilities", &Prediction::probabilities)
        .def_readonly("predicted_label", &Prediction::predicted_label);

    m.def("project", &project, py::arg("params"), py::arg("e"),
          "g^T e, the projected embedding");
    m.def("compute_prototypes", &compute_prototypes, py::arg("params"), py::arg("support"),
          "per-class means of projected (label, vector) support pairs");
    m.def("update_prototype", &update_prototype, py::arg("prototypes"), py::arg("k"),
          py::arg("projected"), "fold one projected sample into class k's running mean");
    m.def("class_scores", &class_scores, py::arg("params"), py::arg("prototypes"),
          py::arg("query"), py::arg("distance") = Distance::euclidean);
    m.def("junk_score", &junk_score, py::arg("params"), py::arg("prototypes"), py::arg("query"),
          py::arg("distance") = Distance::euclidean);
    m.def("predict", &predict, py::arg("params"), py::arg("prototypes"), py::arg("query"),
          py::arg("distance") = Distance::euclidean);
    m.def("softmax", &softmax, py::arg("logits"));

    // ---- file formats ----

    py::class_<EmbeddingStore>(m, "EmbeddingStore")
        .def_property_readonly("dim", [](const EmbeddingStore& s) { return s.dim; })
        .def_property_readonly("ids", [](const EmbeddingStore& s) { return s.ids; })
        .def_property_readonly("values", [](const EmbeddingStore& s) { return s.values; })
        .def_property_readonly("count", &EmbeddingStore::count)
        .def("has", &EmbeddingStore::has, py::arg("id"))
        .def("embedding", &EmbeddingStore::embedding, py::arg("id"));

    m.def("make_store", &make_store, py::arg("dim"), py::arg("ids"), py::arg("vectors"));
    m.def("write_embeddings", &write_embeddings, py::arg("store"), py::arg("path"));
    m.def("read_embeddings", &read_embeddings, py::arg("path"));

    py::class_<ManifestRecord>(m, "ManifestRecord")
        .def(py::init<>())
        .def(py::init([](std::uint64_t id, std::vector<std::int64_t> categories,
                         std::string source) {
                 return ManifestRecord{id, std::move(categories), std::move(source)};
             }),
             py::arg("id"), py::arg("categories"), py::arg("source"))
        .def_readwrite("id", &ManifestRecord::id)
        .def_readwrite("categories", &ManifestRecord::categories)
        .def_readwrite("source", &ManifestRecord::source);

    py::class_<Manifest>(m, "Manifest")
        .def(py::init<>())
        .def(py::init([](std::vector<ManifestRecord> records) {
                 Manifest man;
                 man.records = std::move(records);
                 return man;
             }),
             py::arg("records"))
        .def_readwrite("records", &Manifest::records);

    m.def("read_manifest", &read_manifest, py::arg("path"));
    m.def("write_manifest", &write_manifest, py::arg("manifest"), py::arg("path"));
    m.def("merge_manifests", &merge_manifests, py::arg("train_manifest"),
          py::arg("val_manifest"));

    py::class_<AdamState>(m, "AdamState")
        .def(py::init<>())
        .def_readwrite("m_g", &AdamState::m_g)
        .def_readwrite("v_g", &AdamState::v_g)
        .def_readwrite("m_bd", &AdamState::m_bd)
        .def_readwrite("v_bd", &AdamState::v_bd)
        .def_readwrite("m_bm", &AdamState::m_bm)
        .def_readwrite("v_bm", &AdamState::v_bm)
        .def_readwrite("step", &AdamState::step);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def(py::init<>())
        .def_readwrite("params", &Checkpoint::params)
        .def_readwrite("opt", &Checkpoint::opt)
        .def_readwrite("train_step", &Checkpoint::train_step)
        .def_readwrite("distance", &Checkpoint::distance);

    m.def("write_checkpoint", &write_checkpoint, py::arg("checkpoint"), py::arg("path"));
    m.def("read_checkpoint", &read_checkpoint, py::arg("path"));

    // ---- splits and episodic sampling ----

    py::class_<ClassSplit>(m, "ClassSplit")
        .def(py::init<>())
        .def_readwrite("train_classes", &ClassSplit::train_classes)
        .def_readwrite("val_classes", &ClassSplit::val_classes)
        .def_readwrite("test_classes", &ClassSplit::test_classes)
        .def_readwrite("split_id", &ClassSplit::split_id)
        .def_readwrite("seed", &ClassSplit::seed);

    m.def("make_splits", &make_splits, py::arg("categories"), py::arg("n_splits"),
          py::arg("sizes"), py::arg("seed"));
    m.def("write_split", &write_split, py::arg("split"), py::arg("path"));
    m.def("read_split", &read_split, py::arg("path"));

    py::class_<DatasetAssignment>(m, "DatasetAssignment")
        .def_property_readonly("partition_of",
                               [](const DatasetAssignment& a) { return a.partition_of; })
        .def_property_readonly("categories_of",
                               [](const DatasetAssignment& a) { return a.categories_of; })
        .def("pool", &DatasetAssignment::pool, py::arg("partition"),
             "class id -> sorted image ids for one partition");

    m.def("assign_images",
          py::overload_cast<const ClassSplit&, const Manifest&, std::uint64_t>(&assign_images),
          py::arg("split"), py::arg("manifest"), py::arg("seed"));
    m.def("assign_images",
          py::overload_cast<const ClassSplit&, const Manifest&, const Manifest&, std::uint64_t>(
              &assign_images),
          py::arg("split"), py::arg("train_manifest"), py::arg("val_manifest"), py::arg("seed"));
    m.def("write_assignment", &write_assignment, py::arg("assignment"), py::arg("path"));
    m.def("read_assignment", &read_assignment, py::arg("path"));

    py::class_<Episode>(m, "Episode")
        .def_readonly("way", &Episode::way)
        .def_readonly("shots", &Episode::shots)
        .def_readonly("classes", &Episode::classes)
        .def_readonly("support", &Episode::support)
        .def_readonly("query", &Episode::query)
        .def_readonly("label", &Episode::label)
        .def_readonly("junk_enabled", &Episode::junk_enabled);

    py::class_<EpisodeSampler>(m, "EpisodeSampler")
        .def(py::init<const DatasetAssignment&, Partition, int, int, double, std::uint64_t,
                      std::optional<Partition>>(),
             py::arg("assignment"), py::arg("partition"), py::arg("way"), py::arg("shots"),
             py::arg("junk_probability"), py::arg("seed"),
             py::arg("junk_pool") = std::nullopt, py::keep_alive<1, 2>())
        .def("next", &EpisodeSampler::next);

    // ---- training ----

    py::class_<EpisodeData>(m, "EpisodeData")
        .def(py::init<>())
        .def_readwrite("support", &EpisodeData::support)
        .def_readwrite("query", &EpisodeData::query)
        .def_readwrite("label", &EpisodeData::label);

    py::class_<Gradients>(m, "Gradients")
        .def_readonly("g", &Gradients::g)
        .def_readonly("b_distance", &Gradients::b_distance)
        .def_readonly("b_magnitude", &Gradients::b_magnitude);

    m.def("episode_loss", &episode_loss, py::arg("params"), py::arg("episode"),
          py::arg("distance") = Distance::euclidean);
    m.def(
        "episode_gradient",
        [](const ModelParams& params, const EpisodeData& episode, Distance distance) {
            double loss = 0.0;
            Gradients grads = episode_gradient(params, episode, distance, &loss);
            return py::make_tuple(std::move(grads), loss);
        },
        py::arg("params"), py::arg("episode"), py::arg("distance") = Distance::euclidean,
        "returns (gradients, loss)");
    m.def("adam_step", &adam_step, py::arg("state"), py::arg("params"), py::arg("grad"),
          py::arg("lr"), py::arg("beta1") = 0.9, py::arg("beta2") = 0.999,
          py::arg("epsilon") = 1e-8);
    m.def("default_decay", &default_decay);
    m.def("scheduled_lr", &scheduled_lr, py::arg("initial_lr"), py::arg("decay"), py::arg("t"));
    m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("tag"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("initial_lr", &TrainConfig::initial_lr)
        .def_readwrite("total_minibatches", &TrainConfig::total_minibatches)
        .def_readwrite("minibatch_size", &TrainConfig::minibatch_size)
        .def_readwrite("decay", &TrainConfig::decay)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("adam_beta1", &TrainConfig::adam_beta1)
        .def_readwrite("adam_beta2", &TrainConfig::adam_beta2)
        .def_readwrite("adam_epsilon", &TrainConfig::adam_epsilon)
        .def_readwrite("distance", &TrainConfig::distance)
        .def_readwrite("proj_dim", &TrainConfig::proj_dim)
        .def_readwrite("scalar_init", &TrainConfig::scalar_init)
        .def_readwrite("calibration_episodes", &TrainConfig::calibration_episodes)
        .def_readwrite("calibration_b_distance", &TrainConfig::calibration_b_distance)
        .def_readwrite("validation_episodes", &TrainConfig::validation_episodes)
        .def_readwrite("threads", &TrainConfig::threads);

    py::class_<ValidationPoint>(m, "ValidationPoint")
        .def_readonly("step", &ValidationPoint::step)
        .def_readonly("loss", &ValidationPoint::loss);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("loss_curve", &TrainReport::loss_curve)
        .def_readonly("validation_curve", &TrainReport::validation_curve)
        .def_readonly("best_step", &TrainReport::best_step)
        .def_readonly("best_validation_loss", &TrainReport::best_validation_loss)
        .def_readonly("steps_run", &TrainReport::steps_run)
        .def_readonly("params", &TrainReport::params)
        .def_readonly("opt", &TrainReport::opt);

    m.def("train", &train, py::arg("config"), py::arg("dim"), py::arg("train_stream"),
          py::arg("val_stream"),
          "mini-batch training over callables that yield EpisodeData");

    py::class_<GradcheckReport>(m, "GradcheckReport")
        .def_readonly("ok", &GradcheckReport::pass)
        .def_readonly("max_rel_error", &GradcheckReport::max_rel_error)
        .def_readonly("worst_param", &GradcheckReport::worst_param)
        .def_readonly("worst_row", &GradcheckReport::worst_row)
        .def_readonly("worst_col", &GradcheckReport::worst_col)
        .def_readonly("episodes_checked", &GradcheckReport::episodes_checked);

    m.def("gradcheck", &gradcheck, py::arg("params"), py::arg("episodes"), py::arg("step"),
          py::arg("tolerance"), py::arg("distance") = Distance::euclidean);

    // ---- metrics ----

    py::class_<EvalRecord>(m, "EvalRecord")
        .def(py::init<>())
        .def(py::init([](int true_label, int predicted_label, int way, double junk_score) {
                 return EvalRecord{true_label, predicted_label, way, junk_score};
             }),
             py::arg("true_label"), py::arg("predicted_label"), py::arg("way"),
             py::arg("junk_score"))
        .def_readwrite("true_label", &EvalRecord::true_label)
        .def_readwrite("predicted_label", &EvalRecord::predicted_label)
        .def_readwrite("way", &EvalRecord::way)
        .def_readwrite("junk_score", &EvalRecord::junk_score);

    py::class_<StratumStat>(m, "StratumStat")
        .def_readonly("n", &StratumStat::n)
        .def_readonly("value", &StratumStat::value)
        .def_readonly("ci_low", &StratumStat::ci_low)
        .def_readonly("ci_high", &StratumStat::ci_high);

    py::class_<MetricsReport>(m, "MetricsReport")
        .def_readonly("total", &MetricsReport::total)
        .def_readonly("non_junk", &MetricsReport::non_junk)
        .def_readonly("junk", &MetricsReport::junk)
        .def_readonly("auc", &MetricsReport::auc);

    m.def("accuracy_report", &accuracy_report, py::arg("records"));
    m.def("auc", &auc, py::arg("records"));
    m.def("auc_pair_counting", &auc_pair_counting, py::arg("records"));
    m.def("full_report", &full_report, py::arg("records"));

    // ---- simulator and synthetic data ----

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("n_classes", &SimConfig::n_classes)
        .def_readwrite("way", &SimConfig::way)
        .def_readwrite("dim", &SimConfig::dim)
        .def_readwrite("sigma", &SimConfig::sigma)
        .def_readwrite("mean_scale", &SimConfig::mean_scale)
        .def_readwrite("shots", &SimConfig::shots)
        .def_readwrite("episodes_per_point", &SimConfig::episodes_per_point)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("threads", &SimConfig::threads);

    py::class_<SimPoint>(m, "SimPoint")
        .def_readonly("shots", &SimPoint::shots)
        .def_readonly("accuracy", &SimPoint::accuracy)
        .def_readonly("ci_half", &SimPoint::ci_half)
        .def_readonly("episodes", &SimPoint::episodes);

    py::class_<SimCurve>(m, "SimCurve").def_readonly("points", &SimCurve::points);

    m.def("simulate_curve", &simulate_curve, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("expected_sq_distance", &expected_sq_distance, py::arg("shots"), py::arg("sigma"),
          py::arg("dim"), py::arg("trials"), py::arg("seed"), py::arg("threads") = 1,
          py::call_guard<py::gil_scoped_release>());

    py::class_<SyntheticDataset>(m, "SyntheticDataset")
        .def_readonly("store", &SyntheticDataset::store)
        .def_readonly("manifest", &SyntheticDataset::manifest)
        .def_readonly("split", &SyntheticDataset::split);

    m.def("make_gaussian_dataset", &make_gaussian_dataset, py::arg("n_categories"),
          py::arg("dim"), py::arg("sigma"), py::arg("separation"),
          py::arg("images_per_category"), py::arg("split_sizes"), py::arg("seed"));
    m.def("random_episodes", &random_episodes, py::arg("seed"), py::arg("count"),
          py::arg("dim"), py::arg("way"), py::arg("shots_choices"));

    // ---- pipeline runner ----

    m.def("resolve_episode", &resolve_episode, py::arg("episode"), py::arg("store"));
    m.def("run_assignment", &run_assignment, py::arg("split"), py::arg("manifest"),
          py::arg("run_seed"));

    py::class_<TrainRunOptions>(m, "TrainRunOptions")
        .def(py::init<>())
        .def_readwrite("way", &TrainRunOptions::way)
        .def_readwrite("shots", &TrainRunOptions::shots)
        .def_readwrite("junk_probability", &TrainRunOptions::junk_probability)
        .def_readwrite("train", &TrainRunOptions::train)
        .def_readwrite("val_junk_pool", &TrainRunOptions::val_junk_pool);

    py::class_<TrainRunResult>(m, "TrainRunResult")
        .def_readonly("report", &TrainRunResult::report)
        .def_readonly("assignment", &TrainRunResult::assignment);

    m.def("run_training", &run_training, py::arg("store"), py::arg("manifest"),
          py::arg("split"), py::arg("options"), py::call_guard<py::gil_scoped_release>());

    py::class_<EvalRunOptions>(m, "EvalRunOptions")
        .def(py::init<>())
        .def_readwrite("partition", &EvalRunOptions::partition)
        .def_readwrite("way", &EvalRunOptions::way)
        .def_readwrite("shots", &EvalRunOptions::shots)
        .def_readwrite("junk_probability", &EvalRunOptions::junk_probability)
        .def_readwrite("episodes", &EvalRunOptions::episodes)
        .def_readwrite("seed", &EvalRunOptions::seed)
        .def_readwrite("threads", &EvalRunOptions::threads)
        .def_readwrite("junk_pool", &EvalRunOptions::junk_pool);

    m.def("run_eval", &run_eval, py::arg("store"), py::arg("assignment"), py::arg("params"),
          py::arg("distance"), py::arg("options"),
          py::call_guard<py::gil_scoped_release>());
}
