// Command-line front end: split / train / eval / simulate / gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 failed check.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "protojunk/io.hpp"
#include "protojunk/metrics.hpp"
#include "protojunk/rng.hpp"
#include "protojunk/runner.hpp"
#include "protojunk/sampler.hpp"
#include "protojunk/simulator.hpp"
#include "protojunk/synthetic.hpp"
#include "protojunk/trainer.hpp"

namespace {

using nlohmann::json;
using namespace protojunk;

// flag-level mistakes that slip past CLI11's validators
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Expands `--config FILE` into `--key=value` tokens spliced in right after the
// subcommand name. Keys mirror the long flag names; keys the command line sets
// explicitly are dropped, so flags override the file.
std::vector<std::string> expand_config_args(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            break;
        }
    }
    if (path.empty()) return args;

    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + " is not key=value");
        }
        const std::string key = trim(text.substr(0, eq));
        if (key.empty()) {
            throw UsageError("config line " + std::to_string(lineno) + " has an empty key");
        }
        if (key == "config") continue;
        const std::string value = trim(text.substr(eq + 1));
        for (auto& e : entries) {
            if (e.first == key) e.first.clear();  // later lines win
        }
        entries.emplace_back(key, value);
    }

    std::vector<std::string> out;
    out.push_back(args[0]);
    for (const auto& [key, value] : entries) {
        if (key.empty()) continue;
        const std::string flag = "--" + key;
        bool overridden = false;
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) {
                overridden = true;
                break;
            }
        }
        if (!overridden) out.push_back(flag + "=" + value);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    out << text;
    if (!out) throw InvalidInput("write failed for " + path);
}

void write_json_file(const std::string& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

Distance distance_from_flag(const std::string& name) {
    return name == "squared_euclidean" ? Distance::squared_euclidean : Distance::euclidean;
}

// ---------------------------------------------------------------- split ----

struct SplitOpts {
    std::int64_t categories = 0;
    int n_splits = 12;
    std::vector<std::int64_t> sizes = {57, 8, 15};
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_split(const SplitOpts& o) {
    if (o.sizes.size() != 3) throw UsageError("--sizes needs exactly three values: train,val,test");
    std::int64_t total = 0;
    for (std::int64_t s : o.sizes) {
        if (s < 0) throw UsageError("--sizes entries must be >= 0");
        total += s;
    }
    if (total > o.categories) {
        throw UsageError("--sizes sum to " + std::to_string(total) + " but only " +
                         std::to_string(o.categories) + " categories exist");
    }

    std::vector<std::int64_t> categories(static_cast<std::size_t>(o.categories));
    for (std::size_t i = 0; i < categories.size(); ++i) categories[i] = static_cast<std::int64_t>(i);
    const auto splits =
        make_splits(categories, o.n_splits, {o.sizes[0], o.sizes[1], o.sizes[2]}, o.seed);
    for (const auto& split : splits) {
        write_split(split, o.out + std::to_string(split.split_id) + ".json");
    }
    std::printf("wrote %d split files: %s0.json .. %s%d.json\n", o.n_splits, o.out.c_str(),
                o.out.c_str(), o.n_splits - 1);
    return 0;
}

// ---------------------------------------------------------------- synth ----

struct SynthOpts {
    int categories = 20;
    int dim = 32;
    double sigma = 1.0;
    double separation = 10.0;
    int images_per_category = 60;
    std::vector<std::int64_t> sizes = {14, 3, 3};
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthOpts& o) {
    if (o.sizes.size() != 3) throw UsageError("--sizes needs exactly three values: train,val,test");
    std::int64_t total = 0;
    for (std::int64_t s : o.sizes) {
        if (s < 0) throw UsageError("--sizes entries must be >= 0");
        total += s;
    }
    if (total != o.categories) {
        throw UsageError("--sizes must sum to --categories for a synthetic dataset");
    }
    if (o.categories > o.dim) throw UsageError("--categories cannot exceed --dim");

    const SyntheticDataset data =
        make_gaussian_dataset(o.categories, o.dim, o.sigma, o.separation,
                              o.images_per_category, {o.sizes[0], o.sizes[1], o.sizes[2]}, o.seed);
    write_embeddings(data.store, o.out + ".bin");
    Manifest train_m, val_m;
    for (const auto& rec : data.manifest.records) {
        (rec.source == "train" ? train_m : val_m).records.push_back(rec);
    }
    write_manifest(train_m, o.out + ".train.jsonl");
    write_manifest(val_m, o.out + ".val.jsonl");
    write_manifest(data.manifest, o.out + ".all.jsonl");
    write_split(data.split, o.out + ".split.json");
    std::printf("wrote %s.bin, %s.train.jsonl, %s.val.jsonl, %s.all.jsonl, %s.split.json\n",
                o.out.c_str(), o.out.c_str(), o.out.c_str(), o.out.c_str(), o.out.c_str());
    return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainOpts {
    std::string embeddings, manifest_train, manifest_val, split, out;
    int way = 3;
    int shots = 5;
    double junk_prob = 0.25;
    std::uint64_t seed = 0;
    double lr = 5e-4;
    int minibatches = 32000;
    int minibatch_size = 8;
    double decay = default_decay();
    int eval_every = 500;
    int patience = 10;
    int proj_dim = kDefaultProjDim;
    std::string distance = "euclidean";
    std::string scalar_init = "calibrated";
    int calibration_episodes = 64;
    int validation_episodes = 1024;
    std::string val_junk_pool;  // empty = same partition
    int threads = 1;
};

json train_config_json(const TrainOpts& o) {
    json c;
    c["embeddings"] = o.embeddings;
    c["manifest-train"] = o.manifest_train;
    c["manifest-val"] = o.manifest_val;
    c["split"] = o.split;
    c["out"] = o.out;
    c["way"] = o.way;
    c["shots"] = o.shots;
    c["junk-prob"] = o.junk_prob;
    c["lr"] = o.lr;
    c["minibatches"] = o.minibatches;
    c["minibatch-size"] = o.minibatch_size;
    c["decay"] = o.decay;
    c["eval-every"] = o.eval_every;
    c["patience"] = o.patience;
    c["proj-dim"] = o.proj_dim;
    c["distance"] = o.distance;
    c["scalar-init"] = o.scalar_init;
    c["calibration-episodes"] = o.calibration_episodes;
    c["validation-episodes"] = o.validation_episodes;
    c["val-junk-pool"] = o.val_junk_pool.empty() ? json(nullptr) : json(o.val_junk_pool);
    return c;
}

int cmd_train(const TrainOpts& o) {
    const EmbeddingStore store = read_embeddings(o.embeddings);
    const Manifest manifest =
        merge_manifests(read_manifest(o.manifest_train), read_manifest(o.manifest_val));
    const ClassSplit split = read_split(o.split);

    TrainRunOptions run;
    run.way = o.way;
    run.shots = o.shots;
    run.junk_probability = o.junk_prob;
    if (!o.val_junk_pool.empty()) run.val_junk_pool = partition_from_name(o.val_junk_pool);
    run.train.initial_lr = o.lr;
    run.train.total_minibatches = o.minibatches;
    run.train.minibatch_size = o.minibatch_size;
    run.train.decay = o.decay;
    run.train.eval_every = o.eval_every;
    run.train.patience = o.patience;
    run.train.seed = o.seed;
    run.train.distance = distance_from_flag(o.distance);
    run.train.proj_dim = o.proj_dim;
    run.train.scalar_init =
        o.scalar_init == "zero" ? ScalarInit::zero : ScalarInit::calibrated;
    run.train.calibration_episodes = o.calibration_episodes;
    run.train.validation_episodes = o.validation_episodes;
    run.train.threads = o.threads;

    const TrainRunResult result = run_training(store, manifest, split, run);
    const TrainReport& report = result.report;

    const Checkpoint ckpt{report.params, report.opt, report.best_step, run.train.distance};
    write_checkpoint(ckpt, o.out + ".ckpt");

    json doc;
    doc["command"] = "train";
    doc["config"] = train_config_json(o);
    doc["seed"] = o.seed;
    doc["checkpoint"] = o.out + ".ckpt";
    json rep;
    rep["best_step"] = report.best_step;
    rep["best_validation_loss"] = report.best_validation_loss;
    rep["steps_run"] = report.steps_run;
    rep["loss_curve"] = report.loss_curve;
    json curve = json::array();
    for (const auto& p : report.validation_curve) {
        curve.push_back({{"step", p.step}, {"loss", p.loss}});
    }
    rep["validation_curve"] = curve;
    doc["report"] = rep;
    write_json_file(o.out + ".json", doc);

    std::printf("trained %lld steps, best step %lld (val loss %.6f); wrote %s.ckpt and %s.json\n",
                static_cast<long long>(report.steps_run),
                static_cast<long long>(report.best_step), report.best_validation_loss,
                o.out.c_str(), o.out.c_str());
    return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalOpts {
    std::string checkpoint, embeddings, manifest, split, out;
    std::string partition = "test";
    int way = 3;
    std::vector<int> shots_list = {5};
    double junk_prob = 0.25;
    std::int64_t episodes = 1000;
    std::uint64_t seed = 0;
    std::string junk_pool;  // empty = same partition
    int threads = 1;
};

json eval_config_json(const EvalOpts& o) {
    json c;
    c["checkpoint"] = o.checkpoint;
    c["embeddings"] = o.embeddings;
    c["manifest"] = o.manifest;
    c["split"] = o.split;
    c["out"] = o.out;
    c["partition"] = o.partition;
    c["way"] = o.way;
    c["shots-list"] = o.shots_list;
    c["junk-prob"] = o.junk_prob;
    c["episodes"] = o.episodes;
    c["junk-pool"] = o.junk_pool.empty() ? json(nullptr) : json(o.junk_pool);
    return c;
}

int cmd_eval(const EvalOpts& o) {
    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const EmbeddingStore store = read_embeddings(o.embeddings);
    const Manifest manifest = read_manifest(o.manifest);
    const ClassSplit split = read_split(o.split);
    if (ckpt.params.dim() != static_cast<Eigen::Index>(store.dim)) {
        throw IntegrityError("checkpoint expects dimension " +
                             std::to_string(ckpt.params.dim()) + " but the store holds " +
                             std::to_string(store.dim));
    }
    // the assignment a training run with --seed o.seed would have used
    const DatasetAssignment assignment = run_assignment(split, manifest, o.seed);

    json rows = json::array();
    std::string csv =
        "shots,non_junk_accuracy,non_junk_ci_low,non_junk_ci_high,"
        "junk_accuracy,junk_ci_low,junk_ci_high,auc\n";
    for (int shots : o.shots_list) {
        EvalRunOptions eo;
        eo.partition = partition_from_name(o.partition);
        eo.way = o.way;
        eo.shots = shots;
        eo.junk_probability = o.junk_prob;
        eo.episodes = o.episodes;
        eo.seed = derive_seed(o.seed, static_cast<std::uint64_t>(shots));
        eo.threads = o.threads;
        if (!o.junk_pool.empty()) eo.junk_pool = partition_from_name(o.junk_pool);
        const std::vector<EvalRecord> records =
            run_eval(store, assignment, ckpt.params, ckpt.distance, eo);
        const MetricsReport rep = full_report(records);

        json row;
        row["shots"] = shots;
        row["episodes"] = rep.total;
        row["non_junk_accuracy"] = rep.non_junk ? json(rep.non_junk->value) : json(nullptr);
        row["non_junk_ci_low"] = rep.non_junk ? json(rep.non_junk->ci_low) : json(nullptr);
        row["non_junk_ci_high"] = rep.non_junk ? json(rep.non_junk->ci_high) : json(nullptr);
        row["non_junk_n"] = rep.non_junk ? json(rep.non_junk->n) : json(nullptr);
        row["junk_accuracy"] = rep.junk ? json(rep.junk->value) : json(nullptr);
        row["junk_ci_low"] = rep.junk ? json(rep.junk->ci_low) : json(nullptr);
        row["junk_ci_high"] = rep.junk ? json(rep.junk->ci_high) : json(nullptr);
        row["junk_n"] = rep.junk ? json(rep.junk->n) : json(nullptr);
        row["auc"] = rep.auc ? json(*rep.auc) : json(nullptr);
        rows.push_back(row);

        csv += std::to_string(shots);
        csv += ',';
        csv += rep.non_junk ? csv_num(rep.non_junk->value) : "";
        csv += ',';
        csv += rep.non_junk ? csv_num(rep.non_junk->ci_low) : "";
        csv += ',';
        csv += rep.non_junk ? csv_num(rep.non_junk->ci_high) : "";
        csv += ',';
        csv += rep.junk ? csv_num(rep.junk->value) : "";
        csv += ',';
        csv += rep.junk ? csv_num(rep.junk->ci_low) : "";
        csv += ',';
        csv += rep.junk ? csv_num(rep.junk->ci_high) : "";
        csv += ',';
        csv += rep.auc ? csv_num(*rep.auc) : "";
        csv += '\n';

        std::printf("shots %d: non-junk %s, junk %s, auc %s\n", shots,
                    rep.non_junk ? csv_num(rep.non_junk->value).c_str() : "n/a",
                    rep.junk ? csv_num(rep.junk->value).c_str() : "n/a",
                    rep.auc ? csv_num(*rep.auc).c_str() : "n/a");
    }

    json doc;
    doc["command"] = "eval";
    doc["config"] = eval_config_json(o);
    doc["seed"] = o.seed;
    doc["rows"] = rows;
    write_json_file(o.out + ".json", doc);
    write_text(o.out + ".csv", csv);
    std::printf("wrote %s.json and %s.csv\n", o.out.c_str(), o.out.c_str());
    return 0;
}

// ------------------------------------------------------------- simulate ----

struct SimulateOpts {
    int dim = 16;
    double sigma = 1.0;
    int n_classes = 15;
    int way = 3;
    double mean_scale = 0.75;
    std::vector<int> shots_list = {1, 2, 5, 10, 15};
    std::int64_t episodes = 20000;
    std::uint64_t seed = 0;
    int threads = 1;
    bool expected_distance = false;
    std::string out;
};

json simulate_config_json(const SimulateOpts& o) {
    json c;
    c["dim"] = o.dim;
    c["sigma"] = o.sigma;
    c["n-classes"] = o.n_classes;
    c["way"] = o.way;
    c["mean-scale"] = o.mean_scale;
    c["shots-list"] = o.shots_list;
    c["episodes"] = o.episodes;
    c["expected-distance"] = o.expected_distance;
    if (!o.out.empty()) c["out"] = o.out;
    return c;
}

int cmd_simulate(const SimulateOpts& o) {
    if (o.expected_distance) {
        json rows = json::array();
        for (int shots : o.shots_list) {
            const double est =
                expected_sq_distance(shots, o.sigma, o.dim, o.episodes,
                                     derive_seed(o.seed, static_cast<std::uint64_t>(shots)),
                                     o.threads);
            const double analytic =
                (1.0 + 1.0 / static_cast<double>(shots)) * o.sigma * o.sigma * o.dim;
            std::printf("shots %d: expected squared distance %.6f (analytic %.6f)\n", shots,
                        est, analytic);
            rows.push_back({{"shots", shots}, {"estimate", est}, {"analytic", analytic}});
        }
        if (!o.out.empty()) {
            json doc;
            doc["command"] = "simulate";
            doc["config"] = simulate_config_json(o);
            doc["seed"] = o.seed;
            doc["rows"] = rows;
            write_json_file(o.out + ".json", doc);
            std::printf("wrote %s.json\n", o.out.c_str());
        }
        return 0;
    }

    if (o.out.empty()) throw UsageError("--out is required unless --expected-distance is set");
    if (o.way > o.n_classes) throw UsageError("--way cannot exceed --n-classes");

    SimConfig sc;
    sc.n_classes = o.n_classes;
    sc.way = o.way;
    sc.dim = o.dim;
    sc.sigma = o.sigma;
    sc.mean_scale = o.mean_scale;
    sc.shots = o.shots_list;
    sc.episodes_per_point = o.episodes;
    sc.seed = o.seed;
    sc.threads = o.threads;
    const SimCurve curve = simulate_curve(sc);

    json rows = json::array();
    std::string csv = "shots,accuracy,ci_low,ci_high\n";
    for (const SimPoint& p : curve.points) {
        const double lo = std::max(0.0, p.accuracy - p.ci_half);
        const double hi = std::min(1.0, p.accuracy + p.ci_half);
        rows.push_back({{"shots", p.shots},
                        {"accuracy", p.accuracy},
                        {"ci_low", lo},
                        {"ci_high", hi},
                        {"episodes", p.episodes}});
        csv += std::to_string(p.shots) + ',' + csv_num(p.accuracy) + ',' + csv_num(lo) + ',' +
               csv_num(hi) + '\n';
        std::printf("shots %d: accuracy %.4f [%.4f, %.4f]\n", p.shots, p.accuracy, lo, hi);
    }

    json doc;
    doc["command"] = "simulate";
    doc["config"] = simulate_config_json(o);
    doc["seed"] = o.seed;
    doc["rows"] = rows;
    write_json_file(o.out + ".json", doc);
    write_text(o.out + ".csv", csv);
    std::printf("wrote %s.json and %s.csv\n", o.out.c_str(), o.out.c_str());
    return 0;
}

// ------------------------------------------------------------- gradcheck ----

struct GradcheckOpts {
    int dim = 8;
    int proj_dim = 4;
    int way = 3;
    std::vector<int> shots_list = {1, 5};
    int episodes = 20;
    double step = 1e-6;
    double tolerance = 1e-5;
    std::uint64_t seed = 0;
    std::string distance = "euclidean";
};

int cmd_gradcheck(const GradcheckOpts& o) {
    Rng rng(derive_seed(o.seed, 0x70617261));
    ModelParams params;
    params.g.resize(o.dim, o.proj_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(o.dim));
    for (Eigen::Index i = 0; i < params.g.rows(); ++i) {
        for (Eigen::Index j = 0; j < params.g.cols(); ++j) {
            params.g(i, j) = bound * (2.0 * rng.real01() - 1.0);
        }
    }
    params.b_distance = 0.05 + 0.4 * rng.real01();
    params.b_magnitude = -0.05 - 0.5 * rng.real01();

    const std::vector<EpisodeData> episodes = random_episodes(
        derive_seed(o.seed, 0x65706973), o.episodes, o.dim, o.way, o.shots_list);
    const GradcheckReport report =
        gradcheck(params, episodes, o.step, o.tolerance, distance_from_flag(o.distance));

    if (report.worst_param == "g") {
        std::printf("max rel error %.3e at g(%d,%d) over %d episodes\n", report.max_rel_error,
                    report.worst_row, report.worst_col, report.episodes_checked);
    } else {
        std::printf("max rel error %.3e at %s over %d episodes\n", report.max_rel_error,
                    report.worst_param.c_str(), report.episodes_checked);
    }
    std::printf("%s (tolerance %.3e)\n", report.pass ? "PASS" : "FAIL", o.tolerance);
    return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot prototype classifier with a learned junk head", "protojunk"};
    app.require_subcommand(1);
    std::string config_path;

    SplitOpts sp;
    CLI::App* split_cmd = app.add_subcommand("split", "draw class splits");
    split_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    split_cmd->add_option("--categories", sp.categories, "number of categories")
        ->required()
        ->check(CLI::PositiveNumber);
    split_cmd->add_option("--n-splits", sp.n_splits, "independent splits to draw")
        ->check(CLI::PositiveNumber);
    split_cmd->add_option("--sizes", sp.sizes, "train,val,test class counts")->delimiter(',');
    split_cmd->add_option("--seed", sp.seed, "master seed");
    split_cmd->add_option("--out", sp.out, "output path prefix")->required();

    SynthOpts sy;
    CLI::App* synth_cmd = app.add_subcommand("synth", "write a Gaussian-cluster dataset");
    synth_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    synth_cmd->add_option("--categories", sy.categories, "number of categories")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--dim", sy.dim, "embedding dimension")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--sigma", sy.sigma, "within-category standard deviation")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--separation", sy.separation, "pairwise distance between means")
        ->check(CLI::PositiveNumber);
    synth_cmd
        ->add_option("--images-per-category", sy.images_per_category, "images per category")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--sizes", sy.sizes, "train,val,test category counts")->delimiter(',');
    synth_cmd->add_option("--seed", sy.seed, "master seed");
    synth_cmd->add_option("--out", sy.out, "output path prefix")->required();

    TrainOpts tr;
    CLI::App* train_cmd = app.add_subcommand("train", "train on episodic batches");
    train_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    train_cmd->add_option("--embeddings", tr.embeddings, "embedding store")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--manifest-train", tr.manifest_train, "source-train manifest")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--manifest-val", tr.manifest_val, "source-val manifest")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--split", tr.split, "class split file")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tr.out, "output path prefix")->required();
    train_cmd->add_option("--way", tr.way, "classes per episode")->check(CLI::PositiveNumber);
    train_cmd->add_option("--shots", tr.shots, "supports per class")->check(CLI::PositiveNumber);
    train_cmd->add_option("--junk-prob", tr.junk_prob, "junk query probability")
        ->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--seed", tr.seed, "master seed");
    train_cmd->add_option("--lr", tr.lr, "initial learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--minibatches", tr.minibatches, "total mini-batches")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--minibatch-size", tr.minibatch_size, "episodes per mini-batch")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--decay", tr.decay, "per-batch lr decay factor")
        ->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--eval-every", tr.eval_every, "batches between validations")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--patience", tr.patience, "validations without improvement")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--proj-dim", tr.proj_dim, "projection width")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--distance", tr.distance, "distance mode")
        ->check(CLI::IsMember({"euclidean", "squared_euclidean"}));
    train_cmd->add_option("--scalar-init", tr.scalar_init, "junk-head scalar init")
        ->check(CLI::IsMember({"calibrated", "zero"}));
    train_cmd
        ->add_option("--calibration-episodes", tr.calibration_episodes,
                     "episodes for the calibrated init")
        ->check(CLI::PositiveNumber);
    train_cmd
        ->add_option("--validation-episodes", tr.validation_episodes,
                     "frozen validation episodes")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--val-junk-pool", tr.val_junk_pool,
                          "partition for validation junk queries")
        ->check(CLI::IsMember({"train", "val", "test"}));
    train_cmd->add_option("--threads", tr.threads, "worker threads")->check(CLI::PositiveNumber);

    EvalOpts ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--embeddings", ev.embeddings, "embedding store")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--manifest", ev.manifest, "image manifest")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", ev.split, "class split file")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", ev.out, "output path prefix")->required();
    eval_cmd->add_option("--partition", ev.partition, "partition to evaluate")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--way", ev.way, "classes per episode")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--shots-list", ev.shots_list, "shot counts, one row each")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--junk-prob", ev.junk_prob, "junk query probability")
        ->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--episodes", ev.episodes, "episodes per row")
        ->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", ev.seed, "master seed; match the training seed")
        ->capture_default_str();
    eval_cmd->add_option("--junk-pool", ev.junk_pool, "partition for junk queries")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--threads", ev.threads, "worker threads")->check(CLI::PositiveNumber);

    SimulateOpts sm;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Gaussian shots-accuracy curve");
    sim_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    sim_cmd->add_option("--dim", sm.dim, "embedding dimension")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--sigma", sm.sigma, "within-class standard deviation")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--n-classes", sm.n_classes, "classes in the pool")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--way", sm.way, "classes per episode")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--mean-scale", sm.mean_scale, "sd of each mean component")
        ->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--shots-list", sm.shots_list, "shot counts to sweep")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--episodes", sm.episodes, "episodes per point")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sm.seed, "master seed");
    sim_cmd->add_option("--threads", sm.threads, "worker threads")->check(CLI::PositiveNumber);
    sim_cmd->add_flag("--expected-distance", sm.expected_distance,
                      "estimate E||x - mean(shots)||^2 instead of accuracy");
    sim_cmd->add_option("--out", sm.out, "output path prefix");

    GradcheckOpts gc;
    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    grad_cmd->add_option("--config", config_path, "key=value file; explicit flags override");
    grad_cmd->add_option("--dim", gc.dim, "embedding dimension")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--proj-dim", gc.proj_dim, "projection width")
        ->check(CLI::PositiveNumber);
    grad_cmd->add_option("--way", gc.way, "classes per episode")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--shots-list", gc.shots_list, "shot counts to alternate over")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    grad_cmd->add_option("--episodes", gc.episodes, "episodes to check")
        ->check(CLI::PositiveNumber);
    grad_cmd->add_option("--step", gc.step, "finite-difference step")
        ->check(CLI::PositiveNumber);
    grad_cmd->add_option("--tolerance", gc.tolerance, "max relative error allowed")
        ->check(CLI::NonNegativeNumber);
    grad_cmd->add_option("--seed", gc.seed, "master seed");
    grad_cmd->add_option("--distance", gc.distance, "distance mode")
        ->check(CLI::IsMember({"euclidean", "squared_euclidean"}));

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config_args(args);
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(args);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*split_cmd) return cmd_split(sp);
        if (*synth_cmd) return cmd_synth(sy);
        if (*train_cmd) return cmd_train(tr);
        if (*eval_cmd) return cmd_eval(ev);
        if (*sim_cmd) return cmd_simulate(sm);
        if (*grad_cmd) return cmd_gradcheck(gc);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
