#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vadkit/audio_io.hpp"
#include "vadkit/crossval.hpp"
#include "vadkit/evaluation.hpp"
#include "vadkit/features.hpp"
#include "vadkit/model.hpp"
#include "vadkit/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vadkit;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitMetric = 3;
constexpr int kExitInternal = 4;

// Published reference numbers (Table 4 of the AVA-Speech evaluation
// protocol paper this toolkit follows); shipped data, never locally
// reproduced. A sidecar CSV with the same rows lives under data/.
struct BaselineRow {
    const char* name;
    double clean, noise, music, all;
};
constexpr BaselineRow kBaselines[] = {
    {"RTCvad", 0.786, 0.706, 0.733, 0.722},
    {"tiny320", 0.965, 0.826, 0.623, 0.810},
    {"resnet960", 0.992, 0.944, 0.787, 0.917},
};

model::ModelConfig load_model_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open model config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("model config " + path + ": " + e.what());
    }
    model::ModelConfig c;
    if (j.contains("conv1_kernel")) {
        c.conv1_kh = j["conv1_kernel"][0];
        c.conv1_kw = j["conv1_kernel"][1];
    }
    if (j.contains("conv2_kernel")) {
        c.conv2_kh = j["conv2_kernel"][0];
        c.conv2_kw = j["conv2_kernel"][1];
    }
    c.conv1_width = j.value("conv1_width", c.conv1_width);
    c.conv2_width = j.value("conv2_width", c.conv2_width);
    c.dense_width = j.value("dense_width", c.dense_width);
    c.lstm_width = j.value("lstm_width", c.lstm_width);
    c.bidirectional = j.value("bidirectional", c.bidirectional);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    return c;
}

train::TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open train config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("train config " + path + ": " + e.what());
    }
    train::TrainConfig t;
    t.batch_size = j.value("batch_size", t.batch_size);
    t.seq_len = j.value("seq_len", t.seq_len);
    t.epochs = j.value("epochs", t.epochs);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.seed = j.value("seed", t.seed);
    t.dropout_rate = j.value("dropout_rate", t.dropout_rate);
    return t;
}

// Feature/label pairs matched by basename: <name>.vfea + <name>.csv
std::vector<cv::CvItem> load_data_dir(const std::string& dir) {
    std::map<std::string, std::pair<std::string, std::string>> pairs;
    if (!fs::is_directory(dir)) throw ArgumentError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto p = entry.path();
        if (p.extension() == ".vfea") pairs[p.stem().string()].first = p.string();
        if (p.extension() == ".csv") pairs[p.stem().string()].second = p.string();
    }
    std::vector<std::string> orphans;
    std::vector<cv::CvItem> items;
    for (const auto& [name, pr] : pairs) {
        if (pr.first.empty() || pr.second.empty()) {
            orphans.push_back(name);
            continue;
        }
        cv::CvItem item;
        item.name = name;
        item.images = features::load_features(pr.first);
        auto track = audio::load_labels(pr.second);
        const double duration =
            item.images.images.size() * features::kImageFrames * audio::kFrameStepS;
        item.frames = audio::rasterize_labels(track, std::max(duration, track.duration_s()));
        items.push_back(std::move(item));
    }
    if (!orphans.empty()) {
        std::string msg = "unpaired files in " + dir + ":";
        for (const auto& o : orphans) msg += " " + o;
        throw ArgumentError(msg);
    }
    if (items.empty()) throw ArgumentError("no feature/label pairs in " + dir);
    return items;
}

int cmd_features(const std::string& in, const std::string& out, int rate) {
    auto buf = audio::read_wav(in);
    buf = audio::resample(buf, rate);
    auto seq = features::extract_features(buf);
    features::save_features(seq, out);
    std::cout << seq.images.size() << " images from " << buf.duration_s() << " s of audio\n";
    if (seq.images.empty()) std::cerr << "warning: audio too short for a single 320 ms image\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& model_config_path,
              const std::string& train_config_path, const std::string& out,
              const std::string& history_path, double val_frac) {
    auto mc = load_model_config(model_config_path);
    auto tc = load_train_config(train_config_path);
    auto items = load_data_dir(data_dir);

    std::vector<train::TrainingExample> all;
    for (const auto& item : items) {
        auto exs = train::make_examples(item.images, item.frames, tc.seq_len);
        for (auto& e : exs) all.push_back(std::move(e));
    }
    if (all.empty()) throw ArgumentError("no training sequences (inputs shorter than seq_len?)");

    std::mt19937 rng(static_cast<std::mt19937::result_type>(tc.seed));
    std::shuffle(all.begin(), all.end(), rng);
    const auto n_val = static_cast<std::size_t>(val_frac * all.size());
    std::vector<train::TrainingExample> val(all.end() - n_val, all.end());
    all.resize(all.size() - n_val);

    auto res = train::train(all, mc, tc, val);
    model::save_model(res.params, out);
    if (!history_path.empty()) train::save_history_csv(res.history, history_path);

    std::cout << "train acc " << res.history.train_acc.back();
    if (!val.empty()) std::cout << ", val acc " << train::accuracy(res.params, val);
    std::cout << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& in, const std::string& out) {
    auto params = model::load_model(model_path);
    auto buf = audio::read_wav(in);
    buf = audio::resample(buf, audio::kWorkingRateHz);
    auto seq = features::extract_features(buf);
    if (seq.images.empty()) throw ArgumentError("audio too short for a single 320 ms image");
    const auto n_frames =
        static_cast<std::size_t>(std::floor(buf.duration_s() / audio::kFrameStepS));
    auto track = eval::score_frames(params, seq, n_frames);
    eval::save_scores_csv(track, out);
    std::cout << track.size() << " frame scores written\n";
    return 0;
}

int cmd_eval(const std::string& scores_path, const std::string& labels_path, double fpr,
             const std::string& report_path, const std::string& roc_path, bool with_baselines) {
    auto track = eval::load_scores_csv(scores_path);
    auto labels = audio::load_labels(labels_path);
    const double duration =
        std::max(labels.duration_s(), track.size() * audio::kFrameStepS);
    auto frames = audio::rasterize_labels(labels, duration);

    auto rep = eval::condition_breakdown(track, frames, fpr);
    if (!roc_path.empty()) {
        auto curve = eval::roc_curve(track, frames);
        eval::export_roc(curve, roc_path);
    }
    if (!report_path.empty()) {
        json j = {{"operating_fpr", rep.operating_fpr},
                  {"threshold", rep.threshold},
                  {"tpr",
                   {{"clean", rep.tpr_clean},
                    {"noise", rep.tpr_noise},
                    {"music", rep.tpr_music},
                    {"all", rep.tpr_all}}},
                  {"auc", rep.auc}};
        std::ofstream f(report_path);
        if (!f) throw FormatError("cannot open for writing: " + report_path);
        f << j.dump(2) << '\n';
    }

    std::cout << "Model\tClean\tNoise\tMusic\tAll\n";
    std::cout.precision(3);
    std::cout << std::fixed;
    std::cout << "scores\t" << rep.tpr_clean << '\t' << rep.tpr_noise << '\t' << rep.tpr_music
              << '\t' << rep.tpr_all << '\n';
    if (with_baselines) {
        for (const auto& b : kBaselines)
            std::cout << b.name << '\t' << b.clean << '\t' << b.noise << '\t' << b.music << '\t'
                      << b.all << "\t[published reference (Table 4)]\n";
    }
    return 0;
}

int cmd_cv(const std::string& data_dir, const std::string& grid_path, int outer, int inner,
           std::uint64_t seed, const std::string& out_dir, const std::string& base_config_path,
           int epochs) {
    auto items = load_data_dir(data_dir);
    auto grid = cv::load_grid_json(grid_path);

    cv::CvOptions opts;
    opts.k_outer = outer;
    opts.k_inner = inner;
    opts.seed = seed;
    if (!base_config_path.empty()) opts.base_model = load_model_config(base_config_path);
    opts.base_train.epochs = epochs;

    auto report = cv::run_nested_cv(items, grid, opts);

    fs::create_directories(out_dir);
    cv::save_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    cv::save_boxplot_csv(report, (fs::path(out_dir) / "boxplot.csv").string());
    cv::save_sweep_json(report, (fs::path(out_dir) / "sweeps.json").string());
    for (std::size_t f = 0; f < report.best_models.size(); ++f) {
        model::save_model(report.best_models[f],
                          (fs::path(out_dir) / ("fold" + std::to_string(f) + "_best.cblv")).string());
        model::save_model(
            report.small_models[f],
            (fs::path(out_dir) / ("fold" + std::to_string(f) + "_small.cblv")).string());
    }
    std::cout << "report with " << report.rows.size() + 2 << " rows written to " << out_dir
              << "\n";
    return 0;
}

int cmd_params(const std::string& model_config_path) {
    auto mc = load_model_config(model_config_path);
    auto lc = model::count_params_breakdown(mc);
    std::cout << "conv1:  " << lc.conv1 << "\n"
              << "conv2:  " << lc.conv2 << "\n"
              << "dense:  " << lc.dense << "\n"
              << "lstm:   " << lc.lstm << "\n"
              << "output: " << lc.output << "\n"
              << "total:  " << lc.total << "\n";
    return 0;
}

int cmd_roc_export(const std::string& scores_path, const std::string& labels_path,
                   const std::string& out) {
    auto track = eval::load_scores_csv(scores_path);
    auto labels = audio::load_labels(labels_path);
    const double duration = std::max(labels.duration_s(), track.size() * audio::kFrameStepS);
    auto frames = audio::rasterize_labels(labels, duration);
    auto curve = eval::roc_curve(track, frames);
    eval::export_roc(curve, out);
    std::cout << curve.points.size() << " ROC points, AUC " << curve.auc << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN-BiLSTM voice activity detection toolkit"};
    app.require_subcommand(1);

    std::string in, out, data_dir, model_config, train_config, scores, labels, grid, report,
        roc, history, base_config;
    int rate = audio::kWorkingRateHz;
    int outer = 10, inner = 9, epochs = 10;
    double fpr = eval::kPaperFpr, val_frac = 0.1;
    std::uint64_t seed = 0;
    bool with_baselines = false;

    auto* feat = app.add_subcommand("features", "Extract 32x32 log-mel images from a WAV file");
    feat->add_option("--in", in, "input WAV")->required();
    feat->add_option("--out", out, "output feature file")->required();
    feat->add_option("--rate", rate, "working sample rate");

    auto* tr = app.add_subcommand("train", "Train a model on paired feature/label files");
    tr->add_option("--data", data_dir, "directory of .vfea/.csv pairs")->required();
    tr->add_option("--model-config", model_config, "model config JSON")->required();
    tr->add_option("--train-config", train_config, "train config JSON")->required();
    tr->add_option("--out", out, "output model file")->required();
    tr->add_option("--history", history, "training history CSV");
    tr->add_option("--val-frac", val_frac, "held-out validation fraction");

    auto* pred = app.add_subcommand("predict", "Score a WAV file with a trained model");
    pred->add_option("--model", model_config, "model file")->required();
    pred->add_option("--in", in, "input WAV")->required();
    pred->add_option("--out", out, "output scores CSV")->required();

    auto* ev = app.add_subcommand("eval", "Frame-level metrics from scores and labels");
    ev->add_option("--scores", scores, "scores CSV")->required();
    ev->add_option("--labels", labels, "label CSV")->required();
    ev->add_option("--fpr", fpr, "operating false positive rate");
    ev->add_option("--report", report, "report JSON path");
    ev->add_option("--roc", roc, "ROC CSV path");
    ev->add_flag("--with-baselines", with_baselines, "print published reference rows");

    auto* cvc = app.add_subcommand("cv", "Nested k-fold cross-validation sweep");
    cvc->add_option("--data", data_dir, "directory of .vfea/.csv pairs")->required();
    cvc->add_option("--grid", grid, "sweep grid JSON")->required();
    cvc->add_option("--outer", outer, "outer folds");
    cvc->add_option("--inner", inner, "inner folds");
    cvc->add_option("--seed", seed, "random seed");
    cvc->add_option("--epochs", epochs, "epochs per training cell");
    cvc->add_option("--base-config", base_config, "base model config JSON");
    cvc->add_option("--out", out, "output directory")->required();

    auto* par = app.add_subcommand("params", "Parameter count for a model config");
    par->add_option("--model-config", model_config, "model config JSON")->required();

    auto* rx = app.add_subcommand("roc-export", "ROC curve CSV from scores and labels");
    rx->add_option("--scores", scores, "scores CSV")->required();
    rx->add_option("--labels", labels, "label CSV")->required();
    rx->add_option("--out", out, "output ROC CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitInput;
    }

    try {
        if (feat->parsed()) return cmd_features(in, out, rate);
        if (tr->parsed()) return cmd_train(data_dir, model_config, train_config, out, history, val_frac);
        if (pred->parsed()) return cmd_predict(model_config, in, out);
        if (ev->parsed()) return cmd_eval(scores, labels, fpr, report, roc, with_baselines);
        if (cvc->parsed()) return cmd_cv(data_dir, grid, outer, inner, seed, out, base_config, epochs);
        if (par->parsed()) return cmd_params(model_config);
        if (rx->parsed()) return cmd_roc_export(scores, labels, out);
    } catch (const MetricError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitMetric;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return 0;
}
