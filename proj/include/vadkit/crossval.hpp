#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vadkit/training.hpp"

namespace vadkit::cv {

// One recording: its feature images and the frame-level ground truth.
struct CvItem {
    std::string name;
    features::ImageSequence images;
    audio::FrameLabels frames;
};

struct FoldPlan {
    int k_outer = 10;
    int k_inner = 9;
    std::uint64_t seed = 0;
    std::vector<int> outer_of_item;  // item index -> outer fold
    // inner_of_item[f][i] = inner fold of item i within outer fold f's
    // training set, or -1 when item i is in outer fold f's test set.
    std::vector<std::vector<int>> inner_of_item;
};

FoldPlan make_folds(std::size_t n_items, int k_outer, int k_inner, std::uint64_t seed);

enum class Axis {
    Conv1Kernel,
    Conv1Width,
    Conv2Kernel,
    Conv2Width,
    DenseWidth,
    LstmWidth,
    Dropout,
    BatchSize,
    SeqLen,
    Bidirectional,
};

const char* axis_name(Axis a);
std::optional<Axis> axis_from_name(const std::string& name);
bool axis_affects_size(Axis a);

// Kernel axes hold the square kernel side; bidirectional holds 0/1.
using SweepGrid = std::map<Axis, std::vector<double>>;

struct SweepCell {
    Axis axis;
    double value = 0.0;
    int inner_fold = 0;
    double accuracy = -1.0;  // -1 marks a failed (diverged) cell
    bool failed = false;
};

struct SweepResult {
    std::vector<SweepCell> cells;

    std::vector<double> accuracies(Axis axis, double value) const;
    double median_accuracy(Axis axis, double value) const;
};

double median(std::vector<double> xs);

void apply_axis(model::ModelConfig& mc, train::TrainConfig& tc, Axis axis, double value);

struct Selection {
    model::ModelConfig model_config;
    train::TrainConfig train_config;
};

struct CvOptions {
    int k_outer = 10;
    int k_inner = 9;
    std::uint64_t seed = 0;
    model::ModelConfig base_model;
    train::TrainConfig base_train;
    double small_threshold = 0.01;  // "biggest effect" accuracy gap
    int threads = 0;                // 0: VADKIT_THREADS or hardware default
};

// One-axis-at-a-time sweep for a single outer fold.
SweepResult sweep_outer_fold(const std::vector<CvItem>& data, const FoldPlan& plan,
                             int outer_fold, const SweepGrid& grid, const CvOptions& opts);

Selection select_best(const SweepResult& results, const SweepGrid& grid, const CvOptions& opts);
Selection select_small(const SweepResult& results, const SweepGrid& grid, const CvOptions& opts);

struct FoldReportRow {
    int fold = 0;
    std::size_t best_params = 0;
    double best_acc = 0.0;
    std::size_t small_params = 0;
    double small_acc = 0.0;
};

struct CvReport {
    std::vector<FoldReportRow> rows;  // one per outer fold
    FoldReportRow mean;
    FoldReportRow stddev;
    std::vector<SweepResult> sweeps;           // per outer fold
    std::vector<Selection> best_selections;    // per outer fold
    std::vector<Selection> small_selections;   // per outer fold
    std::vector<model::ModelParams> best_models;
    std::vector<model::ModelParams> small_models;
};

CvReport run_nested_cv(const std::vector<CvItem>& data, const SweepGrid& grid,
                       const CvOptions& opts);

void save_report_csv(const CvReport& report, const std::string& path);
void save_boxplot_csv(const CvReport& report, const std::string& path);
void save_sweep_json(const CvReport& report, const std::string& path);

SweepGrid load_grid_json(const std::string& path);

int thread_budget(int requested);

}  // namespace vadkit::cv
