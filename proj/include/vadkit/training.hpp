#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vadkit/audio_io.hpp"
#include "vadkit/features.hpp"
#include "vadkit/model.hpp"

namespace vadkit::train {

struct TrainingExample {
    features::ImageSequence images;
    std::vector<int> targets;  // one {0,1} per image
};

struct TrainConfig {
    int batch_size = 8;
    int seq_len = 8;
    int epochs = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double dropout_rate = 0.0;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> train_acc;
    std::vector<double> val_acc;  // empty entries are -1 when no val set
};

// Image target: 1 iff at least 16 of the 32 underlying 10 ms frames are
// speech. Consecutive images grouped into non-overlapping seq_len runs;
// trailing partial run dropped.
std::vector<TrainingExample> make_examples(const features::ImageSequence& seq,
                                           const audio::FrameLabels& frames, int seq_len);

int image_target(const audio::FrameLabels& frames, std::size_t image_index);

struct TrainResult {
    model::ModelParams params;
    TrainHistory history;
};

TrainResult train(const std::vector<TrainingExample>& examples,
                  const model::ModelConfig& model_config, const TrainConfig& tc,
                  const std::vector<TrainingExample>& val_examples = {});

double accuracy(const model::ModelParams& params, const std::vector<TrainingExample>& examples);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace vadkit::train
