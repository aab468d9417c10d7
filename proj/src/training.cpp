#include "vadkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace vadkit::train {

int image_target(const audio::FrameLabels& frames, std::size_t image_index) {
    const std::size_t start = image_index * features::kImageFrames;
    std::size_t speech = 0;
    for (std::size_t i = 0; i < features::kImageFrames; ++i) {
        const std::size_t fi = start + i;
        if (fi < frames.size() && frames.speech_mask[fi]) ++speech;
    }
    return speech >= features::kImageFrames / 2 ? 1 : 0;
}

std::vector<TrainingExample> make_examples(const features::ImageSequence& seq,
                                           const audio::FrameLabels& frames, int seq_len) {
    if (seq_len < 1) throw ArgumentError("make_examples: seq_len must be positive");
    const std::size_t frames_needed = seq.images.size() * features::kImageFrames;
    if (frames.size() + features::kImageFrames < frames_needed)
        throw AlignmentError("make_examples: labels shorter than features by more than one image");

    std::vector<int> targets(seq.images.size());
    for (std::size_t j = 0; j < seq.images.size(); ++j) targets[j] = image_target(frames, j);

    std::vector<TrainingExample> out;
    const auto sl = static_cast<std::size_t>(seq_len);
    for (std::size_t start = 0; start + sl <= seq.images.size(); start += sl) {
        TrainingExample ex;
        ex.images.hop_images = seq.hop_images;
        for (std::size_t k = 0; k < sl; ++k) {
            ex.images.images.push_back(seq.images[start + k]);
            ex.targets.push_back(targets[start + k]);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

struct BatchStats {
    double loss_sum = 0.0;
    std::size_t steps = 0;
    std::size_t correct = 0;
};

}  // namespace

TrainResult train(const std::vector<TrainingExample>& examples,
                  const model::ModelConfig& model_config, const TrainConfig& tc,
                  const std::vector<TrainingExample>& val_examples) {
    if (examples.empty()) throw ArgumentError("train: no examples");
    model::ModelConfig cfg = model_config;
    cfg.dropout_rate = tc.dropout_rate;
    auto params = model::build_model(cfg, tc.seed);
    nn::AdamState<float> adam;
    adam.lr = tc.learning_rate;

    std::mt19937 shuffle_rng(static_cast<std::mt19937::result_type>(tc.seed * 2654435761u + 1));
    std::mt19937 dropout_rng(static_cast<std::mt19937::result_type>(tc.seed * 2654435761u + 2));

    TrainResult result;
    double best_val = -1.0;
    model::ModelParams best_params = params;

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);

    const auto names = params.tensor_names();
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        BatchStats epoch_stats;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
            auto grads = model::zero_like(params);
            std::size_t batch_steps = 0;
            for (std::size_t e = b0; e < b1; ++e) batch_steps += examples[order[e]].targets.size();

            for (std::size_t e = b0; e < b1; ++e) {
                const auto& ex = examples[order[e]];
                auto cache = model::forward_cached(params, ex.images, true, dropout_rng);
                std::vector<Tensor<float>> d_logits(cache.logits.size());
                for (std::size_t t = 0; t < cache.logits.size(); ++t) {
                    Tensor<float> dl;
                    const float loss = nn::bce_loss(cache.posteriors[t], ex.targets[t], dl);
                    if (!std::isfinite(loss))
                        throw TrainingError("diverged: non-finite loss at epoch " +
                                            std::to_string(epoch) + ", batch " +
                                            std::to_string(b0 / tc.batch_size));
                    epoch_stats.loss_sum += loss;
                    const int pred = cache.posteriors[t][1] > 0.5f ? 1 : 0;
                    if (pred == ex.targets[t]) ++epoch_stats.correct;
                    for (auto& g : dl.v) g /= static_cast<float>(batch_steps);
                    d_logits[t] = std::move(dl);
                }
                epoch_stats.steps += cache.logits.size();
                model::backward(params, cache, d_logits, grads);
            }

            auto ptensors = params.tensors();
            auto gtensors = static_cast<const model::ModelParams&>(grads).tensors();
            nn::adam_step(ptensors, gtensors, adam, names);
        }

        result.history.train_loss.push_back(epoch_stats.loss_sum / epoch_stats.steps);
        result.history.train_acc.push_back(static_cast<double>(epoch_stats.correct) /
                                           epoch_stats.steps);
        double vacc = -1.0;
        if (!val_examples.empty()) {
            vacc = accuracy(params, val_examples);
            if (vacc > best_val) {
                best_val = vacc;
                best_params = params;
            }
        }
        result.history.val_acc.push_back(vacc);
    }

    result.params = val_examples.empty() ? params : best_params;
    return result;
}

double accuracy(const model::ModelParams& params, const std::vector<TrainingExample>& examples) {
    if (examples.empty()) throw ArgumentError("accuracy: no examples");
    std::size_t correct = 0, total = 0;
    for (const auto& ex : examples) {
        auto posts = model::forward(params, ex.images);
        for (std::size_t t = 0; t < posts.size(); ++t) {
            const int pred = posts[t].p_speech > 0.5 ? 1 : 0;
            if (pred == ex.targets[t]) ++correct;
            ++total;
        }
    }
    return static_cast<double>(correct) / total;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "epoch,train_loss,train_acc,val_acc\n";
    f.precision(9);
    for (std::size_t e = 0; e < history.train_loss.size(); ++e)
        f << e << ',' << history.train_loss[e] << ',' << history.train_acc[e] << ','
          << history.val_acc[e] << '\n';
}

}  // namespace vadkit::train
