#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vadkit/features.hpp"
#include "vadkit/nn.hpp"

namespace vadkit::model {

struct ModelConfig {
    int conv1_kh = 5, conv1_kw = 5;
    int conv1_width = 32;
    int conv2_kh = 3, conv2_kw = 3;
    int conv2_width = 128;
    int dense_width = 64;
    int lstm_width = 128;
    bool bidirectional = true;
    double dropout_rate = 0.0;
    static constexpr int input_height = 32;
    static constexpr int input_width = 32;

    bool operator==(const ModelConfig&) const = default;
};

// Internal feature-map sizes implied by valid convolutions and 2x2 pools.
struct DerivedShapes {
    std::size_t h1, w1;      // after conv1
    std::size_t h1p, w1p;    // after pool1
    std::size_t h2, w2;      // after conv2
    std::size_t h2p, w2p;    // after pool2
    std::size_t flat;        // h2p * w2p * conv2_width
};

DerivedShapes derive_shapes(const ModelConfig& config);

struct LayerCounts {
    std::size_t conv1, conv2, dense, lstm, output, total;
};

LayerCounts count_params_breakdown(const ModelConfig& config);
std::size_t count_params(const ModelConfig& config);

template <class S>
struct Params {
    ModelConfig config;
    Tensor<S> conv1_w, conv1_b;
    Tensor<S> conv2_w, conv2_b;
    Tensor<S> dense_w, dense_b;
    nn::LstmParams<S> lstm_fwd;
    nn::LstmParams<S> lstm_bwd;  // unused when unidirectional
    Tensor<S> out_w, out_b;

    std::vector<Tensor<S>*> tensors();
    std::vector<const Tensor<S>*> tensors() const;
    std::vector<std::string> tensor_names() const;
    std::size_t scalar_count() const;

    template <class T>
    Params<T> cast() const {
        Params<T> o;
        o.config = config;
        o.conv1_w = conv1_w.template cast<T>();
        o.conv1_b = conv1_b.template cast<T>();
        o.conv2_w = conv2_w.template cast<T>();
        o.conv2_b = conv2_b.template cast<T>();
        o.dense_w = dense_w.template cast<T>();
        o.dense_b = dense_b.template cast<T>();
        o.lstm_fwd.wx = lstm_fwd.wx.template cast<T>();
        o.lstm_fwd.wh = lstm_fwd.wh.template cast<T>();
        o.lstm_fwd.b = lstm_fwd.b.template cast<T>();
        if (config.bidirectional) {
            o.lstm_bwd.wx = lstm_bwd.wx.template cast<T>();
            o.lstm_bwd.wh = lstm_bwd.wh.template cast<T>();
            o.lstm_bwd.b = lstm_bwd.b.template cast<T>();
        }
        o.out_w = out_w.template cast<T>();
        o.out_b = out_b.template cast<T>();
        return o;
    }
};

using ModelParams = Params<float>;

struct Posterior {
    double p_speech = 0.0;
    std::size_t image_index = 0;
};

template <class S>
Params<S> build_model_t(const ModelConfig& config, std::uint64_t seed);
ModelParams build_model(const ModelConfig& config, std::uint64_t seed);

// Per-image CNN tower caches for backprop.
template <class S>
struct ImageCache {
    Tensor<S> input;
    Tensor<S> conv1_out;
    nn::PoolResult<S> pool1;
    Tensor<S> conv2_out;
    nn::PoolResult<S> pool2;
    Tensor<S> flat;
    Tensor<S> dense_out;
    nn::DropoutResult<S> dense_drop;
};

template <class S>
struct ForwardCache {
    std::vector<ImageCache<S>> images;
    nn::BilstmCache<S> bilstm;            // when bidirectional
    nn::LstmSequenceCache<S> lstm;        // when unidirectional
    std::vector<nn::DropoutResult<S>> rnn_drop;
    std::vector<Tensor<S>> logits;
    std::vector<Tensor<S>> posteriors;
};

template <class S>
ForwardCache<S> forward_cached(const Params<S>& params, const features::ImageSequence& seq,
                               bool training, std::mt19937& rng);

std::vector<Posterior> forward(const ModelParams& params, const features::ImageSequence& seq,
                               bool training, std::mt19937& rng);
std::vector<Posterior> forward(const ModelParams& params, const features::ImageSequence& seq);

// Accumulates parameter gradients for the whole network given per-timestep
// logit gradients; grads must be zero-initialized Params of matching shape.
template <class S>
void backward(const Params<S>& params, const ForwardCache<S>& cache,
              const std::vector<Tensor<S>>& d_logits, Params<S>& grads);

template <class S>
Params<S> zero_like(const Params<S>& params);

// Model file: magic CBLV, version 1, config fields, tensors as dims + f32 LE.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace vadkit::model

#include "vadkit/model_impl.hpp"
