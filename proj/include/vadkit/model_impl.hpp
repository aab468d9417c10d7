#pragma once

// Template definitions for model.hpp; included from there.

#include <cmath>

namespace vadkit::model {

template <class S>
std::vector<Tensor<S>*> Params<S>::tensors() {
    std::vector<Tensor<S>*> t = {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b,
                                 &lstm_fwd.wx, &lstm_fwd.wh, &lstm_fwd.b};
    if (config.bidirectional) {
        t.push_back(&lstm_bwd.wx);
        t.push_back(&lstm_bwd.wh);
        t.push_back(&lstm_bwd.b);
    }
    t.push_back(&out_w);
    t.push_back(&out_b);
    return t;
}

template <class S>
std::vector<const Tensor<S>*> Params<S>::tensors() const {
    auto mut = const_cast<Params<S>*>(this)->tensors();
    return {mut.begin(), mut.end()};
}

template <class S>
std::vector<std::string> Params<S>::tensor_names() const {
    std::vector<std::string> n = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w",
                                  "dense_b", "lstm_fwd_wx", "lstm_fwd_wh", "lstm_fwd_b"};
    if (config.bidirectional) {
        n.insert(n.end(), {"lstm_bwd_wx", "lstm_bwd_wh", "lstm_bwd_b"});
    }
    n.insert(n.end(), {"out_w", "out_b"});
    return n;
}

template <class S>
std::size_t Params<S>::scalar_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
}

template <class S>
Params<S> build_model_t(const ModelConfig& config, std::uint64_t seed) {
    const auto shapes = derive_shapes(config);  // validates the config
    const auto C1 = static_cast<std::size_t>(config.conv1_width);
    const auto C2 = static_cast<std::size_t>(config.conv2_width);
    const auto D = static_cast<std::size_t>(config.dense_width);
    const auto L = static_cast<std::size_t>(config.lstm_width);
    const std::size_t dirs = config.bidirectional ? 2 : 1;

    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    Params<S> p;
    p.config = config;

    auto glorot = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    };

    p.conv1_w = Tensor<S>({(std::size_t)config.conv1_kh, (std::size_t)config.conv1_kw, 1, C1});
    nn::init_uniform(p.conv1_w,
                     glorot(config.conv1_kh * config.conv1_kw, config.conv1_kh * config.conv1_kw * C1),
                     rng);
    p.conv1_b = Tensor<S>({C1});

    p.conv2_w = Tensor<S>({(std::size_t)config.conv2_kh, (std::size_t)config.conv2_kw, C1, C2});
    nn::init_uniform(p.conv2_w,
                     glorot(config.conv2_kh * config.conv2_kw * C1,
                            config.conv2_kh * config.conv2_kw * C2),
                     rng);
    p.conv2_b = Tensor<S>({C2});

    p.dense_w = Tensor<S>({shapes.flat, D});
    nn::init_uniform(p.dense_w, glorot(shapes.flat, D), rng);
    p.dense_b = Tensor<S>({D});

    auto init_lstm = [&](nn::LstmParams<S>& lp) {
        lp.wx = Tensor<S>({4 * L, D});
        nn::init_uniform(lp.wx, glorot(D, 4 * L), rng);
        lp.wh = Tensor<S>({4 * L, L});
        nn::init_orthogonal_blocks(lp.wh, L, rng);
        lp.b = Tensor<S>({4 * L});
        for (std::size_t j = 0; j < L; ++j) lp.b[L + j] = S(1);  // forget gate bias
    };
    init_lstm(p.lstm_fwd);
    if (config.bidirectional) init_lstm(p.lstm_bwd);

    p.out_w = Tensor<S>({dirs * L, 2});
    nn::init_uniform(p.out_w, glorot(dirs * L, 2), rng);
    p.out_b = Tensor<S>({2});
    return p;
}

template <class S>
Tensor<S> image_to_tensor(const features::SpectrogramImage& img) {
    Tensor<S> t({features::kImageFrames, features::kNumBands, 1});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = S(img.pixels[i]);
    return t;
}

template <class S>
ForwardCache<S> forward_cached(const Params<S>& params, const features::ImageSequence& seq,
                               bool training, std::mt19937& rng) {
    if (seq.images.empty()) throw ArgumentError("forward: empty image sequence");
    ForwardCache<S> cache;
    const double rate = params.config.dropout_rate;
    std::vector<Tensor<S>> embeddings;
    for (const auto& img : seq.images) {
        ImageCache<S> ic;
        ic.input = image_to_tensor<S>(img);
        ic.conv1_out = nn::relu(nn::conv2d_valid(ic.input, params.conv1_w, params.conv1_b));
        ic.pool1 = nn::maxpool2x2(ic.conv1_out);
        ic.conv2_out = nn::relu(nn::conv2d_valid(ic.pool1.out, params.conv2_w, params.conv2_b));
        ic.pool2 = nn::maxpool2x2(ic.conv2_out);
        ic.flat = Tensor<S>({ic.pool2.out.size()}, ic.pool2.out.v);
        ic.dense_out = nn::dense(ic.flat, params.dense_w, params.dense_b, nn::Activation::Relu);
        ic.dense_drop = nn::dropout(ic.dense_out, rate, rng, training);
        embeddings.push_back(ic.dense_drop.out);
        cache.images.push_back(std::move(ic));
    }

    std::vector<Tensor<S>> rnn_out;
    if (params.config.bidirectional) {
        cache.bilstm = nn::bilstm_forward(embeddings, params.lstm_fwd, params.lstm_bwd);
        rnn_out = cache.bilstm.out;
    } else {
        cache.lstm = nn::lstm_forward(embeddings, params.lstm_fwd);
        rnn_out = cache.lstm.hs;
    }

    for (std::size_t t = 0; t < rnn_out.size(); ++t) {
        auto drop = nn::dropout(rnn_out[t], rate, rng, training);
        auto logits = nn::dense(drop.out, params.out_w, params.out_b, nn::Activation::None);
        cache.posteriors.push_back(nn::softmax(logits));
        cache.logits.push_back(std::move(logits));
        cache.rnn_drop.push_back(std::move(drop));
    }
    return cache;
}

template <class S>
Params<S> zero_like(const Params<S>& params) {
    Params<S> z;
    z.config = params.config;
    auto src = params.tensors();
    std::vector<Tensor<S>*> dst = z.tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Tensor<S>(src[i]->dims);
    return z;
}

template <class S>
void backward(const Params<S>& params, const ForwardCache<S>& cache,
              const std::vector<Tensor<S>>& d_logits, Params<S>& grads) {
    const std::size_t T = cache.logits.size();
    // output layer per timestep
    std::vector<Tensor<S>> d_rnn(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor<S> d_in, d_w, d_b;
        nn::dense_backward(cache.rnn_drop[t].out, params.out_w, cache.logits[t], d_logits[t],
                           nn::Activation::None, d_in, d_w, d_b);
        for (std::size_t i = 0; i < d_w.size(); ++i) grads.out_w[i] += d_w[i];
        for (std::size_t i = 0; i < d_b.size(); ++i) grads.out_b[i] += d_b[i];
        d_rnn[t] = nn::dropout_backward(cache.rnn_drop[t], d_in);
    }

    std::vector<Tensor<S>> d_emb;
    if (params.config.bidirectional) {
        d_emb = nn::bilstm_backward(cache.bilstm, params.lstm_fwd, params.lstm_bwd, d_rnn,
                                    grads.lstm_fwd, grads.lstm_bwd);
    } else {
        if (grads.lstm_fwd.wx.size() == 0) {
            grads.lstm_fwd.wx = Tensor<S>(params.lstm_fwd.wx.dims);
            grads.lstm_fwd.wh = Tensor<S>(params.lstm_fwd.wh.dims);
            grads.lstm_fwd.b = Tensor<S>(params.lstm_fwd.b.dims);
        }
        d_emb = nn::lstm_backward(cache.lstm, params.lstm_fwd, d_rnn, grads.lstm_fwd);
    }

    for (std::size_t t = 0; t < T; ++t) {
        const auto& ic = cache.images[t];
        auto d_dense_out = nn::dropout_backward(ic.dense_drop, d_emb[t]);
        Tensor<S> d_flat, d_dw, d_db;
        nn::dense_backward(ic.flat, params.dense_w, ic.dense_out, d_dense_out,
                           nn::Activation::Relu, d_flat, d_dw, d_db);
        for (std::size_t i = 0; i < d_dw.size(); ++i) grads.dense_w[i] += d_dw[i];
        for (std::size_t i = 0; i < d_db.size(); ++i) grads.dense_b[i] += d_db[i];

        Tensor<S> d_pool2(ic.pool2.out.dims, d_flat.v);
        auto d_conv2_out = nn::maxpool2x2_backward(ic.pool2, d_pool2, ic.conv2_out.dims);
        d_conv2_out = nn::relu_backward(ic.conv2_out, d_conv2_out);
        Tensor<S> d_pool1_out, d_k2, d_b2;
        nn::conv2d_valid_backward(ic.pool1.out, params.conv2_w, d_conv2_out, d_pool1_out, d_k2,
                                  d_b2);
        for (std::size_t i = 0; i < d_k2.size(); ++i) grads.conv2_w[i] += d_k2[i];
        for (std::size_t i = 0; i < d_b2.size(); ++i) grads.conv2_b[i] += d_b2[i];

        auto d_conv1_out = nn::maxpool2x2_backward(ic.pool1, d_pool1_out, ic.conv1_out.dims);
        d_conv1_out = nn::relu_backward(ic.conv1_out, d_conv1_out);
        Tensor<S> d_img, d_k1, d_b1;
        nn::conv2d_valid_backward(ic.input, params.conv1_w, d_conv1_out, d_img, d_k1, d_b1);
        for (std::size_t i = 0; i < d_k1.size(); ++i) grads.conv1_w[i] += d_k1[i];
        for (std::size_t i = 0; i < d_b1.size(); ++i) grads.conv1_b[i] += d_b1[i];
    }
}

}  // namespace vadkit::model
