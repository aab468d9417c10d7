#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vadkit/errors.hpp"
#include "vadkit/tensor.hpp"

namespace vadkit::nn {

// ---------------------------------------------------------------------------
// Convolution, valid padding, stride 1. input [H,W,Cin], kernels
// [kh,kw,Cin,Cout], bias [Cout] -> [H-kh+1, W-kw+1, Cout].
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d_valid(const Tensor<S>& input, const Tensor<S>& kernels, const Tensor<S>& bias) {
    const std::size_t H = input.dims[0], W = input.dims[1], Cin = input.dims[2];
    const std::size_t kh = kernels.dims[0], kw = kernels.dims[1], Cout = kernels.dims[3];
    if (kernels.dims[2] != Cin) throw ShapeError("conv2d: channel mismatch");
    if (kh > H || kw > W) throw ShapeError("conv2d: kernel larger than input");
    const std::size_t oh = H - kh + 1, ow = W - kw + 1;
    Tensor<S> out({oh, ow, Cout});
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t o = 0; o < Cout; ++o) {
                S acc = bias[o];
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx)
                        for (std::size_t c = 0; c < Cin; ++c)
                            acc += input.at3(y + dy, x + dx, c) * kernels.at4(dy, dx, c, o);
                out.at3(y, x, o) = acc;
            }
    return out;
}

template <class S>
void conv2d_valid_backward(const Tensor<S>& input, const Tensor<S>& kernels,
                           const Tensor<S>& d_out, Tensor<S>& d_input, Tensor<S>& d_kernels,
                           Tensor<S>& d_bias) {
    const std::size_t kh = kernels.dims[0], kw = kernels.dims[1];
    const std::size_t Cin = kernels.dims[2], Cout = kernels.dims[3];
    const std::size_t oh = d_out.dims[0], ow = d_out.dims[1];
    d_input = Tensor<S>(input.dims);
    d_kernels = Tensor<S>(kernels.dims);
    d_bias = Tensor<S>({Cout});
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t o = 0; o < Cout; ++o) {
                const S g = d_out.at3(y, x, o);
                d_bias[o] += g;
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx)
                        for (std::size_t c = 0; c < Cin; ++c) {
                            d_kernels.at4(dy, dx, c, o) += input.at3(y + dy, x + dx, c) * g;
                            d_input.at3(y + dy, x + dx, c) += kernels.at4(dy, dx, c, o) * g;
                        }
            }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling with stride 2; odd trailing row/column dropped.
// ---------------------------------------------------------------------------

template <class S>
struct PoolResult {
    Tensor<S> out;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

template <class S>
PoolResult<S> maxpool2x2(const Tensor<S>& input) {
    const std::size_t H = input.dims[0], W = input.dims[1], C = input.dims[2];
    if (H < 2 || W < 2) throw ShapeError("maxpool2x2: input smaller than 2x2");
    const std::size_t oh = H / 2, ow = W / 2;
    PoolResult<S> r;
    r.out = Tensor<S>({oh, ow, C});
    r.argmax.resize(oh * ow * C);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t c = 0; c < C; ++c) {
                S best = input.at3(2 * y, 2 * x, c);
                std::size_t best_idx = ((2 * y) * W + 2 * x) * C + c;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const S v = input.at3(2 * y + dy, 2 * x + dx, c);
                        if (v > best) {
                            best = v;
                            best_idx = ((2 * y + dy) * W + 2 * x + dx) * C + c;
                        }
                    }
                r.out.at3(y, x, c) = best;
                r.argmax[(y * ow + x) * C + c] = best_idx;
            }
    return r;
}

template <class S>
Tensor<S> maxpool2x2_backward(const PoolResult<S>& pooled, const Tensor<S>& d_out,
                              const std::vector<std::size_t>& input_dims) {
    Tensor<S> d_input(input_dims);
    for (std::size_t i = 0; i < d_out.size(); ++i) d_input[pooled.argmax[i]] += d_out[i];
    return d_input;
}

// ---------------------------------------------------------------------------
// Dense layer: out = act(W^T x + b), W stored [n, m].
// ---------------------------------------------------------------------------

enum class Activation { None, Relu };

template <class S>
Tensor<S> dense(const Tensor<S>& input, const Tensor<S>& w, const Tensor<S>& b, Activation act) {
    const std::size_t n = w.dims[0], m = w.dims[1];
    if (input.size() != n || b.size() != m) throw ShapeError("dense: shape mismatch");
    Tensor<S> out({m});
    for (std::size_t j = 0; j < m; ++j) {
        S acc = b[j];
        for (std::size_t i = 0; i < n; ++i) acc += w.at2(i, j) * input[i];
        out[j] = (act == Activation::Relu && acc < S(0)) ? S(0) : acc;
    }
    return out;
}

// d_out is the gradient at the layer output (post-activation); for ReLU the
// cached output is enough to gate the gradient.
template <class S>
void dense_backward(const Tensor<S>& input, const Tensor<S>& w, const Tensor<S>& out,
                    const Tensor<S>& d_out, Activation act, Tensor<S>& d_input, Tensor<S>& d_w,
                    Tensor<S>& d_b) {
    const std::size_t n = w.dims[0], m = w.dims[1];
    d_input = Tensor<S>({n});
    d_w = Tensor<S>(w.dims);
    d_b = Tensor<S>({m});
    for (std::size_t j = 0; j < m; ++j) {
        S g = d_out[j];
        if (act == Activation::Relu && out[j] <= S(0)) g = S(0);
        d_b[j] = g;
        for (std::size_t i = 0; i < n; ++i) {
            d_w.at2(i, j) = input[i] * g;
            d_input[i] += w.at2(i, j) * g;
        }
    }
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out = x;
    for (auto& v : out.v)
        if (v < S(0)) v = S(0);
    return out;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& out, const Tensor<S>& d_out) {
    Tensor<S> d = d_out;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (out[i] <= S(0)) d[i] = S(0);
    return d;
}

// ---------------------------------------------------------------------------
// LSTM. Gate order (i, f, g, o), stacked along the first axis of every
// parameter: wx [4m, n], wh [4m, m], b [4m].
// ---------------------------------------------------------------------------

template <class S>
struct LstmParams {
    Tensor<S> wx, wh, b;

    std::size_t hidden() const { return wh.dims[1]; }
    std::size_t input() const { return wx.dims[1]; }
};

template <class S>
struct LstmStepCache {
    Tensor<S> x, h_prev, c_prev;
    Tensor<S> i, f, g, o, c, tanh_c;
};

template <class S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <class S>
LstmStepCache<S> lstm_cell_step(const Tensor<S>& x, const Tensor<S>& h_prev,
                                const Tensor<S>& c_prev, const LstmParams<S>& p) {
    const std::size_t m = p.hidden(), n = p.input();
    if (x.size() != n || h_prev.size() != m || c_prev.size() != m)
        throw ShapeError("lstm_cell_step: shape mismatch");
    LstmStepCache<S> cc;
    cc.x = x;
    cc.h_prev = h_prev;
    cc.c_prev = c_prev;
    cc.i = Tensor<S>({m});
    cc.f = Tensor<S>({m});
    cc.g = Tensor<S>({m});
    cc.o = Tensor<S>({m});
    cc.c = Tensor<S>({m});
    cc.tanh_c = Tensor<S>({m});
    for (std::size_t j = 0; j < m; ++j) {
        S pre[4];
        for (int gate = 0; gate < 4; ++gate) {
            const std::size_t row = gate * m + j;
            S acc = p.b[row];
            for (std::size_t k = 0; k < n; ++k) acc += p.wx.at2(row, k) * x[k];
            for (std::size_t k = 0; k < m; ++k) acc += p.wh.at2(row, k) * h_prev[k];
            pre[gate] = acc;
        }
        cc.i[j] = sigmoid(pre[0]);
        cc.f[j] = sigmoid(pre[1]);
        cc.g[j] = std::tanh(pre[2]);
        cc.o[j] = sigmoid(pre[3]);
        cc.c[j] = cc.f[j] * c_prev[j] + cc.i[j] * cc.g[j];
        cc.tanh_c[j] = std::tanh(cc.c[j]);
    }
    return cc;
}

template <class S>
Tensor<S> lstm_h(const LstmStepCache<S>& cc) {
    Tensor<S> h({cc.o.size()});
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = cc.o[j] * cc.tanh_c[j];
    return h;
}

template <class S>
struct LstmSequenceCache {
    std::vector<LstmStepCache<S>> steps;
    std::vector<Tensor<S>> hs;
};

template <class S>
LstmSequenceCache<S> lstm_forward(const std::vector<Tensor<S>>& seq, const LstmParams<S>& p) {
    const std::size_t m = p.hidden();
    LstmSequenceCache<S> cache;
    Tensor<S> h({m}), c({m});
    for (const auto& x : seq) {
        auto step = lstm_cell_step(x, h, c, p);
        h = lstm_h(step);
        c = step.c;
        cache.hs.push_back(h);
        cache.steps.push_back(std::move(step));
    }
    return cache;
}

// BPTT over the cached forward pass. d_hs holds dLoss/dh_t for each t.
// Returns dLoss/dx_t; parameter gradients are accumulated into grads.
template <class S>
std::vector<Tensor<S>> lstm_backward(const LstmSequenceCache<S>& cache, const LstmParams<S>& p,
                                     const std::vector<Tensor<S>>& d_hs, LstmParams<S>& grads) {
    const std::size_t m = p.hidden(), n = p.input();
    const std::size_t T = cache.steps.size();
    if (grads.wx.size() == 0) {
        grads.wx = Tensor<S>(p.wx.dims);
        grads.wh = Tensor<S>(p.wh.dims);
        grads.b = Tensor<S>(p.b.dims);
    }
    std::vector<Tensor<S>> d_xs(T);
    Tensor<S> dh_next({m}), dc_next({m});
    for (std::size_t tt = T; tt-- > 0;) {
        const auto& st = cache.steps[tt];
        Tensor<S> dh = d_hs[tt];
        for (std::size_t j = 0; j < m; ++j) dh[j] += dh_next[j];
        Tensor<S> dpre({4 * m});
        Tensor<S> dc({m});
        for (std::size_t j = 0; j < m; ++j) {
            const S tc = st.tanh_c[j];
            dc[j] = dc_next[j] + dh[j] * st.o[j] * (S(1) - tc * tc);
            const S d_o = dh[j] * tc;
            dpre[3 * m + j] = d_o * st.o[j] * (S(1) - st.o[j]);
            dpre[0 * m + j] = dc[j] * st.g[j] * st.i[j] * (S(1) - st.i[j]);
            dpre[2 * m + j] = dc[j] * st.i[j] * (S(1) - st.g[j] * st.g[j]);
            dpre[1 * m + j] = dc[j] * st.c_prev[j] * st.f[j] * (S(1) - st.f[j]);
        }
        Tensor<S> dx({n});
        Tensor<S> dh_prev({m});
        for (std::size_t row = 0; row < 4 * m; ++row) {
            const S g = dpre[row];
            if (g == S(0)) continue;
            grads.b[row] += g;
            for (std::size_t k = 0; k < n; ++k) {
                grads.wx.at2(row, k) += st.x[k] * g;
                dx[k] += p.wx.at2(row, k) * g;
            }
            for (std::size_t k = 0; k < m; ++k) {
                grads.wh.at2(row, k) += st.h_prev[k] * g;
                dh_prev[k] += p.wh.at2(row, k) * g;
            }
        }
        for (std::size_t j = 0; j < m; ++j) dc_next[j] = dc[j] * st.f[j];
        dh_next = dh_prev;
        d_xs[tt] = std::move(dx);
    }
    return d_xs;
}

template <class S>
struct BilstmCache {
    LstmSequenceCache<S> fwd;
    LstmSequenceCache<S> bwd;  // over the reversed sequence
    std::vector<Tensor<S>> out;
};

// output[t] = concat(h_fwd[t], h_bwd[t]), zero initial states both ways.
template <class S>
BilstmCache<S> bilstm_forward(const std::vector<Tensor<S>>& seq, const LstmParams<S>& fwd_params,
                              const LstmParams<S>& bwd_params) {
    if (seq.empty()) throw ArgumentError("bilstm_forward: empty sequence");
    const std::size_t T = seq.size();
    BilstmCache<S> cache;
    cache.fwd = lstm_forward(seq, fwd_params);
    std::vector<Tensor<S>> rev(seq.rbegin(), seq.rend());
    cache.bwd = lstm_forward(rev, bwd_params);
    const std::size_t m = fwd_params.hidden(), mb = bwd_params.hidden();
    cache.out.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor<S> o({m + mb});
        for (std::size_t j = 0; j < m; ++j) o[j] = cache.fwd.hs[t][j];
        for (std::size_t j = 0; j < mb; ++j) o[m + j] = cache.bwd.hs[T - 1 - t][j];
        cache.out[t] = std::move(o);
    }
    return cache;
}

template <class S>
std::vector<Tensor<S>> bilstm_backward(const BilstmCache<S>& cache,
                                       const LstmParams<S>& fwd_params,
                                       const LstmParams<S>& bwd_params,
                                       const std::vector<Tensor<S>>& d_out,
                                       LstmParams<S>& fwd_grads, LstmParams<S>& bwd_grads) {
    const std::size_t T = cache.out.size();
    const std::size_t m = fwd_params.hidden(), mb = bwd_params.hidden();
    std::vector<Tensor<S>> d_fwd(T), d_bwd(T);
    for (std::size_t t = 0; t < T; ++t) {
        d_fwd[t] = Tensor<S>({m});
        for (std::size_t j = 0; j < m; ++j) d_fwd[t][j] = d_out[t][j];
        d_bwd[T - 1 - t] = Tensor<S>({mb});
        for (std::size_t j = 0; j < mb; ++j) d_bwd[T - 1 - t][j] = d_out[t][m + j];
    }
    auto dx_fwd = lstm_backward(cache.fwd, fwd_params, d_fwd, fwd_grads);
    auto dx_bwd = lstm_backward(cache.bwd, bwd_params, d_bwd, bwd_grads);
    std::vector<Tensor<S>> d_xs(T);
    for (std::size_t t = 0; t < T; ++t) {
        d_xs[t] = dx_fwd[t];
        for (std::size_t k = 0; k < d_xs[t].size(); ++k) d_xs[t][k] += dx_bwd[T - 1 - t][k];
    }
    return d_xs;
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy over the two-class softmax.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> softmax(const Tensor<S>& logits) {
    if (logits.size() == 0) throw ArgumentError("softmax: empty input");
    S mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    Tensor<S> out({logits.size()});
    S sum = S(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& x : out.v) x /= sum;
    return out;
}

// loss = -ln(posterior[target]) with the posterior clamped to
// [1e-7, 1-1e-7]; d_logits is the gradient through the softmax.
template <class S>
S bce_loss(const Tensor<S>& posteriors, int target, Tensor<S>& d_logits) {
    const S lo = S(1e-7), hi = S(1) - S(1e-7);
    const S p = std::min(std::max(posteriors[target], lo), hi);
    d_logits = posteriors;
    d_logits[target] -= S(1);
    return -std::log(p);
}

// ---------------------------------------------------------------------------
// Inverted dropout.
// ---------------------------------------------------------------------------

template <class S>
struct DropoutResult {
    Tensor<S> out;
    std::vector<S> mask;  // per-element multiplier, empty when inert
};

template <class S>
DropoutResult<S> dropout(const Tensor<S>& input, double rate, std::mt19937& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must be in [0,1)");
    DropoutResult<S> r;
    if (!training || rate == 0.0) {
        r.out = input;
        return r;
    }
    const S keep_scale = S(1.0 / (1.0 - rate));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    r.out = input;
    r.mask.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const S m = u(rng) < rate ? S(0) : keep_scale;
        r.mask[i] = m;
        r.out[i] *= m;
    }
    return r;
}

template <class S>
Tensor<S> dropout_backward(const DropoutResult<S>& r, const Tensor<S>& d_out) {
    if (r.mask.empty()) return d_out;
    Tensor<S> d = d_out;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= r.mask[i];
    return d;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

template <class S>
struct AdamState {
    std::uint64_t step_count = 0;
    std::vector<Tensor<S>> m, v;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

template <class S>
void adam_step(std::vector<Tensor<S>*> params, const std::vector<const Tensor<S>*>& grads,
               AdamState<S>& state, const std::vector<std::string>& names = {}) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: param/grad count mismatch");
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.emplace_back(p->dims);
            state.v.emplace_back(p->dims);
        }
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        const auto& g = *grads[pi];
        if (!p.same_shape(g)) throw ShapeError("adam_step: grad shape mismatch");
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            if (!std::isfinite(gi)) {
                const std::string name =
                    pi < names.size() ? names[pi] : "parameter " + std::to_string(pi);
                throw TrainingError("non-finite gradient in " + name);
            }
            m[i] = S(state.beta1 * m[i] + (1.0 - state.beta1) * gi);
            v[i] = S(state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] = S(p[i] - state.lr * mhat / (std::sqrt(vhat) + state.epsilon));
        }
    }
}

// ---------------------------------------------------------------------------
// Initializers.
// ---------------------------------------------------------------------------

template <class S>
void init_uniform(Tensor<S>& t, double limit, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& x : t.v) x = S(u(rng));
}

// Orthogonalize square blocks stacked along the first axis (Gram-Schmidt on
// Gaussian draws); used for recurrent weight matrices.
template <class S>
void init_orthogonal_blocks(Tensor<S>& t, std::size_t block, std::mt19937& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t cols = t.dims[1];
    for (std::size_t b0 = 0; b0 + block <= t.dims[0]; b0 += block) {
        std::vector<std::vector<double>> rows(block, std::vector<double>(cols));
        for (auto& r : rows)
            for (auto& x : r) x = gauss(rng);
        for (std::size_t i = 0; i < block; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < cols; ++k) dot += rows[i][k] * rows[j][k];
                for (std::size_t k = 0; k < cols; ++k) rows[i][k] -= dot * rows[j][k];
            }
            double norm = 0.0;
            for (double x : rows[i]) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-12) norm = 1.0;
            for (auto& x : rows[i]) x /= norm;
        }
        for (std::size_t i = 0; i < block; ++i)
            for (std::size_t k = 0; k < cols; ++k) t.at2(b0 + i, k) = S(rows[i][k]);
    }
}

}  // namespace vadkit::nn
