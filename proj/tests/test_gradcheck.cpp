#include <doctest.h>

#include <cmath>
#include <random>

#include "vadkit/model.hpp"
#include "vadkit/nn.hpp"

using namespace vadkit;
using namespace vadkit::nn;

// Central finite differences in double precision against every analytic
// gradient path. Step 1e-3, relative error below 1e-4, 20 seeds per layer.

namespace {

constexpr double kStep = 1e-3;
constexpr double kTol = 1e-4;
constexpr int kSeeds = 20;

double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

template <class F>
void check_tensor_grad(Tensor<double>& subject, const Tensor<double>& analytic, F loss) {
    REQUIRE(analytic.size() == subject.size());
    for (std::size_t i = 0; i < subject.size(); ++i) {
        const double keep = subject[i];
        subject[i] = keep + kStep;
        const double up = loss();
        subject[i] = keep - kStep;
        const double down = loss();
        subject[i] = keep;
        const double numeric = (up - down) / (2.0 * kStep);
        CHECK(rel_err(analytic[i], numeric) < kTol);
    }
}

void randomize(Tensor<double>& t, std::mt19937& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& x : t.v) x = u(rng);
}

// Fixed random projection turns a tensor-valued output into a scalar loss
// with a dense, well-conditioned gradient.
Tensor<double> projection(const std::vector<std::size_t>& dims, std::mt19937& rng) {
    Tensor<double> r(dims);
    randomize(r, rng);
    return r;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

TEST_CASE("gradcheck: conv2d") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(100 + seed);
        Tensor<double> input({6, 7, 2}), k({3, 3, 2, 3}), b({3});
        randomize(input, rng);
        randomize(k, rng, 0.5);
        randomize(b, rng, 0.5);
        auto out = conv2d_valid(input, k, b);
        auto r = projection(out.dims, rng);

        Tensor<double> d_input, d_k, d_b;
        conv2d_valid_backward(input, k, r, d_input, d_k, d_b);

        auto loss = [&] { return dot(conv2d_valid(input, k, b), r); };
        check_tensor_grad(input, d_input, loss);
        check_tensor_grad(k, d_k, loss);
        check_tensor_grad(b, d_b, loss);
    }
}

TEST_CASE("gradcheck: maxpool2x2") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(200 + seed);
        Tensor<double> input({6, 6, 2});
        randomize(input, rng);
        // keep each window's max clear of ties so the step can't flip it
        auto pooled0 = maxpool2x2(input);
        for (std::size_t i = 0; i < pooled0.argmax.size(); ++i)
            input[pooled0.argmax[i]] += 0.05;

        auto pooled = maxpool2x2(input);
        auto r = projection(pooled.out.dims, rng);
        auto d_input = maxpool2x2_backward(pooled, r, input.dims);

        auto loss = [&] { return dot(maxpool2x2(input).out, r); };
        check_tensor_grad(input, d_input, loss);
    }
}

TEST_CASE("gradcheck: dense with relu") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(300 + seed);
        Tensor<double> x({7}), w({7, 5}), b({5});
        randomize(x, rng);
        randomize(w, rng, 0.7);
        randomize(b, rng, 0.7);
        auto out = dense(x, w, b, Activation::Relu);
        auto r = projection(out.dims, rng);

        Tensor<double> d_x, d_w, d_b;
        dense_backward(x, w, out, r, Activation::Relu, d_x, d_w, d_b);

        // skip seeds with a pre-activation too close to the relu kink
        bool near_kink = false;
        auto pre = dense(x, w, b, Activation::None);
        for (double v : pre.v) near_kink |= std::abs(v) < 10 * kStep;
        if (near_kink) continue;

        auto loss = [&] { return dot(dense(x, w, b, Activation::Relu), r); };
        check_tensor_grad(x, d_x, loss);
        check_tensor_grad(w, d_w, loss);
        check_tensor_grad(b, d_b, loss);
    }
}

TEST_CASE("gradcheck: lstm over a sequence") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(400 + seed);
        const std::size_t T = 4, n = 3, m = 4;
        LstmParams<double> p;
        p.wx = Tensor<double>({4 * m, n});
        p.wh = Tensor<double>({4 * m, m});
        p.b = Tensor<double>({4 * m});
        randomize(p.wx, rng, 0.5);
        randomize(p.wh, rng, 0.5);
        randomize(p.b, rng, 0.5);
        std::vector<Tensor<double>> seq(T);
        for (auto& x : seq) {
            x = Tensor<double>({n});
            randomize(x, rng);
        }
        std::vector<Tensor<double>> r(T);
        for (auto& x : r) x = projection({m}, rng);

        auto cache = lstm_forward(seq, p);
        LstmParams<double> grads;
        auto d_xs = lstm_backward(cache, p, r, grads);

        auto loss = [&] {
            auto c = lstm_forward(seq, p);
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += dot(c.hs[t], r[t]);
            return acc;
        };
        check_tensor_grad(p.wx, grads.wx, loss);
        check_tensor_grad(p.wh, grads.wh, loss);
        check_tensor_grad(p.b, grads.b, loss);
        for (std::size_t t = 0; t < T; ++t) check_tensor_grad(seq[t], d_xs[t], loss);
    }
}

TEST_CASE("gradcheck: bilstm over a sequence") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(500 + seed);
        const std::size_t T = 3, n = 3, m = 2;
        auto mk = [&] {
            LstmParams<double> p;
            p.wx = Tensor<double>({4 * m, n});
            p.wh = Tensor<double>({4 * m, m});
            p.b = Tensor<double>({4 * m});
            randomize(p.wx, rng, 0.5);
            randomize(p.wh, rng, 0.5);
            randomize(p.b, rng, 0.5);
            return p;
        };
        auto fwd = mk(), bwd = mk();
        std::vector<Tensor<double>> seq(T);
        for (auto& x : seq) {
            x = Tensor<double>({n});
            randomize(x, rng);
        }
        std::vector<Tensor<double>> r(T);
        for (auto& x : r) x = projection({2 * m}, rng);

        auto cache = bilstm_forward(seq, fwd, bwd);
        LstmParams<double> gf, gb;
        auto d_xs = bilstm_backward(cache, fwd, bwd, r, gf, gb);

        auto loss = [&] {
            auto c = bilstm_forward(seq, fwd, bwd);
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += dot(c.out[t], r[t]);
            return acc;
        };
        check_tensor_grad(fwd.wx, gf.wx, loss);
        check_tensor_grad(fwd.wh, gf.wh, loss);
        check_tensor_grad(fwd.b, gf.b, loss);
        check_tensor_grad(bwd.wx, gb.wx, loss);
        check_tensor_grad(bwd.wh, gb.wh, loss);
        check_tensor_grad(bwd.b, gb.b, loss);
        for (std::size_t t = 0; t < T; ++t) check_tensor_grad(seq[t], d_xs[t], loss);
    }
}

TEST_CASE("gradcheck: softmax cross-entropy") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        std::mt19937 rng(600 + seed);
        Tensor<double> z({2});
        randomize(z, rng, 2.0);
        const int target = seed % 2;

        Tensor<double> d_logits;
        bce_loss(softmax(z), target, d_logits);

        auto loss = [&] {
            Tensor<double> d;
            return bce_loss(softmax(z), target, d);
        };
        check_tensor_grad(z, d_logits, loss);
    }
}

TEST_CASE("gradcheck: full network end to end") {
    model::ModelConfig base;
    base.conv1_kh = base.conv1_kw = 3;
    base.conv1_width = 2;
    base.conv2_kh = base.conv2_kw = 3;
    base.conv2_width = 3;
    base.dense_width = 4;
    base.lstm_width = 3;

    for (bool bidirectional : {true, false}) {
        auto config = base;
        config.bidirectional = bidirectional;
        for (int seed = 0; seed < kSeeds; ++seed) {
            std::mt19937 rng(700 + seed);
            auto params = model::build_model_t<double>(config, 9000 + seed);

            features::ImageSequence seq;
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::vector<int> targets;
            std::bernoulli_distribution coin(0.5);
            for (int t = 0; t < 3; ++t) {
                features::SpectrogramImage img;
                img.pixels.resize(features::kImageFrames * features::kNumBands);
                for (auto& px : img.pixels) px = static_cast<float>(gauss(rng));
                seq.images.push_back(img);
                targets.push_back(coin(rng) ? 1 : 0);
            }

            std::mt19937 unused(0);
            auto loss = [&] {
                auto cache = model::forward_cached(params, seq, false, unused);
                double acc = 0.0;
                Tensor<double> d;
                for (std::size_t t = 0; t < cache.posteriors.size(); ++t)
                    acc += bce_loss(cache.posteriors[t], targets[t], d);
                return acc;
            };

            auto cache = model::forward_cached(params, seq, false, unused);
            std::vector<Tensor<double>> d_logits(cache.posteriors.size());
            for (std::size_t t = 0; t < cache.posteriors.size(); ++t)
                bce_loss(cache.posteriors[t], targets[t], d_logits[t]);
            auto grads = model::zero_like(params);
            model::backward(params, cache, d_logits, grads);

            auto ptensors = params.tensors();
            auto gtensors = grads.tensors();
            REQUIRE(ptensors.size() == gtensors.size());
            std::mt19937 pick(800 + seed);
            std::size_t probes_used = 0, probes_total = 0;
            for (std::size_t ti = 0; ti < ptensors.size(); ++ti) {
                auto& subject = *ptensors[ti];
                const auto& analytic = *gtensors[ti];
                REQUIRE(analytic.size() == subject.size());
                // sample a handful of coordinates per tensor
                std::uniform_int_distribution<std::size_t> idx(0, subject.size() - 1);
                for (int probe = 0; probe < 6; ++probe) {
                    const std::size_t i = idx(pick);
                    const double keep = subject[i];
                    auto fd = [&](double h) {
                        subject[i] = keep + h;
                        const double up = loss();
                        subject[i] = keep - h;
                        const double down = loss();
                        subject[i] = keep;
                        return (up - down) / (2.0 * h);
                    };
                    const double numeric = fd(kStep);
                    const double half = fd(kStep / 2);
                    ++probes_total;
                    // a relu kink or pool tie inside the step window makes the
                    // estimate itself step-size dependent; skip those probes
                    if (rel_err(numeric, half) > kTol / 2) continue;
                    ++probes_used;
                    CHECK(rel_err(analytic[i], numeric) < kTol);
                }
            }
            CHECK(probes_used * 2 >= probes_total);
        }
    }
}
