#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "test_util.hpp"
#include "vadkit/features.hpp"

using namespace vadkit;
using namespace vadkit::features;

namespace {

// O(n^2) DFT magnitude oracle for a windowed, zero-padded frame.
std::vector<double> naive_stft_frame(const std::vector<double>& frame, std::size_t fft_size) {
    const std::size_t w = frame.size();
    std::vector<double> windowed(fft_size, 0.0);
    for (std::size_t n = 0; n < w; ++n)
        windowed[n] = frame[n] * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / w));
    std::vector<double> mags(fft_size / 2 + 1);
    for (std::size_t k = 0; k <= fft_size / 2; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t n = 0; n < fft_size; ++n) {
            const double ang = -2.0 * std::numbers::pi * k * n / fft_size;
            acc += windowed[n] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        mags[k] = std::abs(acc);
    }
    return mags;
}

}  // namespace

TEST_CASE("frame_signal count formula") {
    audio::AudioBuffer buf;
    buf.sample_rate_hz = 16000;

    buf.samples.assign(400, 0.1);
    CHECK(frame_signal(buf, 0.025, 0.01).size() == 1);

    buf.samples.assign(720, 0.1);
    auto frames = frame_signal(buf, 0.025, 0.01);
    REQUIRE(frames.size() == 3);
    // starts at samples 0, 160, 320
    buf.samples[160] = 0.7;
    frames = frame_signal(buf, 0.025, 0.01);
    CHECK(frames[1][0] == 0.7);
    CHECK(frames[2][0] == 0.1);

    buf.samples.assign(399, 0.1);
    CHECK(frame_signal(buf, 0.025, 0.01).empty());
}

TEST_CASE("stft of an impulse at index 0 is zero (Hann endpoint)") {
    std::vector<std::vector<double>> frames = {std::vector<double>(400, 0.0)};
    frames[0][0] = 1.0;
    auto spectra = stft_magnitude(frames, 512);
    for (double m : spectra[0]) CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("stft bin 0 of a constant frame equals the Hann window sum") {
    std::vector<std::vector<double>> frames = {std::vector<double>(400, 1.0)};
    auto spectra = stft_magnitude(frames, 512);
    // periodic Hann sums to W/2
    CHECK(spectra[0][0] == doctest::Approx(200.0).epsilon(1e-9));
}

TEST_CASE("stft matches the naive DFT oracle") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t len : {16u, 31u, 64u}) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> frame(len);
            for (auto& x : frame) x = u(rng);
            const std::size_t fft_size = 64;
            auto got = stft_magnitude({frame}, fft_size)[0];
            auto want = naive_stft_frame(frame, fft_size);
            for (std::size_t k = 0; k < want.size(); ++k)
                CHECK(std::abs(got[k] - want[k]) <= 1e-9 * std::max(1.0, std::abs(want[k])));
        }
    }
}

TEST_CASE("stft rejects a non-power-of-two FFT size") {
    std::vector<std::vector<double>> frames = {std::vector<double>(100, 0.0)};
    CHECK_THROWS_AS(stft_magnitude(frames, 300), ConfigError);
}

TEST_CASE("mel filterbank construction") {
    auto fb = mel_filterbank(32, 512, 16000, 0.0, 8000.0);

    for (std::size_t b = 1; b < fb.band_centers_hz.size(); ++b)
        CHECK(fb.band_centers_hz[b] > fb.band_centers_hz[b - 1]);
    CHECK(fb.band_centers_hz.front() > 0.0);
    CHECK(fb.band_centers_hz.back() < 8000.0);

    // centers sit at mel-equispaced edge points: center of band b is edge
    // b+1 of 34 points spanning [0, mel(8000)]
    const double mel_hi = hz_to_mel(8000.0);
    CHECK(mel_hi == doctest::Approx(2840.0).epsilon(1e-4));
    for (std::size_t b = 0; b < 32; ++b) {
        const double want = mel_to_hz(mel_hi * (b + 1) / 33.0);
        CHECK(fb.band_centers_hz[b] == doctest::Approx(want).epsilon(1e-12));
    }

    for (const auto& band : fb.weights)
        for (double w : band) CHECK(w >= 0.0);

    // triangular support is contiguous per band
    for (const auto& band : fb.weights) {
        bool seen = false, ended = false;
        for (double w : band) {
            if (w > 0.0) {
                CHECK(!ended);
                seen = true;
            } else if (seen) {
                ended = true;
            }
        }
    }
}

TEST_CASE("mel filterbank peaks at 1.0 when a bin lands on a band center") {
    // choose fmin/fmax so that a band center falls exactly on a bin
    auto fb = mel_filterbank(32, 512, 16000, 0.0, 8000.0);
    // evaluate the triangle at the exact center frequency analytically
    for (std::size_t b = 0; b < 4; ++b) {
        const double center = fb.band_centers_hz[b];
        // nearest bin weight should approach 1 as the bin approaches the center
        double best = 0.0;
        for (double w : fb.weights[b]) best = std::max(best, w);
        CHECK(best > 0.5);
        CHECK(best <= 1.0 + 1e-12);
        (void)center;
    }
}

TEST_CASE("mel filterbank rejects invalid ranges") {
    CHECK_THROWS_AS(mel_filterbank(32, 512, 16000, 4000.0, 2000.0), ConfigError);
    CHECK_THROWS_AS(mel_filterbank(32, 512, 16000, 0.0, 9000.0), ConfigError);
}

TEST_CASE("log_mel floors at the configured floor") {
    auto fb = mel_filterbank(32, 512, 16000, 0.0, 8000.0);
    std::vector<std::vector<double>> spectra = {std::vector<double>(257, 0.0)};
    auto out = log_mel(spectra, fb, 1e-10);
    for (double x : out[0]) CHECK(x == doctest::Approx(std::log(1e-10)).epsilon(1e-12));
}

TEST_CASE("log_mel of a 1 kHz tone peaks in the band nearest 1 kHz") {
    auto buf = testutil::sine(1000.0, 0.5, 0.5);
    auto frames = frame_signal(buf, kWindowS, kStepS);
    auto spectra = stft_magnitude(frames, kFftSize);
    auto fb = mel_filterbank(32, 512, 16000, 0.0, 8000.0);
    auto mel = log_mel(spectra, fb);

    std::size_t want = 0;
    for (std::size_t b = 1; b < 32; ++b)
        if (std::abs(fb.band_centers_hz[b] - 1000.0) <
            std::abs(fb.band_centers_hz[want] - 1000.0))
            want = b;

    const auto& row = mel[mel.size() / 2];
    std::size_t got = 0;
    for (std::size_t b = 1; b < 32; ++b)
        if (row[b] > row[got]) got = b;
    CHECK(got == want);
}

TEST_CASE("log_mel is monotone in spectral magnitude per band") {
    auto fb = mel_filterbank(32, 512, 16000, 0.0, 8000.0);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> spec(257);
    for (auto& x : spec) x = u(rng);
    std::vector<double> bigger = spec;
    for (auto& x : bigger) x *= 1.5;
    auto lo = log_mel({spec}, fb);
    auto hi = log_mel({bigger}, fb);
    for (std::size_t b = 0; b < 32; ++b) CHECK(hi[0][b] >= lo[0][b]);
}

TEST_CASE("stack_images tiles the timeline") {
    std::vector<std::vector<double>> mel(320, std::vector<double>(32, 0.0));
    for (std::size_t t = 0; t < mel.size(); ++t) mel[t][0] = static_cast<double>(t);

    auto seq = stack_images(mel, 1);
    REQUIRE(seq.images.size() == 10);
    CHECK(seq.images[3].at(0, 0) == 96.0f);
    CHECK(seq.images[3].start_time_s == doctest::Approx(0.96));

    mel.resize(33, std::vector<double>(32, 0.0));
    CHECK(stack_images(mel, 1).images.size() == 1);

    mel.assign(96, std::vector<double>(32, 0.0));
    for (std::size_t t = 0; t < mel.size(); ++t) mel[t][0] = static_cast<double>(t);
    auto hopped = stack_images(mel, 2);
    REQUIRE(hopped.images.size() == 2);
    CHECK(hopped.images[0].at(0, 0) == 0.0f);
    CHECK(hopped.images[1].at(0, 0) == 64.0f);

    mel.assign(31, std::vector<double>(32, 0.0));
    CHECK(stack_images(mel, 1).images.empty());
}

TEST_CASE("image timing covers 320 ms tiles at hop 1") {
    auto buf = testutil::white_noise(0.1, 4.0, 11);
    auto seq = extract_features(buf);
    for (std::size_t j = 0; j < seq.images.size(); ++j)
        CHECK(seq.images[j].start_time_s == doctest::Approx(0.32 * j).epsilon(1e-12));
}

TEST_CASE("normalize is the identity for unit stats and zeros constants") {
    auto buf = testutil::white_noise(0.1, 2.0, 5);
    auto seq = extract_features(buf);

    BandStats unit;
    unit.mean.assign(kNumBands, 0.0);
    unit.std.assign(kNumBands, 1.0);
    auto same = normalize(seq, unit);
    CHECK(same.images[0].pixels == seq.images[0].pixels);

    auto stats = compute_band_stats({&seq});
    auto normed = normalize(seq, stats);
    auto restats = compute_band_stats({&normed});
    for (std::size_t b = 0; b < kNumBands; ++b) {
        CHECK(std::abs(restats.mean[b]) < 1e-5);
        CHECK(restats.std[b] == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("feature pipeline is deterministic") {
    auto buf = testutil::white_noise(0.2, 2.0, 42);
    auto a = extract_features(buf);
    auto b = extract_features(buf);
    REQUIRE(a.images.size() == b.images.size());
    for (std::size_t j = 0; j < a.images.size(); ++j)
        CHECK(a.images[j].pixels == b.images[j].pixels);
}

TEST_CASE("feature file round-trips bit-exactly") {
    auto dir = testutil::temp_dir("feat");
    auto buf = testutil::white_noise(0.2, 2.0, 9);
    auto seq = extract_features(buf);
    auto p = dir / "f.vfea";
    save_features(seq, p.string());
    auto back = load_features(p.string());
    REQUIRE(back.images.size() == seq.images.size());
    CHECK(back.hop_images == seq.hop_images);
    for (std::size_t j = 0; j < seq.images.size(); ++j) {
        CHECK(back.images[j].pixels == seq.images[j].pixels);
        CHECK(back.images[j].start_time_s == doctest::Approx(seq.images[j].start_time_s));
    }
}
