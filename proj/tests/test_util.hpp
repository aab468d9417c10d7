#pragma once

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vadkit/audio_io.hpp"
#include "vadkit/features.hpp"
#include "vadkit/training.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("vadkit_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

inline vadkit::audio::AudioBuffer sine(double freq_hz, double amplitude, double duration_s,
                                       int rate = 16000) {
    vadkit::audio::AudioBuffer buf;
    buf.sample_rate_hz = rate;
    const auto n = static_cast<std::size_t>(duration_s * rate);
    buf.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        buf.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * i / rate);
    return buf;
}

inline vadkit::audio::AudioBuffer white_noise(double amplitude, double duration_s,
                                              std::uint32_t seed, int rate = 16000) {
    vadkit::audio::AudioBuffer buf;
    buf.sample_rate_hz = rate;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    const auto n = static_cast<std::size_t>(duration_s * rate);
    buf.samples.resize(n);
    for (auto& s : buf.samples) s = u(rng);
    return buf;
}

// Synthetic "speech" image: a bright horizontal stripe (a tone's mel band)
// plus mild noise. "Non-speech": noise only.
inline vadkit::features::SpectrogramImage toy_image(bool speech, std::mt19937& rng) {
    using namespace vadkit::features;
    SpectrogramImage img;
    img.pixels.resize(kImageFrames * kNumBands);
    std::normal_distribution<double> gauss(0.0, 0.3);
    std::uniform_int_distribution<int> band_pick(8, 20);
    const int band = band_pick(rng);
    for (std::size_t t = 0; t < kImageFrames; ++t)
        for (std::size_t b = 0; b < kNumBands; ++b) {
            double v = gauss(rng);
            if (speech && (static_cast<int>(b) == band || static_cast<int>(b) == band + 1))
                v += 3.0;
            img.at(t, b) = static_cast<float>(v);
        }
    return img;
}

// Sequences of per-image random classes with matching frame labels.
inline std::vector<vadkit::train::TrainingExample> toy_examples(std::size_t n_sequences,
                                                                int seq_len,
                                                                std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<vadkit::train::TrainingExample> out;
    for (std::size_t s = 0; s < n_sequences; ++s) {
        vadkit::train::TrainingExample ex;
        for (int k = 0; k < seq_len; ++k) {
            const bool speech = coin(rng);
            ex.images.images.push_back(toy_image(speech, rng));
            ex.targets.push_back(speech ? 1 : 0);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// Alternating tone/noise audio with a matching label track; tone blocks are
// labeled as speech.
struct ToyAudio {
    vadkit::audio::AudioBuffer buf;
    vadkit::audio::LabelTrack labels;
};

inline ToyAudio toy_audio(double duration_s, std::uint32_t seed, double block_s = 0.32) {
    ToyAudio out;
    out.buf.sample_rate_hz = 16000;
    std::mt19937 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    const auto block = static_cast<std::size_t>(block_s * 16000);
    const auto n = static_cast<std::size_t>(duration_s * 16000);
    out.buf.samples.resize(n);
    std::size_t idx = 0, seg = 0;
    while (idx < n) {
        const std::size_t end = std::min(n, idx + block);
        const bool speech = coin(rng);
        for (std::size_t i = idx; i < end; ++i) {
            out.buf.samples[i] = noise(rng);
            if (speech)
                out.buf.samples[i] +=
                    0.5 * std::sin(2.0 * std::numbers::pi * 800.0 * (i - idx) / 16000.0);
        }
        vadkit::audio::Segment s;
        s.id = "seg" + std::to_string(seg++);
        s.start_s = static_cast<double>(idx) / 16000.0;
        s.end_s = static_cast<double>(end) / 16000.0;
        s.condition = speech ? vadkit::audio::Condition::CleanSpeech
                             : vadkit::audio::Condition::NoSpeech;
        out.labels.segments.push_back(s);
        idx = end;
    }
    return out;
}

inline int run_cli(const std::string& args) {
    const std::string cmd = std::string(VADKIT_CLI_PATH) + " " + args;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testutil
