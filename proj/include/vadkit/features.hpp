#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vadkit/audio_io.hpp"
#include "vadkit/errors.hpp"

namespace vadkit::features {

inline constexpr std::size_t kNumBands = 32;
inline constexpr std::size_t kImageFrames = 32;  // time frames per image
inline constexpr double kWindowS = 0.025;
inline constexpr double kStepS = 0.01;
inline constexpr std::size_t kFftSize = 512;
inline constexpr double kLogFloor = 1e-10;

struct MelFilterbank {
    std::vector<std::vector<double>> weights;  // [num_bands][num_fft_bins]
    std::vector<double> band_centers_hz;
    double fmin_hz = 0.0;
    double fmax_hz = 0.0;
};

struct SpectrogramImage {
    // [32 time frames][32 mel bands], row-major, time-major
    std::vector<float> pixels;
    double start_time_s = 0.0;

    float at(std::size_t t, std::size_t b) const { return pixels[t * kNumBands + b]; }
    float& at(std::size_t t, std::size_t b) { return pixels[t * kNumBands + b]; }
};

struct ImageSequence {
    std::vector<SpectrogramImage> images;
    std::size_t hop_images = 1;
};

struct BandStats {
    std::vector<double> mean;  // [kNumBands]
    std::vector<double> std;   // [kNumBands]
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

std::vector<std::vector<double>> frame_signal(const audio::AudioBuffer& buf, double window_s,
                                              double step_s);

// Periodic Hann window, zero-padding to fft_size, magnitude spectrum
// for bins 0..fft_size/2.
std::vector<std::vector<double>> stft_magnitude(const std::vector<std::vector<double>>& frames,
                                                std::size_t fft_size);

MelFilterbank mel_filterbank(std::size_t num_bands, std::size_t fft_size, int sample_rate_hz,
                             double fmin_hz, double fmax_hz);

std::vector<std::vector<double>> log_mel(const std::vector<std::vector<double>>& spectra,
                                         const MelFilterbank& fb, double floor = kLogFloor);

ImageSequence stack_images(const std::vector<std::vector<double>>& mel, std::size_t hop_images,
                           double frame_step_s = kStepS);

BandStats compute_band_stats(const std::vector<const ImageSequence*>& seqs);
ImageSequence normalize(const ImageSequence& seq, const BandStats& stats);

// Whole front-end: resample to 16 kHz, 25 ms / 10 ms framing, 512-point STFT,
// 32-band log-mel, 32-frame image stacking.
ImageSequence extract_features(const audio::AudioBuffer& buf, std::size_t hop_images = 1);

// Feature file: magic VFEA, version, image count, hop, float32 LE pixels.
void save_features(const ImageSequence& seq, const std::string& path);
ImageSequence load_features(const std::string& path);

}  // namespace vadkit::features
