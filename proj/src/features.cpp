#include "vadkit/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>

namespace vadkit::features {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> frame_signal(const audio::AudioBuffer& buf, double window_s,
                                              double step_s) {
    if (!(window_s >= step_s && step_s > 0))
        throw ArgumentError("frame_signal: need window_s >= step_s > 0");
    const auto w = static_cast<std::size_t>(std::lround(window_s * buf.sample_rate_hz));
    const double step_samples = step_s * buf.sample_rate_hz;
    std::vector<std::vector<double>> frames;
    if (buf.samples.size() < w) return frames;
    const std::size_t count =
        1 + static_cast<std::size_t>((buf.samples.size() - w) / std::lround(step_samples));
    frames.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto start = static_cast<std::size_t>(std::lround(i * step_samples));
        if (start + w > buf.samples.size()) break;
        frames.emplace_back(buf.samples.begin() + start, buf.samples.begin() + start + w);
    }
    return frames;
}

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

}  // namespace

std::vector<std::vector<double>> stft_magnitude(const std::vector<std::vector<double>>& frames,
                                                std::size_t fft_size) {
    if (!is_pow2(fft_size)) throw ConfigError("stft_magnitude: fft_size must be a power of two");
    std::vector<std::vector<double>> out;
    out.reserve(frames.size());
    std::vector<double> window;
    for (const auto& frame : frames) {
        const std::size_t w = frame.size();
        if (w > fft_size) throw ConfigError("stft_magnitude: fft_size smaller than window");
        if (window.size() != w) {
            window.resize(w);
            for (std::size_t n = 0; n < w; ++n)
                window[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / w));
        }
        std::vector<std::complex<double>> buf(fft_size, {0.0, 0.0});
        for (std::size_t n = 0; n < w; ++n) buf[n] = frame[n] * window[n];
        fft(buf);
        std::vector<double> mags(fft_size / 2 + 1);
        for (std::size_t k = 0; k <= fft_size / 2; ++k) mags[k] = std::abs(buf[k]);
        out.push_back(std::move(mags));
    }
    return out;
}

MelFilterbank mel_filterbank(std::size_t num_bands, std::size_t fft_size, int sample_rate_hz,
                             double fmin_hz, double fmax_hz) {
    if (!(fmin_hz >= 0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0))
        throw ConfigError("mel_filterbank: need 0 <= fmin < fmax <= nyquist");
    if (!is_pow2(fft_size)) throw ConfigError("mel_filterbank: fft_size must be a power of two");

    const std::size_t n_bins = fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(fmin_hz), mel_hi = hz_to_mel(fmax_hz);
    std::vector<double> edges_hz(num_bands + 2);
    for (std::size_t i = 0; i < edges_hz.size(); ++i)
        edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (num_bands + 1));

    MelFilterbank fb;
    fb.fmin_hz = fmin_hz;
    fb.fmax_hz = fmax_hz;
    fb.weights.assign(num_bands, std::vector<double>(n_bins, 0.0));
    fb.band_centers_hz.resize(num_bands);
    for (std::size_t b = 0; b < num_bands; ++b) {
        const double lo = edges_hz[b], mid = edges_hz[b + 1], hi = edges_hz[b + 2];
        fb.band_centers_hz[b] = mid;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate_hz / fft_size;
            double w = 0.0;
            if (f > lo && f < hi) w = (f <= mid) ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            fb.weights[b][k] = w;
        }
    }
    return fb;
}

std::vector<std::vector<double>> log_mel(const std::vector<std::vector<double>>& spectra,
                                         const MelFilterbank& fb, double floor) {
    std::vector<std::vector<double>> out;
    out.reserve(spectra.size());
    for (const auto& spec : spectra) {
        if (!fb.weights.empty() && spec.size() != fb.weights[0].size())
            throw ShapeError("log_mel: spectrum bin count does not match filterbank");
        std::vector<double> row(fb.weights.size());
        for (std::size_t b = 0; b < fb.weights.size(); ++b) {
            double acc = 0.0;
            for (std::size_t k = 0; k < spec.size(); ++k) acc += fb.weights[b][k] * spec[k];
            row[b] = std::log(std::max(acc, floor));
        }
        out.push_back(std::move(row));
    }
    return out;
}

ImageSequence stack_images(const std::vector<std::vector<double>>& mel, std::size_t hop_images,
                           double frame_step_s) {
    if (hop_images == 0) throw ArgumentError("stack_images: hop must be positive");
    for (const auto& row : mel)
        if (row.size() != kNumBands) throw ShapeError("stack_images: rows must have 32 bands");

    ImageSequence seq;
    seq.hop_images = hop_images;
    const std::size_t stride = kImageFrames * hop_images;
    for (std::size_t start = 0; start + kImageFrames <= mel.size(); start += stride) {
        SpectrogramImage img;
        img.start_time_s = static_cast<double>(start) * frame_step_s;
        img.pixels.resize(kImageFrames * kNumBands);
        for (std::size_t t = 0; t < kImageFrames; ++t)
            for (std::size_t b = 0; b < kNumBands; ++b)
                img.at(t, b) = static_cast<float>(mel[start + t][b]);
        seq.images.push_back(std::move(img));
    }
    return seq;
}

BandStats compute_band_stats(const std::vector<const ImageSequence*>& seqs) {
    BandStats st;
    st.mean.assign(kNumBands, 0.0);
    st.std.assign(kNumBands, 0.0);
    std::vector<double> sum(kNumBands, 0.0), sumsq(kNumBands, 0.0);
    std::size_t n = 0;
    for (const auto* seq : seqs)
        for (const auto& img : seq->images) {
            for (std::size_t t = 0; t < kImageFrames; ++t)
                for (std::size_t b = 0; b < kNumBands; ++b) {
                    const double x = img.at(t, b);
                    sum[b] += x;
                    sumsq[b] += x * x;
                }
            n += kImageFrames;
        }
    if (n == 0) throw ArgumentError("compute_band_stats: no images");
    for (std::size_t b = 0; b < kNumBands; ++b) {
        st.mean[b] = sum[b] / n;
        const double var = std::max(sumsq[b] / n - st.mean[b] * st.mean[b], 0.0);
        st.std[b] = std::sqrt(var);
        if (st.std[b] <= 0.0) {
            std::cerr << "warning: zero std in band " << b << ", using 1.0\n";
            st.std[b] = 1.0;
        }
    }
    return st;
}

ImageSequence normalize(const ImageSequence& seq, const BandStats& stats) {
    ImageSequence out = seq;
    for (auto& img : out.images)
        for (std::size_t t = 0; t < kImageFrames; ++t)
            for (std::size_t b = 0; b < kNumBands; ++b)
                img.at(t, b) = static_cast<float>((img.at(t, b) - stats.mean[b]) / stats.std[b]);
    return out;
}

ImageSequence extract_features(const audio::AudioBuffer& buf, std::size_t hop_images) {
    audio::AudioBuffer work = audio::resample(buf, audio::kWorkingRateHz);
    auto frames = frame_signal(work, kWindowS, kStepS);
    auto spectra = stft_magnitude(frames, kFftSize);
    auto fb = mel_filterbank(kNumBands, kFftSize, audio::kWorkingRateHz, 0.0,
                             audio::kWorkingRateHz / 2.0);
    auto mel = log_mel(spectra, fb);
    return stack_images(mel, hop_images);
}

namespace {
constexpr char kMagic[4] = {'V', 'F', 'E', 'A'};
constexpr std::uint32_t kVersion = 1;

void wr_u32(std::ofstream& f, std::uint32_t x) {
    unsigned char b[4] = {(unsigned char)(x), (unsigned char)(x >> 8), (unsigned char)(x >> 16),
                          (unsigned char)(x >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
std::uint32_t rd_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw CorruptionError("truncated feature file: " + path);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
}  // namespace

void save_features(const ImageSequence& seq, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f.write(kMagic, 4);
    wr_u32(f, kVersion);
    wr_u32(f, static_cast<std::uint32_t>(seq.images.size()));
    wr_u32(f, static_cast<std::uint32_t>(seq.hop_images));
    for (const auto& img : seq.images)
        for (float x : img.pixels) {
            std::uint32_t u;
            std::memcpy(&u, &x, 4);
            wr_u32(f, u);
        }
}

ImageSequence load_features(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open feature file: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a VFEA feature file: " + path);
    const std::uint32_t version = rd_u32(f, path);
    if (version != kVersion)
        throw FormatError("unsupported feature file version " + std::to_string(version) +
                          " (supported: 1): " + path);
    const std::uint32_t n = rd_u32(f, path);
    const std::uint32_t hop = rd_u32(f, path);
    ImageSequence seq;
    seq.hop_images = hop;
    seq.images.resize(n);
    for (std::uint32_t j = 0; j < n; ++j) {
        auto& img = seq.images[j];
        img.start_time_s = static_cast<double>(j) * kImageFrames * kStepS * hop;
        img.pixels.resize(kImageFrames * kNumBands);
        for (auto& x : img.pixels) {
            std::uint32_t u = rd_u32(f, path);
            std::memcpy(&x, &u, 4);
        }
    }
    return seq;
}

}  // namespace vadkit::features
