#include "vadkit/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <sstream>

namespace vadkit::audio {

const char* condition_name(Condition c) {
    switch (c) {
        case Condition::NoSpeech: return "NoSpeech";
        case Condition::CleanSpeech: return "CleanSpeech";
        case Condition::SpeechMusic: return "Speech+Music";
        case Condition::SpeechNoise: return "Speech+Noise";
    }
    return "?";
}

bool is_speech(Condition c) { return c != Condition::NoSpeech; }

namespace {

constexpr std::uint16_t kFmtPcm = 0x0001;
constexpr std::uint16_t kFmtIeeeFloat = 0x0003;
constexpr std::uint16_t kFmtExtensible = 0xFFFE;

std::uint32_t rd_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}
std::uint16_t rd_u16(const unsigned char* p) {
    return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open WAV file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw FormatError("not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* p = bytes.data() + pos;
        std::uint32_t chunk_len = rd_u32(p + 4);
        if (std::memcmp(p, "fmt ", 4) == 0) {
            if (pos + 8 + chunk_len > bytes.size() || chunk_len < 16)
                throw FormatError("malformed fmt chunk: " + path);
            format = rd_u16(p + 8);
            channels = rd_u16(p + 10);
            rate = rd_u32(p + 12);
            bits = rd_u16(p + 22);
            if (format == kFmtExtensible && chunk_len >= 40) {
                // sub-format GUID starts with the real format tag
                format = rd_u16(p + 8 + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(p, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = chunk_len;
            if (data_off + data_len > bytes.size())
                throw FormatError("data chunk extends past end of file: " + path);
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (!have_fmt || data_off == 0) throw FormatError("missing fmt/data chunk: " + path);
    if (channels == 0 || rate == 0) throw FormatError("invalid fmt fields: " + path);
    if (!(format == kFmtPcm && bits == 16) && !(format == kFmtIeeeFloat && bits == 32))
        throw UnsupportedCodecError("unsupported WAV encoding (format tag " +
                                    std::to_string(format) + ", " + std::to_string(bits) +
                                    " bit): " + path);

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t n_frames = data_len / frame_bytes;

    AudioBuffer out;
    out.sample_rate_hz = static_cast<int>(rate);
    out.samples.resize(n_frames);
    const unsigned char* d = bytes.data() + data_off;
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* s = d + i * frame_bytes + c * bytes_per_sample;
            if (format == kFmtPcm) {
                std::int16_t x = static_cast<std::int16_t>(rd_u16(s));
                acc += x / 32768.0;
            } else {
                float x;
                std::uint32_t u = rd_u32(s);
                std::memcpy(&x, &u, 4);
                acc += x;
            }
        }
        out.samples[i] = acc / channels;
    }
    return out;
}

void write_wav(const AudioBuffer& buf, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    auto u32 = [&](std::uint32_t x) {
        unsigned char b[4] = {(unsigned char)(x), (unsigned char)(x >> 8),
                              (unsigned char)(x >> 16), (unsigned char)(x >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto u16 = [&](std::uint16_t x) {
        unsigned char b[2] = {(unsigned char)(x), (unsigned char)(x >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };
    const std::uint32_t data_len = static_cast<std::uint32_t>(buf.samples.size() * 2);
    f.write("RIFF", 4);
    u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(kFmtPcm);
    u16(1);
    u32(static_cast<std::uint32_t>(buf.sample_rate_hz));
    u32(static_cast<std::uint32_t>(buf.sample_rate_hz) * 2);
    u16(2);
    u16(16);
    f.write("data", 4);
    u32(data_len);
    for (double s : buf.samples) {
        double clamped = std::clamp(s, -1.0, 1.0);
        auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
        u16(static_cast<std::uint16_t>(q));
    }
}

AudioBuffer resample(const AudioBuffer& buf, int target_hz) {
    if (target_hz <= 0) throw ArgumentError("resample: target rate must be positive");
    if (buf.sample_rate_hz <= 0) throw ArgumentError("resample: source rate must be positive");
    if (target_hz == buf.sample_rate_hz) return buf;

    const double in_rate = buf.sample_rate_hz;
    const double out_rate = target_hz;
    const double ratio = out_rate / in_rate;
    // cutoff slightly below the narrower Nyquist
    const double cutoff = 0.45 * std::min(in_rate, out_rate);
    const int half_taps = 32;
    const double scale = std::min(1.0, ratio);  // widen the kernel when decimating

    const std::size_t n_out =
        static_cast<std::size_t>(std::floor(buf.samples.size() * ratio));
    AudioBuffer out;
    out.sample_rate_hz = target_hz;
    out.samples.resize(n_out);

    const double fc = cutoff / in_rate;  // cycles per input sample
    const int span = static_cast<int>(std::ceil(half_taps / scale));

    for (std::size_t n = 0; n < n_out; ++n) {
        const double t = n / ratio;  // position in input samples
        const int center = static_cast<int>(std::floor(t));
        double acc = 0.0, wsum = 0.0;
        for (int k = center - span; k <= center + span; ++k) {
            const double d = t - k;
            const double x = 2.0 * fc * d;
            double sinc = (std::abs(x) < 1e-12) ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
            // Hann window over the kernel support
            const double u = d * scale / (half_taps + 1);
            if (std::abs(u) >= 1.0) continue;
            const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * u));
            const double coef = sinc * w;
            wsum += coef;
            if (k >= 0 && k < static_cast<int>(buf.samples.size())) acc += coef * buf.samples[k];
        }
        out.samples[n] = wsum > 0.0 ? acc / wsum : 0.0;
    }
    return out;
}

namespace {

Condition parse_condition(const std::string& s, std::size_t row) {
    static const std::map<std::string, Condition> table = {
        {"NO_SPEECH", Condition::NoSpeech},       {"NoSpeech", Condition::NoSpeech},
        {"CLEAN_SPEECH", Condition::CleanSpeech}, {"CleanSpeech", Condition::CleanSpeech},
        {"SPEECH_WITH_MUSIC", Condition::SpeechMusic},
        {"Speech+Music", Condition::SpeechMusic},
        {"SPEECH_WITH_NOISE", Condition::SpeechNoise},
        {"Speech+Noise", Condition::SpeechNoise},
    };
    auto it = table.find(s);
    if (it == table.end())
        throw ParseError("row " + std::to_string(row) + ": unknown condition '" + s + "'");
    return it->second;
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

bool looks_numeric(const std::string& s) {
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end && *end == '\0' && end != s.c_str();
}

}  // namespace

LabelTrack parse_labels(std::istream& in, const std::string& origin) {
    LabelTrack track;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_row(line);
        if (fields.size() < 4)
            throw ParseError(origin + " row " + std::to_string(row) + ": expected 4 columns");
        if (row == 1 && !looks_numeric(fields[1])) continue;  // header
        if (!looks_numeric(fields[1]) || !looks_numeric(fields[2]))
            throw ParseError(origin + " row " + std::to_string(row) + ": bad time value");
        Segment seg;
        seg.id = fields[0];
        seg.start_s = std::stod(fields[1]);
        seg.end_s = std::stod(fields[2]);
        seg.condition = parse_condition(fields[3], row);
        if (!(seg.end_s > seg.start_s))
            throw ValidationError(origin + " row " + std::to_string(row) +
                                  ": segment end must exceed start");
        track.segments.push_back(std::move(seg));
    }
    std::stable_sort(track.segments.begin(), track.segments.end(),
                     [](const Segment& a, const Segment& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 1; i < track.segments.size(); ++i) {
        if (track.segments[i].start_s < track.segments[i - 1].end_s - 1e-12)
            throw ValidationError(origin + ": segments '" + track.segments[i - 1].id + "' and '" +
                                  track.segments[i].id + "' overlap");
    }
    return track;
}

LabelTrack load_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open label file: " + path);
    return parse_labels(f, path);
}

void save_labels(const LabelTrack& track, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot open for writing: " + path);
    f << "segment_id,start_s,end_s,condition\n";
    f.precision(17);
    for (const auto& s : track.segments)
        f << s.id << ',' << s.start_s << ',' << s.end_s << ',' << condition_name(s.condition)
          << '\n';
}

FrameLabels rasterize_labels(const LabelTrack& track, double duration_s, double frame_step_s) {
    if (frame_step_s <= 0) throw ArgumentError("rasterize_labels: frame step must be positive");
    if (duration_s < 0) throw ArgumentError("rasterize_labels: negative duration");

    FrameLabels out;
    out.frame_step_s = frame_step_s;
    const auto n = static_cast<std::size_t>(std::floor(duration_s / frame_step_s));
    out.labels.reserve(n);
    out.speech_mask.reserve(n);

    std::size_t seg_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double mid = (i + 0.5) * frame_step_s;
        while (seg_i < track.segments.size() && track.segments[seg_i].end_s <= mid) ++seg_i;
        Condition c = Condition::NoSpeech;
        if (seg_i < track.segments.size() && track.segments[seg_i].start_s <= mid &&
            mid < track.segments[seg_i].end_s) {
            c = track.segments[seg_i].condition;
        } else {
            ++out.gap_frames;
        }
        out.labels.push_back(c);
        out.speech_mask.push_back(is_speech(c));
    }
    return out;
}

}  // namespace vadkit::audio
