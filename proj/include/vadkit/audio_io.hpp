#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vadkit/errors.hpp"

namespace vadkit::audio {

inline constexpr int kWorkingRateHz = 16000;
inline constexpr double kFrameStepS = 0.01;

struct AudioBuffer {
    std::vector<double> samples;  // mono, nominally in [-1, 1]
    int sample_rate_hz = 0;

    double duration_s() const {
        return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
    }
};

enum class Condition : std::uint8_t { NoSpeech = 0, CleanSpeech = 1, SpeechMusic = 2, SpeechNoise = 3 };

const char* condition_name(Condition c);
bool is_speech(Condition c);

struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
    Condition condition = Condition::NoSpeech;
    std::string id;
};

struct LabelTrack {
    std::vector<Segment> segments;  // sorted by start_s, non-overlapping

    double duration_s() const {
        return segments.empty() ? 0.0 : segments.back().end_s;
    }
};

struct FrameLabels {
    double frame_step_s = kFrameStepS;
    std::vector<Condition> labels;
    std::vector<bool> speech_mask;
    std::size_t gap_frames = 0;  // frames whose midpoint fell in no segment

    std::size_t size() const { return labels.size(); }
};

AudioBuffer read_wav(const std::string& path);
void write_wav(const AudioBuffer& buf, const std::string& path);

// Windowed-sinc rate conversion with anti-alias low-pass before decimation.
// Identity when rates already match.
AudioBuffer resample(const AudioBuffer& buf, int target_hz);

// CSV rows: segment_id,start_s,end_s,condition (header optional).
LabelTrack load_labels(const std::string& path);
void save_labels(const LabelTrack& track, const std::string& path);
LabelTrack parse_labels(std::istream& in, const std::string& origin);

// Frame i covers [i*step, (i+1)*step); label taken from the segment
// containing the frame midpoint, NoSpeech when no segment does.
FrameLabels rasterize_labels(const LabelTrack& track, double duration_s, double frame_step_s = kFrameStepS);

}  // namespace vadkit::audio
