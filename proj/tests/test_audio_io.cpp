#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vadkit/audio_io.hpp"

using namespace vadkit;
using namespace vadkit::audio;

namespace {

void write_raw(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 24) & 0xff);
}
void push_u16(std::vector<unsigned char>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}

std::vector<unsigned char> pcm16_wav(const std::vector<std::int16_t>& samples,
                                     std::uint16_t channels, std::uint32_t rate,
                                     int data_len_override = -1) {
    std::vector<unsigned char> v;
    const std::uint32_t data_len = data_len_override >= 0
                                       ? static_cast<std::uint32_t>(data_len_override)
                                       : static_cast<std::uint32_t>(samples.size() * 2);
    v.insert(v.end(), {'R', 'I', 'F', 'F'});
    push_u32(v, 36 + data_len);
    v.insert(v.end(), {'W', 'A', 'V', 'E'});
    v.insert(v.end(), {'f', 'm', 't', ' '});
    push_u32(v, 16);
    push_u16(v, 1);
    push_u16(v, channels);
    push_u32(v, rate);
    push_u32(v, rate * channels * 2);
    push_u16(v, channels * 2);
    push_u16(v, 16);
    v.insert(v.end(), {'d', 'a', 't', 'a'});
    push_u32(v, data_len);
    for (auto s : samples) push_u16(v, static_cast<std::uint16_t>(s));
    return v;
}

}  // namespace

TEST_CASE("read_wav scales 16-bit samples by 1/32768") {
    auto dir = testutil::temp_dir("wav");
    auto p = dir / "one.wav";
    write_raw(p, pcm16_wav({32767}, 1, 22050));
    auto buf = read_wav(p.string());
    CHECK(buf.sample_rate_hz == 22050);
    REQUIRE(buf.samples.size() == 1);
    CHECK(buf.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
}

TEST_CASE("read_wav averages channels to mono") {
    auto dir = testutil::temp_dir("wav");
    auto p = dir / "stereo.wav";
    write_raw(p, pcm16_wav({32767, 0}, 2, 16000));
    auto buf = read_wav(p.string());
    REQUIRE(buf.samples.size() == 1);
    CHECK(buf.samples[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("read_wav rejects data chunk past EOF") {
    auto dir = testutil::temp_dir("wav");
    auto p = dir / "trunc.wav";
    write_raw(p, pcm16_wav({1, 2, 3}, 1, 16000, /*data_len_override=*/4096));
    CHECK_THROWS_AS(read_wav(p.string()), FormatError);
}

TEST_CASE("read_wav rejects unsupported codecs") {
    auto dir = testutil::temp_dir("wav");
    auto p = dir / "mulaw.wav";
    auto bytes = pcm16_wav({0}, 1, 8000);
    bytes[20] = 0x07;  // format tag -> mu-law
    write_raw(p, bytes);
    CHECK_THROWS_AS(read_wav(p.string()), UnsupportedCodecError);
}

TEST_CASE("read_wav round-trips write_wav") {
    auto dir = testutil::temp_dir("wav");
    auto p = dir / "rt.wav";
    auto buf = testutil::sine(440.0, 0.5, 0.1);
    write_wav(buf, p.string());
    auto back = read_wav(p.string());
    REQUIRE(back.samples.size() == buf.samples.size());
    for (std::size_t i = 0; i < buf.samples.size(); ++i)
        CHECK(back.samples[i] == doctest::Approx(buf.samples[i]).epsilon(1e-3));
}

TEST_CASE("resample at equal rates is the identity") {
    auto buf = testutil::sine(1000.0, 0.3, 0.05);
    auto out = resample(buf, 16000);
    CHECK(out.samples == buf.samples);
}

TEST_CASE("resample preserves DC") {
    AudioBuffer buf;
    buf.sample_rate_hz = 48000;
    buf.samples.assign(48000, 0.25);
    auto out = resample(buf, 16000);
    CHECK(out.samples.size() == 16000);
    for (std::size_t i = 200; i + 200 < out.samples.size(); ++i)
        CHECK(std::abs(out.samples[i] - 0.25) < 1e-3);
}

TEST_CASE("resample maps a 48 kHz sine onto the analytic 16 kHz sine") {
    auto buf = testutil::sine(1000.0, 0.5, 0.25, 48000);
    auto out = resample(buf, 16000);
    auto expect = testutil::sine(1000.0, 0.5, 0.25, 16000);
    REQUIRE(out.samples.size() == expect.samples.size());
    for (std::size_t i = 300; i + 300 < out.samples.size(); ++i)
        CHECK(std::abs(out.samples[i] - expect.samples[i]) < 1e-2);
}

TEST_CASE("resample preserves duration across common rate pairs") {
    for (int src : {8000, 16000, 44100, 48000})
        for (int dst : {8000, 16000, 44100, 48000}) {
            AudioBuffer buf;
            buf.sample_rate_hz = src;
            buf.samples.assign(static_cast<std::size_t>(src * 0.5), 0.1);
            auto out = resample(buf, dst);
            CHECK(std::abs(out.duration_s() - buf.duration_s()) <= 1.0 / dst + 1e-12);
        }
}

TEST_CASE("load_labels parses rows and maps both spellings") {
    std::istringstream in(
        "segment_id,start_s,end_s,condition\n"
        "x,0.0,2.0,CleanSpeech\n"
        "y,2.0,3.0,SPEECH_WITH_MUSIC\n"
        "z,3.0,4.0,Speech+Noise\n"
        "w,4.0,5.0,NO_SPEECH\n");
    auto track = parse_labels(in, "test");
    REQUIRE(track.segments.size() == 4);
    CHECK(track.segments[0].condition == Condition::CleanSpeech);
    CHECK(track.segments[1].condition == Condition::SpeechMusic);
    CHECK(track.segments[2].condition == Condition::SpeechNoise);
    CHECK(track.segments[3].condition == Condition::NoSpeech);
    CHECK(track.segments[0].start_s == 0.0);
    CHECK(track.segments[0].end_s == 2.0);
}

TEST_CASE("load_labels rejects overlapping segments") {
    std::istringstream in("a,0,2,NoSpeech\nb,1,3,CleanSpeech\n");
    CHECK_THROWS_AS(parse_labels(in, "test"), ValidationError);
}

TEST_CASE("load_labels rejects unknown conditions with the row number") {
    std::istringstream in("a,0,2,Mumbling\n");
    CHECK_THROWS_WITH_AS(parse_labels(in, "test"),
                         doctest::Contains("row 1"), ParseError);
}

TEST_CASE("load_labels accepts an empty file") {
    std::istringstream in("");
    auto track = parse_labels(in, "test");
    CHECK(track.segments.empty());
}

TEST_CASE("label save/load round-trips") {
    auto dir = testutil::temp_dir("labels");
    LabelTrack track;
    track.segments = {{0.0, 1.25, Condition::CleanSpeech, "a"},
                      {1.25, 2.0, Condition::NoSpeech, "b"},
                      {2.5, 3.75, Condition::SpeechMusic, "c"}};
    auto p = dir / "labels.csv";
    save_labels(track, p.string());
    auto back = load_labels(p.string());
    REQUIRE(back.segments.size() == track.segments.size());
    for (std::size_t i = 0; i < track.segments.size(); ++i) {
        CHECK(back.segments[i].start_s == track.segments[i].start_s);
        CHECK(back.segments[i].end_s == track.segments[i].end_s);
        CHECK(back.segments[i].condition == track.segments[i].condition);
        CHECK(back.segments[i].id == track.segments[i].id);
    }
}

TEST_CASE("rasterize_labels uses the frame midpoint") {
    LabelTrack track;
    track.segments = {{0.0, 0.10, Condition::CleanSpeech, "a"}};
    auto frames = rasterize_labels(track, 0.10, 0.01);
    REQUIRE(frames.size() == 10);
    for (std::size_t i = 0; i < frames.size(); ++i) CHECK(frames.speech_mask[i]);
    CHECK(frames.gap_frames == 0);
}

TEST_CASE("rasterize_labels fills gaps with NoSpeech and counts them") {
    LabelTrack track;
    auto frames = rasterize_labels(track, 0.05, 0.01);
    REQUIRE(frames.size() == 5);
    for (auto c : frames.labels) CHECK(c == Condition::NoSpeech);
    CHECK(frames.gap_frames == 5);
}

TEST_CASE("rasterize_labels treats segment ends as exclusive") {
    // frame 0 midpoint 0.005 inside [0.005, 0.015); frame 1 midpoint 0.015
    // sits exactly at the exclusive end
    LabelTrack track;
    track.segments = {{0.005, 0.015, Condition::SpeechNoise, "a"}};
    auto frames = rasterize_labels(track, 0.02, 0.01);
    REQUIRE(frames.size() == 2);
    CHECK(frames.labels[0] == Condition::SpeechNoise);
    CHECK(frames.labels[1] == Condition::NoSpeech);
}

TEST_CASE("rasterized speech duration matches labeled speech duration") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> len(0.05, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        LabelTrack track;
        double t = 0.0;
        double speech_s = 0.0;
        for (int s = 0; s < 12; ++s) {
            const double d = len(rng);
            const bool speech = s % 2 == 0;
            track.segments.push_back({t, t + d,
                                      speech ? Condition::CleanSpeech : Condition::NoSpeech,
                                      "s" + std::to_string(s)});
            if (speech) speech_s += d;
            t += d;
        }
        auto frames = rasterize_labels(track, t, 0.01);
        std::size_t speech_frames = 0;
        for (bool m : frames.speech_mask) speech_frames += m ? 1 : 0;
        // at most one frame of error per segment boundary
        CHECK(std::abs(speech_frames * 0.01 - speech_s) <= 0.01 * track.segments.size());
    }
}
