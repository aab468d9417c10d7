#pragma once

#include <string>
#include <vector>

#include "vadkit/audio_io.hpp"
#include "vadkit/model.hpp"

namespace vadkit::eval {

inline constexpr double kPaperFpr = 0.315;

struct ScoreTrack {
    double frame_step_s = audio::kFrameStepS;
    std::vector<double> scores;  // p_speech per 10 ms frame

    std::size_t size() const { return scores.size(); }
};

struct RocPoint {
    double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // fpr/tpr non-decreasing, (0,0)..(1,1)
    double auc = 0.0;
};

struct ConditionReport {
    double tpr_clean = 0.0, tpr_noise = 0.0, tpr_music = 0.0, tpr_all = 0.0;
    double operating_fpr = kPaperFpr;
    double threshold = 0.0;
    double auc = 0.0;  // over all speech vs NoSpeech
};

// Forward at hop 1 and replicate each image posterior over its 32 frames.
// target_frames > 0 extends/truncates to that frame count (within one image).
ScoreTrack score_frames(const model::ModelParams& params, const features::ImageSequence& seq,
                        std::size_t target_frames = 0);

// Stretch/trim a track to n_frames; the adjustment must stay within one image.
ScoreTrack align_scores(const ScoreTrack& track, std::size_t n_frames);

RocCurve roc_curve(const ScoreTrack& scores, const audio::FrameLabels& frames);
RocCurve roc_curve_binary(const std::vector<double>& scores, const std::vector<bool>& positive);

// Linear interpolation between the bracketing curve points; returns the
// threshold of the lower bracketing point as the operating threshold.
std::pair<double, double> tpr_at_fpr(const RocCurve& curve, double target_fpr = kPaperFpr);

ConditionReport condition_breakdown(const ScoreTrack& scores, const audio::FrameLabels& frames,
                                    double target_fpr = kPaperFpr);

// Per-frame log-RMS energy min-max normalized to [0,1]; sanity baseline.
ScoreTrack energy_baseline(const audio::AudioBuffer& buf);

void export_roc(const RocCurve& curve, const std::string& path);
RocCurve import_roc(const std::string& path);

void save_scores_csv(const ScoreTrack& track, const std::string& path);
ScoreTrack load_scores_csv(const std::string& path);

}  // namespace vadkit::eval
