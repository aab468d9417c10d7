#include "vadkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vadkit::eval {

ScoreTrack score_frames(const model::ModelParams& params, const features::ImageSequence& seq,
                        std::size_t target_frames) {
    auto posts = model::forward(params, seq);
    ScoreTrack track;
    track.scores.reserve(posts.size() * features::kImageFrames);
    for (const auto& p : posts)
        for (std::size_t i = 0; i < features::kImageFrames; ++i)
            track.scores.push_back(p.p_speech);
    if (target_frames > 0) return align_scores(track, target_frames);
    return track;
}

ScoreTrack align_scores(const ScoreTrack& track, std::size_t n_frames) {
    if (track.scores.empty()) throw ArgumentError("align_scores: empty score track");
    const std::size_t n = track.scores.size();
    const std::size_t diff = n > n_frames ? n - n_frames : n_frames - n;
    if (diff > features::kImageFrames)
        throw AlignmentError("score/label length mismatch exceeds one image (" +
                             std::to_string(n) + " vs " + std::to_string(n_frames) + " frames)");
    ScoreTrack out;
    out.frame_step_s = track.frame_step_s;
    out.scores = track.scores;
    out.scores.resize(n_frames, track.scores.back());
    return out;
}

RocCurve roc_curve_binary(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw ArgumentError("roc_curve: length mismatch");
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0) throw MetricError("roc_curve: no positive (speech) frames");
    if (n_neg == 0) throw MetricError("roc_curve: no negative (non-speech) frames");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            if (positive[order[i]]) ++tp;
            else ++fp;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos,
                                thr});
    }
    if (curve.points.back().fpr != 1.0 || curve.points.back().tpr != 1.0)
        curve.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});

    double auc = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

RocCurve roc_curve(const ScoreTrack& scores, const audio::FrameLabels& frames) {
    auto aligned = align_scores(scores, frames.size());
    std::vector<bool> pos(frames.speech_mask.begin(), frames.speech_mask.end());
    return roc_curve_binary(aligned.scores, pos);
}

std::pair<double, double> tpr_at_fpr(const RocCurve& curve, double target_fpr) {
    if (curve.points.size() < 2) throw ArgumentError("tpr_at_fpr: degenerate curve");
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& lo = curve.points[k - 1];
        const auto& hi = curve.points[k];
        if (target_fpr <= hi.fpr) {
            if (hi.fpr == lo.fpr) return {hi.tpr, hi.threshold};
            const double t = (target_fpr - lo.fpr) / (hi.fpr - lo.fpr);
            return {lo.tpr + t * (hi.tpr - lo.tpr), lo.threshold};
        }
    }
    return {curve.points.back().tpr, curve.points.back().threshold};
}

namespace {

// ROC over frames of one condition as positives vs all NoSpeech frames.
RocCurve condition_curve(const std::vector<double>& scores, const audio::FrameLabels& frames,
                         audio::Condition cond) {
    std::vector<double> s;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames.labels[i] == cond) {
            s.push_back(scores[i]);
            pos.push_back(true);
        } else if (frames.labels[i] == audio::Condition::NoSpeech) {
            s.push_back(scores[i]);
            pos.push_back(false);
        }
    }
    return roc_curve_binary(s, pos);
}

}  // namespace

ConditionReport condition_breakdown(const ScoreTrack& scores, const audio::FrameLabels& frames,
                                    double target_fpr) {
    auto aligned = align_scores(scores, frames.size());
    bool any_nospeech = false;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (frames.labels[i] == audio::Condition::NoSpeech) any_nospeech = true;
    if (!any_nospeech) throw MetricError("condition_breakdown: no NoSpeech frames");

    ConditionReport rep;
    rep.operating_fpr = target_fpr;

    std::vector<bool> pos(frames.speech_mask.begin(), frames.speech_mask.end());
    auto all_curve = roc_curve_binary(aligned.scores, pos);
    rep.auc = all_curve.auc;
    auto [tpr_all, thr] = tpr_at_fpr(all_curve, target_fpr);
    rep.tpr_all = tpr_all;
    rep.threshold = thr;

    auto per_cond = [&](audio::Condition c) -> double {
        bool any = false;
        for (auto l : frames.labels)
            if (l == c) any = true;
        if (!any) return std::numeric_limits<double>::quiet_NaN();
        return tpr_at_fpr(condition_curve(aligned.scores, frames, c), target_fpr).first;
    };
    rep.tpr_clean = per_cond(audio::Condition::CleanSpeech);
    rep.tpr_noise = per_cond(audio::Condition::SpeechNoise);
    rep.tpr_music = per_cond(audio::Condition::SpeechMusic);
    return rep;
}

ScoreTrack energy_baseline(const audio::AudioBuffer& buf) {
    if (buf.samples.empty()) throw ArgumentError("energy_baseline: empty audio");
    const auto step = static_cast<std::size_t>(std::lround(audio::kFrameStepS * buf.sample_rate_hz));
    const std::size_t n = buf.samples.size() / step;
    ScoreTrack track;
    track.scores.resize(n);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < step; ++k) {
            const double s = buf.samples[i * step + k];
            acc += s * s;
        }
        const double rms = std::sqrt(acc / step);
        const double log_rms = std::log(std::max(rms, 1e-10));
        track.scores[i] = log_rms;
        lo = std::min(lo, log_rms);
        hi = std::max(hi, log_rms);
    }
    for (auto& s : track.scores) s = hi > lo ? (s - lo) / (hi - lo) : 0.0;
    return track;
}

void export_roc(const RocCurve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "fpr,tpr,threshold\n";
    f.precision(17);
    for (const auto& p : curve.points) f << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
    std::ostringstream auc;
    auc.precision(6);
    auc << std::fixed << curve.auc;
    f << "auc," << auc.str() << '\n';
}

RocCurve import_roc(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open ROC file: " + path);
    RocCurve curve;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string a, b, c;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        if (a == "auc") {
            curve.auc = std::stod(b);
            continue;
        }
        std::getline(ss, c, ',');
        curve.points.push_back({std::stod(a), std::stod(b), std::stod(c)});
    }
    return curve;
}

void save_scores_csv(const ScoreTrack& track, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "frame_index,time_s,p_speech\n";
    f.precision(9);
    for (std::size_t i = 0; i < track.scores.size(); ++i)
        f << i << ',' << i * track.frame_step_s << ',' << track.scores[i] << '\n';
}

ScoreTrack load_scores_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open scores file: " + path);
    ScoreTrack track;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string idx, t, p;
        std::getline(ss, idx, ',');
        std::getline(ss, t, ',');
        std::getline(ss, p, ',');
        track.scores.push_back(std::stod(p));
    }
    return track;
}

}  // namespace vadkit::eval
