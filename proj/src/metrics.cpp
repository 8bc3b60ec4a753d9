#include "posegen/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace posegen {

using nlohmann::json;

namespace {

std::vector<double> normalized_or_unit(std::vector<double> v) {
    double n2 = 0;
    for (double x : v) n2 += x * x;
    if (n2 < 1e-24) {
        std::fill(v.begin(), v.end(), 0.0);
        if (!v.empty()) v[0] = 1.0;  // degenerate (all-zero) input
        return v;
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

std::vector<double> PixelEmbedder::embed(const Image& image) const {
    if (image.shape.size() != 3) throw contract_error("PixelEmbedder: image must be (c,h,w)");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    std::vector<double> feats(static_cast<size_t>(c) * grid_ * grid_, 0.0);
    std::vector<double> counts(static_cast<size_t>(grid_) * grid_, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int gy = std::min(grid_ - 1, y * grid_ / h);
            const int gx = std::min(grid_ - 1, x * grid_ / w);
            counts[static_cast<size_t>(gy) * grid_ + gx] += 1.0;
            for (int ch = 0; ch < c; ++ch)
                feats[(static_cast<size_t>(ch) * grid_ + gy) * grid_ + gx] += image.at(ch, y, x);
        }
    for (int ch = 0; ch < c; ++ch)
        for (int g = 0; g < grid_ * grid_; ++g)
            if (counts[static_cast<size_t>(g)] > 0)
                feats[static_cast<size_t>(ch) * grid_ * grid_ + g] /= counts[static_cast<size_t>(g)];
    return normalized_or_unit(std::move(feats));
}

std::vector<double> RandomProjectionEmbedder::embed(const Image& image) const {
    Rng rng(seed_);
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    // fixed projection rows generated on the fly, row-major over output dims
    for (int d = 0; d < dim_; ++d) {
        double s = 0;
        for (double v : image.data) s += rng.normal() * v;
        out[static_cast<size_t>(d)] = s;
    }
    return normalized_or_unit(std::move(out));
}

double oks(const PoseSkeleton& gt, const PoseSkeleton& det, const OKSParams& params) {
    const double s = object_scale(gt, params);
    double num = 0;
    int visible = 0;
    for (int i = 0; i < kNumKeypoints; ++i) {
        if (gt.keypoints[i].v <= 0) continue;
        ++visible;
        if (det.keypoints[i].v <= 0) continue;  // missed detection contributes 0
        const double dx = gt.keypoints[i].x - det.keypoints[i].x;
        const double dy = gt.keypoints[i].y - det.keypoints[i].y;
        const double d2 = dx * dx + dy * dy;
        const double k = params.per_keypoint_k[static_cast<size_t>(i)];
        num += std::exp(-d2 / (2.0 * s * s * k * k));
    }
    if (visible == 0) throw oks_undefined_error("oks: ground truth has no visible keypoints");
    return num / visible;
}

namespace {

const PoseSkeleton* find_person(const std::vector<PoseSkeleton>& frame, int person_id) {
    for (const auto& sk : frame)
        if (sk.person_id == person_id) return &sk;
    return nullptr;
}

double map_from_oks_values(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double acc = 0;
    for (int i = 0; i < 10; ++i) {
        const double tau = (50 + 5 * i) / 100.0;
        int pass = 0;
        for (double v : values)
            if (v >= tau - 1e-9) ++pass;
        acc += static_cast<double>(pass) / static_cast<double>(values.size());
    }
    return acc / 10.0;
}

}  // namespace

double map_over_thresholds(const PoseSequence& gt, const PoseSequence& det, const OKSParams& params) {
    if (gt.frames.size() != det.frames.size())
        throw contract_error("map_over_thresholds: frame count mismatch");
    std::vector<double> values;
    for (size_t f = 0; f < gt.frames.size(); ++f) {
        for (const auto& gt_sk : gt.frames[f]) {
            const PoseSkeleton* det_sk = find_person(det.frames[f], gt_sk.person_id);
            if (!det_sk)
                throw contract_error("map_over_thresholds: person " + std::to_string(gt_sk.person_id) +
                                     " missing in detections at frame " + std::to_string(f));
            values.push_back(oks(gt_sk, *det_sk, params));
        }
    }
    return map_from_oks_values(values);
}

double similarity_to_reference(const std::vector<Image>& frames, const Image& reference,
                               const Embedder& embedder) {
    if (frames.empty()) throw contract_error("similarity_to_reference: no frames");
    const std::vector<double> ref = embedder.embed(reference);
    double acc = 0;
    for (const auto& frame : frames) acc += cosine(embedder.embed(frame), ref);
    return acc / static_cast<double>(frames.size());
}

double harmonic_mean(double dino, double map) {
    if (dino < 0 || map < 0) throw contract_error("harmonic_mean: inputs must be >= 0");
    if (dino + map == 0.0) return 0.0;
    return 2.0 * dino * map / (dino + map);
}

EvalReport evaluate(const std::vector<Image>& frames, const Image& reference,
                    const PoseSequence& gt_poses, const KeypointDetector& detector,
                    const Embedder& clip_like, const Embedder& dino_like, const OKSParams& params) {
    if (frames.size() != gt_poses.frames.size())
        throw contract_error("evaluate: frame count does not match pose sequence");

    EvalReport report;
    std::vector<double> oks_values;
    for (size_t f = 0; f < frames.size(); ++f) {
        const int expected = static_cast<int>(gt_poses.frames[f].size());
        const std::vector<PoseSkeleton> detected = detector(frames[f], expected);
        for (const auto& gt_sk : gt_poses.frames[f]) {
            OksEntry entry;
            entry.frame = static_cast<int>(f);
            entry.person_id = gt_sk.person_id;
            const PoseSkeleton* det_sk = find_person(detected, gt_sk.person_id);
            if (!det_sk) {
                entry.defined = false;
                entry.note = "person not detected";
            } else {
                try {
                    entry.oks = oks(gt_sk, *det_sk, params);
                    bool any = false;
                    for (const auto& kp : det_sk->keypoints) any = any || kp.v > 0;
                    if (!any) {
                        entry.defined = false;
                        entry.note = "no visible detected keypoints";
                    }
                } catch (const oks_undefined_error& e) {
                    entry.defined = false;
                    entry.note = e.what();
                }
            }
            oks_values.push_back(entry.defined ? entry.oks : 0.0);
            report.per_frame_oks.push_back(std::move(entry));
        }
    }
    report.map = map_from_oks_values(oks_values);
    report.clip_i = similarity_to_reference(frames, reference, clip_like);
    report.dino = similarity_to_reference(frames, reference, dino_like);
    report.h = harmonic_mean(report.dino, report.map);
    return report;
}

void save_eval_report(const EvalReport& report, const std::string& config_digest,
                      const std::string& path) {
    json table = json::array();
    for (const auto& e : report.per_frame_oks)
        table.push_back({{"frame", e.frame},
                         {"person", e.person_id},
                         {"oks", e.oks},
                         {"defined", e.defined},
                         {"note", e.note}});
    const json j = {{"clip_i", report.clip_i}, {"dino", report.dino},   {"map", report.map},
                    {"h", report.h},           {"config_digest", config_digest}, {"per_frame_oks", table}};
    std::ofstream f(path);
    if (!f) throw io_error("cannot write report: " + path);
    f << j.dump(1) << "\n";
}

}  // namespace posegen
