#ifndef POSEGEN_METRICS_HPP
#define POSEGEN_METRICS_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "posegen/pose.hpp"
#include "posegen/tensor.hpp"

namespace posegen {

// Image embedder interface; outputs are unit-L2 vectors.
struct Embedder {
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const Image& image) const = 0;
    virtual std::string name() const = 0;
};

// Identity-sensitive toy embedder: block-averaged pixels, L2-normalized.
struct PixelEmbedder final : Embedder {
    explicit PixelEmbedder(int grid = 8) : grid_(grid) {}
    std::vector<double> embed(const Image& image) const override;
    std::string name() const override { return "pixel-" + std::to_string(grid_); }

  private:
    int grid_;
};

// Fixed-seed Gaussian random projection of the flattened image, normalized.
struct RandomProjectionEmbedder final : Embedder {
    explicit RandomProjectionEmbedder(int dim = 64, uint64_t seed = 99) : dim_(dim), seed_(seed) {}
    std::vector<double> embed(const Image& image) const override;
    std::string name() const override { return "randproj-" + std::to_string(dim_); }

  private:
    int dim_;
    uint64_t seed_;
};

// Object keypoint similarity of a detection against ground truth. Keypoints
// the detector missed (v=0) contribute zero. Throws oks_undefined_error when
// the ground truth has no visible keypoint.
double oks(const PoseSkeleton& gt, const PoseSkeleton& det, const OKSParams& params);

// Mean pass rate over OKS thresholds 0.50..0.95 (step 0.05) with identity
// matching by person_id; threshold comparison carries 1e-9 slack.
double map_over_thresholds(const PoseSequence& gt, const PoseSequence& det, const OKSParams& params);

// Mean cosine similarity between each frame's embedding and the reference's.
double similarity_to_reference(const std::vector<Image>& frames, const Image& reference,
                               const Embedder& embedder);

// 2ab/(a+b), 0 when both are 0.
double harmonic_mean(double dino, double map);

struct OksEntry {
    int frame = 0;
    int person_id = 0;
    double oks = 0;
    bool defined = true;
    std::string note;
};

struct EvalReport {
    double clip_i = 0;
    double dino = 0;
    double map = 0;
    double h = 0;
    std::vector<OksEntry> per_frame_oks;
};

using KeypointDetector = std::function<std::vector<PoseSkeleton>(const Image&, int expected_persons)>;

// Full protocol: detect keypoints on every frame, compute mAP against the
// driving poses, embedding similarities against the reference, and the
// harmonic mean of the second similarity (dino-style) and mAP. Undefined OKS
// pairs are surfaced in the table and count as failures for mAP.
EvalReport evaluate(const std::vector<Image>& frames, const Image& reference,
                    const PoseSequence& gt_poses, const KeypointDetector& detector,
                    const Embedder& clip_like, const Embedder& dino_like, const OKSParams& params);

void save_eval_report(const EvalReport& report, const std::string& config_digest,
                      const std::string& path);

}  // namespace posegen

#endif
