#ifndef POSEGEN_POSE_HPP
#define POSEGEN_POSE_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "posegen/tensor.hpp"

namespace posegen {

using Image = Tensor;

inline constexpr int kNumKeypoints = 18;

// body-18 keypoint order: nose, neck, r-shoulder, r-elbow, r-wrist,
// l-shoulder, l-elbow, l-wrist, r-hip, r-knee, r-ankle, l-hip, l-knee,
// l-ankle, r-eye, l-eye, r-ear, l-ear.
struct Keypoint {
    double x = 0;
    double y = 0;
    int v = 0;  // 0 = not labeled, 1 = labeled not visible, 2 = visible
};

struct PoseSkeleton {
    std::array<Keypoint, kNumKeypoints> keypoints{};
    int person_id = 0;
    int canvas_w = 0;
    int canvas_h = 0;

    bool in_canvas(const Keypoint& k) const {
        return k.x >= 0.0 && k.x <= canvas_w - 1.0 && k.y >= 0.0 && k.y <= canvas_h - 1.0;
    }
};

struct PoseSequence {
    std::vector<std::vector<PoseSkeleton>> frames;  // frames[f][person]
    std::optional<double> fps;
};

struct SimilarityTransform {
    double scale = 1.0;
    double rotation = 0.0;  // radians, positive = counterclockwise in image coords
    double dx = 0.0;
    double dy = 0.0;
    double pivot_x = 0.0;
    double pivot_y = 0.0;

    void apply(double x, double y, double* ox, double* oy) const;
};

SimilarityTransform inverse(const SimilarityTransform& xf);
// apply `first`, then `second`, expressed as a single transform
SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first);

// OKS falloff constants and the rule for the object scale s.
struct OKSParams {
    std::array<double, kNumKeypoints> per_keypoint_k{};
    enum class ScaleRule { keypoint_bbox, fixed };
    ScaleRule object_scale_rule = ScaleRule::keypoint_bbox;
    double fixed_scale = 1.0;
};

// COCO-derived falloff constants (k = 2*sigma) mapped to the body-18 order;
// the neck constant is the mean of the two shoulder constants.
OKSParams default_oks_params();

double object_scale(const PoseSkeleton& gt, const OKSParams& params);

// Applies the similarity transform to every keypoint; keypoints pushed
// outside the canvas get v=0.
PoseSkeleton transform_pose(const PoseSkeleton& pose, const SimilarityTransform& xf);

// Merges single-person poses into one multi-person set on the shared canvas.
// Person ids are renumbered 0..n-1 if the inputs collide.
std::vector<PoseSkeleton> compose_poses(const std::vector<PoseSkeleton>& poses);

// Skeleton rasterization: anti-aliased limb segments between mutually visible
// keypoints plus keypoint discs, channel-coded per limb group
// (0 head/torso, 1 arms, 2 legs). Poses are mapped from their canvas to the
// requested resolution. Values in [0,1].
Tensor rasterize_pose(const std::vector<PoseSkeleton>& poses, int res_w, int res_h);

// Disc radius used by rasterize_pose at a given map width (2px at width 16,
// scaled proportionally).
double raster_disc_radius(int res_w);

// ---- toy scene colour keys ----
// Persons in the toy scene family carry one saturated marker disc per
// keypoint; detection is colour-keyed against this palette. Slot p covers
// palette entries [18p, 18p+18).
inline constexpr int kMaxMarkerPersons = 3;
struct Rgb {
    double r, g, b;
};
Rgb marker_color(int person_slot, int keypoint);
// Dark body colours, one per person slot; never collide with marker cells.
Rgb body_color(int person_slot);

// Colour-keyed centroid detector for toy scene images. Markers that cannot
// be found get v=0. person_id of the result equals the palette slot.
std::vector<PoseSkeleton> detect_toy_keypoints(const Image& image, int expected_persons);

// ---- pose file I/O (JSON) ----
void save_pose_sequence(const PoseSequence& seq, int canvas_w, int canvas_h, const std::string& path);
PoseSequence load_pose_sequence(const std::string& path);
PoseSkeleton load_single_pose(const std::string& path);

}  // namespace posegen

#endif
