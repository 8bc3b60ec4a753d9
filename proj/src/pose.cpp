#include "posegen/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace posegen {

using nlohmann::json;

void SimilarityTransform::apply(double x, double y, double* ox, double* oy) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double rx = (x - pivot_x) * scale;
    const double ry = (y - pivot_y) * scale;
    *ox = c * rx - s * ry + pivot_x + dx;
    *oy = s * rx + c * ry + pivot_y + dy;
}

SimilarityTransform inverse(const SimilarityTransform& xf) {
    SimilarityTransform inv;
    inv.scale = 1.0 / xf.scale;
    inv.rotation = -xf.rotation;
    inv.pivot_x = xf.pivot_x;
    inv.pivot_y = xf.pivot_y;
    const double c = std::cos(-xf.rotation), s = std::sin(-xf.rotation);
    inv.dx = -(c * xf.dx - s * xf.dy) * inv.scale;
    inv.dy = -(s * xf.dx + c * xf.dy) * inv.scale;
    return inv;
}

SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first) {
    SimilarityTransform out;
    out.scale = second.scale * first.scale;
    out.rotation = second.rotation + first.rotation;
    out.pivot_x = first.pivot_x;
    out.pivot_y = first.pivot_y;
    // track where the first pivot lands after both transforms
    double mx, my;
    second.apply(first.pivot_x + first.dx, first.pivot_y + first.dy, &mx, &my);
    out.dx = mx - first.pivot_x;
    out.dy = my - first.pivot_y;
    return out;
}

OKSParams default_oks_params() {
    // COCO sigmas, body-18 order, k = 2*sigma
    static const double sigma[kNumKeypoints] = {
        0.026,  // nose
        0.079,  // neck (= shoulder mean)
        0.079, 0.072, 0.062,   // right arm
        0.079, 0.072, 0.062,   // left arm
        0.107, 0.087, 0.089,   // right leg
        0.107, 0.087, 0.089,   // left leg
        0.025, 0.025,          // eyes
        0.035, 0.035};         // ears
    OKSParams p;
    for (int i = 0; i < kNumKeypoints; ++i) p.per_keypoint_k[i] = 2.0 * sigma[i];
    return p;
}

double object_scale(const PoseSkeleton& gt, const OKSParams& params) {
    if (params.object_scale_rule == OKSParams::ScaleRule::fixed) return params.fixed_scale;
    double minx = 1e30, miny = 1e30, maxx = -1e30, maxy = -1e30;
    bool any = false;
    for (const auto& k : gt.keypoints) {
        if (k.v <= 0) continue;
        any = true;
        minx = std::min(minx, k.x);
        maxx = std::max(maxx, k.x);
        miny = std::min(miny, k.y);
        maxy = std::max(maxy, k.y);
    }
    if (!any) return 1e-6;
    const double area = (maxx - minx) * (maxy - miny);
    return std::max(std::sqrt(area) * 0.53, 1e-6);
}

PoseSkeleton transform_pose(const PoseSkeleton& pose, const SimilarityTransform& xf) {
    PoseSkeleton out = pose;
    for (auto& k : out.keypoints) {
        xf.apply(k.x, k.y, &k.x, &k.y);
        if (!out.in_canvas(k)) k.v = 0;
    }
    return out;
}

std::vector<PoseSkeleton> compose_poses(const std::vector<PoseSkeleton>& poses) {
    if (poses.empty()) return {};
    const int cw = poses[0].canvas_w, ch = poses[0].canvas_h;
    for (const auto& p : poses)
        if (p.canvas_w != cw || p.canvas_h != ch)
            throw contract_error("compose_poses: canvas mismatch");
    std::vector<PoseSkeleton> out = poses;
    std::vector<int> ids;
    for (const auto& p : out) ids.push_back(p.person_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        for (size_t i = 0; i < out.size(); ++i) out[i].person_id = static_cast<int>(i);
    return out;
}

namespace {

struct Limb {
    int a, b, group;
};

// body-18 limb list, grouped: 0 head/torso, 1 arms, 2 legs
const Limb kLimbs[] = {
    {1, 0, 0}, {0, 14, 0}, {0, 15, 0}, {14, 16, 0}, {15, 17, 0}, {1, 8, 0}, {1, 11, 0},
    {1, 2, 1}, {2, 3, 1}, {3, 4, 1}, {1, 5, 1}, {5, 6, 1}, {6, 7, 1},
    {8, 9, 2}, {9, 10, 2}, {11, 12, 2}, {12, 13, 2},
};

int keypoint_group(int k) {
    if (k == 0 || k == 1 || k >= 14) return 0;
    if (k >= 2 && k <= 7) return 1;
    return 2;
}

double dist_point_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = ax + t * vx, cy = ay + t * vy;
    return std::hypot(px - cx, py - cy);
}

}  // namespace

double raster_disc_radius(int res_w) {
    return std::clamp(static_cast<double>(res_w) / 8.0, 1.0, 4.0);
}

Tensor rasterize_pose(const std::vector<PoseSkeleton>& poses, int res_w, int res_h) {
    if (res_w <= 0 || res_h <= 0) throw contract_error("rasterize_pose: resolution must be positive");
    Tensor map({3, res_h, res_w});
    const double r_kp = raster_disc_radius(res_w);
    const double hw = r_kp / 3.0;  // limb half-width

    auto splat_disc = [&](int ch, double cx, double cy, double r) {
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
        const int x1 = std::min(res_w - 1, static_cast<int>(std::ceil(cx + r + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
        const int y1 = std::min(res_h - 1, static_cast<int>(std::ceil(cy + r + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - cx, y - cy);
                const double cov = std::clamp(r + 0.5 - d, 0.0, 1.0);
                if (cov > 0) map.at(ch, y, x) = std::max(map.at(ch, y, x), cov);
            }
    };

    for (const auto& pose : poses) {
        // map canvas coordinates onto the raster grid, aligning pixel centers
        const double sx = pose.canvas_w > 0 ? static_cast<double>(res_w) / pose.canvas_w : 1.0;
        const double sy = pose.canvas_h > 0 ? static_cast<double>(res_h) / pose.canvas_h : 1.0;
        auto to_map = [&](const Keypoint& k, double* mx, double* my) {
            *mx = (k.x + 0.5) * sx - 0.5;
            *my = (k.y + 0.5) * sy - 0.5;
        };
        for (const auto& limb : kLimbs) {
            const Keypoint& a = pose.keypoints[limb.a];
            const Keypoint& b = pose.keypoints[limb.b];
            if (a.v <= 0 || b.v <= 0) continue;
            double ax, ay, bx, by;
            to_map(a, &ax, &ay);
            to_map(b, &bx, &by);
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - hw - 1)));
            const int x1 = std::min(res_w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + hw + 1)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - hw - 1)));
            const int y1 = std::min(res_h - 1, static_cast<int>(std::ceil(std::max(ay, by) + hw + 1)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double d = dist_point_segment(x, y, ax, ay, bx, by);
                    const double cov = std::clamp(hw + 0.5 - d, 0.0, 1.0);
                    if (cov > 0) map.at(limb.group, y, x) = std::max(map.at(limb.group, y, x), cov);
                }
        }
        for (int k = 0; k < kNumKeypoints; ++k) {
            const Keypoint& kp = pose.keypoints[k];
            if (kp.v <= 0) continue;
            double mx, my;
            to_map(kp, &mx, &my);
            splat_disc(keypoint_group(k), mx, my, r_kp);
        }
    }
    return map;
}

// ---- marker palette ----

namespace {

// 54 saturated cells of the 4-level RGB grid (levels/3): every cell whose max
// level is 3 (36 colours) or 2 (18 colours), grays excluded. Hue-sorted and
// strided so each person slot spans the hue wheel.
const std::vector<Rgb>& marker_palette() {
    static const std::vector<Rgb> palette = [] {
        struct Entry {
            int lr, lg, lb;
            double hue, lum;
        };
        std::vector<Entry> cells;
        for (int lr = 0; lr < 4; ++lr)
            for (int lg = 0; lg < 4; ++lg)
                for (int lb = 0; lb < 4; ++lb) {
                    const int mx = std::max({lr, lg, lb});
                    const bool gray = (lr == lg && lg == lb);
                    if (gray || (mx != 3 && mx != 2)) continue;
                    Entry e{lr, lg, lb, 0, 0};
                    e.hue = std::atan2(std::sqrt(3.0) * (lg - lb), 2.0 * lr - lg - lb);
                    e.lum = lr + lg + lb;
                    cells.push_back(e);
                }
        std::sort(cells.begin(), cells.end(), [](const Entry& a, const Entry& b) {
            if (a.hue != b.hue) return a.hue < b.hue;
            if (a.lum != b.lum) return a.lum < b.lum;
            return std::tie(a.lr, a.lg, a.lb) < std::tie(b.lr, b.lg, b.lb);
        });
        std::vector<Rgb> out(cells.size());
        // slot p gets sorted entries p, p+3, p+6, ...
        for (int p = 0; p < kMaxMarkerPersons; ++p)
            for (int k = 0; k < kNumKeypoints; ++k) {
                const Entry& e = cells[static_cast<size_t>(3 * k + p)];
                out[static_cast<size_t>(p * kNumKeypoints + k)] = {e.lr / 3.0, e.lg / 3.0, e.lb / 3.0};
            }
        return out;
    }();
    return palette;
}

}  // namespace

Rgb marker_color(int person_slot, int keypoint) {
    if (person_slot < 0 || person_slot >= kMaxMarkerPersons)
        throw contract_error("marker_color: person slot out of range");
    if (keypoint < 0 || keypoint >= kNumKeypoints)
        throw contract_error("marker_color: keypoint out of range");
    return marker_palette()[static_cast<size_t>(person_slot * kNumKeypoints + keypoint)];
}

Rgb body_color(int person_slot) {
    static const Rgb bodies[kMaxMarkerPersons] = {
        {1.0 / 3, 0.0, 1.0 / 3}, {0.0, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 0.0}};
    if (person_slot < 0 || person_slot >= kMaxMarkerPersons)
        throw contract_error("body_color: person slot out of range");
    return bodies[person_slot];
}

std::vector<PoseSkeleton> detect_toy_keypoints(const Image& image, int expected_persons) {
    if (expected_persons <= 0) throw contract_error("detect_toy_keypoints: expected_persons must be positive");
    if (expected_persons > kMaxMarkerPersons)
        throw contract_error("detect_toy_keypoints: more persons than palette slots");
    if (image.shape.size() != 3 || image.shape[0] != 3)
        throw contract_error("detect_toy_keypoints: image must be (3,h,w)");
    const int h = image.shape[1], w = image.shape[2];
    const double tol = 0.18;          // colour match radius
    const double anchor_min = 0.45;   // min weight of the best pixel
    const double mass_min = 0.8;      // min total weight to accept a marker
    const double window = std::max(3.0, 2.0 * w / 12.0);

    std::vector<PoseSkeleton> out;
    for (int p = 0; p < expected_persons; ++p) {
        PoseSkeleton sk;
        sk.person_id = p;
        sk.canvas_w = w;
        sk.canvas_h = h;
        for (int k = 0; k < kNumKeypoints; ++k) {
            const Rgb key = marker_color(p, k);
            double best_w = 0;
            int bx = 0, by = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double dr = image.at(0, y, x) - key.r;
                    const double dg = image.at(1, y, x) - key.g;
                    const double db = image.at(2, y, x) - key.b;
                    const double d = std::sqrt(dr * dr + dg * dg + db * db);
                    const double wgt = std::max(0.0, 1.0 - d / tol);
                    if (wgt > best_w) {
                        best_w = wgt;
                        bx = x;
                        by = y;
                    }
                }
            Keypoint& kp = sk.keypoints[k];
            if (best_w < anchor_min) {
                kp = {0, 0, 0};
                continue;
            }
            double sw = 0, sx = 0, sy = 0;
            const int x0 = std::max(0, static_cast<int>(bx - window));
            const int x1 = std::min(w - 1, static_cast<int>(bx + window));
            const int y0 = std::max(0, static_cast<int>(by - window));
            const int y1 = std::min(h - 1, static_cast<int>(by + window));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dr = image.at(0, y, x) - key.r;
                    const double dg = image.at(1, y, x) - key.g;
                    const double db = image.at(2, y, x) - key.b;
                    const double d = std::sqrt(dr * dr + dg * dg + db * db);
                    const double wgt = std::max(0.0, 1.0 - d / tol);
                    sw += wgt;
                    sx += wgt * x;
                    sy += wgt * y;
                }
            if (sw < mass_min) {
                kp = {0, 0, 0};
            } else {
                kp.x = sx / sw;
                kp.y = sy / sw;
                kp.v = 2;
            }
        }
        out.push_back(sk);
    }
    return out;
}

// ---- pose file I/O ----

namespace {

json skeleton_to_json(const PoseSkeleton& sk) {
    json kps = json::array();
    for (const auto& k : sk.keypoints) kps.push_back({k.x, k.y, k.v});
    return json{{"id", sk.person_id}, {"keypoints", kps}};
}

PoseSkeleton skeleton_from_json(const json& j, int cw, int ch) {
    PoseSkeleton sk;
    sk.person_id = j.at("id").get<int>();
    sk.canvas_w = cw;
    sk.canvas_h = ch;
    const auto& kps = j.at("keypoints");
    if (kps.size() != kNumKeypoints)
        throw io_error("pose file: expected 18 keypoints, got " + std::to_string(kps.size()));
    for (int i = 0; i < kNumKeypoints; ++i) {
        sk.keypoints[i].x = kps[i][0].get<double>();
        sk.keypoints[i].y = kps[i][1].get<double>();
        sk.keypoints[i].v = kps[i][2].get<int>();
    }
    return sk;
}

}  // namespace

void save_pose_sequence(const PoseSequence& seq, int canvas_w, int canvas_h, const std::string& path) {
    json j;
    if (seq.fps) j["fps"] = *seq.fps;
    j["canvas"] = {canvas_w, canvas_h};
    json frames = json::array();
    for (const auto& frame : seq.frames) {
        json persons = json::array();
        for (const auto& sk : frame) persons.push_back(skeleton_to_json(sk));
        frames.push_back(persons);
    }
    j["frames"] = frames;
    std::ofstream f(path);
    if (!f) throw io_error("cannot write pose file: " + path);
    f << j.dump(1) << "\n";
}

PoseSequence load_pose_sequence(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open pose file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw io_error("malformed pose file " + path + ": " + e.what());
    }
    PoseSequence seq;
    if (j.contains("fps") && !j["fps"].is_null()) seq.fps = j["fps"].get<double>();
    const int cw = j.at("canvas")[0].get<int>();
    const int ch = j.at("canvas")[1].get<int>();
    for (const auto& frame : j.at("frames")) {
        std::vector<PoseSkeleton> persons;
        for (const auto& pj : frame) persons.push_back(skeleton_from_json(pj, cw, ch));
        seq.frames.push_back(std::move(persons));
    }
    // frames must agree on persons
    if (!seq.frames.empty()) {
        const size_t n = seq.frames[0].size();
        for (const auto& frame : seq.frames) {
            if (frame.size() != n) throw io_error("pose file " + path + ": frames disagree on person count");
            for (size_t i = 0; i < n; ++i)
                if (frame[i].person_id != seq.frames[0][i].person_id)
                    throw io_error("pose file " + path + ": inconsistent person ids across frames");
        }
    }
    return seq;
}

PoseSkeleton load_single_pose(const std::string& path) {
    const PoseSequence seq = load_pose_sequence(path);
    if (seq.frames.empty() || seq.frames[0].empty())
        throw io_error("pose file " + path + " contains no skeleton");
    return seq.frames[0][0];
}

}  // namespace posegen
