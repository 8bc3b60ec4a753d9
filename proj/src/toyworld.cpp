#include "posegen/toyworld.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace posegen {
namespace toyworld {

using nlohmann::json;

std::string family_prompt(int background_style, int num_persons) {
    return "toy:bg" + std::to_string(background_style) + ":n" + std::to_string(num_persons);
}

PoseSkeleton canonical_pose(int canvas_w, int canvas_h, double height_px, double cx, double cy) {
    // (x,y) offsets in units of the body height, y down; spacing sized so
    // marker discs barely touch at the smallest body height
    static const double unit[kNumKeypoints][2] = {
        {0.00, -0.40},                    // nose
        {0.00, -0.235},                   // neck
        {-0.17, -0.275}, {-0.26, -0.10}, {-0.30, 0.08},  // right arm
        {0.17, -0.275},  {0.26, -0.10},  {0.30, 0.08},   // left arm
        {-0.10, 0.04},  {-0.11, 0.26},  {-0.12, 0.48},   // right leg
        {0.10, 0.04},   {0.11, 0.26},   {0.12, 0.48},    // left leg
        {-0.12, -0.54}, {0.12, -0.54},                   // eyes
        {-0.22, -0.40}, {0.22, -0.40},                   // ears
    };
    PoseSkeleton pose;
    pose.canvas_w = canvas_w;
    pose.canvas_h = canvas_h;
    for (int k = 0; k < kNumKeypoints; ++k) {
        pose.keypoints[k].x = cx + unit[k][0] * height_px;
        pose.keypoints[k].y = cy + unit[k][1] * height_px;
        pose.keypoints[k].v = 2;
    }
    return pose;
}

namespace {

void rotate_about_keypoint(PoseSkeleton& pose, int pivot, std::initializer_list<int> members, double angle) {
    const double px = pose.keypoints[pivot].x, py = pose.keypoints[pivot].y;
    const double c = std::cos(angle), s = std::sin(angle);
    for (int k : members) {
        const double rx = pose.keypoints[k].x - px;
        const double ry = pose.keypoints[k].y - py;
        pose.keypoints[k].x = px + c * rx - s * ry;
        pose.keypoints[k].y = py + s * rx + c * ry;
    }
}

}  // namespace

PoseSkeleton jiggle_pose(const PoseSkeleton& pose, Rng& rng, double strength) {
    PoseSkeleton out = pose;
    rotate_about_keypoint(out, 2, {3, 4}, rng.uniform(-0.40, 0.40) * strength);
    rotate_about_keypoint(out, 3, {4}, rng.uniform(-0.55, 0.55) * strength);
    rotate_about_keypoint(out, 5, {6, 7}, rng.uniform(-0.40, 0.40) * strength);
    rotate_about_keypoint(out, 6, {7}, rng.uniform(-0.55, 0.55) * strength);
    rotate_about_keypoint(out, 8, {9, 10}, rng.uniform(-0.22, 0.22) * strength);
    rotate_about_keypoint(out, 9, {10}, rng.uniform(-0.35, 0.35) * strength);
    rotate_about_keypoint(out, 11, {12, 13}, rng.uniform(-0.22, 0.22) * strength);
    rotate_about_keypoint(out, 12, {13}, rng.uniform(-0.35, 0.35) * strength);
    rotate_about_keypoint(out, 1, {0, 14, 15, 16, 17}, rng.uniform(-0.12, 0.12) * strength);
    return out;
}

namespace {

struct Painter {
    Image* img;
    Tensor* alpha;
    int w, h;

    void blend(int x, int y, double cov, Rgb color) {
        if (cov <= 0) return;
        img->at(0, y, x) = cov * color.r + (1 - cov) * img->at(0, y, x);
        img->at(1, y, x) = cov * color.g + (1 - cov) * img->at(1, y, x);
        img->at(2, y, x) = cov * color.b + (1 - cov) * img->at(2, y, x);
        double& a = alpha->data[static_cast<size_t>(y) * w + x];
        a = std::max(a, cov);
    }

    void disc(double cx, double cy, double r, Rgb color) {
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                blend(x, y, std::clamp(r + 0.5 - std::hypot(x - cx, y - cy), 0.0, 1.0), color);
    }

    void capsule(double ax, double ay, double bx, double by, double hw, Rgb color) {
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - hw - 1)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + hw + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - hw - 1)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + hw + 1)));
        const double vx = bx - ax, vy = by - ay;
        const double len2 = vx * vx + vy * vy;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double t = len2 > 0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double d = std::hypot(x - (ax + t * vx), y - (ay + t * vy));
                blend(x, y, std::clamp(hw + 0.5 - d, 0.0, 1.0), color);
            }
    }
};

const int kBodyLimbs[][2] = {
    {1, 0}, {1, 2}, {2, 3}, {3, 4}, {1, 5}, {5, 6}, {6, 7},
    {1, 8}, {8, 9}, {9, 10}, {1, 11}, {11, 12}, {12, 13}, {8, 11},
};

}  // namespace

Image render_person_sprite(const PoseSkeleton& pose, int person_slot, int canvas_w, int canvas_h,
                           Tensor* mask) {
    Image img({3, canvas_h, canvas_w});
    Tensor alpha({canvas_h, canvas_w});
    Painter painter{&img, &alpha, canvas_w, canvas_h};
    const double unit = canvas_w / 24.0;

    const Rgb body = body_color(person_slot);
    for (const auto& limb : kBodyLimbs)
        painter.capsule(pose.keypoints[limb[0]].x, pose.keypoints[limb[0]].y,
                        pose.keypoints[limb[1]].x, pose.keypoints[limb[1]].y, 1.0 * unit, body);
    // head
    const double hx = 0.5 * (pose.keypoints[0].x + 0.5 * (pose.keypoints[14].x + pose.keypoints[15].x));
    const double hy = 0.5 * (pose.keypoints[0].y + 0.5 * (pose.keypoints[14].y + pose.keypoints[15].y));
    painter.disc(hx, hy, 2.4 * unit, body);

    // face cluster first so the tightly packed head markers occlude each
    // other as little as possible (later draws win); head/neck markers are
    // smaller than the widely spaced body ones
    static const int kMarkerOrder[kNumKeypoints] = {16, 17, 14, 15, 0, 1, 2, 3, 4,
                                                    5,  6,  7,  8,  9, 10, 11, 12, 13};
    for (int i = 0; i < kNumKeypoints; ++i) {
        const int k = kMarkerOrder[i];
        const double r = (k == 0 || k == 1 || k >= 14 ? 1.15 : 1.45) * unit;
        painter.disc(pose.keypoints[k].x, pose.keypoints[k].y, r, marker_color(person_slot, k));
    }

    if (mask) {
        *mask = Tensor({canvas_h, canvas_w});
        for (size_t i = 0; i < alpha.data.size(); ++i) mask->data[i] = alpha.data[i] >= 0.5 ? 1.0 : 0.0;
    }
    return img;
}

Image render_background(int style, int w, int h) {
    // dark palettes only: every channel stays below ~0.4 so background pixels
    // can never be mistaken for marker colours
    struct Pal {
        Rgb a, b, band;
    };
    static const Pal pals[3] = {
        {{0.06, 0.06, 0.14}, {0.18, 0.12, 0.24}, {0.10, 0.14, 0.06}},
        {{0.16, 0.09, 0.04}, {0.04, 0.11, 0.13}, {0.14, 0.06, 0.10}},
        {{0.05, 0.13, 0.07}, {0.13, 0.06, 0.15}, {0.04, 0.08, 0.16}},
    };
    Pal pal;
    if (style < 3) {
        pal = pals[style];
    } else {
        Rng rng(0xb16b00b5ULL + static_cast<uint64_t>(style));
        auto rnd = [&] { return Rgb{rng.uniform(0.03, 0.20), rng.uniform(0.03, 0.20), rng.uniform(0.03, 0.20)}; };
        pal = {rnd(), rnd(), rnd()};
    }
    Image img({3, h, w});
    const int band_lo = static_cast<int>(h * 0.55), band_hi = static_cast<int>(h * 0.72);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = (static_cast<double>(x) / std::max(1, w - 1) +
                              static_cast<double>(y) / std::max(1, h - 1)) /
                             2.0;
            double r = pal.a.r + (pal.b.r - pal.a.r) * t;
            double g = pal.a.g + (pal.b.g - pal.a.g) * t;
            double b = pal.a.b + (pal.b.b - pal.a.b) * t;
            if (y >= band_lo && y < band_hi) {
                r = 0.5 * r + 0.5 * pal.band.r;
                g = 0.5 * g + 0.5 * pal.band.g;
                b = 0.5 * b + 0.5 * pal.band.b;
            }
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    return img;
}

SceneSpec random_scene(const ToyWorldSpec& world, int background_style, int num_persons, Rng& rng) {
    SceneSpec spec;
    spec.canvas_w = world.canvas_w;
    spec.canvas_h = world.canvas_h;
    spec.prompt = family_prompt(background_style, num_persons);
    spec.background = render_background(background_style, world.canvas_w, world.canvas_h);

    const double margin = 1.4 * world.canvas_w / 24.0;
    for (int p = 0; p < num_persons; ++p) {
        const double min_h = num_persons > 1 ? 11.5 : 12.5;
        const double max_h = num_persons > 1 ? 13.5 : 18.0;
        const double height = rng.uniform(min_h, max_h) * world.canvas_h / 24.0;
        PoseSkeleton pose = canonical_pose(world.canvas_w, world.canvas_h, height, 0.0, 0.0);
        pose = jiggle_pose(pose, rng, 0.85);
        double minx = 1e30, maxx = -1e30, miny = 1e30, maxy = -1e30;
        for (const auto& k : pose.keypoints) {
            minx = std::min(minx, k.x);
            maxx = std::max(maxx, k.x);
            miny = std::min(miny, k.y);
            maxy = std::max(maxy, k.y);
        }
        // one horizontal band per person keeps mutual occlusion mild
        const double band = static_cast<double>(world.canvas_w) / num_persons;
        double lo_x = band * p + margin;
        double hi_x = band * (p + 1) - 1.0 - margin;
        if (hi_x - lo_x < maxx - minx) {  // band too narrow, fall back to full width
            lo_x = margin;
            hi_x = world.canvas_w - 1.0 - margin;
        }
        const double dx = rng.uniform(lo_x - minx, std::max(lo_x - minx, hi_x - maxx));
        const double dy = rng.uniform(margin - miny, (world.canvas_h - 1.0 - margin) - maxy);
        for (auto& k : pose.keypoints) {
            k.x += dx;
            k.y += dy;
        }
        pose.person_id = p;

        ScenePerson person;
        person.base_pose = pose;
        person.foreground = render_person_sprite(pose, p, world.canvas_w, world.canvas_h, &person.mask);
        person.placement.pivot_x = (world.canvas_w - 1.0) / 2.0;
        person.placement.pivot_y = (world.canvas_h - 1.0) / 2.0;
        spec.persons.push_back(std::move(person));
    }
    return spec;
}

std::vector<TrainingExample> make_training_dataset(const ToyWorldSpec& world) {
    Rng rng(world.seed);
    std::vector<TrainingExample> dataset;
    for (int style = 0; style < world.num_backgrounds; ++style)
        for (int n = 1; n <= world.max_persons; ++n) {
            const std::vector<double> embedding =
                hash_prompt_embedding(family_prompt(style, n), world.embedding_dim);
            for (int s = 0; s < world.samples_per_family; ++s) {
                const SceneSpec spec = random_scene(world, style, n, rng);
                const ComposedScene scene = compose_scene(spec);
                TrainingExample ex;
                ex.image = scene.image;
                ex.embedding = embedding;
                ex.control = rasterize_pose(scene.poses, world.canvas_w, world.canvas_h);
                dataset.push_back(std::move(ex));
            }
        }
    return dataset;
}

PoseSequence make_driving_sequence(const std::vector<PoseSkeleton>& reference_poses, int n_frames,
                                   uint64_t seed, double strength, bool include_reference) {
    Rng rng(seed);
    PoseSequence seq;
    seq.fps = 8.0;
    for (int f = 0; f < n_frames; ++f) {
        if (f == 0 && include_reference) {
            seq.frames.push_back(reference_poses);
            continue;
        }
        std::vector<PoseSkeleton> frame;
        for (const auto& ref : reference_poses) {
            PoseSkeleton pose = jiggle_pose(ref, rng, strength);
            double minx = 1e30, maxx = -1e30, miny = 1e30, maxy = -1e30;
            for (const auto& k : pose.keypoints) {
                minx = std::min(minx, k.x);
                maxx = std::max(maxx, k.x);
                miny = std::min(miny, k.y);
                maxy = std::max(maxy, k.y);
            }
            const double margin = 1.4 * ref.canvas_w / 24.0;
            const double lo_x = std::max(-2.0 * strength, margin - minx);
            const double hi_x = std::min(2.0 * strength, (ref.canvas_w - 1.0 - margin) - maxx);
            const double lo_y = std::max(-2.0 * strength, margin - miny);
            const double hi_y = std::min(2.0 * strength, (ref.canvas_h - 1.0 - margin) - maxy);
            const double dx = lo_x <= hi_x ? rng.uniform(lo_x, hi_x) : 0.0;
            const double dy = lo_y <= hi_y ? rng.uniform(lo_y, hi_y) : 0.0;
            for (auto& k : pose.keypoints) {
                k.x += dx;
                k.y += dy;
            }
            frame.push_back(pose);
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

ToyWorldSpec load_world_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open world spec: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw io_error("malformed world spec " + path + ": " + e.what());
    }
    ToyWorldSpec spec;
    spec.canvas_w = j.value("canvas_w", spec.canvas_w);
    spec.canvas_h = j.value("canvas_h", spec.canvas_h);
    spec.num_backgrounds = j.value("num_backgrounds", spec.num_backgrounds);
    spec.max_persons = j.value("max_persons", spec.max_persons);
    spec.samples_per_family = j.value("samples_per_family", spec.samples_per_family);
    spec.embedding_dim = j.value("embedding_dim", spec.embedding_dim);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

void save_world_spec(const ToyWorldSpec& spec, const std::string& path) {
    const json j = {
        {"canvas_w", spec.canvas_w},       {"canvas_h", spec.canvas_h},
        {"num_backgrounds", spec.num_backgrounds}, {"max_persons", spec.max_persons},
        {"samples_per_family", spec.samples_per_family}, {"embedding_dim", spec.embedding_dim},
        {"seed", spec.seed},
    };
    std::ofstream f(path);
    if (!f) throw io_error("cannot write world spec: " + path);
    f << j.dump(1) << "\n";
}

}  // namespace toyworld
}  // namespace posegen
