#include "posegen/compose.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "posegen/image_io.hpp"

namespace posegen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void validate_spec(const SceneSpec& spec) {
    if (spec.background.shape != std::vector<int>{3, spec.canvas_h, spec.canvas_w})
        throw contract_error("compose_scene: background does not match canvas");
    for (const auto& p : spec.persons) {
        if (p.foreground.shape != std::vector<int>{3, spec.canvas_h, spec.canvas_w})
            throw contract_error("compose_scene: person foreground does not match canvas");
        if (p.mask.shape != std::vector<int>{spec.canvas_h, spec.canvas_w})
            throw contract_error("compose_scene: mask/foreground shape mismatch");
        for (double v : p.mask.data)
            if (v != 0.0 && v != 1.0) throw contract_error("compose_scene: mask values must be 0 or 1");
    }
}

}  // namespace

ComposedScene compose_scene(const SceneSpec& spec) {
    validate_spec(spec);
    const int w = spec.canvas_w, h = spec.canvas_h;
    ComposedScene out;
    out.image = spec.background;
    out.background_mask = Tensor({h, w}, 1.0);

    std::vector<Tensor> placed(spec.persons.size());
    for (size_t i = 0; i < spec.persons.size(); ++i) {
        const ScenePerson& person = spec.persons[i];
        const PoseSkeleton pose = transform_pose(person.base_pose, person.placement);
        bool any_visible = false;
        for (const auto& k : pose.keypoints) any_visible = any_visible || k.v > 0;
        if (!any_visible)
            throw placement_error("compose_scene: placement pushes every keypoint of person " +
                                  std::to_string(i) + " off-canvas");
        out.poses.push_back(pose);

        const SimilarityTransform inv = inverse(person.placement);
        Tensor pm({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double sx, sy;
                inv.apply(x, y, &sx, &sy);
                const int ix = static_cast<int>(std::lround(sx));
                const int iy = static_cast<int>(std::lround(sy));
                if (ix < 0 || ix >= w || iy < 0 || iy >= h) continue;
                if (person.mask.data[static_cast<size_t>(iy) * w + ix] < 0.5) continue;
                pm.data[static_cast<size_t>(y) * w + x] = 1.0;
                for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = person.foreground.at(c, iy, ix);
            }
        placed[i] = std::move(pm);
    }

    // visibility partition: later persons occlude earlier ones
    out.person_masks.resize(spec.persons.size());
    for (size_t i = 0; i < spec.persons.size(); ++i) {
        Tensor vis = placed[i];
        for (size_t j = i + 1; j < spec.persons.size(); ++j)
            for (size_t px = 0; px < vis.data.size(); ++px)
                if (placed[j].data[px] > 0.5) vis.data[px] = 0.0;
        out.person_masks[i] = std::move(vis);
    }
    for (const auto& pm : placed)
        for (size_t px = 0; px < pm.data.size(); ++px)
            if (pm.data[px] > 0.5) out.background_mask.data[px] = 0.0;
    return out;
}

std::vector<ComposedScene> generate_augmentations(const SceneSpec& spec, int count, uint64_t seed,
                                                  const AugmentationRanges& ranges) {
    if (count < 0) throw contract_error("generate_augmentations: count must be >= 0");
    if (!(ranges.scale_lo > 0) || ranges.scale_hi < ranges.scale_lo)
        throw contract_error("generate_augmentations: invalid scale range");
    validate_spec(spec);

    Rng rng(seed);
    std::vector<ComposedScene> out;
    out.reserve(static_cast<size_t>(count));
    const double rot_rad = ranges.rotation_deg * M_PI / 180.0;

    for (int m = 0; m < count; ++m) {
        SceneSpec aug = spec;
        for (size_t i = 0; i < aug.persons.size(); ++i) {
            ScenePerson& person = aug.persons[i];
            const PoseSkeleton ref_pose = transform_pose(person.base_pose, person.placement);

            // perturbation pivot: centroid of the visible reference keypoints
            double cx = 0, cy = 0;
            int nvis = 0;
            for (const auto& k : ref_pose.keypoints)
                if (k.v > 0) {
                    cx += k.x;
                    cy += k.y;
                    ++nvis;
                }
            if (nvis == 0)
                throw placement_error("generate_augmentations: person " + std::to_string(i) +
                                      " has no visible keypoints under the reference placement");
            cx /= nvis;
            cy /= nvis;

            bool ok = false;
            for (int attempt = 0; attempt < ranges.max_attempts && !ok; ++attempt) {
                SimilarityTransform perturb;
                perturb.scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
                perturb.rotation = rng.uniform(-rot_rad, rot_rad);
                perturb.pivot_x = cx;
                perturb.pivot_y = cy;

                // translation window keeping every visible keypoint in-canvas
                double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
                for (const auto& k : ref_pose.keypoints) {
                    if (k.v <= 0) continue;
                    double px, py;
                    perturb.apply(k.x, k.y, &px, &py);
                    min_x = std::min(min_x, px);
                    max_x = std::max(max_x, px);
                    min_y = std::min(min_y, py);
                    max_y = std::max(max_y, py);
                }
                const double lo_x = -min_x, hi_x = (spec.canvas_w - 1.0) - max_x;
                const double lo_y = -min_y, hi_y = (spec.canvas_h - 1.0) - max_y;
                if (lo_x > hi_x || lo_y > hi_y) continue;
                perturb.dx = rng.uniform(lo_x, hi_x);
                perturb.dy = rng.uniform(lo_y, hi_y);
                person.placement = compose(perturb, spec.persons[i].placement);
                ok = true;
            }
            if (!ok)
                throw placement_error("generate_augmentations: no valid placement for person " +
                                      std::to_string(i) + " after " + std::to_string(ranges.max_attempts) +
                                      " attempts");
        }
        out.push_back(compose_scene(aug));
    }
    return out;
}

SceneSpec load_scene_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open scene manifest: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw io_error("malformed scene manifest " + path + ": " + e.what());
    }
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) { return (base / p).string(); };

    SceneSpec spec;
    spec.canvas_w = j.at("canvas")[0].get<int>();
    spec.canvas_h = j.at("canvas")[1].get<int>();
    spec.prompt = j.value("prompt", std::string{});
    spec.background = load_image_ppm(resolve(j.at("background").get<std::string>()));
    for (const auto& pj : j.at("persons")) {
        ScenePerson person;
        person.foreground = load_image_ppm(resolve(pj.at("image").get<std::string>()));
        person.mask = load_mask_pgm(resolve(pj.at("mask").get<std::string>()));
        person.base_pose = load_single_pose(resolve(pj.at("pose").get<std::string>()));
        const auto& pl = pj.at("placement");
        person.placement.scale = pl.value("scale", 1.0);
        person.placement.rotation = pl.value("rotation_deg", 0.0) * M_PI / 180.0;
        person.placement.dx = pl.value("dx", 0.0);
        person.placement.dy = pl.value("dy", 0.0);
        if (pl.contains("pivot")) {
            person.placement.pivot_x = pl["pivot"][0].get<double>();
            person.placement.pivot_y = pl["pivot"][1].get<double>();
        }
        spec.persons.push_back(std::move(person));
    }
    return spec;
}

void save_scene_manifest(const SceneSpec& spec, const std::vector<std::string>& person_image_paths,
                         const std::vector<std::string>& person_mask_paths,
                         const std::vector<std::string>& person_pose_paths,
                         const std::string& background_path, const std::string& out_path) {
    json j;
    j["canvas"] = {spec.canvas_w, spec.canvas_h};
    j["prompt"] = spec.prompt;
    j["background"] = background_path;
    json persons = json::array();
    for (size_t i = 0; i < spec.persons.size(); ++i) {
        const SimilarityTransform& pl = spec.persons[i].placement;
        persons.push_back({{"image", person_image_paths[i]},
                           {"mask", person_mask_paths[i]},
                           {"pose", person_pose_paths[i]},
                           {"placement",
                            {{"scale", pl.scale},
                             {"rotation_deg", pl.rotation * 180.0 / M_PI},
                             {"dx", pl.dx},
                             {"dy", pl.dy},
                             {"pivot", {pl.pivot_x, pl.pivot_y}}}}});
    }
    j["persons"] = persons;
    std::ofstream f(out_path);
    if (!f) throw io_error("cannot write scene manifest: " + out_path);
    f << j.dump(1) << "\n";
}

}  // namespace posegen
