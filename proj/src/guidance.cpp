#include "posegen/guidance.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace posegen {

int default_patch_radius(int res_w) { return std::max(1, res_w / 16); }

double background_cost(const Image& estimate, const ConsistencyTarget& target) {
    require_same_shape(estimate, target.reference_image, "background_cost");
    const int c = estimate.shape[0], h = estimate.shape[1], w = estimate.shape[2];
    if (target.background_mask.shape != std::vector<int>{h, w})
        throw contract_error("background_cost: mask shape mismatch");
    double sum = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = target.background_mask.data[static_cast<size_t>(y) * w + x];
            if (m == 0.0) continue;
            for (int ch = 0; ch < c; ++ch) {
                const double d = m * (target.reference_image.at(ch, y, x) - estimate.at(ch, y, x));
                sum += d * d;
            }
        }
    return sum;
}

std::pair<Image, Tensor> assign_keypoint_values(const ConsistencyTarget& target,
                                                const std::vector<PoseSkeleton>& target_poses) {
    const int c = target.reference_image.shape[0];
    const int h = target.reference_image.shape[1];
    const int w = target.reference_image.shape[2];
    Image assigned({c, h, w});
    Tensor mask({h, w});
    const int r = target.keypoint_patch_radius;

    for (const auto& pose : target_poses) {
        const PoseSkeleton* ref = nullptr;
        for (const auto& rp : target.reference_poses)
            if (rp.person_id == pose.person_id) ref = &rp;
        if (!ref)
            throw contract_error("assign_keypoint_values: unknown person_id " +
                                 std::to_string(pose.person_id));
        for (int k = 0; k < kNumKeypoints; ++k) {
            if (pose.keypoints[k].v <= 0 || ref->keypoints[k].v <= 0) continue;
            const int sx = static_cast<int>(std::lround(ref->keypoints[k].x));
            const int sy = static_cast<int>(std::lround(ref->keypoints[k].y));
            const int dx = static_cast<int>(std::lround(pose.keypoints[k].x));
            const int dy = static_cast<int>(std::lround(pose.keypoints[k].y));
            for (int oy = -r; oy <= r; ++oy)
                for (int ox = -r; ox <= r; ++ox) {
                    const int sxx = sx + ox, syy = sy + oy;
                    const int dxx = dx + ox, dyy = dy + oy;
                    if (sxx < 0 || sxx >= w || syy < 0 || syy >= h) continue;
                    if (dxx < 0 || dxx >= w || dyy < 0 || dyy >= h) continue;
                    for (int ch = 0; ch < c; ++ch)
                        assigned.at(ch, dyy, dxx) = target.reference_image.at(ch, syy, sxx);
                    mask.data[static_cast<size_t>(dyy) * w + dxx] = 1.0;
                }
        }
    }
    return {std::move(assigned), std::move(mask)};
}

double keypoint_cost(const Image& estimate, const Image& assigned, const Tensor& keypoint_mask) {
    require_same_shape(estimate, assigned, "keypoint_cost");
    const int c = estimate.shape[0], h = estimate.shape[1], w = estimate.shape[2];
    if (keypoint_mask.shape != std::vector<int>{h, w})
        throw contract_error("keypoint_cost: mask shape mismatch");
    double sum = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = keypoint_mask.data[static_cast<size_t>(y) * w + x];
            if (m == 0.0) continue;
            for (int ch = 0; ch < c; ++ch) {
                const double d = m * (assigned.at(ch, y, x) - estimate.at(ch, y, x));
                sum += d * d;
            }
        }
    return sum;
}

namespace {

double weighted_cost(const Image& estimate, const ConsistencyTarget& target, const Image& assigned,
                     const Tensor& m_kp, const GuidanceConfig& config) {
    double cost = 0;
    if (config.background_weight > 0) cost += config.background_weight * background_cost(estimate, target);
    if (config.keypoint_weight > 0) cost += config.keypoint_weight * keypoint_cost(estimate, assigned, m_kp);
    return cost;
}

// d(weighted cost)/d(estimate)
Image cost_gradient_wrt_image(const Image& estimate, const ConsistencyTarget& target,
                              const Image& assigned, const Tensor& m_kp, const GuidanceConfig& config) {
    const int c = estimate.shape[0], h = estimate.shape[1], w = estimate.shape[2];
    Image g({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double mb = target.background_mask.data[static_cast<size_t>(y) * w + x];
            const double mk = m_kp.data[static_cast<size_t>(y) * w + x];
            if (mb == 0.0 && mk == 0.0) continue;
            for (int ch = 0; ch < c; ++ch) {
                double v = 0;
                if (mb != 0.0)
                    v += 2.0 * config.background_weight * mb *
                         (estimate.at(ch, y, x) - target.reference_image.at(ch, y, x));
                if (mk != 0.0)
                    v += 2.0 * config.keypoint_weight * mk * (estimate.at(ch, y, x) - assigned.at(ch, y, x));
                g.at(ch, y, x) = v;
            }
        }
    return g;
}

}  // namespace

Image generate_frame(const Latent& start_latent, const TimestepEmbeddings& embeddings,
                     const std::vector<PoseSkeleton>& target_poses, const ConsistencyTarget& target,
                     const DenoiserBackend& backend, const AutoencoderBackend& autoencoder,
                     const NoiseSchedule& schedule, const GuidanceConfig& config,
                     bool guidance_enabled, double* final_cost) {
    const int T = schedule.num_steps;
    if (embeddings.steps() != T) throw contract_error("generate_frame: embeddings length mismatch");
    const bool guided = guidance_enabled && (config.background_weight > 0 || config.keypoint_weight > 0);
    if (guided && config.full_backprop &&
        backend.gradient_mode() == DenoiserBackend::GradientMode::none)
        throw capability_error("generate_frame: full backprop requires backend gradients");

    const std::vector<int> lshape = backend.latent_shape();
    const ControlMap control = rasterize_pose(target_poses, lshape[2], lshape[1]);
    Image assigned;
    Tensor m_kp;
    {
        auto a = assign_keypoint_values(target, target_poses);
        assigned = std::move(a.first);
        m_kp = std::move(a.second);
    }

    Latent z = start_latent;
    for (int t = T; t >= 1; --t) {
        Latent eps_c, eps_u;
        std::unique_ptr<DenoiserBackend::Forward> fwd_c, fwd_u;
        if (guided && config.full_backprop) {
            fwd_c = backend.begin_predict(z, t, embeddings.cond(t), &control, &eps_c);
            fwd_u = backend.begin_predict(z, t, embeddings.uncond(t), &control, &eps_u);
        } else {
            eps_c = backend.predict(z, t, embeddings.cond(t), &control);
            eps_u = backend.predict(z, t, embeddings.uncond(t), &control);
        }
        const Latent eps_hat = cfg_epsilon(eps_c, eps_u, config.guidance_scale);

        Latent grad;  // empty = no guidance term
        double cost = 0;
        if (guided) {
            const Latent z0_tilde = tweedie_estimate(z, eps_hat, schedule, t);
            const Image x0_tilde = autoencoder.decode(z0_tilde);
            cost = weighted_cost(x0_tilde, target, assigned, m_kp, config);
            if (!std::isfinite(cost)) throw numerical_error("generate_frame: non-finite cost");
            if (cost >= config.cost_floor) {
                const Image dcost = cost_gradient_wrt_image(x0_tilde, target, assigned, m_kp, config);
                const Latent g_z0 = autoencoder.decode_vjp(z0_tilde, dcost);
                const double abar = schedule.abar(t);
                grad = scaled(g_z0, 1.0 / std::sqrt(abar));
                if (config.full_backprop) {
                    // epsilon also depends on z; pull the cost back through it
                    const Latent up_eps = scaled(g_z0, -std::sqrt(1.0 - abar) / std::sqrt(abar));
                    Latent gz;
                    backend.backward(*fwd_c, scaled(up_eps, config.guidance_scale), &gz, nullptr);
                    axpy(1.0, gz, grad);
                    backend.backward(*fwd_u, scaled(up_eps, 1.0 - config.guidance_scale), &gz, nullptr);
                    axpy(1.0, gz, grad);
                }
            }
        }
        z = guided_reverse_step(z, eps_hat, grad, cost, schedule, t, config);
    }

    Image out = autoencoder.decode(z);
    if (final_cost) *final_cost = weighted_cost(out, target, assigned, m_kp, config);
    return out;
}

std::vector<Image> generate_video(const FrameJob& job, const ConsistencyTarget& target,
                                  const DenoiserBackend& backend,
                                  const AutoencoderBackend& autoencoder,
                                  const NoiseSchedule& schedule, std::vector<double>* final_costs) {
    const size_t n = job.target_poses.frames.size();
    if (n == 0) throw contract_error("generate_video: at least one frame required");
    std::vector<Image> frames(n);
    std::vector<double> costs(n, 0.0);
    std::vector<std::string> errors(n);

    auto run_frame = [&](size_t f) {
        try {
            frames[f] = generate_frame(job.start_latent, job.embeddings, job.target_poses.frames[f],
                                       target, backend, autoencoder, schedule, job.config,
                                       job.guidance_enabled, &costs[f]);
        } catch (const std::exception& e) {
            errors[f] = e.what();
        }
    };

    const int workers = std::max(1, job.config.workers);
    if (workers == 1) {
        for (size_t f = 0; f < n; ++f) run_frame(f);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&] {
                for (size_t f = next.fetch_add(1); f < n; f = next.fetch_add(1)) run_frame(f);
            });
        for (auto& th : pool) th.join();
    }

    for (size_t f = 0; f < n; ++f)
        if (!errors[f].empty())
            throw error("generate_video: frame " + std::to_string(f) + ": " + errors[f]);
    if (final_costs) *final_costs = std::move(costs);
    return frames;
}

}  // namespace posegen
