#include "posegen/embeddings.hpp"

#include "posegen/pose.hpp"

#include "optim_util.hpp"

namespace posegen {

GeneralizationBatch make_generalization_batch(InversionTrajectory reference,
                                              std::vector<InversionTrajectory> augmented) {
    GeneralizationBatch batch;
    if (reference.latents.empty()) throw contract_error("make_generalization_batch: empty reference trajectory");
    for (const auto& traj : augmented) {
        if (traj.latents.size() != reference.latents.size())
            throw contract_error("make_generalization_batch: trajectory lengths disagree");
        if (traj.control.shape != reference.control.shape)
            throw contract_error("make_generalization_batch: control map resolutions disagree");
    }
    batch.shared_start = reference.latents.back();
    batch.reference = std::move(reference);
    batch.augmented = std::move(augmented);
    return batch;
}

std::vector<InversionTrajectory> invert_augmented(const std::vector<ComposedScene>& scenes,
                                                  const std::vector<double>& text_embedding,
                                                  const DenoiserBackend& backend,
                                                  const AutoencoderBackend& autoencoder,
                                                  const NoiseSchedule& schedule) {
    std::vector<InversionTrajectory> out;
    out.reserve(scenes.size());
    const std::vector<int> lshape = backend.latent_shape();
    for (size_t m = 0; m < scenes.size(); ++m) {
        try {
            const ControlMap control = rasterize_pose(scenes[m].poses, lshape[2], lshape[1]);
            out.push_back(pose_aware_invert(scenes[m].image, text_embedding, control, backend,
                                            autoencoder, schedule));
        } catch (const error& e) {
            throw contract_error("invert_augmented: scene " + std::to_string(m) + ": " + e.what());
        }
    }
    return out;
}

GeneralizableResult optimize_generalizable(const GeneralizationBatch& batch,
                                           const std::vector<double>& c_init,
                                           const DenoiserBackend& backend,
                                           const NoiseSchedule& schedule, const GuidanceConfig& config,
                                           const TimestepEmbeddings* null_init) {
    const int T = schedule.num_steps;
    const size_t M = batch.augmented.size();
    if (static_cast<int>(batch.reference.latents.size()) != T + 1)
        throw contract_error("optimize_generalizable: trajectory length does not match schedule");
    if (config.gen_iters < 0) throw contract_error("optimize_generalizable: gen_iters must be >= 0");
    if (config.generalization_weight < 0)
        throw contract_error("optimize_generalizable: lambda1 must be >= 0");
    if (backend.gradient_mode() == DenoiserBackend::GradientMode::none)
        throw capability_error("optimize_generalizable: backend lacks embedding gradients");
    if (batch.shared_start.data != batch.reference.latents.back().data)
        throw contract_error("optimize_generalizable: shared start is not the reference endpoint");
    if (null_init && null_init->steps() != T)
        throw contract_error("optimize_generalizable: null-text init length mismatch");

    const double omega = config.guidance_scale;
    const size_t dim = static_cast<size_t>(backend.embedding_dim());

    GeneralizableResult result;
    result.embeddings.mode = TimestepEmbeddings::Mode::generalizable;
    result.embeddings.embedding_dim = static_cast<int>(dim);
    result.embeddings.unconditional.resize(static_cast<size_t>(T));
    result.embeddings.conditional.resize(static_cast<size_t>(T));

    // every branch starts from the reference endpoint
    std::vector<Latent> running(M + 1, batch.shared_start);
    auto branch_traj = [&](size_t b) -> const InversionTrajectory& {
        return b == 0 ? batch.reference : batch.augmented[b - 1];
    };
    auto branch_weight = [&](size_t b) {
        return b == 0 ? 1.0 : config.generalization_weight / static_cast<double>(M);
    };

    std::vector<double> uncond =
        null_init ? null_init->uncond(T) : backend.empty_embedding();
    std::vector<double> cond = c_init;

    for (int t = T; t >= 1; --t) {
        if (!config.warm_start) {
            uncond = null_init ? null_init->uncond(t) : backend.empty_embedding();
            cond = c_init;
        }
        const DdimCoeffs coeffs = ddim_sample_coeffs(schedule, t);

        // joint loss over all branches; gradients accumulate in fixed order
        auto evaluate = [&](std::vector<double>* grad_u, std::vector<double>* grad_c,
                            std::vector<Latent>* steps_out) {
            double loss = 0;
            if (grad_u) grad_u->assign(dim, 0.0);
            if (grad_c) grad_c->assign(dim, 0.0);
            for (size_t b = 0; b <= M; ++b) {
                const InversionTrajectory& traj = branch_traj(b);
                const double wb = branch_weight(b);
                Latent eps_c, eps_u;
                auto fwd_c = backend.begin_predict(running[b], t, cond, &traj.control, &eps_c);
                auto fwd_u = backend.begin_predict(running[b], t, uncond, &traj.control, &eps_u);
                Latent step = ddim_sample_step(running[b], cfg_epsilon(eps_c, eps_u, omega), schedule, t);
                Latent resid = lincomb(1.0, step, -1.0, traj.latents[static_cast<size_t>(t - 1)]);
                loss += wb * squared_norm(resid);
                if (grad_u || grad_c) {
                    std::vector<double> g(dim);
                    if (grad_c) {
                        const Latent up_c = scaled(resid, 2.0 * wb * coeffs.eps_coeff * omega);
                        backend.backward(*fwd_c, up_c, nullptr, &g);
                        for (size_t i = 0; i < dim; ++i) (*grad_c)[i] += g[i];
                    }
                    if (grad_u) {
                        const Latent up_u = scaled(resid, 2.0 * wb * coeffs.eps_coeff * (1.0 - omega));
                        backend.backward(*fwd_u, up_u, nullptr, &g);
                        for (size_t i = 0; i < dim; ++i) (*grad_u)[i] += g[i];
                    }
                }
                if (steps_out) (*steps_out)[b] = std::move(step);
            }
            return loss;
        };

        EmbeddingOptimizer opt_u(config.use_adam, dim), opt_c(config.use_adam, dim);
        std::vector<double> grad_u(dim), grad_c(dim);
        double start = 0;
        for (int i = 0; i < config.gen_iters; ++i) {
            const double loss = evaluate(&grad_u, &grad_c, nullptr);
            if (i == 0) start = loss;
            opt_u.update(uncond, grad_u, config.gen_lr);
            opt_c.update(cond, grad_c, config.gen_lr);
        }
        std::vector<Latent> steps(M + 1);
        const double end = evaluate(nullptr, nullptr, &steps);
        if (config.gen_iters == 0) start = end;
        result.loss_log.push_back({t, start, end});
        result.embeddings.unconditional[static_cast<size_t>(t - 1)] = uncond;
        result.embeddings.conditional[static_cast<size_t>(t - 1)] = cond;
        running = std::move(steps);  // per-branch pivot update
    }
    return result;
}

}  // namespace posegen
