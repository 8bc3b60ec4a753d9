#include "posegen/inversion.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "optim_util.hpp"

namespace posegen {

using nlohmann::json;

InversionTrajectory pose_aware_invert(const Image& x0, const std::vector<double>& text_embedding,
                                      const ControlMap& control, const DenoiserBackend& backend,
                                      const AutoencoderBackend& autoencoder,
                                      const NoiseSchedule& schedule) {
    InversionTrajectory traj;
    traj.control = control;
    traj.text_embedding = text_embedding;
    traj.latents.reserve(static_cast<size_t>(schedule.num_steps) + 1);
    Latent z = autoencoder.encode(x0);
    if (z.shape != backend.latent_shape())
        throw contract_error("pose_aware_invert: encoded latent shape " + shape_str(z.shape) +
                             " does not match backend " + shape_str(backend.latent_shape()));
    z.timestep_tag = 0;
    traj.latents.push_back(z);
    for (int t = 0; t < schedule.num_steps; ++t) {
        // Guidance weight 1: conditional prediction only, taken at the target
        // level. Each step solves the implicit update
        //   z_{t+1} = invert_step(z_t, eps(z_{t+1}, t+1))
        // by fixed-point iteration, so the sampling step at level t+1 undoes
        // it exactly and the full round trip is limited only by solver
        // tolerance, not discretization.
        const Latent& z_cur = traj.latents.back();
        Latent eps = backend.predict(z_cur, t + 1, text_embedding, &control);
        Latent z_next = ddim_invert_step(z_cur, eps, schedule, t);
        for (int it = 0; it < 40; ++it) {
            eps = backend.predict(z_next, t + 1, text_embedding, &control);
            Latent refined = ddim_invert_step(z_cur, eps, schedule, t);
            const double delta = linf_distance(refined, z_next);
            z_next = std::move(refined);
            if (delta < 1e-13) break;
        }
        traj.latents.push_back(std::move(z_next));
    }
    return traj;
}

Latent cfg_ddim_step(const Latent& z_hat, int t, const std::vector<double>& uncond,
                     const std::vector<double>& cond, const ControlMap& control,
                     const DenoiserBackend& backend, const NoiseSchedule& schedule,
                     double guidance_scale) {
    const Latent eps_c = backend.predict(z_hat, t, cond, &control);
    const Latent eps_u = backend.predict(z_hat, t, uncond, &control);
    return ddim_sample_step(z_hat, cfg_epsilon(eps_c, eps_u, guidance_scale), schedule, t);
}

NullTextResult optimize_null_text(const InversionTrajectory& traj, const DenoiserBackend& backend,
                                  const NoiseSchedule& schedule, const GuidanceConfig& config) {
    const int T = schedule.num_steps;
    if (static_cast<int>(traj.latents.size()) != T + 1)
        throw contract_error("optimize_null_text: trajectory length does not match schedule");
    if (config.null_iters < 0) throw contract_error("optimize_null_text: null_iters must be >= 0");
    if (backend.gradient_mode() == DenoiserBackend::GradientMode::none)
        throw capability_error("optimize_null_text: backend lacks embedding gradients");

    const double omega = config.guidance_scale;
    const size_t dim = static_cast<size_t>(backend.embedding_dim());

    NullTextResult result;
    result.embeddings.mode = TimestepEmbeddings::Mode::null_only;
    result.embeddings.embedding_dim = static_cast<int>(dim);
    result.embeddings.unconditional.resize(static_cast<size_t>(T));
    result.embeddings.conditional.assign(static_cast<size_t>(T), traj.text_embedding);

    std::vector<double> null_emb = backend.empty_embedding();
    Latent z_hat = traj.latents[static_cast<size_t>(T)];

    for (int t = T; t >= 1; --t) {
        if (!config.warm_start) null_emb = backend.empty_embedding();
        const Latent& target = traj.latents[static_cast<size_t>(t - 1)];
        const DdimCoeffs coeffs = ddim_sample_coeffs(schedule, t);
        // the conditional branch is constant within a timestep
        const Latent eps_c = backend.predict(z_hat, t, traj.text_embedding, &traj.control);

        auto evaluate = [&](std::vector<double>* grad, Latent* step_out) {
            Latent eps_u;
            auto fwd = backend.begin_predict(z_hat, t, null_emb, &traj.control, &eps_u);
            Latent step = ddim_sample_step(z_hat, cfg_epsilon(eps_c, eps_u, omega), schedule, t);
            Latent resid = lincomb(1.0, step, -1.0, target);
            const double loss = squared_norm(resid);
            if (grad) {
                const Latent upstream = scaled(resid, 2.0 * coeffs.eps_coeff * (1.0 - omega));
                backend.backward(*fwd, upstream, nullptr, grad);
            }
            if (step_out) *step_out = std::move(step);
            return loss;
        };

        EmbeddingOptimizer opt(config.use_adam, dim);
        std::vector<double> grad(dim);
        double start = 0;
        for (int i = 0; i < config.null_iters; ++i) {
            const double loss = evaluate(&grad, nullptr);
            if (i == 0) start = loss;
            opt.update(null_emb, grad, config.null_lr);
        }
        Latent step_final;
        const double end = evaluate(nullptr, &step_final);
        if (config.null_iters == 0) start = end;
        result.loss_log.push_back({t, start, end});
        result.embeddings.unconditional[static_cast<size_t>(t - 1)] = null_emb;
        z_hat = std::move(step_final);  // pivot update with the optimized embedding
    }
    return result;
}

Latent reconstruct_latent(const Latent& z_T, const TimestepEmbeddings& embeddings,
                          const ControlMap& control, const DenoiserBackend& backend,
                          const NoiseSchedule& schedule, const GuidanceConfig& config) {
    if (embeddings.steps() != schedule.num_steps)
        throw contract_error("reconstruct: embeddings length does not match schedule");
    Latent z = z_T;
    for (int t = schedule.num_steps; t >= 1; --t)
        z = cfg_ddim_step(z, t, embeddings.uncond(t), embeddings.cond(t), control, backend, schedule,
                          config.guidance_scale);
    return z;
}

Image reconstruct(const Latent& z_T, const TimestepEmbeddings& embeddings, const ControlMap& control,
                  const DenoiserBackend& backend, const AutoencoderBackend& autoencoder,
                  const NoiseSchedule& schedule, const GuidanceConfig& config) {
    return autoencoder.decode(reconstruct_latent(z_T, embeddings, control, backend, schedule, config));
}

// ---- embeddings file ----

namespace {
constexpr char kEmbMagic[8] = {'P', 'G', 'E', 'M', 'B', '0', '0', '1'};
constexpr uint32_t kEmbVersion = 1;
constexpr size_t kEmbHeaderSize = 32;
}  // namespace

size_t embeddings_file_size(int steps, int embedding_dim) {
    return kEmbHeaderSize +
           static_cast<size_t>(steps) * 2 * static_cast<size_t>(embedding_dim) * sizeof(float);
}

void save_embeddings(const TimestepEmbeddings& embeddings, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write embeddings file: " + path);
    char header[kEmbHeaderSize] = {};
    std::memcpy(header, kEmbMagic, sizeof(kEmbMagic));
    const uint32_t version = kEmbVersion;
    const uint32_t steps = static_cast<uint32_t>(embeddings.steps());
    const uint32_t dim = static_cast<uint32_t>(embeddings.embedding_dim);
    const uint8_t mode = embeddings.mode == TimestepEmbeddings::Mode::null_only ? 0 : 1;
    std::memcpy(header + 8, &version, 4);
    std::memcpy(header + 12, &steps, 4);
    std::memcpy(header + 16, &dim, 4);
    std::memcpy(header + 20, &mode, 1);
    f.write(header, sizeof(header));
    auto write_block = [&](const std::vector<std::vector<double>>& vecs) {
        for (const auto& v : vecs) {
            if (v.size() != dim) throw contract_error("save_embeddings: inconsistent embedding dim");
            std::vector<float> block(v.begin(), v.end());
            f.write(reinterpret_cast<const char*>(block.data()),
                    static_cast<std::streamsize>(block.size() * sizeof(float)));
        }
    };
    write_block(embeddings.unconditional);
    write_block(embeddings.conditional);
    if (!f) throw io_error("short write: " + path);
}

TimestepEmbeddings load_embeddings(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open embeddings file: " + path);
    char header[kEmbHeaderSize];
    f.read(header, sizeof(header));
    if (!f || std::memcmp(header, kEmbMagic, sizeof(kEmbMagic)) != 0)
        throw io_error("bad embeddings magic in " + path);
    uint32_t version, steps, dim;
    uint8_t mode;
    std::memcpy(&version, header + 8, 4);
    std::memcpy(&steps, header + 12, 4);
    std::memcpy(&dim, header + 16, 4);
    std::memcpy(&mode, header + 20, 1);
    if (version != kEmbVersion) throw io_error("unsupported embeddings version in " + path);
    TimestepEmbeddings emb;
    emb.embedding_dim = static_cast<int>(dim);
    emb.mode = mode == 0 ? TimestepEmbeddings::Mode::null_only : TimestepEmbeddings::Mode::generalizable;
    auto read_block = [&](std::vector<std::vector<double>>& vecs) {
        vecs.resize(steps);
        std::vector<float> block(dim);
        for (auto& v : vecs) {
            f.read(reinterpret_cast<char*>(block.data()),
                   static_cast<std::streamsize>(block.size() * sizeof(float)));
            if (!f) throw io_error("truncated embeddings data in " + path);
            v.assign(block.begin(), block.end());
        }
    };
    read_block(emb.unconditional);
    read_block(emb.conditional);
    return emb;
}

// ---- latent file ----

namespace {
constexpr char kLatMagic[8] = {'P', 'G', 'L', 'A', 'T', '0', '0', '1'};
}

void save_latent(const Latent& z, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write latent file: " + path);
    f.write(kLatMagic, sizeof(kLatMagic));
    const uint32_t ndim = static_cast<uint32_t>(z.shape.size());
    f.write(reinterpret_cast<const char*>(&ndim), 4);
    for (int d : z.shape) {
        const int32_t v = d;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    f.write(reinterpret_cast<const char*>(z.data.data()),
            static_cast<std::streamsize>(z.data.size() * sizeof(double)));
    if (!f) throw io_error("short write: " + path);
}

Latent load_latent(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open latent file: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kLatMagic, sizeof(magic)) != 0)
        throw io_error("bad latent magic in " + path);
    uint32_t ndim = 0;
    f.read(reinterpret_cast<char*>(&ndim), 4);
    if (!f || ndim > 8) throw io_error("bad latent header in " + path);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
        int32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        d = v;
    }
    Latent z(shape);
    f.read(reinterpret_cast<char*>(z.data.data()),
           static_cast<std::streamsize>(z.data.size() * sizeof(double)));
    if (!f) throw io_error("truncated latent data in " + path);
    return z;
}

void save_loss_log(const LossLog& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write loss log: " + path);
    for (const auto& rec : log)
        f << json{{"t", rec.t}, {"start", rec.start}, {"end", rec.end}}.dump() << "\n";
}

LossLog load_loss_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open loss log: " + path);
    LossLog log;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        log.push_back({j.at("t").get<int>(), j.at("start").get<double>(), j.at("end").get<double>()});
    }
    return log;
}

}  // namespace posegen
