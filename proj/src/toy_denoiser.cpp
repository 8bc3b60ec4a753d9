#include "posegen/toy_denoiser.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace posegen {

using nlohmann::json;

namespace {
constexpr char kCheckpointMagic[8] = {'P', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

struct ToyDenoiser::Cache {
    std::vector<double> x;    // [z; control; tf]
    std::vector<double> emb;
    std::vector<double> a1, a2;
    double gate = 0;
    const double* z = nullptr;
    size_t z_n = 0;
};

ToyDenoiser::ToyDenoiser(ToyDenoiserArch arch, NoiseSchedule schedule, uint64_t init_seed)
    : arch_(std::move(arch)), schedule_(std::move(schedule)) {
    z_dim_ = static_cast<int>(Tensor::numel_of(arch_.latent_shape));
    in_dim_ = z_dim_ * 2 + arch_.time_features;  // control map shares the latent shape
    const int H = arch_.hidden, De = arch_.embedding_dim, Dt = arch_.time_features;

    size_t off = 0;
    o_w1_ = off, off += static_cast<size_t>(H) * in_dim_;
    o_b1_ = off, off += static_cast<size_t>(H);
    o_p_ = off, off += static_cast<size_t>(H) * De;
    o_w2_ = off, off += static_cast<size_t>(H) * H;
    o_b2_ = off, off += static_cast<size_t>(H);
    o_w3_ = off, off += static_cast<size_t>(z_dim_) * H;
    o_b3_ = off, off += static_cast<size_t>(z_dim_);
    o_wg_ = off, off += static_cast<size_t>(Dt);
    o_bg_ = off, off += 1;
    params_.assign(off, 0.0);

    Rng rng(init_seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim_));
    for (size_t i = 0; i < static_cast<size_t>(H) * in_dim_; ++i) params_[o_w1_ + i] = s1 * rng.normal();
    const double sp = 0.3 / std::sqrt(static_cast<double>(De));
    for (size_t i = 0; i < static_cast<size_t>(H) * De; ++i) params_[o_p_ + i] = sp * rng.normal();
    const double s2 = 1.0 / std::sqrt(static_cast<double>(H));
    for (size_t i = 0; i < static_cast<size_t>(H) * H; ++i) params_[o_w2_ + i] = s2 * rng.normal();
    const double s3 = 0.5 / std::sqrt(static_cast<double>(H));
    for (size_t i = 0; i < static_cast<size_t>(z_dim_) * H; ++i) params_[o_w3_ + i] = s3 * rng.normal();
    params_[o_bg_] = 0.6;  // skip gate starts near the typical eps/z ratio
}

std::vector<double> ToyDenoiser::time_features(int t) const {
    const int Dt = arch_.time_features;
    std::vector<double> tf(static_cast<size_t>(Dt));
    const double u = static_cast<double>(t) / static_cast<double>(schedule_.num_steps);
    for (int k = 0; k < Dt / 2; ++k) {
        const double w = M_PI * std::pow(2.0, k);
        tf[static_cast<size_t>(2 * k)] = std::sin(w * u);
        tf[static_cast<size_t>(2 * k + 1)] = std::cos(w * u);
    }
    return tf;
}

Latent ToyDenoiser::forward(const Latent& z, int t, const std::vector<double>& embedding,
                            const ControlMap* control, Cache* cache) const {
    if (t < 1 || t > schedule_.num_steps) throw range_error("ToyDenoiser::predict: level out of range");
    if (z.shape != arch_.latent_shape)
        throw contract_error("ToyDenoiser::predict: latent shape mismatch " + shape_str(z.shape));
    if (static_cast<int>(embedding.size()) != arch_.embedding_dim)
        throw contract_error("ToyDenoiser::predict: embedding dim mismatch");
    if (control && control->shape != arch_.latent_shape)
        throw contract_error("ToyDenoiser::predict: control map shape mismatch");

    const int H = arch_.hidden, De = arch_.embedding_dim, Dt = arch_.time_features;
    std::vector<double> x(static_cast<size_t>(in_dim_), 0.0);
    std::memcpy(x.data(), z.data.data(), sizeof(double) * static_cast<size_t>(z_dim_));
    if (control)
        std::memcpy(x.data() + z_dim_, control->data.data(), sizeof(double) * static_cast<size_t>(z_dim_));
    const std::vector<double> tf = time_features(t);
    std::memcpy(x.data() + 2 * z_dim_, tf.data(), sizeof(double) * static_cast<size_t>(Dt));

    std::vector<double> a1(static_cast<size_t>(H)), a2(static_cast<size_t>(H));
    const double* w1 = params_.data() + o_w1_;
    const double* p = params_.data() + o_p_;
    for (int h = 0; h < H; ++h) {
        double u = params_[o_b1_ + h];
        const double* row = w1 + static_cast<size_t>(h) * in_dim_;
        for (int j = 0; j < in_dim_; ++j) u += row[j] * x[static_cast<size_t>(j)];
        const double* prow = p + static_cast<size_t>(h) * De;
        for (int e = 0; e < De; ++e) u += prow[e] * embedding[static_cast<size_t>(e)];
        a1[static_cast<size_t>(h)] = std::tanh(u);
    }
    const double* w2 = params_.data() + o_w2_;
    for (int h = 0; h < H; ++h) {
        double u = params_[o_b2_ + h];
        const double* row = w2 + static_cast<size_t>(h) * H;
        for (int j = 0; j < H; ++j) u += row[j] * a1[static_cast<size_t>(j)];
        a2[static_cast<size_t>(h)] = std::tanh(u);
    }
    double gate = params_[o_bg_];
    for (int k = 0; k < Dt; ++k) gate += params_[o_wg_ + k] * tf[static_cast<size_t>(k)];

    Latent out(arch_.latent_shape);
    const double* w3 = params_.data() + o_w3_;
    for (int d = 0; d < z_dim_; ++d) {
        double u = params_[o_b3_ + d] + gate * z.data[static_cast<size_t>(d)];
        const double* row = w3 + static_cast<size_t>(d) * H;
        for (int h = 0; h < H; ++h) u += row[h] * a2[static_cast<size_t>(h)];
        out.data[static_cast<size_t>(d)] = u;
    }

    if (cache) {
        cache->x = std::move(x);
        cache->emb = embedding;
        cache->a1 = std::move(a1);
        cache->a2 = std::move(a2);
        cache->gate = gate;
        cache->z = z.data.data();
        cache->z_n = z.data.size();
    }
    return out;
}

void ToyDenoiser::backward(const Cache& cache, const Latent& upstream, Latent* grad_z,
                           std::vector<double>* grad_embedding, std::vector<double>* param_grad) const {
    const int H = arch_.hidden, De = arch_.embedding_dim, Dt = arch_.time_features;
    const double* w1 = params_.data() + o_w1_;
    const double* w2 = params_.data() + o_w2_;
    const double* w3 = params_.data() + o_w3_;
    const double* g = upstream.data.data();

    // output layer
    std::vector<double> ga2(static_cast<size_t>(H), 0.0);
    for (int d = 0; d < z_dim_; ++d) {
        const double gd = g[d];
        if (gd == 0.0) continue;
        const double* row = w3 + static_cast<size_t>(d) * H;
        for (int h = 0; h < H; ++h) ga2[static_cast<size_t>(h)] += gd * row[h];
    }
    std::vector<double> gu2(static_cast<size_t>(H));
    for (int h = 0; h < H; ++h)
        gu2[static_cast<size_t>(h)] = ga2[static_cast<size_t>(h)] * (1.0 - cache.a2[static_cast<size_t>(h)] * cache.a2[static_cast<size_t>(h)]);

    std::vector<double> ga1(static_cast<size_t>(H), 0.0);
    for (int h = 0; h < H; ++h) {
        const double gh = gu2[static_cast<size_t>(h)];
        if (gh == 0.0) continue;
        const double* row = w2 + static_cast<size_t>(h) * H;
        for (int j = 0; j < H; ++j) ga1[static_cast<size_t>(j)] += gh * row[j];
    }
    std::vector<double> gu1(static_cast<size_t>(H));
    for (int h = 0; h < H; ++h)
        gu1[static_cast<size_t>(h)] = ga1[static_cast<size_t>(h)] * (1.0 - cache.a1[static_cast<size_t>(h)] * cache.a1[static_cast<size_t>(h)]);

    if (grad_z) {
        *grad_z = Tensor(arch_.latent_shape);
        double* gz = grad_z->data.data();
        // skip-gate path
        for (int d = 0; d < z_dim_; ++d) gz[d] = cache.gate * g[d];
        for (int h = 0; h < H; ++h) {
            const double gh = gu1[static_cast<size_t>(h)];
            if (gh == 0.0) continue;
            const double* row = w1 + static_cast<size_t>(h) * in_dim_;
            for (int d = 0; d < z_dim_; ++d) gz[d] += gh * row[d];
        }
    }
    if (grad_embedding) {
        grad_embedding->assign(static_cast<size_t>(De), 0.0);
        const double* p = params_.data() + o_p_;
        for (int h = 0; h < H; ++h) {
            const double gh = gu1[static_cast<size_t>(h)];
            if (gh == 0.0) continue;
            const double* row = p + static_cast<size_t>(h) * De;
            for (int e = 0; e < De; ++e) (*grad_embedding)[static_cast<size_t>(e)] += gh * row[e];
        }
    }
    if (param_grad) {
        std::vector<double>& pg = *param_grad;
        double gdotz = 0.0;
        for (int d = 0; d < z_dim_; ++d) {
            pg[o_b3_ + d] += g[d];
            gdotz += g[d] * cache.z[d];
            double* row = pg.data() + o_w3_ + static_cast<size_t>(d) * H;
            const double gd = g[d];
            for (int h = 0; h < H; ++h) row[h] += gd * cache.a2[static_cast<size_t>(h)];
        }
        pg[o_bg_] += gdotz;
        const double* tf = cache.x.data() + 2 * z_dim_;
        for (int k = 0; k < Dt; ++k) pg[o_wg_ + k] += gdotz * tf[k];
        for (int h = 0; h < H; ++h) {
            const double gh2 = gu2[static_cast<size_t>(h)];
            pg[o_b2_ + h] += gh2;
            double* row = pg.data() + o_w2_ + static_cast<size_t>(h) * H;
            for (int j = 0; j < H; ++j) row[j] += gh2 * cache.a1[static_cast<size_t>(j)];
            const double gh1 = gu1[static_cast<size_t>(h)];
            pg[o_b1_ + h] += gh1;
            double* row1 = pg.data() + o_w1_ + static_cast<size_t>(h) * in_dim_;
            for (int j = 0; j < in_dim_; ++j) row1[j] += gh1 * cache.x[static_cast<size_t>(j)];
            double* rowp = pg.data() + o_p_ + static_cast<size_t>(h) * De;
            for (int e = 0; e < De; ++e) rowp[e] += gh1 * cache.emb[static_cast<size_t>(e)];
        }
    }
}

Latent ToyDenoiser::predict(const Latent& z, int t, const std::vector<double>& text_embedding,
                            const ControlMap* control) const {
    return forward(z, t, text_embedding, control, nullptr);
}

void ToyDenoiser::predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                              const ControlMap* control, const Latent& upstream,
                              Latent* grad_z, std::vector<double>* grad_embedding) const {
    Cache cache;
    forward(z, t, text_embedding, control, &cache);
    backward(cache, upstream, grad_z, grad_embedding, nullptr);
}

namespace {

struct ToyForward final : DenoiserBackend::Forward {
    ToyDenoiser::Cache cache;
    std::vector<double> z_copy;  // cache.z points here
};

}  // namespace

std::unique_ptr<DenoiserBackend::Forward> ToyDenoiser::begin_predict(
    const Latent& z, int t, const std::vector<double>& text_embedding, const ControlMap* control,
    Latent* prediction) const {
    auto fwd = std::make_unique<ToyForward>();
    const Latent out = forward(z, t, text_embedding, control, &fwd->cache);
    fwd->z_copy = z.data;
    fwd->cache.z = fwd->z_copy.data();
    if (prediction) *prediction = out;
    return fwd;
}

void ToyDenoiser::backward(const Forward& fwd, const Latent& upstream, Latent* grad_z,
                           std::vector<double>* grad_embedding) const {
    const auto& tf = dynamic_cast<const ToyForward&>(fwd);
    backward(tf.cache, upstream, grad_z, grad_embedding, nullptr);
}

double ToyDenoiser::train_step_loss(const Latent& z, int t, const std::vector<double>& embedding,
                                    const ControlMap* control, const Latent& target_eps,
                                    std::vector<double>* param_grad) const {
    Cache cache;
    const Latent pred = forward(z, t, embedding, control, &cache);
    Latent residual = lincomb(1.0, pred, -1.0, target_eps);
    const double inv_n = 1.0 / static_cast<double>(z_dim_);
    const double loss = squared_norm(residual) * inv_n;
    if (param_grad) {
        // d(loss)/d(pred) = 2*(pred-target)/n
        Latent upstream = scaled(residual, 2.0 * inv_n);
        backward(cache, upstream, nullptr, nullptr, param_grad);
    }
    return loss;
}

// ---- training ----

ToyTrainResult train_toy_denoiser(const std::vector<TrainingExample>& dataset,
                                  const NoiseSchedule& schedule, const ToyTrainingConfig& config,
                                  ToyDenoiserArch arch) {
    if (dataset.empty()) throw config_error("train_toy_denoiser: empty dataset");
    const std::vector<int> shape = dataset[0].image.shape;
    for (const auto& ex : dataset)
        if (ex.image.shape != shape) throw contract_error("train_toy_denoiser: images disagree on shape");
    arch.latent_shape = shape;
    if (!dataset[0].embedding.empty()) arch.embedding_dim = static_cast<int>(dataset[0].embedding.size());

    auto model = std::make_unique<ToyDenoiser>(arch, schedule, config.seed);
    Rng rng(config.seed * 0x9e3779b9ULL + 17);

    const size_t n_params = model->parameters().size();
    std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    ToyTrainResult result;
    const int epochs = std::max(1, config.epochs);
    const int steps_per_epoch = std::max(1, config.steps / epochs);
    double window_loss = 0.0;
    int window_count = 0;
    const std::vector<double> empty(static_cast<size_t>(arch.embedding_dim), 0.0);

    for (int step = 1; step <= config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (int b = 0; b < config.batch; ++b) {
            const TrainingExample& ex = dataset[static_cast<size_t>(rng.next_u64() % dataset.size())];
            const int t = rng.uniform_int(1, schedule.num_steps);
            const Tensor noise = [&] {
                Tensor n(shape);
                for (double& val : n.data) val = rng.normal();
                return n;
            }();
            const Latent z_t = add_noise(ex.image, noise, schedule, t);
            const bool drop = rng.uniform() < config.cfg_dropout;
            batch_loss += model->train_step_loss(z_t, t, drop ? empty : ex.embedding,
                                                 &ex.control, noise, &grad);
        }
        batch_loss /= config.batch;
        const double gscale = 1.0 / config.batch;

        // adam
        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        std::vector<double>& params = model->parameters();
        for (size_t i = 0; i < n_params; ++i) {
            const double gi = grad[i] * gscale;
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            params[i] -= config.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }

        window_loss += batch_loss;
        ++window_count;
        if (step % steps_per_epoch == 0 || step == config.steps) {
            result.epoch_losses.push_back(window_loss / window_count);
            window_loss = 0.0;
            window_count = 0;
        }
    }
    result.backend = std::move(model);
    return result;
}

// ---- checkpoint I/O ----

void ToyDenoiser::save_checkpoint(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write checkpoint: " + path);
    f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const json desc = {
        {"arch", "mlp-v1"},
        {"latent_shape", arch_.latent_shape},
        {"embedding_dim", arch_.embedding_dim},
        {"hidden", arch_.hidden},
        {"time_features", arch_.time_features},
        {"schedule_profile", schedule_.profile},
        {"schedule_steps", schedule_.num_steps},
    };
    const std::string desc_str = desc.dump();
    const uint32_t version = kCheckpointVersion;
    const uint32_t desc_len = static_cast<uint32_t>(desc_str.size());
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    f.write(reinterpret_cast<const char*>(&desc_len), sizeof(desc_len));
    f.write(desc_str.data(), desc_len);
    const uint64_t count = params_.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    std::vector<float> block(params_.begin(), params_.end());
    f.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(float)));
    if (!f) throw io_error("short write: " + path);
}

std::unique_ptr<ToyDenoiser> ToyDenoiser::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw io_error("bad checkpoint magic in " + path);
    uint32_t version = 0, desc_len = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    f.read(reinterpret_cast<char*>(&desc_len), sizeof(desc_len));
    if (!f || version != kCheckpointVersion) throw io_error("unsupported checkpoint version in " + path);
    std::string desc_str(desc_len, '\0');
    f.read(desc_str.data(), desc_len);
    if (!f) throw io_error("truncated checkpoint descriptor in " + path);
    json desc;
    try {
        desc = json::parse(desc_str);
    } catch (const std::exception& e) {
        throw io_error("bad checkpoint descriptor in " + path + ": " + e.what());
    }
    ToyDenoiserArch arch;
    arch.latent_shape = desc.at("latent_shape").get<std::vector<int>>();
    arch.embedding_dim = desc.at("embedding_dim").get<int>();
    arch.hidden = desc.at("hidden").get<int>();
    arch.time_features = desc.at("time_features").get<int>();
    const NoiseSchedule schedule =
        make_schedule(desc.at("schedule_steps").get<int>(), desc.at("schedule_profile").get<std::string>());

    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    auto model = std::make_unique<ToyDenoiser>(arch, schedule, 0);
    if (count != model->parameters().size())
        throw io_error("checkpoint parameter count mismatch in " + path);
    std::vector<float> block(count);
    f.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw io_error("truncated parameter block in " + path);
    for (size_t i = 0; i < count; ++i) model->parameters()[i] = block[i];
    return model;
}

}  // namespace posegen
