#include "posegen/backends.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace posegen {

std::vector<double> hash_prompt_embedding(const std::string& prompt, int dim) {
    if (prompt.empty()) return std::vector<double>(static_cast<size_t>(dim), 0.0);
    Rng rng(fnv1a64(prompt));
    std::vector<double> emb(static_cast<size_t>(dim));
    for (double& v : emb) v = rng.normal();
    return emb;
}

std::vector<double> DenoiserBackend::embed_text(const std::string& prompt) const {
    if (prompt.empty()) return empty_embedding();
    return hash_prompt_embedding(prompt, embedding_dim());
}

void DenoiserBackend::predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                                  const ControlMap* control, const Latent& upstream,
                                  Latent* grad_z, std::vector<double>* grad_embedding) const {
    if (gradient_mode() != GradientMode::finite_difference)
        throw capability_error("backend declares no gradient mechanism");
    const double h = 1e-4;
    auto cost = [&](const Latent& zz, const std::vector<double>& ee) {
        return dot(upstream, predict(zz, t, ee, control));
    };
    if (grad_z) {
        *grad_z = Tensor(z.shape);
        Latent zp = z;
        for (size_t i = 0; i < z.data.size(); ++i) {
            const double orig = zp.data[i];
            zp.data[i] = orig + h;
            const double up = cost(zp, text_embedding);
            zp.data[i] = orig - h;
            const double dn = cost(zp, text_embedding);
            zp.data[i] = orig;
            grad_z->data[i] = (up - dn) / (2 * h);
        }
    }
    if (grad_embedding) {
        grad_embedding->assign(text_embedding.size(), 0.0);
        std::vector<double> ep = text_embedding;
        for (size_t i = 0; i < ep.size(); ++i) {
            const double orig = ep[i];
            ep[i] = orig + h;
            const double up = cost(z, ep);
            ep[i] = orig - h;
            const double dn = cost(z, ep);
            ep[i] = orig;
            (*grad_embedding)[i] = (up - dn) / (2 * h);
        }
    }
}

namespace {

struct DefaultForward final : DenoiserBackend::Forward {
    Latent z;
    int t;
    std::vector<double> embedding;
    const ControlMap* control;
};

}  // namespace

std::unique_ptr<DenoiserBackend::Forward> DenoiserBackend::begin_predict(
    const Latent& z, int t, const std::vector<double>& text_embedding, const ControlMap* control,
    Latent* prediction) const {
    auto fwd = std::make_unique<DefaultForward>();
    fwd->z = z;
    fwd->t = t;
    fwd->embedding = text_embedding;
    fwd->control = control;
    if (prediction) *prediction = predict(z, t, text_embedding, control);
    return fwd;
}

void DenoiserBackend::backward(const Forward& fwd, const Latent& upstream, Latent* grad_z,
                               std::vector<double>* grad_embedding) const {
    const auto& df = dynamic_cast<const DefaultForward&>(fwd);
    predict_vjp(df.z, df.t, df.embedding, df.control, upstream, grad_z, grad_embedding);
}

// ---- codecs ----

namespace {

void require_unit_range(const Image& image, const char* where) {
    for (double v : image.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw contract_error(std::string(where) + ": pixel value outside [0,1]");
}

}  // namespace

Latent IdentityCodec::encode(const Image& image) const {
    require_unit_range(image, "IdentityCodec::encode");
    Latent z = image;
    z.timestep_tag = 0;
    return z;
}

Image IdentityCodec::decode(const Latent& z) const { return z; }

Latent IdentityCodec::decode_vjp(const Latent&, const Image& upstream) const { return upstream; }

Latent Pool2Codec::encode(const Image& image) const {
    require_unit_range(image, "Pool2Codec::encode");
    if (image.shape.size() != 3 || image.shape[1] % 2 != 0 || image.shape[2] % 2 != 0)
        throw contract_error("Pool2Codec::encode: image dims must be even");
    const int c = image.shape[0], h = image.shape[1] / 2, w = image.shape[2] / 2;
    Latent z({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                z.at(ch, y, x) = 0.25 * (image.at(ch, 2 * y, 2 * x) + image.at(ch, 2 * y, 2 * x + 1) +
                                         image.at(ch, 2 * y + 1, 2 * x) + image.at(ch, 2 * y + 1, 2 * x + 1));
    z.timestep_tag = 0;
    return z;
}

Image Pool2Codec::decode(const Latent& z) const {
    if (z.shape.size() != 3) throw contract_error("Pool2Codec::decode: latent must be (c,h,w)");
    const int c = z.shape[0], h = z.shape[1], w = z.shape[2];
    Image img({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) img.at(ch, y, x) = z.at(ch, y / 2, x / 2);
    return img;
}

Latent Pool2Codec::decode_vjp(const Latent& z, const Image& upstream) const {
    const int c = z.shape[0], h = z.shape[1], w = z.shape[2];
    if (upstream.shape != std::vector<int>{c, 2 * h, 2 * w})
        throw contract_error("Pool2Codec::decode_vjp: upstream shape mismatch");
    Latent g({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x) g.at(ch, y / 2, x / 2) += upstream.at(ch, y, x);
    return g;
}

std::vector<int> Pool2Codec::latent_shape_for(const std::vector<int>& image_shape) const {
    if (image_shape.size() != 3) throw contract_error("Pool2Codec: image shape must be (c,h,w)");
    return {image_shape[0], image_shape[1] / 2, image_shape[2] / 2};
}

// ---- analytic Gaussian backend ----

AnalyticGaussianBackend::AnalyticGaussianBackend(GaussianWorldSpec spec, NoiseSchedule schedule, int embedding_dim)
    : spec_(std::move(spec)), schedule_(std::move(schedule)), embedding_dim_(embedding_dim) {
    if (!(spec_.variance > 0.0)) throw contract_error("AnalyticGaussianBackend: variance must be positive");
}

Tensor AnalyticGaussianBackend::posterior_mean_at(const Latent& z, double abar, const Tensor& mean, double variance) {
    require_same_shape(z, mean, "posterior_mean_at");
    const double sa = std::sqrt(abar);
    const double gain = sa * variance / (abar * variance + 1.0 - abar);
    // mean + gain*(z - sa*mean)
    return lincomb(gain, z, 1.0 - gain * sa, mean);
}

Tensor AnalyticGaussianBackend::eps_at(const Latent& z, double abar, const Tensor& mean, double variance) {
    require_same_shape(z, mean, "eps_at");
    // (z - sa*m_post)/sqrt(1-abar) in the cancellation-free form
    const double sa = std::sqrt(abar);
    const double s = std::sqrt(1.0 - abar) / (abar * variance + 1.0 - abar);
    return lincomb(s, z, -s * sa, mean);
}

Latent AnalyticGaussianBackend::predict(const Latent& z, int t, const std::vector<double>&, const ControlMap*) const {
    if (t < 1 || t > schedule_.num_steps)
        throw numerical_error("AnalyticGaussianBackend::predict: level " + std::to_string(t) +
                              " outside 1..T (abar=1 is singular)");
    return eps_at(z, schedule_.abar(t), spec_.mean, spec_.variance);
}

void AnalyticGaussianBackend::predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                                          const ControlMap*, const Latent& upstream,
                                          Latent* grad_z, std::vector<double>* grad_embedding) const {
    if (t < 1 || t > schedule_.num_steps)
        throw numerical_error("AnalyticGaussianBackend::predict_vjp: level out of range");
    const double abar = schedule_.abar(t);
    const double s = std::sqrt(1.0 - abar) / (abar * spec_.variance + 1.0 - abar);
    if (grad_z) *grad_z = scaled(upstream, s);
    if (grad_embedding) grad_embedding->assign(text_embedding.size(), 0.0);
}

// ---- gradient checking ----

double check_gradient(const DenoiserBackend& backend, const GradientProbe& probe,
                      GradientInput input_selector, int max_coords, uint64_t seed) {
    if (backend.gradient_mode() == DenoiserBackend::GradientMode::none)
        throw capability_error("check_gradient: backend declares no gradient mechanism");

    Latent grad_z;
    std::vector<double> grad_emb;
    backend.predict_vjp(probe.z, probe.t, probe.embedding, probe.control, probe.cost_weights,
                        input_selector == GradientInput::latent ? &grad_z : nullptr,
                        input_selector == GradientInput::embedding ? &grad_emb : nullptr);

    const size_t dim = input_selector == GradientInput::latent ? probe.z.data.size() : probe.embedding.size();
    std::vector<size_t> coords(dim);
    std::iota(coords.begin(), coords.end(), size_t{0});
    if (static_cast<int>(dim) > max_coords) {
        Rng rng(seed);
        for (size_t i = 0; i < static_cast<size_t>(max_coords); ++i) {
            const size_t j = i + static_cast<size_t>(rng.next_u64() % (dim - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(static_cast<size_t>(max_coords));
    }

    const double h = 1e-4;
    double max_rel = 0.0;
    Latent z = probe.z;
    std::vector<double> emb = probe.embedding;
    auto cost = [&]() { return dot(probe.cost_weights, backend.predict(z, probe.t, emb, probe.control)); };
    for (size_t idx : coords) {
        double* slot = input_selector == GradientInput::latent ? &z.data[idx] : &emb[idx];
        const double orig = *slot;
        *slot = orig + h;
        const double up = cost();
        *slot = orig - h;
        const double dn = cost();
        *slot = orig;
        const double fd = (up - dn) / (2 * h);
        const double an = input_selector == GradientInput::latent ? grad_z.data[idx] : grad_emb[idx];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
    return max_rel;
}

}  // namespace posegen
