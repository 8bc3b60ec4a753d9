#ifndef POSEGEN_BACKENDS_HPP
#define POSEGEN_BACKENDS_HPP

#include <memory>
#include <string>
#include <vector>

#include "posegen/diffusion.hpp"
#include "posegen/schedule.hpp"
#include "posegen/tensor.hpp"

namespace posegen {

// Rasterized skeleton conditioning the denoiser; (3,h,w) at latent
// resolution, values in [0,1].
using ControlMap = Tensor;
using Image = Tensor;

// Deterministic opaque embedding of a prompt string: seeded unit-variance
// Gaussian; "" maps to the zero vector. Shared by backends and dataset
// generators so the same prompt always means the same vector.
std::vector<double> hash_prompt_embedding(const std::string& prompt, int dim);

// Noise predictor abstraction. `t` is a sampler level in 1..T of the
// backend's schedule. Control conditioning is part of the composed
// prediction; passing nullptr means "no spatial condition".
struct DenoiserBackend {
    enum class GradientMode { none, native, finite_difference };

    virtual ~DenoiserBackend() = default;

    virtual Latent predict(const Latent& z, int t, const std::vector<double>& text_embedding,
                           const ControlMap* control) const = 0;

    virtual std::vector<int> latent_shape() const = 0;
    virtual int embedding_dim() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;

    virtual GradientMode gradient_mode() const { return GradientMode::none; }

    // Gradients of dot(upstream, predict(...)) with respect to z and the text
    // embedding. Either output may be null. Backends with
    // GradientMode::finite_difference inherit the central-difference
    // fallback; GradientMode::none throws.
    virtual void predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                             const ControlMap* control, const Latent& upstream,
                             Latent* grad_z, std::vector<double>* grad_embedding) const;

    // Two-phase variant for optimization loops where the upstream gradient
    // depends on the prediction itself: begin_predict returns the prediction
    // plus an opaque cache that backward() consumes. The default re-runs the
    // forward pass inside predict_vjp; backends can override to reuse it.
    struct Forward {
        virtual ~Forward() = default;
    };
    virtual std::unique_ptr<Forward> begin_predict(const Latent& z, int t,
                                                   const std::vector<double>& text_embedding,
                                                   const ControlMap* control, Latent* prediction) const;
    virtual void backward(const Forward& fwd, const Latent& upstream, Latent* grad_z,
                          std::vector<double>* grad_embedding) const;

    // Canonical empty-prompt embedding.
    virtual std::vector<double> empty_embedding() const {
        return std::vector<double>(static_cast<size_t>(embedding_dim()), 0.0);
    }

    // Deterministic opaque embedding of a prompt string. "" maps to the
    // empty embedding.
    virtual std::vector<double> embed_text(const std::string& prompt) const;
};

struct AutoencoderBackend {
    virtual ~AutoencoderBackend() = default;
    virtual Latent encode(const Image& image) const = 0;
    virtual Image decode(const Latent& z) const = 0;
    // grad of dot(upstream, decode(z)) with respect to z
    virtual Latent decode_vjp(const Latent& z, const Image& upstream) const = 0;
    virtual std::vector<int> latent_shape_for(const std::vector<int>& image_shape) const = 0;
    virtual double reconstruction_tolerance() const = 0;
};

// Identity autoencoder: latent == image tensor. The default toy codec.
struct IdentityCodec final : AutoencoderBackend {
    Latent encode(const Image& image) const override;
    Image decode(const Latent& z) const override;
    Latent decode_vjp(const Latent& z, const Image& upstream) const override;
    std::vector<int> latent_shape_for(const std::vector<int>& image_shape) const override { return image_shape; }
    double reconstruction_tolerance() const override { return 0.0; }
};

// 2x average-pool encoder with nearest-neighbor decoder.
struct Pool2Codec final : AutoencoderBackend {
    Latent encode(const Image& image) const override;
    Image decode(const Latent& z) const override;
    Latent decode_vjp(const Latent& z, const Image& upstream) const override;
    std::vector<int> latent_shape_for(const std::vector<int>& image_shape) const override;
    double reconstruction_tolerance() const override { return 1.0; }
};

// Isotropic Gaussian world used by the closed-form backend.
struct GaussianWorldSpec {
    Tensor mean;
    double variance = 1.0;
};

// Closed-form optimal noise predictor for x0 ~ N(mean, variance*I); ignores
// text and control inputs. Linear in z, so gradients are exact.
struct AnalyticGaussianBackend final : DenoiserBackend {
    AnalyticGaussianBackend(GaussianWorldSpec spec, NoiseSchedule schedule, int embedding_dim = 8);

    Latent predict(const Latent& z, int t, const std::vector<double>& text_embedding,
                   const ControlMap* control) const override;
    std::vector<int> latent_shape() const override { return spec_.mean.shape; }
    int embedding_dim() const override { return embedding_dim_; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    GradientMode gradient_mode() const override { return GradientMode::native; }
    void predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                     const ControlMap* control, const Latent& upstream,
                     Latent* grad_z, std::vector<double>* grad_embedding) const override;

    // E[x0 | z] at noise level abar; the Tweedie oracle.
    static Tensor posterior_mean_at(const Latent& z, double abar, const Tensor& mean, double variance);
    // Optimal epsilon prediction at noise level abar.
    static Tensor eps_at(const Latent& z, double abar, const Tensor& mean, double variance);

    const GaussianWorldSpec& world() const { return spec_; }

  private:
    GaussianWorldSpec spec_;
    NoiseSchedule schedule_;
    int embedding_dim_;
};

// Trivial stub predicting zero noise; handy for degenerate-path tests.
struct ZeroDenoiser final : DenoiserBackend {
    ZeroDenoiser(std::vector<int> latent_shape, NoiseSchedule schedule, int embedding_dim = 8)
        : shape_(std::move(latent_shape)), schedule_(std::move(schedule)), embedding_dim_(embedding_dim) {}
    Latent predict(const Latent& z, int, const std::vector<double>&, const ControlMap*) const override {
        return Tensor(shape_);
    }
    std::vector<int> latent_shape() const override { return shape_; }
    int embedding_dim() const override { return embedding_dim_; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    GradientMode gradient_mode() const override { return GradientMode::native; }
    void predict_vjp(const Latent&, int, const std::vector<double>&, const ControlMap*, const Latent&,
                     Latent* grad_z, std::vector<double>* grad_embedding) const override {
        if (grad_z) *grad_z = Tensor(shape_);
        if (grad_embedding) grad_embedding->assign(static_cast<size_t>(embedding_dim_), 0.0);
    }

  private:
    std::vector<int> shape_;
    NoiseSchedule schedule_;
    int embedding_dim_;
};

// Scalar probe for gradient checking: cost = dot(cost_weights, predict(...)).
struct GradientProbe {
    Latent z;
    int t = 1;
    std::vector<double> embedding;
    const ControlMap* control = nullptr;
    Tensor cost_weights;
};

enum class GradientInput { latent, embedding };

// Compares backend gradients of the probe cost against central finite
// differences (step 1e-4) on up to max_coords probed coordinates; returns the
// maximum relative error.
double check_gradient(const DenoiserBackend& backend, const GradientProbe& probe,
                      GradientInput input_selector, int max_coords = 48, uint64_t seed = 7);

}  // namespace posegen

#endif
