#ifndef POSEGEN_TOY_DENOISER_HPP
#define POSEGEN_TOY_DENOISER_HPP

#include <memory>
#include <string>
#include <vector>

#include "posegen/backends.hpp"

namespace posegen {

// Small feed-forward noise predictor over flattened latents: two tanh hidden
// layers fed with [z; control; time-features], additive text-embedding
// conditioning on the first layer, and a learned scalar skip gate on z.
// All four denoiser inputs (z, t, c, control) are exercised.
struct ToyDenoiserArch {
    std::vector<int> latent_shape{3, 24, 24};
    int embedding_dim = 32;
    int hidden = 64;
    int time_features = 16;  // sin/cos pairs on t/T
};

struct TrainingExample {
    Image image;                    // clean latent-space target (identity codec)
    std::vector<double> embedding;  // scene prompt embedding
    ControlMap control;
};

struct ToyTrainingConfig {
    int steps = 4000;
    int batch = 8;
    double lr = 2e-3;
    double cfg_dropout = 0.1;  // probability of training the empty embedding
    uint64_t seed = 1;
    int epochs = 10;  // loss-reporting windows over the step budget
};

class ToyDenoiser final : public DenoiserBackend {
  public:
    ToyDenoiser(ToyDenoiserArch arch, NoiseSchedule schedule, uint64_t init_seed);

    Latent predict(const Latent& z, int t, const std::vector<double>& text_embedding,
                   const ControlMap* control) const override;
    std::vector<int> latent_shape() const override { return arch_.latent_shape; }
    int embedding_dim() const override { return arch_.embedding_dim; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    GradientMode gradient_mode() const override { return GradientMode::native; }
    void predict_vjp(const Latent& z, int t, const std::vector<double>& text_embedding,
                     const ControlMap* control, const Latent& upstream,
                     Latent* grad_z, std::vector<double>* grad_embedding) const override;
    std::unique_ptr<Forward> begin_predict(const Latent& z, int t,
                                           const std::vector<double>& text_embedding,
                                           const ControlMap* control, Latent* prediction) const override;
    void backward(const Forward& fwd, const Latent& upstream, Latent* grad_z,
                  std::vector<double>* grad_embedding) const override;

    const ToyDenoiserArch& arch() const { return arch_; }
    const std::vector<double>& parameters() const { return params_; }
    std::vector<double>& parameters() { return params_; }

    // prediction plus parameter-gradient accumulation for the trainer;
    // returns the squared error against target divided by the latent size
    double train_step_loss(const Latent& z, int t, const std::vector<double>& embedding,
                           const ControlMap* control, const Latent& target_eps,
                           std::vector<double>* param_grad) const;

    void save_checkpoint(const std::string& path) const;
    static std::unique_ptr<ToyDenoiser> load_checkpoint(const std::string& path);

    struct Cache;

  private:
    Latent forward(const Latent& z, int t, const std::vector<double>& embedding,
                   const ControlMap* control, Cache* cache) const;
    void backward(const Cache& cache, const Latent& upstream, Latent* grad_z,
                  std::vector<double>* grad_embedding, std::vector<double>* param_grad) const;
    std::vector<double> time_features(int t) const;

    ToyDenoiserArch arch_;
    NoiseSchedule schedule_;
    std::vector<double> params_;

    // parameter block offsets
    size_t o_w1_, o_b1_, o_p_, o_w2_, o_b2_, o_w3_, o_b3_, o_wg_, o_bg_;
    int in_dim_, z_dim_;
};

struct ToyTrainResult {
    std::unique_ptr<ToyDenoiser> backend;
    std::vector<double> epoch_losses;
};

// Trains a ToyDenoiser on (image, embedding, control) triples under the given
// schedule. Deterministic for a fixed config seed.
ToyTrainResult train_toy_denoiser(const std::vector<TrainingExample>& dataset,
                                  const NoiseSchedule& schedule, const ToyTrainingConfig& config,
                                  ToyDenoiserArch arch = {});

}  // namespace posegen

#endif
