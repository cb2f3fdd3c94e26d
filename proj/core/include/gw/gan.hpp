#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gw/codec.hpp"
#include "gw/nn.hpp"

namespace gw::gan {

// Stride-2 convolution + dropout stack ending in one logit per image.
struct Discriminator {
  nn::Conv2d c0, c1, c2, c3;
  nn::Linear fc;
  float dropout_rate = 0.3f;

  // images: [N,3,H,W] -> logits [N,1]. Dropout masks derive from `seed`.
  TensorPtr forward(Tape* tape, const TensorPtr& images, bool train, std::uint64_t seed) const;
  std::vector<TensorPtr> parameters() const;
};

Discriminator discriminator_init(const codec::CodecConfig& config, std::uint64_t seed);

struct TrainConfig {
  int epochs = 10;
  float learning_rate = 0.0002f;
  int batch_size = 30;
  int log_every = 50;            // batches between report entries
  float lambda_adv = 0.01f;      // adversarial weight
  float alpha_mix = 0.84f;       // MS-SSIM share of the structural term
  std::uint64_t seed = 0;
  int val_count = 8;             // images held out as the fixed validation batch
  int max_steps = 0;             // 0 = run the full epoch schedule

  void validate() const;
};

struct TrainLogPoint {
  int step = 0;
  float loss_d = 0.0f;
  float loss_g = 0.0f;
  double val_ssim = 0.0;
  bool val_psnr_perfect = false;
  double val_psnr_db = 0.0;
};

struct TrainReport {
  std::vector<TrainLogPoint> points;
  double initial_val_ssim = 0.0;
  double final_val_ssim = 0.0;
  int steps_run = 0;
};

// JSON-lines export, one record per log point.
void write_report_jsonl(const TrainReport& report, const std::string& path);

// Binary cross-entropy against label 1 for real logits and 0 for fake,
// averaged over both batches.
TensorPtr discriminator_loss(Tape* tape, const TensorPtr& d_real_logits,
                             const TensorPtr& d_fake_logits);

// lambda_adv * BCE(d_fake, 1) + alpha_mix * (1 - MS-SSIM) + (1-alpha_mix) * L1.
TensorPtr generator_loss(Tape* tape, const TensorPtr& recon, const TensorPtr& target,
                         const TensorPtr& d_fake_logits, float alpha_mix, float lambda_adv);

// Differentiable multi-scale structural similarity on [-1,1] images,
// averaged over batch and channels. Exposed for loss-composition tests.
TensorPtr ms_ssim_graph(Tape* tape, const TensorPtr& a, const TensorPtr& b, int max_scales = 3);

// Stateful training loop: alternating discriminator/generator steps, encoder
// and decoder updated jointly under the generator loss. Holds the dataset by
// value; images must be [3,H,W] in [-1,1].
class Trainer {
 public:
  Trainer(std::vector<Tensor> dataset, const codec::CodecConfig& codec_config,
          const TrainConfig& train_config);

  // Runs `steps` further training steps (one discriminator + one generator
  // update each). Aborts with ValueError on non-finite losses.
  void run(int steps);

  const codec::CodecModel& model() const { return model_; }
  const Discriminator& discriminator() const { return disc_; }
  const TrainReport& report() const { return report_; }
  int steps_done() const { return step_; }
  int train_size() const { return static_cast<int>(train_set_.size()); }
  double validation_ssim();

 private:
  TensorPtr batch_tensor(const std::vector<int>& indices) const;
  void log_point(float loss_d, float loss_g);

  std::vector<Tensor> train_set_, val_set_;
  TrainConfig cfg_;
  codec::CodecModel model_;
  Discriminator disc_;
  nn::AdamState opt_g_, opt_d_;
  std::mt19937 rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  int step_ = 0;
  TrainReport report_;
};

struct TrainResult {
  codec::CodecModel model;
  Discriminator discriminator;
  TrainReport report;
};

// Convenience wrapper: builds a Trainer and runs the configured schedule
// (epochs over the dataset, or max_steps when set).
TrainResult train(std::vector<Tensor> dataset, const codec::CodecConfig& codec_config,
                  const TrainConfig& train_config);

}  // namespace gw::gan
