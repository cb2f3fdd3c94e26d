#include "gw/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gw/errors.hpp"
#include "gw/metrics.hpp"
#include "gw/ops.hpp"

namespace gw::gan {

namespace {

constexpr int kDiscW0 = 12, kDiscW1 = 24, kDiscW2 = 48, kDiscW3 = 64;

int half_extent(int e) { return (e - 2) / 2 + 1; }  // k=4, stride=2, pad=1

std::vector<float> gaussian_window_f(int window, double sigma) {
  std::vector<float> g(static_cast<std::size_t>(window));
  const double mid = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - mid;
    const double v = std::exp(-(d * d) / (2.0 * sigma * sigma));
    g[static_cast<std::size_t>(i)] = static_cast<float>(v);
    total += v;
  }
  for (auto& x : g) x = static_cast<float>(x / total);
  return g;
}

// Canonical five-scale weights; the first `m` are renormalized when fewer
// scales fit the input.
std::vector<float> scale_weights(int m) {
  static const double raw[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double total = 0.0;
  for (int i = 0; i < m; ++i) total += raw[i];
  std::vector<float> w(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) w[static_cast<std::size_t>(i)] = static_cast<float>(raw[i] / total);
  return w;
}

}  // namespace

Discriminator discriminator_init(const codec::CodecConfig& config, std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  Discriminator d;
  d.c0 = nn::Conv2d::init(config.input_channels, kDiscW0, 4, 2, 1, rng);
  d.c1 = nn::Conv2d::init(kDiscW0, kDiscW1, 4, 2, 1, rng);
  d.c2 = nn::Conv2d::init(kDiscW1, kDiscW2, 4, 2, 1, rng);
  d.c3 = nn::Conv2d::init(kDiscW2, kDiscW3, 4, 2, 1, rng);
  int h = config.input_height, w = config.input_width;
  for (int i = 0; i < 4; ++i) {
    h = half_extent(h);
    w = half_extent(w);
  }
  d.fc = nn::Linear::init(kDiscW3 * h * w, 1, rng);
  return d;
}

TensorPtr Discriminator::forward(Tape* tape, const TensorPtr& images, bool train,
                                 std::uint64_t seed) const {
  const auto mode = train ? ops::DropoutMode::kTrain : ops::DropoutMode::kEval;
  auto x = ops::leaky_relu(tape, c0.forward(tape, images), nn::kLeakySlope);
  x = ops::dropout(tape, x, dropout_rate, mode, seed * 4 + 0);
  x = ops::leaky_relu(tape, c1.forward(tape, x), nn::kLeakySlope);
  x = ops::dropout(tape, x, dropout_rate, mode, seed * 4 + 1);
  x = ops::leaky_relu(tape, c2.forward(tape, x), nn::kLeakySlope);
  x = ops::dropout(tape, x, dropout_rate, mode, seed * 4 + 2);
  x = ops::leaky_relu(tape, c3.forward(tape, x), nn::kLeakySlope);
  const int n = x->rank() == 4 ? x->dim(0) : 1;
  x = ops::reshape(tape, x, {n, static_cast<int>(x->numel() / n)});
  return fc.forward(tape, x);
}

std::vector<TensorPtr> Discriminator::parameters() const {
  std::vector<TensorPtr> p;
  nn::append_params(p, c0);
  nn::append_params(p, c1);
  nn::append_params(p, c2);
  nn::append_params(p, c3);
  nn::append_params(p, fc);
  return p;
}

void TrainConfig::validate() const {
  if (epochs < 1 && max_steps < 1) throw ValueError("train config: no steps to run");
  if (learning_rate <= 0.0f) throw ValueError("train config: learning_rate must be positive");
  if (batch_size < 1) throw ValueError("train config: batch_size must be positive");
  if (log_every < 1) throw ValueError("train config: log_every must be positive");
  if (lambda_adv < 0.0f) throw ValueError("train config: lambda_adv must be >= 0");
  if (!(alpha_mix >= 0.0f && alpha_mix <= 1.0f)) {
    throw ValueError("train config: alpha_mix must be in [0, 1]");
  }
  if (val_count < 1) throw ValueError("train config: val_count must be >= 1");
}

TensorPtr discriminator_loss(Tape* tape, const TensorPtr& d_real_logits,
                             const TensorPtr& d_fake_logits) {
  if (d_real_logits->numel() == 0 || d_fake_logits->numel() == 0) {
    throw ValueError("discriminator_loss: empty batch");
  }
  if (d_real_logits->numel() != d_fake_logits->numel()) {
    throw ShapeError("discriminator_loss: real batch " + std::to_string(d_real_logits->numel()) +
                     " vs fake batch " + std::to_string(d_fake_logits->numel()));
  }
  auto real_term = ops::bce_with_logits_mean(tape, d_real_logits, 1.0f);
  auto fake_term = ops::bce_with_logits_mean(tape, d_fake_logits, 0.0f);
  return ops::affine(tape, ops::add(tape, real_term, fake_term), 0.5f, 0.0f);
}

TensorPtr ms_ssim_graph(Tape* tape, const TensorPtr& a, const TensorPtr& b, int max_scales) {
  if (a->shape != b->shape) {
    throw ShapeError("ms_ssim_graph: shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
  constexpr int kWindow = 11;
  constexpr float kRange = 2.0f;  // images live in [-1, 1]
  const float c1v = (0.01f * kRange) * (0.01f * kRange);
  const float c2v = (0.03f * kRange) * (0.03f * kRange);
  const auto window = gaussian_window_f(kWindow, 1.5);

  int h = a->dim(a->rank() - 2), w = a->dim(a->rank() - 1);
  int supported = 0;
  while (h >= kWindow && w >= kWindow && supported < max_scales) {
    ++supported;
    h /= 2;
    w /= 2;
  }
  if (supported < 1) {
    throw ShapeError("ms_ssim_graph: input smaller than the similarity window");
  }
  const auto weights = scale_weights(supported);

  TensorPtr value;
  TensorPtr xa = a, xb = b;
  for (int j = 0; j < supported; ++j) {
    auto mu_a = ops::gaussian_blur(tape, xa, window);
    auto mu_b = ops::gaussian_blur(tape, xb, window);
    auto e_aa = ops::gaussian_blur(tape, ops::mul(tape, xa, xa), window);
    auto e_bb = ops::gaussian_blur(tape, ops::mul(tape, xb, xb), window);
    auto e_ab = ops::gaussian_blur(tape, ops::mul(tape, xa, xb), window);
    auto var_a = ops::sub(tape, e_aa, ops::mul(tape, mu_a, mu_a));
    auto var_b = ops::sub(tape, e_bb, ops::mul(tape, mu_b, mu_b));
    auto cov = ops::sub(tape, e_ab, ops::mul(tape, mu_a, mu_b));
    auto cs = ops::div(tape, ops::affine(tape, cov, 2.0f, c2v),
                       ops::affine(tape, ops::add(tape, var_a, var_b), 1.0f, c2v));
    const float wj = weights[static_cast<std::size_t>(j)];
    TensorPtr term;
    if (j + 1 < supported) {
      term = ops::mean(tape, cs);
      xa = ops::avg_pool2(tape, xa);
      xb = ops::avg_pool2(tape, xb);
    } else {
      // Luminance joins only at the coarsest scale.
      auto lum = ops::div(
          tape, ops::affine(tape, ops::mul(tape, mu_a, mu_b), 2.0f, c1v),
          ops::affine(tape,
                      ops::add(tape, ops::mul(tape, mu_a, mu_a), ops::mul(tape, mu_b, mu_b)),
                      1.0f, c1v));
      term = ops::mean(tape, ops::mul(tape, lum, cs));
    }
    if (wj != 1.0f) {
      term = ops::pow_const(tape, ops::clamp_min(tape, term, 1e-4f), wj);
    }
    value = value ? ops::mul(tape, value, term) : term;
  }
  return value;
}

TensorPtr generator_loss(Tape* tape, const TensorPtr& recon, const TensorPtr& target,
                         const TensorPtr& d_fake_logits, float alpha_mix, float lambda_adv) {
  if (recon->shape != target->shape) {
    throw ShapeError("generator_loss: recon shape " + shape_str(recon->shape) +
                     " vs target " + shape_str(target->shape));
  }
  auto adv = ops::bce_with_logits_mean(tape, d_fake_logits, 1.0f);
  auto structural = ops::affine(tape, ms_ssim_graph(tape, recon, target), -1.0f, 1.0f);
  auto l1 = ops::mean(tape, ops::abs(tape, ops::sub(tape, recon, target)));
  auto loss = ops::affine(tape, adv, lambda_adv, 0.0f);
  loss = ops::add(tape, loss, ops::affine(tape, structural, alpha_mix, 0.0f));
  loss = ops::add(tape, loss, ops::affine(tape, l1, 1.0f - alpha_mix, 0.0f));
  return loss;
}

Trainer::Trainer(std::vector<Tensor> dataset, const codec::CodecConfig& codec_config,
                 const TrainConfig& train_config)
    : cfg_(train_config), rng_(static_cast<std::mt19937::result_type>(train_config.seed)) {
  cfg_.validate();
  codec_config.validate();
  if (dataset.empty()) throw ValueError("train: dataset is empty");
  if (static_cast<int>(dataset.size()) <= cfg_.val_count) {
    throw ValueError("train: dataset of " + std::to_string(dataset.size()) +
                     " images cannot hold out " + std::to_string(cfg_.val_count) +
                     " for validation");
  }
  const Shape expected = codec_config.input_shape();
  for (const auto& img : dataset) {
    if (img.shape != expected) {
      throw ShapeError("train: image shape " + shape_str(img.shape) + " does not match config " +
                       shape_str(expected));
    }
  }
  const std::size_t n_train = dataset.size() - static_cast<std::size_t>(cfg_.val_count);
  val_set_.assign(dataset.begin() + static_cast<std::ptrdiff_t>(n_train), dataset.end());
  dataset.resize(n_train);
  train_set_ = std::move(dataset);

  model_ = codec::codec_init(codec_config, cfg_.seed);
  disc_ = discriminator_init(codec_config, cfg_.seed + 1);

  order_.resize(train_set_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  std::shuffle(order_.begin(), order_.end(), rng_);

  report_.initial_val_ssim = validation_ssim();
}

TensorPtr Trainer::batch_tensor(const std::vector<int>& indices) const {
  const Shape& s = train_set_.front().shape;
  const int bi = static_cast<int>(indices.size());
  auto out = tensor_zeros({bi, s[0], s[1], s[2]});
  const std::size_t plane = train_set_.front().data.size();
  for (int i = 0; i < bi; ++i) {
    std::copy(train_set_[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])].data.begin(),
              train_set_[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])].data.end(),
              out->data.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(i)));
  }
  return out;
}

double Trainer::validation_ssim() {
  double acc = 0.0;
  for (const auto& img : val_set_) {
    auto latent = codec::encode_batch(nullptr, model_, tensor_clone(img));
    auto recon = codec::decode_batch(nullptr, model_, latent);
    Tensor ref = img, out = *recon;
    for (auto& v : ref.data) v = (v + 1.0f) * 127.5f;
    for (auto& v : out.data) v = (v + 1.0f) * 127.5f;
    acc += metrics::ssim(ref, out);
  }
  return acc / static_cast<double>(val_set_.size());
}

void Trainer::log_point(float loss_d, float loss_g) {
  TrainLogPoint p;
  p.step = step_;
  p.loss_d = loss_d;
  p.loss_g = loss_g;
  p.val_ssim = validation_ssim();
  double psnr_acc = 0.0;
  int psnr_n = 0;
  for (const auto& img : val_set_) {
    auto latent = codec::encode_batch(nullptr, model_, tensor_clone(img));
    auto recon = codec::decode_batch(nullptr, model_, latent);
    Tensor ref = img, out = *recon;
    for (auto& v : ref.data) v = (v + 1.0f) * 127.5f;
    for (auto& v : out.data) v = (v + 1.0f) * 127.5f;
    const auto r = metrics::psnr(ref, out, 255.0);
    if (!r.perfect_match) {
      psnr_acc += r.db;
      ++psnr_n;
    }
  }
  p.val_psnr_perfect = psnr_n == 0;
  p.val_psnr_db = psnr_n > 0 ? psnr_acc / psnr_n : 0.0;
  report_.points.push_back(p);
}

void Trainer::run(int steps) {
  const int batch = std::min<int>(cfg_.batch_size, static_cast<int>(train_set_.size()));
  auto g_params = model_.parameters();
  auto d_params = disc_.parameters();

  for (int s = 0; s < steps; ++s) {
    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      if (cursor_ >= order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      indices.push_back(order_[cursor_++]);
    }
    auto real = batch_tensor(indices);

    // Discriminator step on detached reconstructions.
    nn::zero_grads(d_params);
    Tape tape_d;
    auto fake = codec::decode_batch(nullptr, model_,
                                    codec::encode_batch(nullptr, model_, real));
    auto d_real = disc_.forward(&tape_d, real, true, rng_());
    auto d_fake = disc_.forward(&tape_d, fake, true, rng_());
    auto loss_d = discriminator_loss(&tape_d, d_real, d_fake);
    if (!std::isfinite(loss_d->data[0])) {
      throw ValueError("train: discriminator loss diverged at step " + std::to_string(step_ + 1) +
                       " (value " + std::to_string(loss_d->data[0]) + ")");
    }
    tape_d.backward(loss_d);
    nn::adam_step(d_params, opt_d_, cfg_.learning_rate);

    // Generator step: encoder and decoder update jointly.
    nn::zero_grads(g_params);
    nn::zero_grads(d_params);
    Tape tape_g;
    auto latent = codec::encode_batch(&tape_g, model_, real);
    auto recon = codec::decode_batch(&tape_g, model_, latent);
    auto d_fake2 = disc_.forward(&tape_g, recon, true, rng_());
    auto loss_g = generator_loss(&tape_g, recon, real, d_fake2, cfg_.alpha_mix, cfg_.lambda_adv);
    if (!std::isfinite(loss_g->data[0])) {
      throw ValueError("train: generator loss diverged at step " + std::to_string(step_ + 1) +
                       " (value " + std::to_string(loss_g->data[0]) + ")");
    }
    tape_g.backward(loss_g);
    nn::adam_step(g_params, opt_g_, cfg_.learning_rate);

    ++step_;
    if (step_ % cfg_.log_every == 0) log_point(loss_d->data[0], loss_g->data[0]);
  }
  report_.steps_run = step_;
  report_.final_val_ssim = validation_ssim();
}

TrainResult train(std::vector<Tensor> dataset, const codec::CodecConfig& codec_config,
                  const TrainConfig& train_config) {
  Trainer trainer(std::move(dataset), codec_config, train_config);
  int steps = train_config.max_steps;
  if (steps <= 0) {
    const int per_epoch = std::max(1, trainer.train_size() / train_config.batch_size);
    steps = train_config.epochs * per_epoch;
  }
  trainer.run(steps);
  return TrainResult{trainer.model(), trainer.discriminator(), trainer.report()};
}

void write_report_jsonl(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_report_jsonl: cannot open " + path);
  for (const auto& p : report.points) {
    nlohmann::json j;
    j["step"] = p.step;
    j["loss_d"] = p.loss_d;
    j["loss_g"] = p.loss_g;
    j["val_ssim"] = p.val_ssim;
    if (p.val_psnr_perfect) {
      j["val_psnr_db"] = nullptr;
    } else {
      j["val_psnr_db"] = p.val_psnr_db;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace gw::gan
