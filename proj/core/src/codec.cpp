#include "gw/codec.hpp"

#include <cmath>
#include <cstring>

#include "binio.hpp"
#include "gw/errors.hpp"
#include "gw/ops.hpp"

namespace gw::codec {

namespace {

// Hidden widths of the codec stack. The encoder runs a 24-channel residual
// trunk; the decoder narrows as it upsamples to keep full-resolution work
// cheap on CPU.
constexpr int kEncWidth1 = 16;
constexpr int kEncWidth2 = 24;
constexpr int kDecWidth0 = 24;
constexpr int kDecWidth1 = 16;
constexpr int kDecWidth2 = 8;
constexpr int kDownK = 4, kDownStride = 2, kDownPad = 1;

constexpr char kMagic[4] = {'G', 'W', 'M', '1'};
constexpr std::uint16_t kVersion = 1;

int down_extent(int e) { return (e + 2 * kDownPad - kDownK) / kDownStride + 1; }

// Residual-block split across the decoder's three slots (latent resolution,
// after the first upsample, after the second).
void decoder_res_split(int total, int& s1, int& s2, int& s3) {
  s3 = total >= 3 ? 1 : 0;
  s2 = total >= 2 ? 1 : 0;
  s1 = total - s2 - s3;
}

}  // namespace

Shape CodecConfig::latent_shape() const {
  int h = down_extent(down_extent(input_height));
  int w = down_extent(down_extent(input_width));
  for (int i = 0; i < extra_downsample_stages; ++i) {
    h = down_extent(h);
    w = down_extent(w);
  }
  return {latent_channels, h, w};
}

std::int64_t CodecConfig::input_elements() const { return shape_numel(input_shape()); }

std::int64_t CodecConfig::latent_elements() const { return shape_numel(latent_shape()); }

double CodecConfig::ratio_percent() const {
  return compression_ratio_percent(input_shape(), latent_shape());
}

void CodecConfig::validate() const {
  if (input_channels < 1 || input_height < 1 || input_width < 1) {
    throw ValueError("codec config: input extents must be positive");
  }
  if (latent_channels < 1) throw ValueError("codec config: latent_channels must be >= 1");
  if (extra_downsample_stages < 0) {
    throw ValueError("codec config: extra_downsample_stages must be >= 0");
  }
  if (residual_blocks < 1) throw ValueError("codec config: residual_blocks must be >= 1");
  // Every stride-2 stage needs at least a 2-pixel extent going in.
  int h = input_height, w = input_width;
  for (int i = 0; i < 2 + extra_downsample_stages; ++i) {
    if (h < 2 || w < 2) throw ValueError("codec config: latent spatial extent would vanish");
    h = down_extent(h);
    w = down_extent(w);
  }
  if (h < 1 || w < 1) throw ValueError("codec config: latent spatial extent would vanish");
}

double compression_ratio_percent(const Shape& input_shape, const Shape& latent_shape) {
  for (int e : input_shape) {
    if (e <= 0) throw ValueError("compression ratio: input extent must be positive");
  }
  for (int e : latent_shape) {
    if (e <= 0) throw ValueError("compression ratio: latent extent must be positive");
  }
  return 100.0 * static_cast<double>(shape_numel(latent_shape)) /
         static_cast<double>(shape_numel(input_shape));
}

CodecModel codec_init(const CodecConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  CodecModel m;
  m.config = config;

  m.enc_down1 =
      nn::Conv2d::init(config.input_channels, kEncWidth1, kDownK, kDownStride, kDownPad, rng);
  m.enc_down2 = nn::Conv2d::init(kEncWidth1, kEncWidth2, kDownK, kDownStride, kDownPad, rng);
  for (int i = 0; i < config.extra_downsample_stages; ++i) {
    m.enc_extra.push_back(
        nn::Conv2d::init(kEncWidth2, kEncWidth2, kDownK, kDownStride, kDownPad, rng));
  }
  for (int i = 0; i < config.residual_blocks; ++i) {
    m.enc_res.push_back(nn::ResidualBlock::init(kEncWidth2, rng));
  }
  m.enc_proj = nn::Conv2d::init(kEncWidth2, config.latent_channels, 3, 1, 1, rng);

  int s1 = 0, s2 = 0, s3 = 0;
  decoder_res_split(config.residual_blocks, s1, s2, s3);
  m.dec_in = nn::Conv2d::init(config.latent_channels, kDecWidth0, 3, 1, 1, rng);
  for (int i = 0; i < config.extra_downsample_stages; ++i) {
    m.dec_extra.push_back(
        nn::ConvTranspose2d::init(kDecWidth0, kDecWidth0, kDownK, kDownStride, kDownPad, rng));
  }
  for (int i = 0; i < s1; ++i) m.dec_res1.push_back(nn::ResidualBlock::init(kDecWidth0, rng));
  m.dec_up1 = nn::ConvTranspose2d::init(kDecWidth0, kDecWidth1, kDownK, kDownStride, kDownPad, rng);
  for (int i = 0; i < s2; ++i) m.dec_res2.push_back(nn::ResidualBlock::init(kDecWidth1, rng));
  m.dec_up2 = nn::ConvTranspose2d::init(kDecWidth1, kDecWidth2, kDownK, kDownStride, kDownPad, rng);
  for (int i = 0; i < s3; ++i) m.dec_res3.push_back(nn::ResidualBlock::init(kDecWidth2, rng));
  m.dec_out = nn::Conv2d::init(kDecWidth2, config.input_channels, 3, 1, 1, rng);

  m.refresh_model_id();
  return m;
}

std::vector<TensorPtr> CodecModel::encoder_parameters() const {
  std::vector<TensorPtr> p;
  nn::append_params(p, enc_down1);
  nn::append_params(p, enc_down2);
  for (const auto& c : enc_extra) nn::append_params(p, c);
  for (const auto& r : enc_res) nn::append_params(p, r);
  nn::append_params(p, enc_proj);
  return p;
}

std::vector<TensorPtr> CodecModel::decoder_parameters() const {
  std::vector<TensorPtr> p;
  nn::append_params(p, dec_in);
  for (const auto& c : dec_extra) nn::append_params(p, c);
  for (const auto& r : dec_res1) nn::append_params(p, r);
  nn::append_params(p, dec_up1);
  for (const auto& r : dec_res2) nn::append_params(p, r);
  nn::append_params(p, dec_up2);
  for (const auto& r : dec_res3) nn::append_params(p, r);
  nn::append_params(p, dec_out);
  return p;
}

std::vector<TensorPtr> CodecModel::parameters() const {
  auto p = encoder_parameters();
  auto d = decoder_parameters();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::uint64_t compute_model_id(const CodecModel& model) {
  std::vector<std::uint8_t> bytes;
  for (const auto& t : model.decoder_parameters()) {
    for (float v : t->data) put_f32le(bytes, v);
  }
  return fnv1a64(bytes.data(), bytes.size());
}

void CodecModel::refresh_model_id() { model_id = compute_model_id(*this); }

TensorPtr encode_batch(Tape* tape, const CodecModel& model, const TensorPtr& images) {
  auto x = ops::leaky_relu(tape, model.enc_down1.forward(tape, images), nn::kLeakySlope);
  x = ops::leaky_relu(tape, model.enc_down2.forward(tape, x), nn::kLeakySlope);
  for (const auto& c : model.enc_extra) {
    x = ops::leaky_relu(tape, c.forward(tape, x), nn::kLeakySlope);
  }
  for (const auto& r : model.enc_res) x = r.forward(tape, x);
  return model.enc_proj.forward(tape, x);
}

namespace {

// Upsample one stride-2 stage and replicate-pad the trailing row/column when
// the doubled extent undershoots an odd target by one.
TensorPtr upsample_to(Tape* tape, const nn::ConvTranspose2d& up, const TensorPtr& x, int target_h,
                      int target_w, bool activate) {
  auto y = up.forward(tape, x);
  const int h = y->dim(y->rank() - 2), w = y->dim(y->rank() - 1);
  if (target_h - h > 1 || target_w - w > 1 || target_h < h || target_w < w) {
    throw ShapeError("decoder upsample produced " + std::to_string(h) + "x" + std::to_string(w) +
                     ", expected within one of " + std::to_string(target_h) + "x" +
                     std::to_string(target_w));
  }
  y = ops::pad_replicate_end(tape, y, target_h - h, target_w - w);
  if (activate) y = ops::leaky_relu(tape, y, nn::kLeakySlope);
  return y;
}

}  // namespace

TensorPtr decode_batch(Tape* tape, const CodecModel& model, const TensorPtr& latents) {
  const auto& cfg = model.config;
  // Mirror the encoder's per-stage extents, innermost last.
  std::vector<std::pair<int, int>> stage_targets;
  int h = cfg.input_height, w = cfg.input_width;
  stage_targets.emplace_back(h, w);  // after dec_up2
  h = down_extent(h);
  w = down_extent(w);
  stage_targets.emplace_back(h, w);  // after dec_up1
  for (int i = 0; i < cfg.extra_downsample_stages; ++i) {
    h = down_extent(h);
    w = down_extent(w);
    stage_targets.emplace_back(h, w);  // after each extra upsample
  }

  auto x = ops::leaky_relu(tape, model.dec_in.forward(tape, latents), nn::kLeakySlope);
  for (std::size_t i = 0; i < model.dec_extra.size(); ++i) {
    const auto [th, tw] = stage_targets[stage_targets.size() - 1 - i];
    x = upsample_to(tape, model.dec_extra[i], x, th, tw, true);
  }
  for (const auto& r : model.dec_res1) x = r.forward(tape, x);
  x = upsample_to(tape, model.dec_up1, x, stage_targets[1].first, stage_targets[1].second, true);
  for (const auto& r : model.dec_res2) x = r.forward(tape, x);
  x = upsample_to(tape, model.dec_up2, x, stage_targets[0].first, stage_targets[0].second, true);
  for (const auto& r : model.dec_res3) x = r.forward(tape, x);
  return ops::tanh(tape, model.dec_out.forward(tape, x));
}

Latent encode(const CodecModel& model, const Tensor& image) {
  const Shape expected = model.config.input_shape();
  if (image.shape != expected) {
    throw ShapeError("encode: image shape " + shape_str(image.shape) + " does not match config " +
                     shape_str(expected));
  }
  constexpr float kSlack = 1e-6f;
  for (float v : image.data) {
    if (!(v >= -1.0f - kSlack && v <= 1.0f + kSlack)) {
      throw ValueError("encode: pixel value " + std::to_string(v) + " outside [-1, 1]");
    }
  }
  auto latent = encode_batch(nullptr, model, tensor_clone(image));
  return Latent{latent, model.model_id};
}

TensorPtr decode(const CodecModel& model, const Latent& latent) {
  const Shape expected = model.config.latent_shape();
  if (!latent.tensor || latent.tensor->shape != expected) {
    throw ShapeError("decode: latent shape " +
                     (latent.tensor ? shape_str(latent.tensor->shape) : std::string("null")) +
                     " does not match config " + shape_str(expected));
  }
  return decode_batch(nullptr, model, latent.tensor);
}

void save_checkpoint(const CodecModel& model, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u16le(bytes, kVersion);
  const auto& c = model.config;
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_channels));
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_height));
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_width));
  put_u32le(bytes, static_cast<std::uint32_t>(c.latent_channels));
  put_u32le(bytes, static_cast<std::uint32_t>(c.extra_downsample_stages));
  put_u32le(bytes, static_cast<std::uint32_t>(c.residual_blocks));

  const auto params = model.parameters();
  std::uint64_t count = 0;
  for (const auto& t : params) count += static_cast<std::uint64_t>(t->numel());
  put_u64le(bytes, count);
  for (const auto& t : params) {
    for (float v : t->data) put_f32le(bytes, v);
  }
  put_u64le(bytes, compute_model_id(model));

  std::string err;
  if (!write_file_bytes(path, bytes, err)) {
    throw CheckpointError(CheckpointErrorKind::kIo, "save_checkpoint: " + err);
  }
}

CodecModel load_checkpoint(const std::string& path) {
  std::string err;
  const auto bytes = read_file_bytes(path, err);
  if (!err.empty()) throw CheckpointError(CheckpointErrorKind::kIo, "load_checkpoint: " + err);

  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  if (!r.bytes(magic, 4)) {
    throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint shorter than its magic");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a codec checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16le();
  if (r.ok() && version != kVersion) {
    throw CheckpointError(CheckpointErrorKind::kBadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  CodecConfig cfg;
  cfg.input_channels = static_cast<int>(r.u32le());
  cfg.input_height = static_cast<int>(r.u32le());
  cfg.input_width = static_cast<int>(r.u32le());
  cfg.latent_channels = static_cast<int>(r.u32le());
  cfg.extra_downsample_stages = static_cast<int>(r.u32le());
  cfg.residual_blocks = static_cast<int>(r.u32le());
  const std::uint64_t count = r.u64le();
  if (!r.ok()) {
    throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint header truncated");
  }
  try {
    cfg.validate();
  } catch (const ValueError& e) {
    throw CheckpointError(CheckpointErrorKind::kConfigInvalid, e.what());
  }

  CodecModel model = codec_init(cfg, 0);
  const auto params = model.parameters();
  std::uint64_t expected = 0;
  for (const auto& t : params) expected += static_cast<std::uint64_t>(t->numel());
  if (count != expected) {
    throw CheckpointError(CheckpointErrorKind::kCountMismatch,
                          "checkpoint declares " + std::to_string(count) +
                              " parameters, config requires " + std::to_string(expected));
  }
  if (r.remaining() != count * 4 + 8) {
    throw CheckpointError(CheckpointErrorKind::kTruncated,
                          "checkpoint payload is " + std::to_string(r.remaining()) +
                              " bytes, expected " + std::to_string(count * 4 + 8));
  }
  for (const auto& t : params) {
    for (auto& v : t->data) v = r.f32le();
  }
  const std::uint64_t stored_hash = r.u64le();
  model.refresh_model_id();
  if (stored_hash != model.model_id) {
    throw CheckpointError(CheckpointErrorKind::kHashMismatch,
                          "decoder content hash mismatch (corrupt checkpoint)");
  }
  return model;
}

}  // namespace gw::codec
