#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gw/nn.hpp"
#include "gw/tensor.hpp"

namespace gw::codec {

// Two stride-2 downsampling convolutions take 3x210x150 to 52x37; each extra
// stage halves the latent spatial extents again. The compression ratio is
// fully determined by this configuration.
struct CodecConfig {
  int input_channels = 3;
  int input_height = 210;
  int input_width = 150;
  int latent_channels = 8;
  int extra_downsample_stages = 0;
  int residual_blocks = 3;

  Shape input_shape() const { return {input_channels, input_height, input_width}; }
  Shape latent_shape() const;
  std::int64_t input_elements() const;
  std::int64_t latent_elements() const;
  double ratio_percent() const;
  void validate() const;
  bool operator==(const CodecConfig&) const = default;
};

// 100 * latent elements / input elements.
double compression_ratio_percent(const Shape& input_shape, const Shape& latent_shape);

struct CodecModel {
  CodecConfig config;

  // Encoder: two stride-2 convolutions, extra stages, residual trunk, and a
  // projection to the latent channel count.
  nn::Conv2d enc_down1, enc_down2;
  std::vector<nn::Conv2d> enc_extra;
  std::vector<nn::ResidualBlock> enc_res;
  nn::Conv2d enc_proj;

  // Decoder: channel expansion, extra upsamples, then residual blocks crossed
  // with the two upsampling stages, and a Tanh output layer.
  nn::Conv2d dec_in;
  std::vector<nn::ConvTranspose2d> dec_extra;
  std::vector<nn::ResidualBlock> dec_res1;
  nn::ConvTranspose2d dec_up1;
  std::vector<nn::ResidualBlock> dec_res2;
  nn::ConvTranspose2d dec_up2;
  std::vector<nn::ResidualBlock> dec_res3;
  nn::Conv2d dec_out;

  std::uint64_t model_id = 0;  // content hash of the decoder parameters

  std::vector<TensorPtr> parameters() const;
  std::vector<TensorPtr> encoder_parameters() const;
  std::vector<TensorPtr> decoder_parameters() const;
  void refresh_model_id();
};

CodecModel codec_init(const CodecConfig& config, std::uint64_t seed);

struct Latent {
  TensorPtr tensor;  // [C_c, H_c, W_c]
  std::uint64_t model_id = 0;
};

// Batched forward paths used by training; inputs are [N,C,H,W].
TensorPtr encode_batch(Tape* tape, const CodecModel& model, const TensorPtr& images);
TensorPtr decode_batch(Tape* tape, const CodecModel& model, const TensorPtr& latents);

// Single-image entry points with full validation. `image` must match the
// configured input shape with values in [-1, 1].
Latent encode(const CodecModel& model, const Tensor& image);
// The latent's model_id intentionally need not match `model`; decoding with a
// foreign decoder is a measured property, not an error.
TensorPtr decode(const CodecModel& model, const Latent& latent);

std::uint64_t compute_model_id(const CodecModel& model);

enum class CheckpointErrorKind {
  kIo,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kConfigInvalid,
  kCountMismatch,
  kHashMismatch,
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// File layout: magic "GWM1", u16 version, config block of u32 extents,
// u64 parameter count, raw little-endian f32 parameters in declaration order,
// u64 decoder content hash. Round trips bitwise.
void save_checkpoint(const CodecModel& model, const std::string& path);
CodecModel load_checkpoint(const std::string& path);

}  // namespace gw::codec
