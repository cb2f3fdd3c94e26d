#include "gw/tape.hpp"

#include "gw/errors.hpp"

namespace gw {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv2d_transpose";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kDropout: return "dropout";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kAffine: return "affine";
    case OpKind::kAbs: return "abs";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kPowConst: return "pow_const";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kReshape: return "reshape";
    case OpKind::kLinear: return "linear";
    case OpKind::kGaussianBlur: return "gaussian_blur";
    case OpKind::kAvgPool2: return "avg_pool2";
    case OpKind::kPadReplicateEnd: return "pad_replicate_end";
    case OpKind::kAnchorRows: return "anchor_rows";
    case OpKind::kCropResize: return "crop_resize";
    case OpKind::kBceWithLogits: return "bce_with_logits";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kSmoothL1: return "smooth_l1";
    case OpKind::kSmoothL1Indexed: return "smooth_l1_indexed";
  }
  return "unknown";
}

void Tape::record(OpKind kind, std::vector<TensorPtr> inputs, TensorPtr output,
                  std::function<void()> backward) {
  // Recorded outputs are differentiable intermediates; ops consult this flag
  // to skip input-gradient work below non-differentiable leaves.
  output->requires_grad = true;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss) throw ValueError("backward: null loss tensor");
  if (loss->numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
  }
  loss->ensure_grad();
  loss->grad[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    // Nodes whose output never received a gradient do not feed the loss.
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

}  // namespace gw
