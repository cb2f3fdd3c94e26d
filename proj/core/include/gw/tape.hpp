#pragma once

#include <functional>
#include <vector>

#include "gw/tensor.hpp"

namespace gw {

enum class OpKind {
  kConv2d,
  kConvTranspose2d,
  kLeakyRelu,
  kTanh,
  kDropout,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAffine,
  kAbs,
  kClampMin,
  kPowConst,
  kMean,
  kSum,
  kReshape,
  kLinear,
  kGaussianBlur,
  kAvgPool2,
  kPadReplicateEnd,
  kAnchorRows,
  kCropResize,
  kBceWithLogits,
  kSoftmaxCrossEntropy,
  kSmoothL1,
  kSmoothL1Indexed,
};

const char* op_kind_name(OpKind kind);

// Reverse-mode record of one forward computation. Nodes are appended in
// execution order, so the record is topologically sorted by construction;
// backward() replays it in reverse. A tape and its tensors belong to one
// worker at a time.
class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    std::function<void()> backward;  // reads output->grad, accumulates into inputs
  };

  void record(OpKind kind, std::vector<TensorPtr> inputs, TensorPtr output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor the
  // loss depends on. Rejects non-scalar losses.
  void backward(const TensorPtr& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace gw
