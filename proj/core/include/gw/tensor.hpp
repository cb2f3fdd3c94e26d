#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gw {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 tensor. Gradient storage lives next to the data so
// a backward pass can accumulate into any tensor that took part in it.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // empty until ensure_grad() or a backward pass

  Tensor() = default;
  Tensor(Shape s, std::vector<float> d, bool rg = false);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr tensor_zeros(Shape shape, bool requires_grad = false);
TensorPtr tensor_full(Shape shape, float value, bool requires_grad = false);
TensorPtr tensor_from(Shape shape, std::vector<float> data, bool requires_grad = false);
// Zero-mean normal init, the convention used for every network here.
TensorPtr tensor_randn(Shape shape, float stddev, std::mt19937& rng, bool requires_grad = false);
TensorPtr tensor_clone(const Tensor& t, bool requires_grad = false);

}  // namespace gw
