#include "gw/tensor.hpp"

#include <cmath>
#include <sstream>

#include "gw/errors.hpp"

namespace gw {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<float> d, bool rg)
    : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0f);
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TensorPtr tensor_zeros(Shape shape, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return std::make_shared<Tensor>(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

TensorPtr tensor_full(Shape shape, float value, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return std::make_shared<Tensor>(std::move(shape), std::vector<float>(n, value), requires_grad);
}

TensorPtr tensor_from(Shape shape, std::vector<float> data, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad);
}

TensorPtr tensor_randn(Shape shape, float stddev, std::mt19937& rng, bool requires_grad) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<float> data(n);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (auto& v : data) v = dist(rng);
  return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad);
}

TensorPtr tensor_clone(const Tensor& t, bool requires_grad) {
  return std::make_shared<Tensor>(t.shape, t.data, requires_grad);
}

}  // namespace gw
