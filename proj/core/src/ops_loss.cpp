#include <cmath>

#include "gw/errors.hpp"
#include "gw/ops.hpp"

namespace gw::ops {

namespace {

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// max(x,0) - x*t + log(1 + exp(-|x|))
float bce_logit(float x, float t) {
  return std::max(x, 0.0f) - x * t + std::log1p(std::exp(-std::fabs(x)));
}

float smooth_l1(float d, bool pure_l1) {
  const float a = std::fabs(d);
  if (pure_l1) return a;
  return a < 1.0f ? 0.5f * d * d : a - 0.5f;
}

float smooth_l1_grad(float d, bool pure_l1) {
  if (pure_l1 || std::fabs(d) >= 1.0f) return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
  return d;
}

}  // namespace

TensorPtr bce_with_logits_sum(Tape* tape, const TensorPtr& logits,
                              const std::vector<float>& targets,
                              const std::vector<float>& weights) {
  const auto n = logits->data.size();
  if (targets.size() != n || weights.size() != n) {
    throw ShapeError("bce_with_logits_sum: logits/targets/weights length mismatch: " +
                     std::to_string(n) + "/" + std::to_string(targets.size()) + "/" +
                     std::to_string(weights.size()));
  }
  if (n == 0) throw ValueError("bce_with_logits_sum: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += weights[i] * bce_logit(logits->data[i], targets[i]);
  auto out = tensor_from({1}, {static_cast<float>(acc)});
  if (tape) {
    auto t = std::make_shared<std::vector<float>>(targets);
    auto w = std::make_shared<std::vector<float>>(weights);
    tape->record(OpKind::kBceWithLogits, {logits}, out, [logits, out, t, w] {
      logits->ensure_grad();
      const float g = out->grad[0];
      for (std::size_t i = 0; i < logits->data.size(); ++i) {
        logits->grad[i] += g * (*w)[i] * (sigmoidf(logits->data[i]) - (*t)[i]);
      }
    });
  }
  return out;
}

TensorPtr bce_with_logits_mean(Tape* tape, const TensorPtr& logits, float target) {
  const auto n = logits->data.size();
  if (n == 0) throw ValueError("bce_with_logits_mean: empty batch");
  const float w = 1.0f / static_cast<float>(n);
  return bce_with_logits_sum(tape, logits, std::vector<float>(n, target),
                             std::vector<float>(n, w));
}

TensorPtr softmax_ce_sum(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels,
                         const std::vector<float>& weights) {
  if (logits->rank() != 2) throw ShapeError("softmax_ce_sum: expected logits [N,K]");
  const int n = logits->dim(0), k = logits->dim(1);
  if (static_cast<int>(labels.size()) != n || static_cast<int>(weights.size()) != n) {
    throw ShapeError("softmax_ce_sum: labels/weights length must equal row count");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= k) throw ValueError("softmax_ce_sum: label out of range");
  }
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const float* row = logits->data.data() + static_cast<std::size_t>(r) * k;
    float m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double lse = 0.0;
    for (int j = 0; j < k; ++j) lse += std::exp(static_cast<double>(row[j] - m));
    lse = m + std::log(lse);
    acc += weights[static_cast<std::size_t>(r)] *
           (lse - row[labels[static_cast<std::size_t>(r)]]);
  }
  auto out = tensor_from({1}, {static_cast<float>(acc)});
  if (tape) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto w = std::make_shared<std::vector<float>>(weights);
    tape->record(OpKind::kSoftmaxCrossEntropy, {logits}, out, [logits, out, lab, w, n, k] {
      logits->ensure_grad();
      const float g = out->grad[0];
      for (int r = 0; r < n; ++r) {
        const float wr = (*w)[static_cast<std::size_t>(r)];
        if (wr == 0.0f) continue;
        const float* row = logits->data.data() + static_cast<std::size_t>(r) * k;
        float* grow = logits->grad.data() + static_cast<std::size_t>(r) * k;
        float m = row[0];
        for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - m));
        for (int j = 0; j < k; ++j) {
          const float p = static_cast<float>(std::exp(static_cast<double>(row[j] - m)) / z);
          const float onehot = j == (*lab)[static_cast<std::size_t>(r)] ? 1.0f : 0.0f;
          grow[j] += g * wr * (p - onehot);
        }
      }
    });
  }
  return out;
}

TensorPtr smooth_l1_sum(Tape* tape, const TensorPtr& pred, const std::vector<float>& targets,
                        const std::vector<float>& row_weights, bool pure_l1) {
  if (pred->rank() != 2) throw ShapeError("smooth_l1_sum: expected pred [N,D]");
  const int n = pred->dim(0), dcomp = pred->dim(1);
  if (targets.size() != pred->data.size()) {
    throw ShapeError("smooth_l1_sum: target length " + std::to_string(targets.size()) +
                     " vs pred " + std::to_string(pred->data.size()));
  }
  if (static_cast<int>(row_weights.size()) != n) {
    throw ShapeError("smooth_l1_sum: row_weights length must equal row count");
  }
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const float wr = row_weights[static_cast<std::size_t>(r)];
    if (wr == 0.0f) continue;
    for (int j = 0; j < dcomp; ++j) {
      const std::size_t i = static_cast<std::size_t>(r) * dcomp + j;
      acc += wr * smooth_l1(pred->data[i] - targets[i], pure_l1);
    }
  }
  auto out = tensor_from({1}, {static_cast<float>(acc)});
  if (tape) {
    auto t = std::make_shared<std::vector<float>>(targets);
    auto w = std::make_shared<std::vector<float>>(row_weights);
    tape->record(OpKind::kSmoothL1, {pred}, out, [pred, out, t, w, n, dcomp, pure_l1] {
      pred->ensure_grad();
      const float g = out->grad[0];
      for (int r = 0; r < n; ++r) {
        const float wr = (*w)[static_cast<std::size_t>(r)];
        if (wr == 0.0f) continue;
        for (int j = 0; j < dcomp; ++j) {
          const std::size_t i = static_cast<std::size_t>(r) * dcomp + j;
          pred->grad[i] += g * wr * smooth_l1_grad(pred->data[i] - (*t)[i], pure_l1);
        }
      }
    });
  }
  return out;
}

TensorPtr smooth_l1_sum_indexed(Tape* tape, const TensorPtr& pred, int groups,
                                const std::vector<int>& labels,
                                const std::vector<float>& targets,
                                const std::vector<float>& row_weights, bool pure_l1) {
  if (pred->rank() != 2) throw ShapeError("smooth_l1_sum_indexed: expected pred [N,K*D]");
  const int n = pred->dim(0);
  if (groups < 1 || pred->dim(1) % groups != 0) {
    throw ShapeError("smooth_l1_sum_indexed: row width not divisible by group count");
  }
  const int dcomp = pred->dim(1) / groups;
  if (static_cast<int>(labels.size()) != n || static_cast<int>(row_weights.size()) != n) {
    throw ShapeError("smooth_l1_sum_indexed: labels/row_weights length must equal row count");
  }
  if (static_cast<int>(targets.size()) != n * dcomp) {
    throw ShapeError("smooth_l1_sum_indexed: targets must be N*D");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= groups) throw ValueError("smooth_l1_sum_indexed: label out of range");
  }
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const float wr = row_weights[static_cast<std::size_t>(r)];
    if (wr == 0.0f) continue;
    const int lab = labels[static_cast<std::size_t>(r)];
    const float* slice =
        pred->data.data() + static_cast<std::size_t>(r) * pred->dim(1) + lab * dcomp;
    const float* tgt = targets.data() + static_cast<std::size_t>(r) * dcomp;
    for (int j = 0; j < dcomp; ++j) acc += wr * smooth_l1(slice[j] - tgt[j], pure_l1);
  }
  auto out = tensor_from({1}, {static_cast<float>(acc)});
  if (tape) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto t = std::make_shared<std::vector<float>>(targets);
    auto w = std::make_shared<std::vector<float>>(row_weights);
    const int row_w = pred->dim(1);
    tape->record(OpKind::kSmoothL1Indexed, {pred}, out,
                 [pred, out, lab, t, w, n, dcomp, row_w, pure_l1] {
                   pred->ensure_grad();
                   const float g = out->grad[0];
                   for (int r = 0; r < n; ++r) {
                     const float wr = (*w)[static_cast<std::size_t>(r)];
                     if (wr == 0.0f) continue;
                     const int lr = (*lab)[static_cast<std::size_t>(r)];
                     const std::size_t base = static_cast<std::size_t>(r) * row_w +
                                              static_cast<std::size_t>(lr) * dcomp;
                     const float* tgt = t->data() + static_cast<std::size_t>(r) * dcomp;
                     for (int j = 0; j < dcomp; ++j) {
                       pred->grad[base + j] +=
                           g * wr * smooth_l1_grad(pred->data[base + j] - tgt[j], pure_l1);
                     }
                   }
                 });
  }
  return out;
}

}  // namespace gw::ops
