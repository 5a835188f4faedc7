#pragma once

#include "cnav/ad/tensor.hpp"

namespace cnav::ad {

// a: [..., m, k]; b: [k, n] (shared weight) or [..., k, n] with the same
// leading axes. Result [..., m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; b may be a scalar or match a trailing suffix of a's shape
// (broadcast over the leading axes, as for a bias add).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_last(const Tensor& a, int from, int to);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor transpose_last2(const Tensor& a);

Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);

// Normalizes over the last axis (eps 1e-5), then applies the learned
// affine pair; gain and bias have the last axis's length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

}  // namespace cnav::ad
