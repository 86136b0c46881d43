#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "petseg/tensor.hpp"

namespace petseg::nn {

// ---------------------------------------------------------------------------
// Kernels. Image tensors are [N, C, H, W]; dense tensors are [N, features].
// ---------------------------------------------------------------------------

Index conv_output_extent(Index in, Index kernel, Index stride, Index pad);

/// Cross-correlation with zero padding: x[N,C,H,W], w[F,C,k,k], b[F].
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Index stride, Index pad);

struct Conv2dGrads {
  Tensor dx;  // empty when not requested
  Tensor dw;
  Tensor db;
};

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w, Index stride, Index pad,
                            bool need_dx = true);

/// y = x w^T + b with x[N,in], w[out,in], b[out].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

struct LinearGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w);

Tensor relu_forward(const Tensor& x);
/// Subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);

double sigmoid(double x);
Tensor sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& y);

/// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);

struct LossGrad {
  double loss;
  double grad;
};

/// Probability-space BCE with p clamped to [1e-12, 1 - 1e-12]; grad is dL/dp.
LossGrad bce_loss(double p, double y);

/// BCE evaluated on the pre-sigmoid logit; grad is dL/dz = sigmoid(z) - y.
LossGrad bce_with_logits(double z, double y);

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

struct Conv2D {
  Index in_channels;
  Index out_channels;
  Index kernel;
  Index stride = 1;
  Index pad = 0;
};
struct Linear {
  Index in;
  Index out;
};
struct ReLU {};
struct Sigmoid {};
struct Flatten {};

using LayerSpec = std::variant<Conv2D, Linear, ReLU, Sigmoid, Flatten>;

std::string describe(const LayerSpec& layer);

struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor m;  // AdamW first moment
  Tensor v;  // AdamW second moment
};

/// Named weights in layer order plus optimizer state.
struct ModelParams {
  std::vector<ParamTensor> tensors;
  std::int64_t step = 0;
  std::uint64_t seed = 0;

  Index count() const;
  const ParamTensor& find(const std::string& name) const;
};

using Gradients = std::vector<Tensor>;

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One AdamW update with decoupled weight decay and bias-corrected moments.
void adamw_step(ModelParams& params, const Gradients& grads, const AdamWConfig& cfg);

/// A feed-forward stack of LayerSpecs for a fixed per-sample input shape.
///
/// Training treats everything before a trailing Sigmoid as the logit and uses
/// the fused logit BCE; without a trailing Sigmoid the raw output is the
/// logit. The output must be one value per sample.
class Sequential {
 public:
  Sequential(std::vector<LayerSpec> layers, std::vector<Index> input_shape);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<Index>& input_shape() const noexcept { return input_shape_; }
  const std::vector<Index>& output_shape() const noexcept { return shapes_.back(); }
  Index parameter_count() const;

  /// Kaiming-uniform weights (ReLU gain), uniform(+-1/sqrt(fan_in)) biases.
  ModelParams init(std::uint64_t seed) const;
  ModelParams zeros() const;

  /// Throws ShapeError unless `params` matches this architecture.
  void check_params(const ModelParams& params) const;

  Tensor forward(const ModelParams& params, const Tensor& x) const;
  Tensor logits(const ModelParams& params, const Tensor& x) const;

  /// Mean BCE over the batch; fills `grads` (one per parameter tensor) when
  /// non-null.
  double loss_and_grad(const ModelParams& params, const Tensor& x, std::span<const double> labels,
                       Gradients* grads) const;
  double loss(const ModelParams& params, const Tensor& x, std::span<const double> labels) const {
    return loss_and_grad(params, x, labels, nullptr);
  }

 private:
  std::size_t logit_layer_count() const;
  Tensor run(const ModelParams& params, const Tensor& x, std::size_t n_layers,
             std::vector<Tensor>* activations) const;

  std::vector<LayerSpec> layers_;
  std::vector<Index> input_shape_;
  std::vector<std::vector<Index>> shapes_;  // per-sample shape after each layer; [0] is the input
  std::vector<int> param_slot_;             // index of the layer's weight tensor, or -1
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  Index checked = 0;
};

/// Compares `analytic` against central differences of the mean BCE.
GradCheckReport grad_check(const Sequential& model, ModelParams params, const Tensor& x,
                           std::span<const double> labels, const Gradients& analytic, double h = 1e-5);

/// Same, with the analytic gradient taken from backpropagation.
GradCheckReport grad_check(const Sequential& model, const ModelParams& params, const Tensor& x,
                           std::span<const double> labels, double h = 1e-5);

}  // namespace petseg::nn
