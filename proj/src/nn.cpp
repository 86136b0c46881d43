#include "petseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "petseg/random.hpp"

namespace petseg::nn {
namespace {

struct ConvGeometry {
  Index n, c, h, w, f, k, ho, wo;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, Index stride, Index pad) {
  if (x.rank() != 4 || w.rank() != 4) throw Error(ErrorCode::ShapeError, "conv2d expects rank-4 input and weight");
  if (w.dim(1) != x.dim(1)) throw Error(ErrorCode::ShapeError, "conv2d channel mismatch");
  if (w.dim(2) != w.dim(3)) throw Error(ErrorCode::ShapeError, "conv2d kernel must be square");
  if (stride < 1 || pad < 0) throw Error(ErrorCode::ShapeError, "conv2d stride must be >= 1 and pad >= 0");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), 0, 0};
  g.ho = conv_output_extent(g.h, g.k, stride, pad);
  g.wo = conv_output_extent(g.w, g.k, stride, pad);
  return g;
}

// Output columns [lo, hi) whose input column ox * stride - pad + kx is in range.
struct ValidRange {
  Index lo, hi;
};

ValidRange valid_columns(const ConvGeometry& g, Index stride, Index pad, Index kx) {
  const Index first = pad - kx;  // ix >= 0  <=>  ox * stride >= first
  const Index lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const Index last = g.w - 1 + pad - kx;  // ix <= w - 1
  const Index hi = last < 0 ? 0 : std::min(g.wo, last / stride + 1);
  return {std::min(lo, hi), hi};
}

// Copies dst[ox] = src[ox * Stride] for ox in [lo, hi); a compile-time stride
// lets the compiler vectorize the common cases.
template <Index Stride>
inline void gather_row(const double* src, double* dst, Index lo, Index hi) {
  for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * Stride];
}

template <Index Stride>
inline void scatter_add_row(const double* src, double* dst, Index lo, Index hi) {
  for (Index ox = lo; ox < hi; ++ox) dst[ox * Stride] += src[ox];
}

template <Index Stride>
void im2col_impl(const double* x, const ConvGeometry& g, Index pad, double* cols) {
  for (Index c = 0; c < g.c; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        double* dst = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        const ValidRange r = valid_columns(g, Stride, pad, kx);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * Stride - pad + ky;
          double* out_row = dst + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out_row, out_row + g.wo, 0.0);
            continue;
          }
          std::fill(out_row, out_row + r.lo, 0.0);
          gather_row<Stride>(plane + iy * g.w + kx - pad, out_row, r.lo, r.hi);
          std::fill(out_row + r.hi, out_row + g.wo, 0.0);
        }
      }
    }
  }
}

template <Index Stride>
void col2im_impl(const double* cols, const ConvGeometry& g, Index pad, double* dx) {
  for (Index c = 0; c < g.c; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const double* src = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        const ValidRange r = valid_columns(g, Stride, pad, kx);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * Stride - pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          scatter_add_row<Stride>(src + oy * g.wo, plane + iy * g.w + kx - pad, r.lo, r.hi);
        }
      }
    }
  }
}

// Runtime-stride fallback.
void im2col_any(const double* x, const ConvGeometry& g, Index stride, Index pad, double* cols) {
  for (Index c = 0; c < g.c; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        double* dst = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        const ValidRange r = valid_columns(g, stride, pad, kx);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          double* out_row = dst + oy * g.wo;
          std::fill(out_row, out_row + g.wo, 0.0);
          if (iy < 0 || iy >= g.h) continue;
          const double* in = plane + iy * g.w + kx - pad;
          for (Index ox = r.lo; ox < r.hi; ++ox) out_row[ox] = in[ox * stride];
        }
      }
    }
  }
}

void col2im_any(const double* cols, const ConvGeometry& g, Index stride, Index pad, double* dx) {
  for (Index c = 0; c < g.c; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const double* src = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        const ValidRange r = valid_columns(g, stride, pad, kx);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* in = plane + iy * g.w + kx - pad;
          const double* col_row = src + oy * g.wo;
          for (Index ox = r.lo; ox < r.hi; ++ox) in[ox * stride] += col_row[ox];
        }
      }
    }
  }
}

// Unfolds one sample [C,H,W] into (C*k*k) x (Ho*Wo).
void im2col(const double* x, const ConvGeometry& g, Index stride, Index pad, RowMatrix& cols) {
  cols.resize(g.c * g.k * g.k, g.ho * g.wo);
  switch (stride) {
    case 1: im2col_impl<1>(x, g, pad, cols.data()); break;
    case 2: im2col_impl<2>(x, g, pad, cols.data()); break;
    default: im2col_any(x, g, stride, pad, cols.data());
  }
}

// Adjoint of im2col: accumulates (C*k*k) x (Ho*Wo) back onto [C,H,W].
void col2im(const RowMatrix& cols, const ConvGeometry& g, Index stride, Index pad, double* dx) {
  switch (stride) {
    case 1: col2im_impl<1>(cols.data(), g, pad, dx); break;
    case 2: col2im_impl<2>(cols.data(), g, pad, dx); break;
    default: col2im_any(cols.data(), g, stride, pad, dx);
  }
}

std::vector<Index> batched(Index n, const std::vector<Index>& per_sample) {
  std::vector<Index> shape{n};
  shape.insert(shape.end(), per_sample.begin(), per_sample.end());
  return shape;
}

}  // namespace

Index conv_output_extent(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  if (span < 0) throw Error(ErrorCode::ShapeError, "conv2d kernel larger than padded input");
  return span / stride + 1;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Index stride, Index pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  if (b.size() != g.f) throw Error(ErrorCode::ShapeError, "conv2d bias length mismatch");
  // Every element is written below.
  Tensor out({g.n, g.f, g.ho, g.wo}, Eigen::ArrayXd(g.n * g.f * g.ho * g.wo));
  const ConstMatrixMap weights = w.matrix(g.f, g.c * g.k * g.k);
  const Eigen::Map<const Eigen::VectorXd> bias(b.data().data(), g.f);
  RowMatrix cols;
  for (Index n = 0; n < g.n; ++n) {
    im2col(x.data().data() + n * g.c * g.h * g.w, g, stride, pad, cols);
    MatrixMap y(out.data().data() + n * g.f * g.ho * g.wo, g.f, g.ho * g.wo);
    y.noalias() = weights * cols;
    y.colwise() += bias;
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w, Index stride, Index pad,
                            bool need_dx) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  if (grad_out.shape() != std::vector<Index>{g.n, g.f, g.ho, g.wo}) {
    throw Error(ErrorCode::ShapeError, "conv2d grad_out shape mismatch");
  }
  const Index ckk = g.c * g.k * g.k;
  Conv2dGrads grads{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(w.shape()), Tensor({g.f})};
  MatrixMap dw = grads.dw.matrix(g.f, ckk);
  Eigen::Map<Eigen::VectorXd> db(grads.db.data().data(), g.f);
  const ConstMatrixMap weights = w.matrix(g.f, ckk);
  RowMatrix cols;
  RowMatrix dcols;
  for (Index n = 0; n < g.n; ++n) {
    const ConstMatrixMap dy(grad_out.data().data() + n * g.f * g.ho * g.wo, g.f, g.ho * g.wo);
    im2col(x.data().data() + n * g.c * g.h * g.w, g, stride, pad, cols);
    dw.noalias() += dy * cols.transpose();
    db += dy.rowwise().sum();
    if (need_dx) {
      dcols.noalias() = weights.transpose() * dy;
      col2im(dcols, g, stride, pad, grads.dx.data().data() + n * g.c * g.h * g.w);
    }
  }
  return grads;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1) || b.size() != w.dim(0)) {
    throw Error(ErrorCode::ShapeError, "linear shapes do not compose: x" + x.shape_string() + " w" + w.shape_string());
  }
  const Index n = x.dim(0);
  const Index out_features = w.dim(0);
  Tensor y({n, out_features}, Eigen::ArrayXd(n * out_features));
  MatrixMap ym = y.matrix(n, out_features);
  ym.noalias() = x.matrix(n, x.dim(1)) * w.matrix(out_features, w.dim(1)).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_features);
  return y;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x, const Tensor& w) {
  const Index n = x.dim(0);
  const Index in_features = w.dim(1);
  const Index out_features = w.dim(0);
  if (grad_out.shape() != std::vector<Index>{n, out_features}) {
    throw Error(ErrorCode::ShapeError, "linear grad_out shape mismatch");
  }
  const ConstMatrixMap dy = grad_out.matrix(n, out_features);
  LinearGrads grads{Tensor(x.shape()), Tensor(w.shape()), Tensor({out_features})};
  grads.dx.matrix(n, in_features).noalias() = dy * w.matrix(out_features, in_features);
  grads.dw.matrix(out_features, in_features).noalias() = dy.transpose() * x.matrix(n, in_features);
  Eigen::Map<Eigen::RowVectorXd>(grads.db.data().data(), out_features) = dy.colwise().sum();
  return grads;
}

Tensor relu_forward(const Tensor& x) { return Tensor(x.shape(), x.data().max(0.0)); }

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
  if (grad_out.shape() != x.shape()) throw Error(ErrorCode::ShapeError, "relu grad shape mismatch");
  return Tensor(x.shape(), (x.data() > 0.0).select(grad_out.data(), 0.0));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid_forward(const Tensor& x) { return Tensor(x.shape(), x.data().unaryExpr([](double v) { return sigmoid(v); })); }

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& y) {
  if (grad_out.shape() != y.shape()) throw Error(ErrorCode::ShapeError, "sigmoid grad shape mismatch");
  return Tensor(y.shape(), grad_out.data() * y.data() * (1.0 - y.data()));
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw Error(ErrorCode::ShapeError, "flatten of a scalar");
  const Index n = x.dim(0);
  return x.reshaped({n, x.size() / n});
}

LossGrad bce_loss(double p, double y) {
  constexpr double kEps = 1e-12;
  const double pc = std::clamp(p, kEps, 1.0 - kEps);
  return {-(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)), -y / pc + (1.0 - y) / (1.0 - pc)};
}

LossGrad bce_with_logits(double z, double y) {
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  return {loss, sigmoid(z) - y};
}

std::string describe(const LayerSpec& layer) {
  std::ostringstream os;
  std::visit(
      [&os](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          os << "Conv2D(" << l.in_channels << "->" << l.out_channels << ", k" << l.kernel << ", s" << l.stride
             << ", p" << l.pad << ")";
        } else if constexpr (std::is_same_v<T, Linear>) {
          os << "Linear(" << l.in << "->" << l.out << ")";
        } else if constexpr (std::is_same_v<T, ReLU>) {
          os << "ReLU";
        } else if constexpr (std::is_same_v<T, Sigmoid>) {
          os << "Sigmoid";
        } else {
          os << "Flatten";
        }
      },
      layer);
  return os.str();
}

Index ModelParams::count() const {
  Index n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

const ParamTensor& ModelParams::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
}

void adamw_step(ModelParams& params, const Gradients& grads, const AdamWConfig& cfg) {
  if (grads.size() != params.tensors.size()) throw Error(ErrorCode::ShapeError, "gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.tensors[i].value.shape()) {
      throw Error(ErrorCode::ShapeError, "gradient shape mismatch for " + params.tensors[i].name);
    }
  }
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    ParamTensor& p = params.tensors[i];
    const Eigen::ArrayXd& g = grads[i].data();
    p.value.data() -= cfg.lr * cfg.weight_decay * p.value.data();
    p.m.data() = cfg.beta1 * p.m.data() + (1.0 - cfg.beta1) * g;
    p.v.data() = cfg.beta2 * p.v.data() + (1.0 - cfg.beta2) * g.square();
    p.value.data() -= cfg.lr * (p.m.data() / bc1) / ((p.v.data() / bc2).sqrt() + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

Sequential::Sequential(std::vector<LayerSpec> layers, std::vector<Index> input_shape)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
  if (layers_.empty()) throw Error(ErrorCode::ShapeError, "empty architecture");
  shape_product(input_shape_);
  shapes_.push_back(input_shape_);
  int slot = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::vector<Index>& in = shapes_.back();
    std::vector<Index> out = in;
    int this_slot = -1;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          const auto fail = [&](const std::string& why) {
            throw Error(ErrorCode::ShapeError, "layer " + std::to_string(i) + " " + describe(l) + ": " + why);
          };
          if constexpr (std::is_same_v<T, Conv2D>) {
            if (in.size() != 3) fail("expects [C,H,W] input");
            if (in[0] != l.in_channels) fail("input has " + std::to_string(in[0]) + " channels");
            if (l.kernel < 1 || l.stride < 1 || l.pad < 0 || l.out_channels < 1) fail("invalid hyper-parameters");
            out = {l.out_channels, conv_output_extent(in[1], l.kernel, l.stride, l.pad),
                   conv_output_extent(in[2], l.kernel, l.stride, l.pad)};
            this_slot = slot;
            slot += 2;
          } else if constexpr (std::is_same_v<T, Linear>) {
            if (in.size() != 1) fail("expects flat input; insert Flatten");
            if (in[0] != l.in) fail("input has " + std::to_string(in[0]) + " features");
            if (l.out < 1) fail("invalid output width");
            out = {l.out};
            this_slot = slot;
            slot += 2;
          } else if constexpr (std::is_same_v<T, Flatten>) {
            out = {shape_product(in)};
          }
        },
        layers_[i]);
    param_slot_.push_back(this_slot);
    shapes_.push_back(std::move(out));
  }
  if (shape_product(shapes_.back()) != 1) throw Error(ErrorCode::ShapeError, "model must output one value per sample");
}

Index Sequential::parameter_count() const { return zeros().count(); }

ModelParams Sequential::zeros() const {
  ModelParams params;
  int conv = 0;
  int fc = 0;
  for (const LayerSpec& layer : layers_) {
    const auto add = [&params](const std::string& name, std::vector<Index> shape) {
      params.tensors.push_back({name, Tensor(shape), Tensor(shape), Tensor(shape)});
    };
    if (const auto* c = std::get_if<Conv2D>(&layer)) {
      const std::string base = "conv" + std::to_string(conv++);
      add(base + ".weight", {c->out_channels, c->in_channels, c->kernel, c->kernel});
      add(base + ".bias", {c->out_channels});
    } else if (const auto* l = std::get_if<Linear>(&layer)) {
      const std::string base = "fc" + std::to_string(fc++);
      add(base + ".weight", {l->out, l->in});
      add(base + ".bias", {l->out});
    }
  }
  return params;
}

ModelParams Sequential::init(std::uint64_t seed) const {
  ModelParams params = zeros();
  params.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < params.tensors.size(); i += 2) {
    Tensor& w = params.tensors[i].value;
    Tensor& b = params.tensors[i + 1].value;
    const double fan_in = static_cast<double>(w.size() / w.dim(0));
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    for (Index j = 0; j < w.size(); ++j) w[j] = rng.uniform(-w_bound, w_bound);
    for (Index j = 0; j < b.size(); ++j) b[j] = rng.uniform(-b_bound, b_bound);
  }
  return params;
}

void Sequential::check_params(const ModelParams& params) const {
  const ModelParams expected = zeros();
  if (expected.tensors.size() != params.tensors.size()) {
    throw Error(ErrorCode::ShapeError, "parameter count does not match architecture");
  }
  for (std::size_t i = 0; i < expected.tensors.size(); ++i) {
    if (expected.tensors[i].value.shape() != params.tensors[i].value.shape()) {
      throw Error(ErrorCode::ShapeError, "parameter " + expected.tensors[i].name + " expected shape " +
                                             expected.tensors[i].value.shape_string() + ", got " +
                                             params.tensors[i].value.shape_string());
    }
  }
}

std::size_t Sequential::logit_layer_count() const {
  const bool trailing_sigmoid = std::holds_alternative<Sigmoid>(layers_.back());
  return layers_.size() - (trailing_sigmoid ? 1 : 0);
}

Tensor Sequential::run(const ModelParams& params, const Tensor& x, std::size_t n_layers,
                       std::vector<Tensor>* activations) const {
  if (x.rank() < 1 || x.shape() != batched(x.dim(0), input_shape_)) {
    throw Error(ErrorCode::ShapeError, "input " + x.shape_string() + " does not match model input");
  }
  x.require_finite("model input");
  Tensor h = x;
  if (activations) activations->reserve(activations->size() + n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (activations) activations->push_back(std::move(h));
    const Tensor& in = activations ? activations->back() : h;
    const int slot = param_slot_[i];
    bool affine = false;
    Tensor out = std::visit(
        [&](const auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            affine = true;
            return conv2d_forward(in, params.tensors[slot].value, params.tensors[slot + 1].value, l.stride, l.pad);
          } else if constexpr (std::is_same_v<T, Linear>) {
            affine = true;
            return linear_forward(in, params.tensors[slot].value, params.tensors[slot + 1].value);
          } else if constexpr (std::is_same_v<T, ReLU>) {
            return relu_forward(in);
          } else if constexpr (std::is_same_v<T, Sigmoid>) {
            return sigmoid_forward(in);
          } else {
            return flatten(in);
          }
        },
        layers_[i]);
    // ReLU, sigmoid and flatten map finite inputs to finite outputs.
    if (affine) out.require_finite("layer output");
    h = std::move(out);
  }
  return h;
}

Tensor Sequential::forward(const ModelParams& params, const Tensor& x) const {
  return run(params, x, layers_.size(), nullptr).reshaped({x.dim(0), 1});
}

Tensor Sequential::logits(const ModelParams& params, const Tensor& x) const {
  return run(params, x, logit_layer_count(), nullptr).reshaped({x.dim(0), 1});
}

double Sequential::loss_and_grad(const ModelParams& params, const Tensor& x, std::span<const double> labels,
                                 Gradients* grads) const {
  const std::size_t n_layers = logit_layer_count();
  std::vector<Tensor> acts;
  const Tensor z = run(params, x, n_layers, grads ? &acts : nullptr);
  const Index n = x.dim(0);
  if (static_cast<Index>(labels.size()) != n) throw Error(ErrorCode::ShapeError, "label count mismatch");

  double total = 0.0;
  Tensor g(z.shape());
  for (Index i = 0; i < n; ++i) {
    const LossGrad lg = bce_with_logits(z[i], labels[static_cast<std::size_t>(i)]);
    total += lg.loss;
    g[i] = lg.grad / static_cast<double>(n);
  }
  if (!grads) return total / static_cast<double>(n);

  grads->clear();
  for (const auto& p : params.tensors) grads->emplace_back(p.value.shape());
  for (std::size_t i = n_layers; i-- > 0;) {
    const Tensor& input = acts[i];
    const int slot = param_slot_[i];
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            Conv2dGrads cg = conv2d_backward(g, input, params.tensors[slot].value, l.stride, l.pad, i > 0);
            (*grads)[slot] = std::move(cg.dw);
            (*grads)[slot + 1] = std::move(cg.db);
            g = std::move(cg.dx);
          } else if constexpr (std::is_same_v<T, Linear>) {
            LinearGrads lg = linear_backward(g, input, params.tensors[slot].value);
            (*grads)[slot] = std::move(lg.dw);
            (*grads)[slot + 1] = std::move(lg.db);
            g = std::move(lg.dx);
          } else if constexpr (std::is_same_v<T, ReLU>) {
            g = relu_backward(g, input);
          } else if constexpr (std::is_same_v<T, Sigmoid>) {
            g = sigmoid_backward(g, sigmoid_forward(input));
          } else {
            g = g.reshaped(input.shape());
          }
        },
        layers_[i]);
  }
  return total / static_cast<double>(n);
}

GradCheckReport grad_check(const Sequential& model, ModelParams params, const Tensor& x,
                           std::span<const double> labels, const Gradients& analytic, double h) {
  model.check_params(params);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    Tensor& value = params.tensors[t].value;
    for (Index j = 0; j < value.size(); ++j) {
      const double saved = value[j];
      value[j] = saved + h;
      const double up = model.loss(params, x, labels);
      value[j] = saved - h;
      const double down = model.loss(params, x, labels);
      value[j] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = rel;
        report.worst_param = params.tensors[t].name;
        report.worst_index = j;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const Sequential& model, const ModelParams& params, const Tensor& x,
                           std::span<const double> labels, double h) {
  Gradients analytic;
  model.loss_and_grad(params, x, labels, &analytic);
  return grad_check(model, params, x, labels, analytic, h);
}

}  // namespace petseg::nn
