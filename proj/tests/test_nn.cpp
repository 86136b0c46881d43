#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "petseg/discriminator.hpp"
#include "petseg/model_io.hpp"
#include "petseg/nn.hpp"
#include "petseg/random.hpp"
#include "test_support.hpp"

using namespace petseg;
using namespace petseg::nn;
using testing_support::TempDir;

namespace {

Tensor random_tensor(std::vector<Index> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

Sequential tiny_conv_model() {
  return Sequential({Conv2D{1, 2, 3, 2, 1}, ReLU{}, Conv2D{2, 3, 3, 2, 1}, ReLU{}, Flatten{}, Linear{12, 5}, ReLU{},
                     Linear{5, 1}, Sigmoid{}},
                    {1, 7, 7});
}

}  // namespace

TEST(Conv2d, OnesKernelSumsNine) {
  const Tensor x({1, 1, 3, 3}, 1.0);
  const Tensor w({1, 1, 3, 3}, 1.0);
  const Tensor b({1}, 0.25);
  const Tensor y = conv2d_forward(x, w, b, 1, 0);
  ASSERT_EQ(y.size(), 1);
  EXPECT_EQ(y[0], 9.25);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({2, 1, 4, 5}, rng);
  const Tensor y = conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1, 0);
  EXPECT_TRUE((y.data() == x.data()).all());
}

TEST(Conv2d, MatchesSixLoopOracleAcrossShapes) {
  Rng rng(7);
  int cases = 0;
  for (Index n = 1; n <= 3; ++n)
    for (Index c = 1; c <= 3; ++c)
      for (Index f = 1; f <= 3; ++f)
        for (Index k : {1, 3})
          for (Index s : {1, 2})
            for (Index p : {0, 1}) {
              const Index h = 3 + static_cast<Index>(rng.below(5));
              const Index w = 3 + static_cast<Index>(rng.below(5));
              const Tensor x = random_tensor({n, c, h, w}, rng);
              const Tensor wt = random_tensor({f, c, k, k}, rng);
              const Tensor b = random_tensor({f}, rng);
              const Tensor ours = conv2d_forward(x, wt, b, s, p);
              const Tensor ref = oracle::conv2d(x, wt, b, s, p);
              ASSERT_EQ(ours.shape(), ref.shape());
              EXPECT_LT((ours.data() - ref.data()).abs().maxCoeff(), 1e-12);
              ++cases;
            }
  EXPECT_EQ(cases, 216);
}

TEST(Conv2d, BackwardZeroAndScalarCases) {
  Rng rng(2);
  const Tensor x = random_tensor({2, 2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor y = conv2d_forward(x, w, Tensor({3}), 2, 1);
  const Conv2dGrads g = conv2d_backward(Tensor(y.shape()), x, w, 2, 1);
  EXPECT_TRUE((g.dx.data() == 0).all() && (g.dw.data() == 0).all() && (g.db.data() == 0).all());

  const Tensor xs({1, 1, 1, 1}, 1.75);
  const Tensor ws({1, 1, 1, 1}, -0.5);
  const Conv2dGrads gs = conv2d_backward(Tensor({1, 1, 1, 1}, 1.0), xs, ws, 1, 0);
  EXPECT_EQ(gs.dw[0], 1.75);
  EXPECT_EQ(gs.dx[0], -0.5);
  EXPECT_EQ(gs.db[0], 1.0);
}

TEST(Conv2d, RejectsBadShapes) {
  EXPECT_PETSEG_ERROR(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor({1}), 1, 0),
                      ErrorCode::ShapeError);
  EXPECT_PETSEG_ERROR(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0),
                      ErrorCode::ShapeError);
}

TEST(Activations, ReluAndSigmoid) {
  Tensor x({1, 3});
  x[0] = -3;
  x[1] = 0;
  x[2] = 3;
  const Tensor r = relu_forward(x);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[2], 3.0);
  const Tensor dr = relu_backward(Tensor({1, 3}, 1.0), x);
  EXPECT_EQ(dr[1], 0.0);
  EXPECT_EQ(dr[2], 1.0);

  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  for (double v : {-1e6, -745.0, -30.0, 30.0, 1e6}) {
    const double s = sigmoid(v);
    EXPECT_FALSE(std::isnan(s));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_GT(sigmoid(-30.0), 0.0);
  EXPECT_LT(sigmoid(30.0), 1.0);
}

TEST(Loss, BceValues) {
  EXPECT_NEAR(bce_loss(0.5, 1.0).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(1.0 - 1e-12, 1.0).loss, 0.0, 1e-11);
  const LossGrad fused = bce_with_logits(2.0, 0.0);
  EXPECT_NEAR(fused.loss, 2.126928, 1e-6);
  EXPECT_NEAR(fused.loss, bce_loss(sigmoid(2.0), 0.0).loss, 1e-9);
  for (double z : {-40.0, -3.0, 0.0, 0.1, 7.0, 40.0}) {
    for (double y : {0.0, 1.0}) EXPECT_GE(bce_with_logits(z, y).loss, 0.0);
  }
  const LossGrad p = bce_loss(0.3, 1.0);
  EXPECT_NEAR(p.grad, -1.0 / 0.3, 1e-12);
}

TEST(AdamW, DecayOnlyStep) {
  Sequential model({Linear{1, 1}}, {1});
  ModelParams params = model.zeros();
  params.tensors[0].value[0] = 1.0;
  const Gradients zero = {Tensor({1, 1}), Tensor({1})};
  adamw_step(params, zero, AdamWConfig{});
  EXPECT_DOUBLE_EQ(params.tensors[0].value[0], 0.999999);
  EXPECT_EQ(params.step, 1);

  AdamWConfig no_decay;
  no_decay.weight_decay = 0.0;
  const double before = params.tensors[0].value[0];
  adamw_step(params, zero, no_decay);
  EXPECT_EQ(params.tensors[0].value[0], before);
}

TEST(AdamW, MatchesScalarOracleOverSteps) {
  Sequential model({Linear{1, 1}}, {1});
  ModelParams params = model.zeros();
  params.tensors[0].value[0] = 1.0;
  oracle::ScalarAdamState ref{1.0};
  const AdamWConfig cfg;
  const double grads[] = {0.5, -0.25, 0.125, 2.0, -1.0};
  for (int t = 0; t < 5; ++t) {
    adamw_step(params, {Tensor({1, 1}, grads[t]), Tensor({1})}, cfg);
    oracle::adamw(ref, grads[t], t + 1, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    EXPECT_NEAR(params.tensors[0].value[0], ref.value, 1e-15) << "step " << t + 1;
  }
}

TEST(AdamW, RejectsMismatchedGradients) {
  Sequential model({Linear{2, 1}}, {2});
  ModelParams params = model.zeros();
  EXPECT_PETSEG_ERROR(adamw_step(params, {Tensor({1, 1}), Tensor({1})}, AdamWConfig{}), ErrorCode::ShapeError);
}

TEST(Sequential, RejectsNonComposingLayers) {
  EXPECT_PETSEG_ERROR(Sequential({Linear{3, 2}, Linear{3, 1}}, {3}), ErrorCode::ShapeError);
  EXPECT_PETSEG_ERROR(Sequential({Linear{3, 2}}, {3}), ErrorCode::ShapeError);
}

TEST(GradCheck, LinearOnly) {
  Rng rng(5);
  Sequential model({Linear{6, 4}, Linear{4, 1}}, {6});
  const ModelParams params = model.init(9);
  const Tensor x = random_tensor({3, 6}, rng);
  const std::vector<double> y{1, 0, 1};
  EXPECT_LT(grad_check(model, params, x, y).max_rel_error, 1e-7);
}

TEST(GradCheck, TinyConvStackAndNegativeControl) {
  Rng rng(6);
  const Sequential model = tiny_conv_model();
  const ModelParams params = model.init(3);
  const Tensor x = random_tensor({2, 1, 7, 7}, rng);
  const std::vector<double> y{0, 1};
  const GradCheckReport ok = grad_check(model, params, x, y);
  EXPECT_LT(ok.max_rel_error, 1e-5) << ok.worst_param << "[" << ok.worst_index << "]";
  EXPECT_EQ(ok.checked, model.parameter_count());

  Gradients g;
  model.loss_and_grad(params, x, y, &g);
  Index worst = 0;
  for (Index i = 0; i < g[0].size(); ++i) {
    if (std::abs(g[0][i]) > std::abs(g[0][worst])) worst = i;
  }
  g[0][worst] *= 2.0;
  EXPECT_GT(grad_check(model, params, x, y, g).max_rel_error, 0.3);
}

TEST(Sequential, InitIsSeededAndShaped) {
  const Sequential model = tiny_conv_model();
  const ModelParams a = model.init(11);
  const ModelParams b = model.init(11);
  const ModelParams c = model.init(12);
  ASSERT_EQ(a.tensors.size(), 8u);
  EXPECT_EQ(a.tensors[0].name, "conv0.weight");
  EXPECT_TRUE((a.tensors[0].value.data() == b.tensors[0].value.data()).all());
  EXPECT_FALSE((a.tensors[0].value.data() == c.tensors[0].value.data()).all());
  const double bound = std::sqrt(6.0 / 9.0);
  EXPECT_LE(a.tensors[0].value.data().abs().maxCoeff(), bound);
}

TEST(Sequential, ForwardRejectsNonFiniteInput) {
  const Sequential model = tiny_conv_model();
  Tensor x({1, 1, 7, 7}, 0.0);
  x[3] = std::nan("");
  EXPECT_PETSEG_ERROR(model.forward(model.init(1), x), ErrorCode::NonFinite);
}

TEST(ModelIo, SaveLoadRoundTrip) {
  TempDir dir;
  const Sequential model = tiny_conv_model();
  ModelParams params = model.init(4);
  params.step = 17;
  save_model(dir / "m.json", model, params);
  const SavedModel back = load_model(dir / "m.json");
  EXPECT_EQ(back.input_shape, model.input_shape());
  EXPECT_EQ(back.params.seed, 4u);
  ASSERT_EQ(back.params.tensors.size(), params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    EXPECT_TRUE((back.params.tensors[i].value.data() == params.tensors[i].value.data()).all());
  }
  Rng rng(1);
  const Tensor x = random_tensor({2, 1, 7, 7}, rng);
  EXPECT_TRUE((back.model().forward(back.params, x).data() == model.forward(params, x).data()).all());
}

TEST(Discriminator, ReferenceArchitecture) {
  const Sequential model = discriminator_model();
  EXPECT_EQ(model.input_shape(), (std::vector<Index>{1, 224, 224}));
  EXPECT_EQ(model.output_shape(), (std::vector<Index>{1}));
  int convs = 0, linears = 0;
  for (const auto& l : model.layers()) {
    convs += std::holds_alternative<Conv2D>(l);
    linears += std::holds_alternative<Linear>(l);
  }
  EXPECT_EQ(convs, 6);
  EXPECT_EQ(linears, 5);
  EXPECT_TRUE(std::holds_alternative<Sigmoid>(model.layers().back()));
}
