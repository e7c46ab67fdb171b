#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "nicu/nn/checkpoint.hpp"
#include "nicu/nn/network.hpp"
#include "nicu/nn/optim.hpp"

using namespace nicu;
namespace check = nicu::testing;
using nn::LayerSpec;
using nn::Tensor;

TEST(Layers, IdentityPointwiseConv) {
  auto net = nn::Network<double>::build({LayerSpec::conv2d(3, 3, 1, 1)}, 1);
  net.params()[0].tensor.data.setZero();
  for (int c = 0; c < 3; ++c) net.params()[0].tensor.data[c * 3 + c] = 1.0;
  std::mt19937_64 rng(5);
  const auto x = check::random_input({3, 4, 7}, rng);
  const auto y = net.forward(x);
  EXPECT_EQ(y.shape, x.shape);
  EXPECT_TRUE(y.data == x.data);
}

TEST(Layers, ReluAndSigmoidValues) {
  const Tensor<double> x({3, 1, 1}, Eigen::Vector3d(-1.0, 0.0, 2.0));
  const auto relu = nn::Network<double>::build({LayerSpec::relu()}, 0);
  EXPECT_EQ(relu.forward(x).data, Eigen::Vector3d(0.0, 0.0, 2.0));
  const auto sig = nn::Network<double>::build({LayerSpec::sigmoid()}, 0);
  EXPECT_EQ(sig.forward(x).data[1], 0.5);
}

TEST(Layers, ShapesChain) {
  const auto net = nn::Network<double>::build(
      {LayerSpec::conv2d(1, 8, 3, 3, 1, 1), LayerSpec::maxpool2d(2, 4), LayerSpec::avgpool_global(),
       LayerSpec::dense(8, 4)},
      0);
  EXPECT_EQ(net.output_shape({1, 64, 1000}), (nn::Shape{4, 1, 1}));
  EXPECT_THROW(net.output_shape({2, 64, 1000}), std::invalid_argument);
  EXPECT_THROW(net.forward(Tensor<double>({2, 4, 4})), std::invalid_argument);
}

TEST(Layers, UpsampleRealScale) {
  const auto net = nn::Network<double>::build({LayerSpec::upsample2d(1.0, 3.125)}, 0);
  EXPECT_EQ(net.output_shape({4, 1, 320}), (nn::Shape{4, 1, 1000}));
  Tensor<double> x({1, 1, 4});
  x.data << 1, 2, 3, 4;
  const auto y = nn::Network<double>::build({LayerSpec::upsample2d(1.0, 2.0)}, 0).forward(x);
  EXPECT_EQ(y.data.transpose(), (Eigen::RowVectorXd(8) << 1, 1, 2, 2, 3, 3, 4, 4).finished());
}

TEST(Layers, MaxpoolPicksWindowMaximum) {
  Tensor<double> x({1, 2, 4});
  x.data << 1, 5, 2, 0, 3, 4, 8, 7;
  const auto y = nn::Network<double>::build({LayerSpec::maxpool2d(2, 2)}, 0).forward(x);
  EXPECT_EQ(y.shape, (nn::Shape{1, 1, 2}));
  EXPECT_EQ(y.data, Eigen::Vector2d(5, 8));
}

TEST(Layers, InvalidSpecsRejected) {
  EXPECT_THROW(nn::Network<double>::build({LayerSpec::conv2d(0, 1, 3, 3)}, 0), std::invalid_argument);
  EXPECT_THROW(nn::Network<double>::build({LayerSpec::upsample2d(0.5, 1.0)}, 0), std::invalid_argument);
  EXPECT_THROW(nn::Network<double>::build({LayerSpec::maxpool2d(0, 2)}, 0), std::invalid_argument);
}

TEST(Gradients, EveryLayerKindMatchesFiniteDifferences) {
  for (auto kind : check::kAllLayerKinds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed * 7919 + static_cast<int>(kind));
      auto [layers, in] = check::random_layer_case(kind, rng);
      auto net = nn::Network<double>::build(layers, seed);
      check::randomize_biases(net, rng);
      const auto r = check::gradient_check(net, check::random_input(in, rng), rng);
      EXPECT_LE(r.max_rel_error, 1e-4) << nn::to_string(kind) << " seed " << seed;
      EXPECT_GT(r.checked, 0);
    }
  }
}

TEST(Gradients, TwoLayerNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  auto net = nn::Network<double>::build(
      {LayerSpec::conv2d(2, 4, 3, 3, 1, 1), LayerSpec::sigmoid(), LayerSpec::avgpool_global(),
       LayerSpec::dense(4, 3)},
      3);
  check::randomize_biases(net, rng);
  ASSERT_LE(net.parameter_count(), 500);
  const auto r = check::gradient_check(net, check::random_input({2, 5, 6}, rng), rng);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Gradients, ConstantLossGivesZeroGradients) {
  auto net = nn::Network<double>::build({LayerSpec::dense(6, 3), LayerSpec::sigmoid()}, 1);
  nn::Tape<double> tape;
  net.forward(Tensor<double>::constant({6, 1, 1}, 0.3), tape);
  auto g = net.zero_gradients();
  const auto dx = net.backward(tape, Tensor<double>({3, 1, 1}), &g);
  EXPECT_EQ(dx.data.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& v : g.grads) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradients, BackwardBeforeForwardThrows) {
  auto net = nn::Network<double>::build({LayerSpec::dense(2, 2)}, 1);
  nn::Tape<double> tape;
  EXPECT_THROW(net.backward(tape, Tensor<double>({2, 1, 1}), nullptr), std::logic_error);
}

TEST(Gradients, FrozenParametersReceiveNoGradient) {
  auto teacher = nn::Network<double>::build({LayerSpec::dense(4, 2), LayerSpec::sigmoid()}, 1);
  auto student = nn::Network<double>::build({LayerSpec::dense(3, 4)}, 2);
  teacher.freeze();
  const auto before = teacher.params();

  nn::Adam<double> opt({0.1});
  std::mt19937_64 rng(3);
  for (int step = 0; step < 5; ++step) {
    nn::Tape<double> ts, tt;
    const auto x = check::random_input({3, 1, 1}, rng);
    const auto mid = student.forward(x, ts);
    const auto out = teacher.forward(mid, tt);
    const auto loss = nn::bce_loss(out, Tensor<double>::constant(out.shape, 0.9));
    nn::Gradients<double> tg = teacher.zero_gradients();
    const auto dmid = teacher.backward(tt, loss.grad, &tg);
    for (const auto& g : tg.grads) EXPECT_EQ(g.size(), 0);
    teacher.backward(tt, loss.grad);
    nn::Gradients<double> sg = student.zero_gradients();
    student.backward(ts, dmid, &sg);
    opt.step(student, sg);
    opt.step(teacher, tg);
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_FALSE(teacher.params()[i].tensor.grad.has_value());
    EXPECT_TRUE(teacher.params()[i].tensor.data == before[i].tensor.data);
  }
}

TEST(Bce, ClosedForms) {
  const auto half = Tensor<double>::constant({5, 1, 1}, 0.5);
  EXPECT_NEAR(nn::bce_loss(half, half).loss, std::log(2.0), 1e-15);

  Tensor<double> t({4, 1, 1}, Eigen::Vector4d(0.0, 1.0, 1.0, 0.0));
  EXPECT_LE(nn::bce_loss(t, t).loss, 1e-6);

  Tensor<double> p({3, 1, 1}, Eigen::Vector3d(0.9, 0.2, 0.5));
  Tensor<double> q({3, 1, 1}, Eigen::Vector3d(0.1, 0.7, 0.5));
  const auto r = nn::bce_loss(p, q);
  EXPECT_GT(r.grad.data[0], 0.0);
  EXPECT_LT(r.grad.data[1], 0.0);
  EXPECT_EQ(r.grad.data[2], 0.0);
  EXPECT_THROW(nn::bce_loss(p, t), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd theta = Eigen::VectorXd::LinSpaced(4, -1, 1);
  const Eigen::VectorXd keep = theta;
  nn::AdamState<double> st;
  for (int i = 0; i < 10; ++i) nn::adam_step<double>(theta, Eigen::VectorXd::Zero(4), st);
  EXPECT_TRUE(theta == keep);
}

TEST(Adam, FirstStepIsLearningRate) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  nn::AdamState<double> st;
  nn::adam_step<double>(theta, Eigen::Vector3d(0.3, -2.0, 40.0), st, {0.01});
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(theta[0], -0.01, 1e-9);
  EXPECT_NEAR(theta[1], 0.01, 1e-9);
  EXPECT_NEAR(theta[2], -0.01, 1e-9);
}

TEST(Adam, QuadraticBowlConverges) {
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  nn::AdamState<double> st;
  for (int i = 0; i < 200; ++i) nn::adam_step<double>(theta, 2.0 * theta, st, {0.1});
  EXPECT_LT(std::abs(theta[0]), 1e-2);
}

TEST(Network, ForwardIsDeterministic) {
  const std::vector<LayerSpec> layers{LayerSpec::conv2d(1, 4, 3, 3, 1, 1), LayerSpec::relu(),
                                      LayerSpec::maxpool2d(2, 2), LayerSpec::avgpool_global(),
                                      LayerSpec::dense(4, 2), LayerSpec::sigmoid()};
  const auto a = nn::Network<double>::build(layers, 11);
  const auto b = nn::Network<double>::build(layers, 11);
  std::mt19937_64 rng(1);
  const auto x = check::random_input({1, 8, 8}, rng);
  EXPECT_TRUE(a.forward(x).data == b.forward(x).data);
  EXPECT_EQ(nn::parameter_hash(a), nn::parameter_hash(b));
  EXPECT_NE(nn::parameter_hash(a), nn::parameter_hash(nn::Network<double>::build(layers, 12)));
}

TEST(Network, FloatInferenceTracksDouble) {
  const auto net = nn::Network<double>::build(
      {LayerSpec::conv2d(2, 3, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::upsample2d(1.0, 2.0)}, 4);
  std::mt19937_64 rng(2);
  const auto x = check::random_input({2, 3, 5}, rng);
  const auto yd = net.forward(x);
  const auto yf = net.cast<float>().forward(x.template cast<float>());
  EXPECT_LE((yf.data.template cast<double>() - yd.data).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto net = nn::Network<double>::build(
      {LayerSpec::conv2d(29, 8, 1, 3, 0, 1), LayerSpec::relu(), LayerSpec::upsample2d(1.0, 3.125),
       LayerSpec::dense(8, 2)},
      5);
  net.params()[0].trainable = false;
  const nn::Metadata meta{{"classes", "a|b"}, {"note", ""}};
  const auto path = std::filesystem::temp_directory_path() / "nicu_nn_roundtrip.nnck";
  nn::save_checkpoint(path, net, meta);
  const auto back = nn::load_checkpoint(path);
  EXPECT_EQ(back.meta, meta);
  EXPECT_EQ(back.network.layers(), net.layers());
  ASSERT_EQ(back.network.params().size(), net.params().size());
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    EXPECT_EQ(back.network.params()[i].name, net.params()[i].name);
    EXPECT_EQ(back.network.params()[i].trainable, net.params()[i].trainable);
    EXPECT_TRUE(back.network.params()[i].tensor.data == net.params()[i].tensor.data);
  }
  EXPECT_EQ(nn::parameter_hash(back.network), nn::parameter_hash(net));
  EXPECT_EQ(nn::encode_checkpoint(back.network, back.meta), nn::encode_checkpoint(net, meta));
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto net = nn::Network<double>::build({LayerSpec::dense(2, 2)}, 5);
  std::string bytes = nn::encode_checkpoint(net);
  EXPECT_THROW(nn::decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  EXPECT_THROW(nn::decode_checkpoint(bytes + "x"), std::runtime_error);
  bytes[0] = 'X';
  EXPECT_THROW(nn::decode_checkpoint(bytes), std::runtime_error);
  EXPECT_THROW(nn::load_checkpoint("/nonexistent/model.nnck"), std::runtime_error);
}
