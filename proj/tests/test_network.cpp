#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "emospec/nn/adam.hpp"
#include "emospec/nn/gradcheck.hpp"
#include "emospec/nn/network.hpp"

using namespace emospec;
using namespace emospec::nn;

namespace {

NetworkSpec small_spec(std::size_t classes = 4) {
  NetworkSpec s;
  s.input = {6, 5, 3};
  s.layers = {Conv2D{2}, ReLU{}, MaxPool2D{}, Flatten{}, Dense{6}, ReLU{}, Dense{classes}, Softmax{}};
  return s;
}

template <typename T>
Tensor<T> random_batch(const NetworkSpec& s, std::size_t B, std::uint64_t seed) {
  Shape shape{B};
  shape.insert(shape.end(), s.input.begin(), s.input.end());
  Tensor<T> x(shape);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.values) v = static_cast<T>(n(rng));
  return x;
}

}  // namespace

TEST(Network, ZeroFinalDenseGivesUniformProbabilitiesAndLnKLoss) {
  const auto s = small_spec(4);
  Network<double> net(s, 1);
  for (auto& t : net.mutable_params()[6]) t.fill(0.0);
  const auto probs = infer(net, random_batch<double>(s, 3, 2));
  for (double p : probs.values) EXPECT_NEAR(p, 0.25, 1e-15);
  const auto y = one_hot<double>(std::vector<int>{0, 1, 3}, 4);
  EXPECT_NEAR(loss_ce(probs, y), std::log(4.0), 1e-9);
}

TEST(Network, ArgmaxTiesGoToLowestIndex) {
  Tensor<double> p({2, 3}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.1, 0.7, 0.2});
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{0, 1}));
}

TEST(Network, WrongInputShapeNamesLayer) {
  Network<float> net(small_spec(), 1);
  Tensor<float> x({2, 6, 4, 3});
  try {
    (void)infer(net, x);
    FAIL() << "expected a shape error";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("layer 0 (Conv2D)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(B, 6, 5, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2, 6, 4, 3)"), std::string::npos) << msg;
  }
}

TEST(Network, StaleCacheRejected) {
  const auto s = small_spec();
  Network<double> net(s, 1);
  ForwardCache<double> cache;
  Rng rng(1);
  forward(net, random_batch<double>(s, 2, 3), cache, ForwardOptions{true, false}, &rng);
  net.mutable_params()[0][0][0] += 1.0;
  const auto y = one_hot<double>(std::vector<int>{0, 1}, 4);
  try {
    (void)backward(net, cache, y);
    FAIL() << "expected a stale cache error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("stale"), std::string::npos);
  }
}

TEST(Network, InferenceCacheRejectedByBackward) {
  const auto s = small_spec();
  Network<double> net(s, 1);
  ForwardCache<double> cache;
  forward(net, random_batch<double>(s, 2, 3), cache, ForwardOptions{false, false});
  EXPECT_THROW((void)backward(net, cache, one_hot<double>(std::vector<int>{0, 1}, 4)), InvalidArgument);
}

TEST(Network, ZeroUpstreamGradientGivesZeroWeightGradients) {
  const auto s = small_spec();
  Network<double> net(s, 1);
  ForwardCache<double> cache;
  Rng rng(1);
  forward(net, random_batch<double>(s, 2, 3), cache, ForwardOptions{true, false}, &rng);
  const auto g = backward_from(net, cache, net.layer_count() - 1, Tensor<double>({2, 4}));
  for (const auto& layer : g.params)
    for (const auto& t : layer)
      for (double v : t.values) EXPECT_EQ(v, 0.0);
}

TEST(Network, NonFiniteActivationNamesLayer) {
  const auto s = small_spec();
  Network<float> net(s, 1);
  net.mutable_params()[4][0][0] = std::numeric_limits<float>::infinity();
  auto x = random_batch<float>(s, 1, 4);
  for (auto& v : x.values) v = std::abs(v) + 1.0f;
  net.mutable_params()[0][1].fill(10.0f);
  try {
    (void)infer(net, x);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 4 (Dense)"), std::string::npos) << e.what();
  }
}

TEST(Network, SameSeedSameWeights) {
  const auto s = small_spec();
  EXPECT_EQ(Network<float>(s, 7).weights_fingerprint(), Network<float>(s, 7).weights_fingerprint());
  EXPECT_NE(Network<float>(s, 7).weights_fingerprint(), Network<float>(s, 8).weights_fingerprint());
}

TEST(Network, SpecFingerprintTracksArchitecture) {
  auto a = small_spec(), b = small_spec();
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.layers[0] = Conv2D{3};
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Network, InferenceIsDeterministicWithDropout) {
  auto s = small_spec();
  s.layers.insert(s.layers.begin() + 5, Dropout{0.5});
  Network<float> net(s, 3);
  const auto x = random_batch<float>(s, 4, 5);
  EXPECT_EQ(infer(net, x).values, infer(net, x).values);
}

TEST(Network, FloatAndDoubleAgree) {
  const auto s = small_spec();
  Network<double> d(s, 5);
  const auto f = d.cast<float>();
  const auto xd = random_batch<double>(s, 3, 6);
  const auto pd = infer(d, xd);
  const auto pf = infer(f, xd.cast<float>());
  for (std::size_t i = 0; i < pd.size(); ++i) EXPECT_NEAR(pd[i], pf[i], 1e-5);
}

TEST(Network, PredictMatchesArgmax) {
  const auto s = small_spec();
  Network<float> net(s, 2);
  const auto x = random_batch<float>(s, 5, 9);
  EXPECT_EQ(predict(net, x), argmax_rows(infer(net, x)));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  NetworkSpec s;
  s.input = {2};
  s.layers = {Dense{2}, Softmax{}};
  Network<double> net(s, 1);
  const auto before = net.params();
  AdamState<double> st(net);
  ParamList<double> g = net.params();
  for (auto& layer : g)
    for (auto& t : layer)
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = (j % 2 ? -1.0 : 1.0) * static_cast<double>(j + 1);
  AdamConfig cfg;
  adam_step(net, st, g, cfg);
  // With bias correction the first update is -lr * g / (|g| + eps).
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t j = 0; j < g[0][t].size(); ++j) {
      const double gj = g[0][t][j];
      EXPECT_NEAR(net.params()[0][t][j] - before[0][t][j], -cfg.lr * gj / (std::abs(gj) + cfg.epsilon), 1e-12);
    }
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, InvalidConfigRejected) {
  AdamConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Gradcheck, AllLayerTypesPass) {
  const auto report = gradcheck();
  for (const auto& e : report.entries) {
    EXPECT_TRUE(e.pass) << e.layer << " max rel error " << e.max_rel_error;
    EXPECT_LT(e.max_rel_error, 1e-4) << e.layer;
    EXPECT_GT(e.checked, 0u) << e.layer;
  }
  EXPECT_TRUE(report.pass());
}

TEST(Gradcheck, EveryLayerTypeListedOnce) {
  const auto report = gradcheck();
  std::set<std::string> names;
  for (const auto& e : report.entries) EXPECT_TRUE(names.insert(e.layer).second) << e.layer;
  const std::set<std::string> want{"Conv2D",       "ReLU", "MaxPool2D", "Dropout", "Flatten",
                                   "RepeatVector", "LSTM", "Dense",     "Softmax"};
  EXPECT_EQ(names, want);
}

TEST(Gradcheck, CorruptedConvBackwardFailsOnConv) {
  GradcheckOptions opt;
  opt.corrupt_conv = true;
  const auto report = gradcheck(opt);
  EXPECT_FALSE(report.pass());
  for (const auto& e : report.entries) EXPECT_EQ(e.pass, e.layer != "Conv2D") << e.layer;
}

TEST(Gradcheck, PassesAcrossSeeds) {
  for (std::uint64_t seed = 2; seed < 6; ++seed) {
    GradcheckOptions opt;
    opt.seed = seed;
    EXPECT_TRUE(gradcheck(opt).pass()) << "seed " << seed;
  }
}
