#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gopo/core.hpp"
#include "gopo/neural.hpp"
#include "oracles.hpp"

using namespace gopo;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Mlp random_net(std::mt19937_64& rng, Head head) {
  std::vector<std::size_t> sizes{1 + rng() % 6};
  const std::size_t hidden_layers = 1 + rng() % 2;
  for (std::size_t i = 0; i < hidden_layers; ++i) sizes.push_back(1 + rng() % 64);
  sizes.push_back(head == Head::kSoftmax ? 2 + rng() % 5 : 1 + rng() % 3);
  Mlp net = Mlp::random(sizes, head, rng);
  // Non-zero biases so every parameter is exercised.
  for (auto& p : net.parameters().values()) p += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
  return net;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("zero networks") {
  const Mlp soft({3, 5, 4}, Head::kSoftmax);
  const auto p = soft.forward(std::vector<double>{1.0, -2.0, 0.5});
  REQUIRE(p.size() == 4);
  for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
  const Mlp lin({3, 5, 1}, Head::kLinear);
  CHECK(lin.forward(std::vector<double>{1.0, 2.0, 3.0})[0] == 0.0);
}

TEST_CASE("golden output of a seeded network") {
  std::mt19937_64 rng(2024);
  const Mlp net = Mlp::random({4, 8, 3}, Head::kSoftmax, rng);
  const auto p = net.forward(std::vector<double>{0.5, -1.0, 0.25, 2.0});
  const std::vector<double> golden{0.1120501189324128, 0.64870185851895301, 0.23924802254863414};
  REQUIRE(p.size() == golden.size());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(golden[i]).epsilon(1e-12));
}

TEST_CASE("input size mismatch is an input error") {
  const Mlp net({3, 4, 2}, Head::kLinear);
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0, 2.0}), InputError);
  CHECK_THROWS_AS(net.backward(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0}), InputError);
}

TEST_CASE("property: softmax outputs are a strictly positive distribution") {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 300; ++trial) {
    const Mlp net = random_net(rng, Head::kSoftmax);
    const auto p = net.forward(random_vector(rng, net.input_size(), 3.0));
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-9);
    for (double x : p) CHECK(x > 0.0);
  }
}

TEST_CASE("softmax is stable for large logits") {
  Eigen::VectorXd logits(4);
  logits << 1000.0, -1000.0, 999.0, 0.0;
  const Eigen::VectorXd p = softmax(logits);
  CHECK(p.allFinite());
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  Eigen::VectorXd shifted = logits.array() - 500.0;
  CHECK((softmax(shifted) - p).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero upstream gives a zero gradient") {
  std::mt19937_64 rng(83);
  const Mlp net = random_net(rng, Head::kSoftmax);
  const auto g = net.backward(random_vector(rng, net.input_size()), std::vector<double>(net.output_size(), 0.0));
  for (double x : g.values()) CHECK(x == 0.0);
}

TEST_CASE("property: backward matches finite differences") {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 100; ++trial) {
    const Head head = trial % 2 ? Head::kSoftmax : Head::kLinear;
    Mlp net = random_net(rng, head);
    const auto x = random_vector(rng, net.input_size());
    const auto upstream = random_vector(rng, net.output_size());
    const ParameterVector analytic = net.backward(x, upstream);
    ParameterVector& params = net.parameters();
    const double err = oracle::max_gradient_error(params, analytic, [&] { return dot(net.forward(x), upstream); });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("duplicated batch doubles the gradient") {
  std::mt19937_64 rng(97);
  const Mlp net = random_net(rng, Head::kSoftmax);
  const auto x = random_vector(rng, net.input_size());
  const auto up = random_vector(rng, net.output_size());
  const ParameterVector single = net.backward(x, up);
  const ParameterVector batch = net.backward_batch({x, x}, {up, up});
  for (std::size_t i = 0; i < single.size(); ++i) CHECK(batch[i] == 2.0 * single[i]);
}

TEST_CASE("parameter vectors") {
  const std::vector<std::size_t> layout{3, 4, 2};
  CHECK(ParameterVector::count_for(layout) == 3 * 4 + 4 + 4 * 2 + 2);
  std::vector<double> values(ParameterVector::count_for(layout));
  std::iota(values.begin(), values.end(), 0.0);
  ParameterVector p(layout, values);
  Mlp net(layout, Head::kLinear);
  net.set_parameters(p);
  CHECK(net.parameters() == p);
  CHECK(net.parameters().values() == values);
  CHECK_THROWS_AS(ParameterVector(layout, std::vector<double>(3)), InputError);

  ParameterVector g = ParameterVector::zeros(layout);
  g[0] = 3.0;
  g[1] = 4.0;
  CHECK(g.norm() == 5.0);
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(g.norm() == doctest::Approx(1.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(1.0));
  CHECK(g[0] == doctest::Approx(0.6));
  g[2] = std::nan("");
  CHECK_FALSE(g.all_finite());
}

TEST_CASE("adam") {
  const std::vector<std::size_t> layout{2, 1};
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterVector p(layout, {0.5, -0.25, 1.0});
    const ParameterVector before = p;
    AdamState s = AdamState::for_parameters(p);
    adam_step(p, ParameterVector::zeros(layout), s, 0.1);
    CHECK(p == before);
  }
  SUBCASE("first step moves each coordinate by lr in the gradient's sign") {
    ParameterVector p(layout, {0.5, -0.25, 1.0});
    AdamState s = AdamState::for_parameters(p);
    const double lr = 0.01;
    const std::vector<double> g{2.0, -0.3, 7.0};
    adam_step(p, ParameterVector(layout, g), s, lr);
    // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(0.5 - lr * 2.0 / (2.0 + kAdamEps)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-0.25 + lr * 0.3 / (0.3 + kAdamEps)).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(1.0 - lr).epsilon(1e-8));
    CHECK(s.step == 1);
  }
  SUBCASE("second step matches the bias-corrected closed form") {
    ParameterVector p(layout, {0.0, 0.0, 0.0});
    AdamState s = AdamState::for_parameters(p);
    const double lr = 0.1;
    adam_step(p, ParameterVector(layout, {1.0, 1.0, 1.0}), s, lr);
    adam_step(p, ParameterVector(layout, {3.0, 3.0, 3.0}), s, lr);
    const double m = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1 - 0.81);
    const double v = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1 - 0.999 * 0.999);
    const double expected = -lr / (1.0 + kAdamEps) - lr * m / (std::sqrt(v) + kAdamEps);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("identical inputs give identical trajectories") {
    std::mt19937_64 rng(3);
    ParameterVector a(layout, {0.1, 0.2, 0.3}), b = a;
    AdamState sa = AdamState::for_parameters(a), sb = sa;
    for (int i = 0; i < 20; ++i) {
      const ParameterVector g(layout, random_vector(rng, 3));
      adam_step(a, g, sa, 0.05);
      adam_step(b, g, sb, 0.05);
    }
    CHECK(a == b);
    CHECK(sa == sb);
  }
  SUBCASE("layout mismatch") {
    ParameterVector p(layout, {0.1, 0.2, 0.3});
    AdamState s = AdamState::for_parameters(p);
    CHECK_THROWS_AS(adam_step(p, ParameterVector::zeros({1, 1}), s, 0.1), InputError);
  }
}

TEST_CASE("checkpoints reload bit-exactly") {
  std::mt19937_64 rng(101);
  Mlp net = random_net(rng, Head::kSoftmax);
  AdamState opt = AdamState::for_parameters(net.parameters());
  for (int i = 0; i < 3; ++i) {
    adam_step(net.parameters(), ParameterVector(net.parameters().layout(), random_vector(rng, net.parameters().size())),
              opt, 1e-3);
  }
  std::stringstream buf;
  save_checkpoint(buf, net, opt);
  Mlp loaded;
  AdamState loaded_opt;
  load_checkpoint(buf, loaded, loaded_opt);
  CHECK(loaded == net);
  CHECK(loaded_opt == opt);

  std::stringstream bad("not a checkpoint\n");
  CHECK_THROWS(load_checkpoint(bad, loaded, loaded_opt));
}
