#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "cnav/ad/adam.hpp"
#include "cnav/ad/ops.hpp"
#include "cnav/ad/tensor.hpp"
#include "cnav/rng.hpp"

using namespace cnav;
using ad::Tensor;

namespace {

Tensor random_param(const ad::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::parameter(shape, std::move(v));
}

// Central finite differences against the recorded gradient, element by
// element (or a sample of elements when the tensor is large).
void check_gradients(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn,
                     Rng& rng, double rtol = 1e-4, double atol = 1e-6, double h = 1e-5,
                     int max_per_param = 16) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  ad::backward(loss);

  for (auto& p : params) {
    const int64_t n = p.size();
    for (int64_t probe = 0; probe < std::min<int64_t>(n, max_per_param); ++probe) {
      const int64_t i =
          n <= max_per_param ? probe : static_cast<int64_t>(rng.uniform_index(n));
      const double saved = p.values()[i];
      double plus, minus;
      {
        ad::NoGradGuard ng;
        p.values()[i] = saved + h;
        plus = loss_fn().item();
        p.values()[i] = saved - h;
        minus = loss_fn().item();
        p.values()[i] = saved;
      }
      const double fd = (plus - minus) / (2.0 * h);
      const double analytic = p.grad()[i];
      const double err = std::fabs(fd - analytic);
      const double tol = atol + rtol * std::max(std::fabs(fd), std::fabs(analytic));
      CAPTURE(i);
      CAPTURE(fd);
      CAPTURE(analytic);
      CHECK(err <= tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul matches a naive triple-loop oracle") {
  Rng rng(11);
  const int m = 2, k = 3, n = 2;
  Tensor a = random_param({m, k}, rng);
  Tensor b = random_param({k, n}, rng);
  Tensor c = ad::matmul(a, b);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double expect = 0.0;
      for (int p = 0; p < k; ++p) expect += a.values()[i * k + p] * b.values()[p * n + j];
      CHECK(c.values()[i * n + j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("batched matmul matches per-batch oracle") {
  Rng rng(12);
  Tensor a = random_param({2, 3, 2, 4}, rng);
  Tensor b = random_param({2, 3, 4, 3}, rng);
  Tensor c = ad::matmul(a, b);
  REQUIRE(c.shape() == ad::Shape{2, 3, 2, 3});
  for (int t = 0; t < 6; ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) {
        double expect = 0.0;
        for (int p = 0; p < 4; ++p)
          expect += a.values()[t * 8 + i * 4 + p] * b.values()[t * 12 + p * 3 + j];
        CHECK(c.values()[t * 6 + i * 3 + j] == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("matmul shape errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax of uniform logits is uniform and rows sum to one") {
  Tensor x = Tensor::constant({4}, {0.7, 0.7, 0.7, 0.7});
  Tensor y = ad::softmax(x, 0);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(3);
  Tensor z = random_param({5, 7}, rng, -3.0, 3.0);
  Tensor s = ad::softmax(z, 1);
  for (int r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 7; ++c) sum += s.values()[r * 7 + c];
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax is invariant to adding a constant to a row") {
  Rng rng(4);
  std::vector<double> logits(6);
  for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
  Tensor a = Tensor::constant({6}, logits);
  for (auto& v : logits) v += 13.5;
  Tensor b = Tensor::constant({6}, logits);
  Tensor sa = ad::softmax(a, 0);
  Tensor sb = ad::softmax(b, 0);
  for (int i = 0; i < 6; ++i) CHECK(std::fabs(sa.values()[i] - sb.values()[i]) < 1e-9);
}

TEST_CASE("layer_norm output has mean 0 and variance 1 before affine") {
  Rng rng(5);
  Tensor x = random_param({3, 8}, rng, -4.0, 4.0);
  Tensor gain = Tensor::constant({8}, std::vector<double>(8, 1.0));
  Tensor bias = Tensor::constant({8}, std::vector<double>(8, 0.0));
  Tensor y = ad::layer_norm(x, gain, bias);
  for (int r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 8; ++c) mean += y.values()[r * 8 + c];
    mean /= 8;
    for (int c = 0; c < 8; ++c) {
      const double d = y.values()[r * 8 + c] - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-4);  // eps in the denominator shifts it slightly
  }
}

TEST_CASE("backward of sum(x^2) is exactly 2x") {
  Rng rng(6);
  Tensor x = random_param({5}, rng);
  Tensor loss = ad::sum_all(ad::square(x));
  ad::backward(loss);
  for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == 2.0 * x.values()[i]);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::parameter({3}, {1.0, 2.0, 3.0});
  Tensor y = ad::square(x);
  CHECK_THROWS_AS(ad::backward(y), ad::UsageError);
}

TEST_CASE("three-layer MLP gradients match finite differences") {
  Rng rng(7);
  Tensor x = Tensor::constant({4, 6}, [&] {
    std::vector<double> v(24);
    for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    return v;
  }());
  Tensor w1 = random_param({6, 8}, rng), b1 = random_param({8}, rng);
  Tensor w2 = random_param({8, 8}, rng), b2 = random_param({8}, rng);
  Tensor w3 = random_param({8, 1}, rng), b3 = random_param({1}, rng);
  auto loss_fn = [&] {
    Tensor h1 = ad::relu(ad::add(ad::matmul(x, w1), b1));
    Tensor h2 = ad::relu(ad::add(ad::matmul(h1, w2), b2));
    Tensor out = ad::add(ad::matmul(h2, w3), b3);
    return ad::mean_all(ad::square(out));
  };
  check_gradients({w1, b1, w2, b2, w3, b3}, loss_fn, rng);
}

TEST_CASE("attention block built from ops passes the finite-difference check") {
  // 2 heads, d_k = 4, three tokens.
  Rng rng(8);
  const int n = 3, dim = 8, dk = 4;
  Tensor x = Tensor::constant({n, dim}, [&] {
    std::vector<double> v(n * dim);
    for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    return v;
  }());
  Tensor wq = random_param({dim, dim}, rng), wk = random_param({dim, dim}, rng),
         wv = random_param({dim, dim}, rng), wo = random_param({dim, dim}, rng);
  auto loss_fn = [&] {
    Tensor q = ad::matmul(x, wq), k = ad::matmul(x, wk), v = ad::matmul(x, wv);
    std::vector<Tensor> heads;
    for (int hh = 0; hh < 2; ++hh) {
      Tensor qi = ad::slice_last(q, hh * dk, (hh + 1) * dk);
      Tensor ki = ad::slice_last(k, hh * dk, (hh + 1) * dk);
      Tensor vi = ad::slice_last(v, hh * dk, (hh + 1) * dk);
      Tensor scores = ad::scalar_mul(ad::matmul(qi, ad::transpose_last2(ki)), 1.0 / 2.0);
      heads.push_back(ad::matmul(ad::softmax(scores, 1), vi));
    }
    return ad::mean_all(ad::square(ad::matmul(ad::concat(heads, 1), wo)));
  };
  check_gradients({wq, wk, wv, wo}, loss_fn, rng);
}

TEST_CASE("every op passes randomized finite-difference checks") {
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    Tensor a = random_param({3, 4}, rng, 0.2, 1.5);   // positive: safe for log
    Tensor b = random_param({3, 4}, rng, 0.2, 1.5);
    Tensor suffix = random_param({4}, rng);
    Tensor scalar = random_param({1}, rng);
    Tensor m1 = random_param({3, 4}, rng);
    Tensor m2 = random_param({4, 2}, rng);
    Tensor batched = random_param({2, 3, 4}, rng);
    Tensor gain = random_param({4}, rng, 0.5, 1.5);
    Tensor bias = random_param({4}, rng);

    std::vector<Tensor> params{a, b, suffix, scalar, m1, m2, batched, gain, bias};
    auto loss_fn = [&] {
      Tensor t = ad::add(a, b);
      t = ad::sub(t, suffix);
      t = ad::mul(t, b);
      t = ad::add(t, scalar);
      t = ad::scalar_mul(t, 0.7);
      t = ad::add_scalar(t, 0.3);
      Tensor u = ad::exp(ad::scalar_mul(t, 0.2));
      u = ad::log(ad::add_scalar(u, 1.0));
      u = ad::square(u);
      u = ad::clamp(u, -10.0, 50.0);
      Tensor mm = ad::matmul(ad::mul(m1, t), m2);               // [3,2]
      Tensor cc = ad::concat({mm, mm}, 1);                      // [3,4]
      Tensor sl = ad::slice_last(cc, 1, 4);                     // [3,3]
      Tensor tr = ad::transpose(sl, {1, 0});                    // [3,3]
      Tensor rs = ad::reshape(tr, {9});
      Tensor sm = ad::softmax(ad::reshape(batched, {6, 4}), 1);
      Tensor ln = ad::layer_norm(ad::reshape(batched, {6, 4}), gain, bias);
      Tensor red = ad::add(ad::sum(ln, 0), ad::mean(sm, 0));    // [4]
      Tensor total = ad::add(ad::mean_all(red), ad::sum_all(rs));
      return ad::add(total, ad::mean_all(ad::relu(t)));
    };
    check_gradients(params, loss_fn, rng, 1e-4, 1e-6, 1e-5, 6);
  }
}

TEST_CASE("identical seeds give bit-identical forward and backward") {
  auto run = [] {
    Rng rng(77);
    Tensor w = random_param({6, 6}, rng);
    Tensor x = Tensor::constant({2, 6}, [&] {
      std::vector<double> v(12);
      for (auto& e : v) e = rng.uniform(-1.0, 1.0);
      return v;
    }());
    Tensor loss = ad::mean_all(ad::square(ad::relu(ad::matmul(x, w))));
    ad::backward(loss);
    return std::pair{loss.item(), w.grad()};
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(10);
  Tensor w = random_param({4, 4}, rng);
  Tensor x = Tensor::constant({4}, {0.3, -0.2, 0.9, 0.4});
  auto make_l1 = [&] { return ad::mean_all(ad::square(ad::matmul(ad::reshape(x, {1, 4}), w))); };
  auto make_l2 = [&] { return ad::sum_all(ad::relu(ad::matmul(ad::reshape(x, {1, 4}), w))); };
  const double ca = 0.7, cb = -1.3;

  w.zero_grad();
  ad::backward(make_l1());
  const std::vector<double> g1 = w.grad();
  w.zero_grad();
  ad::backward(make_l2());
  const std::vector<double> g2 = w.grad();
  w.zero_grad();
  ad::backward(ad::add(ad::scalar_mul(make_l1(), ca), ad::scalar_mul(make_l2(), cb)));
  for (int i = 0; i < 16; ++i)
    CHECK(std::fabs(w.grad()[i] - (ca * g1[i] + cb * g2[i])) < 1e-9);
}

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
  Tensor p = Tensor::parameter({3}, {1.0, -2.0, 0.5});
  ad::Adam opt({p}, {});
  p.zero_grad();
  const auto before = p.values();
  opt.step();
  CHECK(p.values() == before);
}

TEST_CASE("first adam step is close to -lr * sign(g)") {
  Tensor p = Tensor::parameter({2}, {0.0, 0.0});
  ad::AdamConfig cfg;
  cfg.learning_rate = 0.01;
  ad::Adam opt({p}, cfg);
  p.grad() = {0.25, -3.0};
  opt.step();
  CHECK(p.values()[0] == doctest::Approx(-0.01).epsilon(1e-5));
  CHECK(p.values()[1] == doctest::Approx(0.01).epsilon(1e-5));
}

TEST_CASE("adam descends a quadratic bowl monotonically") {
  Tensor p = Tensor::parameter({2}, {2.0, -1.5});
  ad::AdamConfig cfg;
  cfg.learning_rate = 0.05;
  ad::Adam opt({p}, cfg);
  double prev = 1e300;
  for (int i = 0; i < 10; ++i) {
    opt.zero_grad();
    Tensor loss = ad::sum_all(ad::square(p));
    ad::backward(loss);
    CHECK(loss.item() < prev);
    prev = loss.item();
    opt.step();
  }
}

TEST_CASE("no-grad forward builds no graph") {
  Tensor w = Tensor::parameter({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ad::NoGradGuard ng;
  Tensor y = ad::matmul(Tensor::constant({1, 2}, {1.0, 2.0}), w);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}
