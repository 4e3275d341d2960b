#include <cmath>
#include <vector>

#include "cct/error.hpp"
#include "cct/tensor.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cct;
using testing::Gen;

namespace {

std::vector<double> brute_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul identity and dot product") {
    Tape tape = Tape::no_grad();
    const auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const auto m = Tensor::matrix(2, 2, {1, 2, 3, 4});
    const auto r = matmul(tape, eye, m);
    CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{1, 2, 3, 4});

    const auto dot = matmul(tape, Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
    CHECK(dot.shape() == Shape{1, 1});
    CHECK(dot[0] == 11.0);
  }

  TEST_CASE("matmul matches triple loop") {
    Gen g(7);
    Tape tape = Tape::no_grad();
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = g.values(12), b = g.values(8);
      const auto r = matmul(tape, Tensor::matrix(3, 4, a), Tensor::matrix(4, 2, b));
      const auto want = brute_matmul(a, b, 3, 4, 2);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(r[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("matmul rejects mismatched inner dimension") {
    Tape tape;
    CHECK_THROWS_AS(matmul(tape, Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(2, 2, std::vector<double>(4))),
                    DimensionError);
    CHECK_THROWS_AS(Tensor::matrix(2, 2, {1, 2, 3}), DimensionError);
  }

  TEST_CASE("relu forward and gradient") {
    Tape tape;
    auto x = Tensor({3}, {-1, 0, 2});
    const auto y = relu(tape, x);
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{0, 0, 2});
    const auto neg = relu(tape, Tensor({4}, {-1, -2, -0.5, -3}));
    for (double v : neg.data()) CHECK(v == 0.0);

    auto p = Tensor::scalar(3.0, true);
    const double err = grad_check([&](Tape& t) { return sum(t, relu(t, p)); }, std::span(&p, 1), 1e-6);
    CHECK(err < 1e-8);
    Tape t2;
    backward(sum(t2, relu(t2, p)), t2);
    CHECK(p.grad()[0] == 1.0);
  }

  TEST_CASE("log_softmax examples") {
    Tape tape = Tape::no_grad();
    const auto a = log_softmax(tape, Tensor::matrix(1, 2, {0, 0}));
    CHECK(a[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(std::log(0.5)).epsilon(1e-15));

    const auto big = log_softmax(tape, Tensor::matrix(1, 2, {1000, 0}));
    CHECK(std::isfinite(big[0]));
    CHECK(std::abs(big[0]) < 1e-12);
    CHECK(big[1] == doctest::Approx(-1000.0).epsilon(1e-12));

    const auto p = softmax(tape, Tensor::matrix(1, 2, {2, 0}));
    CHECK(std::abs(p[0] - 0.880797) < 5e-7);
    CHECK(std::abs(p[1] - 0.119203) < 5e-7);
    const auto want = testing::ref_softmax({2, 0});
    CHECK(std::abs(p[0] - static_cast<double>(want[0])) < 1e-15);
  }

  TEST_CASE("log_softmax rows normalise") {
    Gen g(11);
    Tape tape = Tape::no_grad();
    for (int trial = 0; trial < 200; ++trial) {
      const auto rows = static_cast<std::size_t>(g.integer(1, 6));
      const auto cols = static_cast<std::size_t>(g.integer(2, 9));
      const auto ls = log_softmax(tape, Tensor::matrix(rows, cols, g.values(rows * cols, -30, 30)));
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(ls.at(r, c));
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("backward on simple functions") {
    auto x = Tensor::scalar(3.0, true);
    Tape tape;
    backward(sum(tape, mul(tape, x, x)), tape);
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    auto y = Tensor::scalar(3.0, true);
    Tape t2;
    const auto c = sum(t2, Tensor::scalar(5.0));
    backward(c, t2);
    CHECK_FALSE(y.has_grad());
    const double err = grad_check([&](Tape& t) { return add(t, scale(t, y, 0.0), Tensor::scalar(5.0)); },
                                  std::span(&y, 1), 1e-6);
    CHECK(err == 0.0);
  }

  TEST_CASE("backward requires scalar loss") {
    auto x = Tensor({2}, {1, 2}, true);
    Tape tape;
    const auto y = scale(tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }

  TEST_CASE("grad_check is exact on linear functions") {
    Gen g(3);
    auto w = Tensor::matrix(3, 2, g.values(6), true);
    const auto x = Tensor::matrix(4, 3, g.values(12));
    const double err = grad_check([&](Tape& t) { return sum(t, matmul(t, x, w)); }, std::span(&w, 1), 1e-6);
    CHECK(err < 1e-10);
  }

  TEST_CASE("grad_check on sum of squares") {
    Gen g(5);
    auto w = Tensor({10}, g.values(10, -2, 2), true);
    const double err = grad_check([&](Tape& t) { return sum(t, mul(t, w, w)); }, std::span(&w, 1), 1e-6);
    CHECK(err < 1e-8);
  }

  TEST_CASE("grad_check through relu away from the kink") {
    Gen g(9);
    std::vector<double> vals = g.values(20, -2, 2);
    for (auto& v : vals)
      if (std::abs(v) < 1e-3) v = 0.5;
    auto w = Tensor({20}, vals, true);
    const auto c = Tensor({20}, g.values(20, -1, 1));
    const double err =
        grad_check([&](Tape& t) { return sum(t, mul(t, relu(t, w), c)); }, std::span(&w, 1), 1e-6);
    CHECK(err < 1e-6);
  }

  TEST_CASE("every op passes grad_check on random graphs") {
    Gen g(21);
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> av = g.values(12, -1.5, 1.5);
      for (auto& v : av)
        if (std::abs(v) < 1e-3) v += 0.01;
      auto a = Tensor::matrix(4, 3, av, true);
      auto b = Tensor::matrix(4, 3, g.values(12), true);
      auto w = Tensor::matrix(3, 3, g.values(9), true);
      auto bias = Tensor({3}, g.values(3), true);
      auto probs = Tensor::matrix(4, 3, g.distribution_rows(4, 3), true);
      const std::vector<int> labels = {0, 2, 1, 2};
      std::vector<Tensor> params = {a, b, w, bias, probs};
      const double err = grad_check(
          [&](Tape& t) {
            auto h = add_row(t, matmul(t, relu(t, a), w), bias);
            h = add(t, h, mul(t, b, exp(t, scale(t, b, 0.3))));
            h = sub(t, h, log_clamped(t, probs, 1e-12));
            const auto ls = log_softmax(t, h);
            auto term = mean(t, gather_rows(t, ls, labels));
            auto extra = sum(t, sum_rows(t, clamp_min(t, softmax(t, h), 1e-9)));
            return add(t, term, scale(t, extra, 0.1));
          },
          params, 1e-6);
      CHECK(err < 1e-5);
    }
  }

  TEST_CASE("gradient linearity over independent graphs") {
    Gen g(13);
    auto a = Tensor({6}, g.values(6), true);
    auto b = Tensor({6}, g.values(6), true);
    Tape t1;
    backward(sum(t1, mul(t1, a, a)), t1);
    const std::vector<double> ga(a.grad().begin(), a.grad().end());
    Tape t2;
    backward(sum(t2, exp(t2, b)), t2);
    const std::vector<double> gb(b.grad().begin(), b.grad().end());

    a.zero_grad();
    b.zero_grad();
    Tape t3;
    backward(add(t3, sum(t3, mul(t3, a, a)), sum(t3, exp(t3, b))), t3);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.grad()[i] == ga[i]);
      CHECK(b.grad()[i] == gb[i]);
    }
  }

  TEST_CASE("operations are deterministic") {
    Gen g(17);
    const auto x = Tensor::matrix(5, 4, g.values(20));
    const auto w = Tensor::matrix(4, 3, g.values(12));
    Tape tape = Tape::no_grad();
    const auto r1 = log_softmax(tape, matmul(tape, x, w));
    const auto r2 = log_softmax(tape, matmul(tape, x, w));
    CHECK(std::equal(r1.data().begin(), r1.data().end(), r2.data().begin()));
  }

  TEST_CASE("gather_rows checks label range") {
    Tape tape;
    const auto x = Tensor::matrix(2, 3, std::vector<double>(6, 0.0));
    const std::vector<int> bad = {0, 3};
    CHECK_THROWS_AS(gather_rows(tape, x, bad), ContractError);
  }

  TEST_CASE("no_grad tape records nothing") {
    auto x = Tensor({3}, {1, 2, 3}, true);
    Tape tape = Tape::no_grad();
    const auto y = sum(tape, mul(tape, x, x));
    CHECK(tape.size() == 0);
    CHECK(y.item() == 14.0);
  }

  TEST_CASE("detach and clone") {
    auto x = Tensor({2}, {1, 2}, true);
    const auto d = x.detach();
    CHECK_FALSE(d.requires_grad());
    CHECK(d.same_storage(x) == false);
    auto c = x.clone();
    c[0] = 9.0;
    CHECK(x[0] == 1.0);
  }
}
