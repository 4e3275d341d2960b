#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "cct/data.hpp"
#include "cct/error.hpp"
#include "cct/nn.hpp"
#include "cct/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cct;
using testing::ScratchDir;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<int> balanced_labels(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  return y;
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("named streams are distinct and stable") {
    CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
    CHECK(derive_seed(1, "init") != derive_seed(1, "noise"));
    CHECK(derive_seed(1, "init", 0) != derive_seed(1, "init", 1));
    CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  }

  TEST_CASE("uniform, below and normal moments") {
    Rng r(5);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      CHECK_UNARY(u >= 0.0);
      CHECK_UNARY(u < 1.0);
      s += u;
    }
    CHECK(std::abs(s / n - 0.5) < 0.005);
    s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = r.normal();
      s += z;
      s2 += z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(10000.0 * 6 / 7));
  }
}

TEST_SUITE("data") {
  TEST_CASE("blobs are deterministic and standardised") {
    const auto a = gen_blobs(50, 4, 16, 1.0, 3);
    const auto b = gen_blobs(50, 4, 16, 1.0, 3);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.size() == 200);
    a.validate();
    for (std::size_t d = 0; d < 16; ++d) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) m += a.features[i * 16 + d];
      m /= a.size();
      for (std::size_t i = 0; i < a.size(); ++i) v += std::pow(a.features[i * 16 + d] - m, 2);
      v /= a.size();
      CHECK(std::abs(m) < 1e-12);
      CHECK(std::abs(v - 1.0) < 1e-9);
    }
    CHECK(gen_blobs(50, 4, 16, 1.0, 4).features != a.features);
  }

  TEST_CASE("degenerate blobs are linearly separable") {
    // spread 0 collapses each class onto its centre; a linear model fits it
    const auto data = gen_blobs(40, 2, 5, 0.0, 9);
    auto net = init_network(MlpSpec{{5, 2}}, 1);
    auto params = net.parameters();
    auto state = make_adam_state(params);
    const auto x = data.all_features();
    for (int step = 0; step < 300; ++step) {
      net.zero_grad();
      Tape t;
      const auto l = scale(t, mean(t, gather_rows(t, log_softmax(t, forward(t, net, x)), data.labels)), -1.0);
      t.backward(l);
      adam_step(params, state, 0.05);
    }
    Tape t = Tape::no_grad();
    const auto z = forward(t, net, x);
    std::size_t right = 0;
    for (std::size_t i = 0; i < data.size(); ++i) right += (z.at(i, 1) > z.at(i, 0) ? 1 : 0) == data.labels[i];
    CHECK(right == data.size());
  }

  TEST_CASE("spirals") {
    const auto s = gen_spirals(30, 3, 0.1, 2);
    s.validate();
    CHECK(s.size() == 90);
    CHECK(s.dim == 2);
    CHECK(gen_spirals(30, 3, 0.1, 2).features == s.features);
  }

  TEST_CASE("hand-built IDX image file") {
    ScratchDir dir("idx");
    // magic 0x00000803, 2 images of 2x2
    write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 102, 255, 10, 20, 30, 40});
    write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 2, 7, 3});
    const auto img = read_idx_images(dir / "img");
    CHECK(img.count() == 2);
    CHECK(img.rows == 2);
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 51, 102, 255, 10, 20, 30, 40});
    const auto data = load_idx(dir / "img", dir / "lab");
    CHECK(data.labels == std::vector<int>{7, 3});
    CHECK(data.class_count == 8);
    CHECK(data.dim == 4);
    CHECK(data.features[1] == doctest::Approx(0.2));
    CHECK(data.features[3] == 1.0);
  }

  TEST_CASE("IDX error cases") {
    ScratchDir dir("idxerr");
    write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 5, 6});
    write_bytes(dir / "lab3", {0, 0, 8, 1, 0, 0, 0, 3, 0, 1, 2});
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab3"), ParseError);
    write_bytes(dir / "badmagic", {0, 0, 8, 2, 0, 0, 0, 1, 0});
    CHECK_THROWS_AS(read_idx_labels(dir / "badmagic"), ParseError);
    write_bytes(dir / "short", {0, 0, 8, 1, 0, 0, 0, 4, 1});
    CHECK_THROWS_AS(read_idx_labels(dir / "short"), ParseError);
    write_bytes(dir / "long", {0, 0, 8, 1, 0, 0, 0, 1, 1, 2});
    CHECK_THROWS_AS(read_idx_labels(dir / "long"), ParseError);
    CHECK_THROWS_AS(read_idx_labels(dir / "missing"), IoError);
  }

  TEST_CASE("IDX round-trip is byte identical") {
    ScratchDir dir("idxrt");
    IdxImages img{3, 4, {}};
    testing::Gen g(1);
    for (int i = 0; i < 5 * 12; ++i) img.pixels.push_back(static_cast<std::uint8_t>(g.integer(0, 255)));
    const std::vector<std::uint8_t> labels = {0, 1, 2, 9, 4};
    write_idx_images(dir / "a.img", img);
    write_idx_labels(dir / "a.lab", labels);
    const auto data = load_idx(dir / "a.img", dir / "a.lab");
    write_idx(data, dir / "b.img", dir / "b.lab");
    CHECK(testing::file_bytes(dir / "a.img") == testing::file_bytes(dir / "b.img"));
    CHECK(testing::file_bytes(dir / "a.lab") == testing::file_bytes(dir / "b.lab"));
    CHECK(read_idx_images(dir / "b.img").pixels == img.pixels);
  }

  TEST_CASE("noise injection examples") {
    const auto y = balanced_labels(1000, 4);
    const auto none = corrupt_labels(y, 4, 0.0, 1);
    CHECK(none.labels == y);
    CHECK(std::none_of(none.corrupt_mask.begin(), none.corrupt_mask.end(), [](bool b) { return b; }));

    const auto noisy = corrupt_labels(y, 4, 0.4, 1);
    CHECK(std::count(noisy.corrupt_mask.begin(), noisy.corrupt_mask.end(), true) == 400);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(noisy.corrupt_mask[i] == (noisy.labels[i] != y[i]));
    const auto again = corrupt_labels(y, 4, 0.4, 1);
    CHECK(again.corrupt_mask == noisy.corrupt_mask);
    CHECK(again.labels == noisy.labels);
    CHECK_THROWS_AS(corrupt_labels(y, 4, 1.0, 1), ContractError);
  }

  TEST_CASE("noise count property") {
    testing::Gen g(77);
    for (int trial = 0; trial < 200; ++trial) {
      const int c = g.integer(2, 10);
      const auto n = static_cast<std::size_t>(g.integer(1, 500));
      std::vector<int> y(n);
      for (auto& v : y) v = g.integer(0, c - 1);
      const double rate = g.uniform(0.0, 0.99);
      const auto out = corrupt_labels(y, c, rate, static_cast<std::uint64_t>(trial));
      const auto want = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
      const auto got = static_cast<std::size_t>(std::count(out.corrupt_mask.begin(), out.corrupt_mask.end(), true));
      CHECK(got == want);
      for (std::size_t i = 0; i < n; ++i) CHECK(out.corrupt_mask[i] == (out.labels[i] != y[i]));
    }
  }

  TEST_CASE("exact rates with awkward floating point") {
    // 0.1 * 30 evaluates to 3.0000000000000004; 0.7 * 10 to 7.000000000000001
    const auto r1 = corrupt_labels(balanced_labels(30, 3), 3, 0.1, 2);
    CHECK(std::count(r1.corrupt_mask.begin(), r1.corrupt_mask.end(), true) == 3);
    const auto r = corrupt_labels(balanced_labels(10, 2), 2, 0.7, 2);
    CHECK(std::count(r.corrupt_mask.begin(), r.corrupt_mask.end(), true) == 7);
    const auto r2 = corrupt_labels(balanced_labels(100, 2), 2, 0.29, 2);
    CHECK(std::count(r2.corrupt_mask.begin(), r2.corrupt_mask.end(), true) == 29);
  }

  TEST_CASE("symmetric noise transition matrix") {
    const int c = 5;
    const std::size_t n = 100000;
    const auto y = balanced_labels(n, c);
    const auto out = corrupt_labels(y, c, 0.3, 11);
    std::vector<double> trans(c * c, 0.0);
    for (std::size_t i = 0; i < n; ++i) trans[y[i] * c + out.labels[i]] += 1;
    double off = 0.0;
    for (int a = 0; a < c; ++a)
      for (int b = 0; b < c; ++b)
        if (a != b) off += trans[a * c + b];
    CHECK(off / n == doctest::Approx(0.3).epsilon(1e-12));
    // each wrong class receives 1/(C-1) of a class's corrupted mass
    for (int a = 0; a < c; ++a) {
      double row_off = 0.0;
      for (int b = 0; b < c; ++b)
        if (a != b) row_off += trans[a * c + b];
      const double expect = row_off / (c - 1);
      const double sigma = std::sqrt(row_off * (1.0 / (c - 1)) * (1.0 - 1.0 / (c - 1)));
      for (int b = 0; b < c; ++b)
        if (a != b) CHECK(std::abs(trans[a * c + b] - expect) < 3.5 * sigma);
    }
  }

  TEST_CASE("noise leaves features untouched") {
    const auto data = gen_blobs(100, 4, 8, 1.0, 5);
    const auto noisy = inject_symmetric_noise(data, 0.35, 6);
    noisy.validate();
    CHECK(noisy.base.features == data.features);
    CHECK(noisy.clean_labels == data.labels);
    CHECK(noisy.corrupted_count() == 140);
  }

  TEST_CASE("oversampling") {
    const auto y = balanced_labels(400, 4);
    const auto idx = oversample_indices(y, 4, 100000, 3);
    CHECK(idx.size() == 100000);
    std::vector<double> counts(4, 0.0);
    for (auto i : idx) counts[y[i]] += 1;
    const double sigma = std::sqrt(100000 * 0.25 * 0.75);
    for (double c : counts) CHECK(std::abs(c - 25000) < 3 * sigma);
    CHECK(oversample_indices(y, 4, 1000, 3) == oversample_indices(y, 4, 1000, 3));

    // class 2 has a single member: it is drawn as often as any whole class
    std::vector<int> skew(301, 0);
    for (std::size_t i = 0; i < 300; ++i) skew[i] = static_cast<int>(i % 2);
    skew[300] = 2;
    const auto s = oversample_indices(skew, 3, 90000, 4);
    const double single = static_cast<double>(std::count(s.begin(), s.end(), std::size_t{300}));
    double class0 = 0.0;
    for (auto i : s) class0 += skew[i] == 0;
    const double sd = std::sqrt(90000 * (1.0 / 3) * (2.0 / 3));
    CHECK(std::abs(single - 30000) < 3 * sd);
    CHECK(std::abs(class0 - 30000) < 3 * sd);

    const std::vector<int> missing = {0, 0, 2};
    CHECK_THROWS_AS(oversample_indices(missing, 3, 10, 1), ContractError);
  }

  TEST_CASE("stratified split") {
    const auto data = gen_blobs(50, 2, 3, 1.0, 1);
    const auto s = split(data, 0.5, 7);
    CHECK(s.train.size() == 50);
    CHECK(s.test.size() == 50);
    CHECK(std::count(s.train.labels.begin(), s.train.labels.end(), 0) == 25);
    CHECK(std::count(s.test.labels.begin(), s.test.labels.end(), 1) == 25);
    std::set<std::size_t> all(s.train_rows.begin(), s.train_rows.end());
    for (auto r : s.test_rows) CHECK(all.insert(r).second);
    CHECK(all.size() == 100);
    const auto again = split(data, 0.5, 7);
    CHECK(again.train_rows == s.train_rows);
    CHECK(again.train.features == s.train.features);
    CHECK(split(data, 0.5, 8).train_rows != s.train_rows);
    CHECK_THROWS_AS(split(data, 1.0, 7), ContractError);
  }

  TEST_CASE("split pools classes with a single sample") {
    auto data = gen_blobs(20, 2, 3, 1.0, 1);
    data.class_count = 3;
    data.labels.push_back(2);
    data.features.insert(data.features.end(), {0.1, 0.2, 0.3});
    const auto s = split(data, 0.5, 2);
    CHECK_FALSE(s.warnings.empty());
    CHECK(s.train.size() + s.test.size() == data.size());
  }
}
