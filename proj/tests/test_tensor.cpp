#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/tensor.hpp"

using namespace dcnn;

namespace {

// Independent triple-loop matmul oracle, evaluated in float64.
std::vector<double> matmul_oracle(const std::vector<float>& a,
                                  const std::vector<float>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t kk = 0; kk < k; ++kk)
        out[i * n + j] += static_cast<double>(a[i * k + kk]) *
                          static_cast<double>(b[kk * n + j]);
  return out;
}

Tensor random_tensor(Rng& rng, Shape shape) {
  return fill_normal(rng, std::move(shape), 0.0f, 1.0f);
}

}  // namespace

TEST_CASE("shape validation") {
  CHECK(Shape{2, 3, 4}.elements() == 24);
  CHECK_THROWS_AS((Shape{2, 0, 4}), ShapeError);
  // 2^32 * 2^32 * 2 overflows 64 bits
  CHECK_THROWS_AS((Shape{1ull << 32, 1ull << 32, 2}), ShapeError);
}

TEST_CASE("zeros") {
  const Tensor t = Tensor::zeros(Shape{2, 2});
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);

  CHECK(Tensor::zeros(Shape{1}).size() == 1);

  // element count by direct multiplication
  const std::size_t expected = 1 * 50 * 110 * 110;
  CHECK(expected == 605000);
  CHECK(Tensor::zeros(Shape{1, 50, 110, 110}).size() == expected);
}

TEST_CASE("fill_normal degenerate and determinism") {
  Rng rng(7);
  const Tensor t = fill_normal(rng, Shape{100}, 3.5f, 0.0f);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 3.5f);

  Rng a(42), b(42);
  const Tensor ta = fill_normal(a, Shape{1000}, 0.0f, 1.0f);
  const Tensor tb = fill_normal(b, Shape{1000}, 0.0f, 1.0f);
  CHECK(std::memcmp(ta.data(), tb.data(), ta.size() * sizeof(float)) == 0);

  CHECK_THROWS_AS(fill_normal(a, Shape{4}, 0.0f, -1.0f), ArgumentError);
}

TEST_CASE("fill_normal sample mean") {
  const std::size_t n = 100000;
  Rng rng(42);
  const Tensor t = fill_normal(rng, Shape{n}, 0.0f, 1.0f);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += t[i];
  const double bound = 5.0 / std::sqrt(static_cast<double>(n));  // 0.0158
  CHECK(std::abs(sum / n) < bound);
}

TEST_CASE("matmul identities and hand values") {
  const Tensor eye =
      Tensor::from_data(Shape{2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  const Tensor a = Tensor::from_data(Shape{2, 2}, {5.0f, -2.0f, 0.5f, 9.0f});
  const Tensor prod = matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod[i] == a[i]);

  const Tensor m = Tensor::from_data(Shape{2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  const Tensor v = Tensor::from_data(Shape{2, 1}, {0.0f, 1.0f});
  const Tensor mv = matmul(m, v);
  CHECK(mv[0] == 2.0f);
  CHECK(mv[1] == 4.0f);

  CHECK_THROWS_AS(matmul(m, Tensor::zeros(Shape{3, 2})), ShapeError);
}

TEST_CASE("matmul against triple-loop oracle") {
  Rng rng(11);
  SUBCASE("7x5 x 5x3") {
    const Tensor a = random_tensor(rng, Shape{7, 5});
    const Tensor b = random_tensor(rng, Shape{5, 3});
    const Tensor c = matmul(a, b);
    const auto oracle = matmul_oracle(
        std::vector<float>(a.data(), a.data() + a.size()),
        std::vector<float>(b.data(), b.data() + b.size()), 7, 5, 3);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(std::abs(static_cast<double>(c[i]) - oracle[i]) < 1e-5);
  }
  SUBCASE("random sizes up to 64x64") {
    for (int round = 0; round < 20; ++round) {
      const std::size_t m = 1 + rng.next_u64() % 64;
      const std::size_t k = 1 + rng.next_u64() % 64;
      const std::size_t n = 1 + rng.next_u64() % 64;
      const Tensor a = random_tensor(rng, Shape{m, k});
      const Tensor b = random_tensor(rng, Shape{k, n});
      const Tensor c = matmul(a, b);
      const auto oracle = matmul_oracle(
          std::vector<float>(a.data(), a.data() + a.size()),
          std::vector<float>(b.data(), b.data() + b.size()), m, k, n);
      for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(std::abs(static_cast<double>(c[i]) - oracle[i]) < 1e-5);
    }
  }
}

TEST_CASE("elementwise ops") {
  Rng rng(3);
  const Tensor t = random_tensor(rng, Shape{4, 7});

  const Tensor scaled = scale(t, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(scaled[i] == t[i]);

  const Tensor added = add(t, Tensor::zeros(t.shape()));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(added[i] == t[i]);

  const Tensor diff = sub(t, t);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(diff[i] == 0.0f);

  const Tensor mapped = map_elementwise(t, [](float x) { return -x; });
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(mapped[i] == -t[i]);

  CHECK_THROWS_AS(add(t, Tensor::zeros(Shape{4, 8})), ShapeError);
  CHECK_THROWS_AS(sub(t, Tensor::zeros(Shape{3})), ShapeError);
}

TEST_CASE("scale round trip within 1e-6 relative") {
  Rng rng(5);
  const Tensor t = random_tensor(rng, Shape{200});
  for (int round = 0; round < 30; ++round) {
    // log-uniform factor in [1e-3, 1e3]
    const float a =
        static_cast<float>(std::pow(10.0, -3.0 + 6.0 * rng.next_double()));
    const Tensor back = scale(scale(t, a), 1.0f / a);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double rel = std::abs(back[i] - t[i]) /
                         std::max(1e-30, std::abs(static_cast<double>(t[i])));
      CHECK(rel < 1e-6);
    }
  }
}

TEST_CASE("all_finite audit") {
  Tensor t = Tensor::zeros(Shape{3});
  CHECK(all_finite(t));
  t[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(all_finite(t));
  t[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(all_finite(t));
}

TEST_CASE("TNSR round trip is bitwise") {
  Rng rng(9);
  const Tensor t = random_tensor(rng, Shape{3, 4, 5});
  std::stringstream buf;
  save_tnsr(t, buf);
  const Tensor back = load_tnsr(buf);
  CHECK(back.shape() == t.shape());
  CHECK(std::memcmp(back.data(), t.data(), t.size() * sizeof(float)) == 0);
}

TEST_CASE("TNSR rejects bad input") {
  Rng rng(9);
  const Tensor t = random_tensor(rng, Shape{2, 2});
  std::stringstream buf;
  save_tnsr(t, buf);
  const std::string full = buf.str();

  std::stringstream truncated(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(load_tnsr(truncated), FormatError);

  std::string corrupt = full;
  corrupt[0] = 'X';
  std::stringstream bad(corrupt);
  CHECK_THROWS_AS(load_tnsr(bad), FormatError);
}

TEST_CASE("seed derivation separates streams") {
  const std::uint64_t base = 1234;
  CHECK(derive_seed(base, "split") != derive_seed(base, "init"));
  CHECK(derive_seed(base, "split") == derive_seed(base, "split"));
  CHECK(derive_seed(base, "split") != derive_seed(base + 1, "split"));
}
