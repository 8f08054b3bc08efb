#include "doctest.h"

#include <limits>

#include "ata/rng.hpp"
#include "ata/tensor.hpp"

using namespace ata;

TEST_CASE("matmul identity and zero cases") {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  Tensor i2 = Tensor::identity(2);
  CHECK(matmul(i2, a).max_abs_diff(a) == 0.0);

  Tensor z = Tensor::zeros({2, 1});
  Tensor prod = matmul(a, z);
  CHECK(prod.shape() == std::vector<std::size_t>{2, 1});
  CHECK(prod.max_abs_diff(Tensor::zeros({2, 1})) == 0.0);
}

TEST_CASE("matmul against a triple-loop oracle") {
  RngState rng(3);
  Tensor a({3, 4}), b({4, 2});
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform(-1, 1);
  Tensor expected({3, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 4; ++k) expected.at(i, j) += a.at(i, k) * b.at(k, j);
  CHECK(matmul(a, b).max_abs_diff(expected) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor a({2, 3}), b({4, 2});
  try {
    matmul(a, b);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("reshape preserves data and rejects bad sizes") {
  Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  Tensor b = a.reshaped({3, 2});
  CHECK(b.at(2, 1) == 6);
  CHECK_THROWS_AS(a.reshaped({4, 2}), Error);
}

TEST_CASE("transpose round trip") {
  RngState rng(5);
  Tensor a({3, 5});
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-1, 1);
  CHECK(transpose(transpose(a)).max_abs_diff(a) == 0.0);
}

TEST_CASE("scalar_value demands a single element") {
  CHECK(Tensor::scalar(4.5).scalar_value() == 4.5);
  CHECK_THROWS_AS(Tensor({2}).scalar_value(), Error);
}

TEST_CASE("all_finite flags NaN") {
  Tensor a({2});
  CHECK(a.all_finite());
  a[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK(!a.all_finite());
}

TEST_CASE("rng streams replay and fork independently") {
  RngState a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngState c(42);
  RngState child = c.fork("stream");
  CHECK(c.counter() == 0);  // forking does not advance the parent
  RngState child2 = RngState(42).fork("stream");
  CHECK(child.next_u64() == child2.next_u64());
  CHECK(RngState(42).fork("other").next_u64() != RngState(42).fork("stream").next_u64());
}

TEST_CASE("sample_without_replacement is sorted, distinct, in range") {
  RngState rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto idx = rng.sample_without_replacement(10, 4);
    REQUIRE(idx.size() == 4);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(idx[i] < 10);
      if (i) CHECK(idx[i - 1] < idx[i]);
    }
  }
}
