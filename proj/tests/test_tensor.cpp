#include <doctest.h>

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "bistream/tensor.hpp"

using namespace bistream;

TEST_CASE("tensor construction and accessors") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.defined());
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.extent(0) == 2);
  CHECK(t.extent(1) == 3);
  CHECK(t[4] == 5.0);
  CHECK(t.at(1, 2) == 6.0);

  const Tensor r3 = Tensor::from({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(r3.at(1, 0, 1) == 5.0);

  CHECK(Tensor::zeros({3})[2] == 0.0);
  CHECK(Tensor::ones({2, 2})[3] == 1.0);
  CHECK(Tensor::full({2}, -2.5)[0] == -2.5);

  CHECK_FALSE(Tensor{}.defined());
  CHECK(Tensor{}.size() == 0);
}

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({2}, {1, 2}).extent(5), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({2}, {1, 2}).at(0, 0), std::invalid_argument);
}

TEST_CASE("copies share storage and stay valid") {
  const Tensor a = Tensor::from({2}, {3.5, 4.5});
  const Tensor b = a;  // NOLINT: the copy is the point
  CHECK(b.values().data() == a.values().data());
}

TEST_CASE("shape_string formats extents") {
  const std::size_t shape[] = {2, 3, 4};
  CHECK(shape_string(shape) == "(2, 3, 4)");
  CHECK(shape_string({}) == "()");
}

TEST_CASE("tensor text round-trips exactly") {
  // Awkward values: negative, subnormal-ish, irrational expansions.
  const Tensor t = Tensor::from({2, 2, 3}, {1.0 / 3.0, -2.718281828459045, 1e-300, 0.0, 5e17, -0.1, 7.0, M_PI,
                                            -1e-17, 123456.789, 2.0, -3.0});
  std::stringstream io;
  write_tensor_text(io, t);
  const Tensor back = read_tensor_text(io);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("lower ranks gain leading unit extents in text form") {
  const Tensor vec = Tensor::from({4}, {1, 2, 3, 4});
  std::stringstream io;
  write_tensor_text(io, vec);
  CHECK(io.str().substr(0, 6) == "1 1 4\n");
  const Tensor back = read_tensor_text(io);
  CHECK(back.shape() == std::vector<std::size_t>{1, 1, 4});
  CHECK(back[3] == 4.0);

  const Tensor mat = Tensor::from({2, 2}, {1, 2, 3, 4});
  std::stringstream io2;
  write_tensor_text(io2, mat);
  CHECK(io2.str().substr(0, 6) == "1 2 2\n");
}

TEST_CASE("tensor text rejects malformed input") {
  std::stringstream bad_header("one two three\n");
  CHECK_THROWS_AS(read_tensor_text(bad_header), std::invalid_argument);
  std::stringstream negative("-1 2 2\n");
  CHECK_THROWS_AS(read_tensor_text(negative), std::invalid_argument);
  std::stringstream truncated("1 2 2\n1.0 2.0 3.0\n");
  CHECK_THROWS_AS(read_tensor_text(truncated), std::invalid_argument);
  std::stringstream empty;
  CHECK_THROWS_AS(read_tensor_text(empty), std::invalid_argument);
  CHECK_THROWS_AS(write_tensor_text(std::cout, Tensor{}), std::invalid_argument);
}
