#include <catch2/catch_amalgamated.hpp>

#include "kern/tensor.hpp"
#include "test_util.hpp"

using namespace kern;
using kern::test::gradient_check;
using kern::test::random_tensor;

TEST_CASE("matmul identity and zero cases", "[tensor]") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor r = matmul(a, eye);
  CHECK(r.data() == std::vector<double>{1, 2, 3, 4});

  Tensor z = Tensor::zeros({2, 1});
  Tensor rz = matmul(Tensor::from({2, 2}, {1, 0, 0, 1}), z);
  CHECK(rz.data() == std::vector<double>{0, 0});
}

TEST_CASE("matmul matches the naive triple-loop oracle", "[tensor]") {
  Rng rng(17);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor r = matmul(a, b);

  // Independent oracle: direct definition, no shared code path.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < 4; ++l) acc += a.at(i, l) * b.at(l, j);
      CHECK(std::abs(r.at(i, j) - acc) < 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched shapes naming both", "[tensor]") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_MATCHES(matmul(a, b), dimension_error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("[2x3]")));
}

TEST_CASE("elementwise fixed points", "[tensor]") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  CHECK(kern::tanh(Tensor::scalar(0.0)).value() == 0.0);
  Tensor s = softmax(Tensor::from({3}, {1, 1, 1}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.at(i) == Catch::Approx(1.0 / 3).margin(1e-15));
}

TEST_CASE("softmax is stable under large inputs", "[tensor]") {
  Tensor s = softmax(Tensor::from({2}, {1000.0, 1000.0}));
  CHECK(s.at(0) == Catch::Approx(0.5));
  Tensor t = softmax(Tensor::from({2, 2}, {1e4, 0.0, -1e4, 0.0}));
  CHECK(t.at(0, 0) == Catch::Approx(1.0));
  CHECK(t.at(1, 1) == Catch::Approx(1.0));
}

TEST_CASE("broadcast rules: equal shape or scalar only", "[tensor]") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(add(a, Tensor::scalar(1.0)).data() == std::vector<double>{2, 3, 4, 5});
  CHECK(mul(Tensor::scalar(2.0), a).data() == std::vector<double>{2, 4, 6, 8});
  CHECK_THROWS_AS(add(a, Tensor::zeros({3})), dimension_error);
  CHECK_THROWS_AS(mul(a, Tensor::zeros({4, 1})), dimension_error);
}

TEST_CASE("backward through sum gives ones", "[tensor]") {
  Tensor p = Tensor::param({3}, {5, -1, 2});
  backward(sum(p));
  CHECK(p.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward through sum of squares", "[tensor]") {
  Tensor p = Tensor::param({2}, {1, 2});
  backward(sum(mul(p, p)));
  CHECK(p.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward accumulates until zero_grad", "[tensor]") {
  Tensor p = Tensor::param({2}, {1, 2});
  backward(sum(p));
  backward(sum(p));
  CHECK(p.grad() == std::vector<double>{2, 2});
  p.zero_grad();
  CHECK(p.grad() == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects non-scalar and untracked losses", "[tensor]") {
  Tensor p = Tensor::param({2}, {1, 2});
  CHECK_THROWS_AS(backward(mul(p, p)), validation_error);
  Tensor c = Tensor::from({1}, {3.0});
  CHECK_THROWS_AS(backward(c), validation_error);
}

TEST_CASE("two backward passes on one graph are bit-identical", "[tensor]") {
  Rng rng(5);
  Tensor p = random_tensor({4, 3}, rng, -2, 2, true);
  Tensor x = random_tensor({3, 2}, rng);
  Tensor loss = sum(kern::tanh(matmul(p, x)));
  backward(loss);
  std::vector<double> first = p.grad();
  p.zero_grad();
  backward(loss);
  CHECK(p.grad() == first);  // exact bitwise equality
}

TEST_CASE("composite graph gradients match finite differences", "[tensor]") {
  Rng rng(23);
  Tensor w1 = random_tensor({4, 3}, rng, -1, 1, true);
  Tensor w2 = random_tensor({2, 4}, rng, -1, 1, true);
  Tensor b = random_tensor({2}, rng, -1, 1, true);
  Tensor x = random_tensor({5, 3}, rng);

  auto loss = [&] {
    Tensor h = kern::tanh(matmul(x, transpose(w1)));
    Tensor y = add_rowvec(matmul(h, transpose(w2)), b);
    Tensor s = softmax(y);
    return sum(mul(kern::log(add(s, 1e-6)), s));
  };
  auto r = gradient_check(loss, {{"w1", w1}, {"w2", w2}, {"b", b}});
  INFO("worst " << r.worst_param << " rel " << r.worst_rel);
  CHECK(r.ok);
  CHECK(r.checked == w1.numel() + w2.numel() + b.numel());
}

TEST_CASE("every differentiable op passes a randomized gradient check", "[tensor]") {
  Rng rng(101);
  // Each entry builds a scalar loss around one op; inputs drawn in [-2, 2]
  // (shifted positive for log).
  for (int round = 0; round < 5; ++round) {
    Tensor m = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor n = random_tensor({3, 4}, rng, -2, 2, true);
    Tensor k = random_tensor({4, 2}, rng, -2, 2, true);
    Tensor v = random_tensor({4}, rng, -2, 2, true);
    Tensor pos = random_tensor({3, 4}, rng, 0.1, 2.0, true);
    Tensor s = random_tensor({1}, rng, -2, 2, true);

    Tensor bias = random_tensor({2}, rng, -2, 2, true);

    std::vector<std::pair<std::string, std::function<Tensor()>>> cases = {
        {"add", [&] { return sum(add(m, n)); }},
        {"add_scalar", [&] { return sum(mul(add(m, s), n)); }},
        {"mul", [&] { return sum(mul(mul(m, n), m)); }},
        {"mul_scalar", [&] { return sum(mul(s, m)); }},
        {"matmul", [&] { return sum(matmul(m, k)); }},
        {"transpose", [&] { return sum(mul(transpose(m), transpose(n))); }},
        {"sigmoid", [&] { return sum(sigmoid(m)); }},
        {"tanh", [&] { return sum(kern::tanh(m)); }},
        {"log", [&] { return sum(kern::log(pos)); }},
        {"softmax", [&] { return sum(mul(softmax(m), n)); }},
        {"concat0", [&] { return sum(mul(concat(m, n, 0), concat(n, m, 0))); }},
        {"concat1", [&] { return sum(mul(concat(m, n, 1), concat(n, m, 1))); }},
        {"reshape", [&] { return sum(mul(reshape(m, {4, 3}), reshape(n, {4, 3}))); }},
        {"add_rowvec", [&] { return sum(sigmoid(add_rowvec(matmul(m, k), bias))); }},
        {"repeat_rows", [&] { return sum(mul(repeat_rows(k, 3), repeat_rows(k, 3))); }},
        {"scale", [&] { return sum(scale(m, -1.7)); }},
        {"vector_concat", [&] { return sum(mul(concat(v, v, 0), concat(v, v, 0))); }},
    };
    for (auto& [name, fn] : cases) {
      auto r = gradient_check(
          fn, {{"m", m}, {"n", n}, {"k", k}, {"v", v}, {"pos", pos}, {"s", s}, {"bias", bias}});
      INFO("op " << name << " worst " << r.worst_param << " rel " << r.worst_rel);
      CHECK(r.ok);
    }
  }
}

TEST_CASE("non-finite values are rejected when checks are on", "[tensor]") {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = Tensor::from({2}, {1e308, 1e308});
  CHECK_THROWS_AS(mul(add(b, b), Tensor::scalar(1.0)), numeric_error);
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), numeric_error);
  CHECK_NOTHROW(add(a, a));
}

TEST_CASE("no-grad mode builds detached results", "[tensor]") {
  Tensor p = Tensor::param({2}, {1, 2});
  {
    NoGradGuard ng;
    Tensor y = mul(p, p);
    CHECK_FALSE(y.requires_grad());
  }
  Tensor y = mul(p, p);
  CHECK(y.requires_grad());
}

TEST_CASE("parameter sets iterate sorted and reject duplicates", "[tensor]") {
  ParameterSet ps;
  ps.add("b", Tensor::param({1}, {1}));
  ps.add("a", Tensor::param({1}, {2}));
  ps.add("c", Tensor::param({1}, {3}));
  std::vector<std::string> names;
  for (auto& [name, t] : ps) names.push_back(name);
  CHECK(names == std::vector<std::string>{"a", "b", "c"});
  CHECK_THROWS_AS(ps.add("a", Tensor::param({1}, {0})), validation_error);
  CHECK_THROWS_AS(ps.add("x", Tensor::from({1}, {0.0})), validation_error);
  CHECK(ps.total_values() == 3);
}
