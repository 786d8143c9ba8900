#include <catch2/catch_amalgamated.hpp>

#include "kern/gru.hpp"
#include "test_util.hpp"

using namespace kern;
using kern::test::gradient_check;
using kern::test::random_tensor;

namespace {

GruParams zero_gru(std::size_t d_in, std::size_t d) {
  GruParams g;
  auto zeros = [](Shape s) {
    return Tensor::param(s, std::vector<double>(detail::shape_numel(s), 0.0));
  };
  g.Wz = zeros({d, d_in});
  g.Uz = zeros({d, d});
  g.bz = zeros({d});
  g.Wr = zeros({d, d_in});
  g.Ur = zeros({d, d});
  g.br = zeros({d});
  g.Wh = zeros({d, d_in});
  g.Uh = zeros({d, d});
  g.bh = zeros({d});
  return g;
}

GruParams random_gru(std::size_t d_in, std::size_t d, Rng& rng) {
  ParameterSet ps;
  return make_gru_params(ps, "", d_in, d, rng);
}

// Straight-line scalar re-implementation of the gated update, written
// directly from the four equations with no tensor machinery.
std::vector<double> gru_oracle(const std::vector<double>& a, const std::vector<double>& h,
                               const GruParams& p) {
  const std::size_t d = h.size(), d_in = a.size();
  auto matvec = [](const Tensor& w, const std::vector<double>& x, std::size_t rows,
                   std::size_t cols) {
    std::vector<double> y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) y[i] += w.at(i, j) * x[j];
    return y;
  };
  auto wz = matvec(p.Wz, a, d, d_in), uz = matvec(p.Uz, h, d, d);
  auto wr = matvec(p.Wr, a, d, d_in), ur = matvec(p.Ur, h, d, d);
  std::vector<double> z(d), r(d), out(d);
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = 1.0 / (1.0 + std::exp(-(wz[i] + uz[i] + p.bz.at(i))));
    r[i] = 1.0 / (1.0 + std::exp(-(wr[i] + ur[i] + p.br.at(i))));
  }
  std::vector<double> rh(d);
  for (std::size_t i = 0; i < d; ++i) rh[i] = r[i] * h[i];
  auto wh = matvec(p.Wh, a, d, d_in), uh = matvec(p.Uh, rh, d, d);
  for (std::size_t i = 0; i < d; ++i) {
    const double g = std::tanh(wh[i] + uh[i] + p.bh.at(i));
    out[i] = (1.0 - z[i]) * h[i] + z[i] * g;
  }
  return out;
}

}  // namespace

TEST_CASE("zero weights halve the previous state", "[gru]") {
  // sigmoid(0) = 0.5 gates, tanh(0) = 0 candidate: h' = 0.5 h.
  auto p = zero_gru(3, 4);
  Tensor a = Tensor::zeros({3});
  Tensor h = Tensor::from({4}, {1.0, -2.0, 0.5, 4.0});
  Tensor out = gru_cell(a, h, p);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out.at(i) == Catch::Approx(0.5 * h.at(i)).margin(1e-15));

  Tensor hz = Tensor::zeros({4});
  Tensor out0 = gru_cell(a, hz, p);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out0.at(i) == 0.0);
}

TEST_CASE("random instance matches the scalar oracle", "[gru]") {
  Rng rng(7);
  auto p = random_gru(5, 4, rng);
  for (int round = 0; round < 10; ++round) {
    Tensor a = random_tensor({5}, rng);
    Tensor h = random_tensor({4}, rng);
    Tensor out = gru_cell(a, h, p);
    auto expect = gru_oracle(a.data(), h.data(), p);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(std::abs(out.at(i) - expect[i]) < 1e-12);
  }
}

TEST_CASE("batched rows equal per-row evaluation", "[gru]") {
  Rng rng(11);
  auto p = random_gru(3, 4, rng);
  Tensor a = random_tensor({6, 3}, rng);
  Tensor h = random_tensor({6, 4}, rng);
  Tensor out = gru_cell(a, h, p);
  for (std::size_t row = 0; row < 6; ++row) {
    std::vector<double> arow(a.data().begin() + row * 3, a.data().begin() + row * 3 + 3);
    std::vector<double> hrow(h.data().begin() + row * 4, h.data().begin() + row * 4 + 4);
    auto expect = gru_oracle(arow, hrow, p);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(std::abs(out.at(row, i) - expect[i]) < 1e-12);
  }
}

TEST_CASE("1000 randomized calls keep gates and outputs in range", "[gru]") {
  Rng rng(13);
  std::size_t violations = 0;
  for (int round = 0; round < 1000; ++round) {
    auto p = random_gru(4, 6, rng);
    Tensor a = random_tensor({4}, rng);
    Tensor h = random_tensor({6}, rng);
    auto act = gru_cell_full(a, h, p);
    for (std::size_t i = 0; i < 6; ++i) {
      const double z = act.z.at(i), r = act.r.at(i), g = act.h_tilde.at(i);
      const double out = act.h.at(i), prev = h.at(i);
      if (!(z > 0.0 && z < 1.0 && r > 0.0 && r < 1.0)) ++violations;
      if (!(g > -1.0 && g < 1.0)) ++violations;
      // Convex combination: h' lies between h_prev and the candidate.
      const double lo = std::min(prev, g), hi = std::max(prev, g);
      if (!(out >= lo - 1e-12 && out <= hi + 1e-12)) ++violations;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("shape mismatches raise dimension errors", "[gru]") {
  Rng rng(3);
  auto p = random_gru(3, 4, rng);
  CHECK_THROWS_AS(gru_cell(Tensor::zeros({5}), Tensor::zeros({4}), p), dimension_error);
  CHECK_THROWS_AS(gru_cell(Tensor::zeros({3}), Tensor::zeros({5}), p), dimension_error);
  CHECK_THROWS_AS(gru_cell(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}), p), dimension_error);
}

TEST_CASE("parameter-set lookup form works with and without biases", "[gru]") {
  Rng rng(19);
  ParameterSet ps;
  make_gru_params(ps, "", 3, 3, rng);
  Tensor a = random_tensor({3}, rng);
  Tensor h = random_tensor({3}, rng);
  Tensor full = gru_cell(a, h, ps);
  CHECK(full.numel() == 3);

  ParameterSet no_bias;
  for (const char* name : {"W_z", "U_z", "W_r", "U_r", "W_h", "U_h"})
    no_bias.add(name, ps.at(name).clone_param());
  Tensor nb = gru_cell(a, h, no_bias);
  // Registered biases are zero-initialized, so the outputs agree exactly.
  CHECK(nb.data() == full.data());
}

TEST_CASE("gradients flow through the cell", "[gru]") {
  Rng rng(29);
  ParameterSet ps;
  auto gp = make_gru_params(ps, "", 3, 4, rng);
  Tensor a = random_tensor({2, 3}, rng, -1, 1, true);
  Tensor h = random_tensor({2, 4}, rng, -1, 1, true);
  auto loss = [&] { return sum(mul(gru_cell(a, h, gp), gru_cell(a, h, gp))); };
  std::vector<std::pair<std::string, Tensor>> params{{"a", a}, {"h", h}};
  for (auto& [name, t] : ps) params.emplace_back(name, t);
  auto r = gradient_check(loss, params);
  INFO("worst " << r.worst_param << " rel " << r.worst_rel);
  CHECK(r.ok);
}
