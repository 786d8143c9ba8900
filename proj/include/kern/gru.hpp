#pragma once
// Gated recurrent update shared by both routing networks:
//
//   z = sigmoid(W_z a + U_z h + b_z)
//   r = sigmoid(W_r a + U_r h + b_r)
//   g = tanh(W_h a + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * g
//
// Operates row-wise: `a` is (N x d_in) and `h_prev` is (N x d), one graph
// node per row. Rank-1 inputs are treated as a single row. Biases are
// optional; zero biases reproduce the bias-free form exactly.

#include <string>

#include "kern/tensor.hpp"

namespace kern {

struct GruParams {
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;

  std::size_t input_dim() const { return Wz.shape()[1]; }
  std::size_t hidden_dim() const { return Wz.shape()[0]; }
};

inline GruParams make_gru_params(ParameterSet& ps, const std::string& prefix,
                                 std::size_t d_in, std::size_t d, Rng& rng) {
  GruParams g;
  g.Wz = ps.add_weight(prefix + "W_z", d, d_in, rng);
  g.Uz = ps.add_weight(prefix + "U_z", d, d, rng);
  g.bz = ps.add_bias(prefix + "b_z", d);
  g.Wr = ps.add_weight(prefix + "W_r", d, d_in, rng);
  g.Ur = ps.add_weight(prefix + "U_r", d, d, rng);
  g.br = ps.add_bias(prefix + "b_r", d);
  g.Wh = ps.add_weight(prefix + "W_h", d, d_in, rng);
  g.Uh = ps.add_weight(prefix + "U_h", d, d, rng);
  g.bh = ps.add_bias(prefix + "b_h", d);
  return g;
}

inline GruParams gru_from(const ParameterSet& ps, const std::string& prefix = "") {
  GruParams g;
  g.Wz = ps.at(prefix + "W_z");
  g.Uz = ps.at(prefix + "U_z");
  g.Wr = ps.at(prefix + "W_r");
  g.Ur = ps.at(prefix + "U_r");
  g.Wh = ps.at(prefix + "W_h");
  g.Uh = ps.at(prefix + "U_h");
  if (ps.contains(prefix + "b_z")) g.bz = ps.at(prefix + "b_z");
  if (ps.contains(prefix + "b_r")) g.br = ps.at(prefix + "b_r");
  if (ps.contains(prefix + "b_h")) g.bh = ps.at(prefix + "b_h");
  return g;
}

struct GruActivations {
  Tensor z, r, h_tilde, h;
};

namespace detail {

inline void check_gru_shapes(const Tensor& a, const Tensor& h, const GruParams& p) {
  require(p.Wz.rank() == 2 && p.Uz.rank() == 2, "gru_cell: weights must be rank-2");
  const std::size_t d_in = p.input_dim(), d = p.hidden_dim();
  require(a.cols() == d_in, "gru_cell: input width " + std::to_string(a.cols()) +
                                " does not match W_z " + shape_str(p.Wz.shape()));
  require(h.cols() == d, "gru_cell: hidden width " + std::to_string(h.cols()) +
                             " does not match U_z " + shape_str(p.Uz.shape()));
  require(a.rows() == h.rows(), "gru_cell: row counts differ: " + shape_str(a.shape()) +
                                    " vs " + shape_str(h.shape()));
  require(p.Uz.shape() == Shape({d, d}) && p.Wr.shape() == p.Wz.shape() &&
              p.Ur.shape() == p.Uz.shape() && p.Wh.shape() == p.Wz.shape() &&
              p.Uh.shape() == p.Uz.shape(),
          "gru_cell: inconsistent gate parameter shapes");
}

}  // namespace detail

inline GruActivations gru_cell_full(const Tensor& a, const Tensor& h_prev,
                                    const GruParams& p) {
  detail::check_gru_shapes(a, h_prev, p);
  const bool vec = a.rank() == 1;
  Tensor ai = vec ? reshape(a, {1, a.numel()}) : a;
  Tensor hi = vec ? reshape(h_prev, {1, h_prev.numel()}) : h_prev;

  GruActivations act;
  act.z = sigmoid(add(linear(ai, p.Wz, p.bz), matmul(hi, transpose(p.Uz))));
  act.r = sigmoid(add(linear(ai, p.Wr, p.br), matmul(hi, transpose(p.Ur))));
  act.h_tilde = tanh(add(linear(ai, p.Wh, p.bh), matmul(mul(act.r, hi), transpose(p.Uh))));
  Tensor one_minus_z = add(neg(act.z), 1.0);
  act.h = add(mul(one_minus_z, hi), mul(act.z, act.h_tilde));
  if (vec) {
    act.z = reshape(act.z, h_prev.shape());
    act.r = reshape(act.r, h_prev.shape());
    act.h_tilde = reshape(act.h_tilde, h_prev.shape());
    act.h = reshape(act.h, h_prev.shape());
  }
  return act;
}

inline Tensor gru_cell(const Tensor& a, const Tensor& h_prev, const GruParams& p) {
  return gru_cell_full(a, h_prev, p).h;
}

inline Tensor gru_cell(const Tensor& a, const Tensor& h_prev, const ParameterSet& ps,
                       const std::string& prefix = "") {
  return gru_cell(a, h_prev, gru_from(ps, prefix));
}

}  // namespace kern
