#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tsld/numkit/tape.hpp"

namespace tsld {

/// d loss / d theta for every parameter recorded on the loss's tape, keyed by
/// parameter name.
inline std::map<std::string, Tensor> grad_wrt_params(Var loss) {
  Tape& tape = *loss.tape;
  tape.zero_grad();
  tape.backward(loss);
  std::map<std::string, Tensor> out;
  for (const auto& [p, id] : tape.params()) out.emplace(p->name, tape.grad_tensor(id));
  return out;
}

/// Gradients for an ordered parameter list (zeros for parameters the loss
/// never touched). Assumes backward() has already run.
inline std::vector<Tensor> collect_grads(const Tape& tape, std::span<Parameter* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  std::map<const Parameter*, std::size_t> index;
  for (const auto& [p, id] : tape.params()) index.emplace(p, id);
  for (const Parameter* p : params) {
    auto it = index.find(p);
    out.push_back(it == index.end() ? Tensor(p->value.shape()) : tape.grad_tensor(it->second));
  }
  return out;
}

/// Vector-Jacobian product: seed^T d output / d input for every listed input.
inline std::vector<Tensor> vector_jacobian_product(Var output, std::span<const double> seed,
                                                   std::span<const Var> inputs) {
  Tape& tape = *output.tape;
  tape.zero_grad();
  tape.backward(output, seed);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (Var in : inputs) out.push_back(tape.grad_tensor(in.id));
  return out;
}

/// Jacobian of a vector output restricted to the listed inputs: row r holds the
/// gradient of output coordinate r with respect to the concatenated input
/// coordinates. Column c of the result is therefore the derivative of the full
/// output with respect to input scalar c.
inline Tensor jacobian(Var output, std::span<const Var> inputs) {
  Tape& tape = *output.tape;
  const std::size_t m = output.size();
  std::size_t n = 0;
  for (Var in : inputs) n += in.size();
  Tensor J({m, n});
  std::vector<bool> reached(inputs.size(), false);
  std::vector<double> seed(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    tape.zero_grad();
    seed.assign(m, 0.0);
    seed[r] = 1.0;
    tape.backward(output, seed);
    std::size_t col = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Var in = inputs[k];
      if (tape.reached(in.id)) {
        reached[k] = true;
        const auto g = tape.grad(in.id);
        for (std::size_t c = 0; c < g.size(); ++c) J(r, col + c) = g[c];
      }
      col += in.size();
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!reached[k]) {
      throw ContractError("jacobian: output is not reachable from input #" + std::to_string(k));
    }
  }
  return J;
}

}  // namespace tsld
