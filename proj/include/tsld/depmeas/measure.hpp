#pragma once

#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "tsld/numkit/grad.hpp"
#include "tsld/numkit/random.hpp"
#include "tsld/seqnets/decoder.hpp"

namespace tsld {

/// A representation h_t = f(x_0, ..., x_{t-1}) evaluated on a tape, where
/// x_0 is the latent variable.
template <class F>
concept RepresentationFn = requires(const F& f, Tape& tape, std::span<const Var> xs) {
  { f(tape, xs) } -> std::same_as<Var>;
};

/// How the path positions s in (0, 1] are chosen.
enum class PathSampling { uniform, midpoint };

inline const char* to_string(PathSampling m) { return m == PathSampling::uniform ? "uniform" : "midpoint"; }

inline PathSampling path_sampling_from_string(const std::string& s) {
  if (s == "uniform") return PathSampling::uniform;
  if (s == "midpoint") return PathSampling::midpoint;
  throw ConfigError("unknown path sampling mode '" + s + "'");
}

struct MeasureSettings {
  std::size_t samples = 64;  // |S|
  PathSampling mode = PathSampling::uniform;
  std::uint64_t seed = 0;
};

/// Positions along the straight line from the zero baseline to the input.
/// Uniform mode draws them from U(0, 1); midpoint mode uses (k + 1/2) / |S|.
inline std::vector<double> path_positions(std::size_t count, PathSampling mode, Rng& rng) {
  if (count < 1) throw ContractError("need at least one path sample");
  std::vector<double> s(count);
  for (std::size_t k = 0; k < count; ++k) {
    s[k] = mode == PathSampling::uniform
               ? rng.uniform()
               : (static_cast<double>(k) + 0.5) / static_cast<double>(count);
  }
  return s;
}

/// Result of one measurement at a fixed step t.
struct StepMeasures {
  std::vector<double> measures;  // m_{t,j} for j = 0 .. t-1
  double baseline_gap = 0.0;     // ||h_t - h~_t||

  /// sum_j m_{t,j} - 1
  double residual() const {
    double s = 0.0;
    for (double m : measures) s += m;
    return s - 1.0;
  }
};

/// Records s * x_j for every input as tape leaves.
inline std::vector<Var> scaled_inputs(Tape& tape, std::span<const std::vector<double>> inputs,
                                      double s) {
  std::vector<Var> xs;
  xs.reserve(inputs.size());
  for (const auto& x : inputs) {
    std::vector<double> scaled(x);
    for (double& v : scaled) v *= s;
    xs.push_back(tape.input(scaled));
  }
  return xs;
}

/// Signed share of h_t - h~_t attributed to each input x_j:
///
///   m_{t,j} = <h_t - h~_t, sum_k x_{j,k} avg_s d f / d x_{j,k} (s X)> / ||h_t - h~_t||^2
///
/// where h~_t is the representation at the all-zero input. One set of path
/// positions is shared by every (j, k), so sum_j m_{t,j} is exactly the
/// Riemann estimate of the line integral divided by ||h_t - h~_t||^2.
/// Throws DegenerateBaseline if ||h_t - h~_t||^2 <= 1e-12 dim(h).
template <RepresentationFn F>
StepMeasures dependency_measure(const F& f, std::span<const std::vector<double>> inputs,
                                const MeasureSettings& settings) {
  if (inputs.empty()) throw ContractError("dependency_measure needs at least x_0");
  std::vector<double> gap;
  {
    Tape tape;
    gap = f(tape, scaled_inputs(tape, inputs, 1.0)).value().storage();
  }
  {
    Tape tape;
    const Tensor& base = f(tape, scaled_inputs(tape, inputs, 0.0)).value();
    for (std::size_t i = 0; i < gap.size(); ++i) gap[i] -= base[i];
  }
  double den = 0.0;
  for (double g : gap) den += g * g;
  if (!(den > 1e-12 * static_cast<double>(gap.size()))) throw DegenerateBaseline(std::sqrt(den));

  Rng rng(settings.seed);
  const auto positions = path_positions(settings.samples, settings.mode, rng);
  std::vector<double> acc(inputs.size(), 0.0);
  for (double s : positions) {
    Tape tape;
    const auto xs = scaled_inputs(tape, inputs, s);
    Var h = f(tape, xs);
    if (h.size() != gap.size()) throw ShapeError("representation size changed along the path");
    tape.backward(h, gap);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const auto g = tape.grad(xs[j].id);
      if (g.empty()) continue;  // h_t does not read x_j
      double dot = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) dot += inputs[j][k] * g[k];
      acc[j] += dot;
    }
  }
  StepMeasures out;
  out.baseline_gap = std::sqrt(den);
  out.measures.resize(inputs.size());
  const double norm = static_cast<double>(positions.size()) * den;
  for (std::size_t j = 0; j < inputs.size(); ++j) out.measures[j] = acc[j] / norm;
  return out;
}

/// h_t of a sequence decoder as a representation function of (z, x_1..x_{t-1}).
class DecoderRepresentation {
 public:
  DecoderRepresentation(const Decoder& dec) : dec_(&dec) {}

  Var operator()(Tape& tape, std::span<const Var> xs) const {
    return dec_->represent(tape, xs[0], xs.subspan(1), xs.size()).back();
  }

 private:
  const Decoder* dec_;
};

/// h~_t: the decoder output when z and every observation are zero.
inline std::vector<double> baseline_representation(const Decoder& dec, std::size_t t) {
  if (t < 1) throw ContractError("baseline_representation needs t >= 1");
  std::vector<std::vector<double>> zeros;
  zeros.emplace_back(dec.shape().latent, 0.0);
  for (std::size_t j = 1; j < t; ++j) zeros.emplace_back(dec.shape().dim, 0.0);
  Tape tape;
  return DecoderRepresentation(dec)(tape, scaled_inputs(tape, zeros, 1.0)).value().storage();
}

/// Inputs (z, x_1, ..., x_{t-1}) for measuring step t of a series.
inline std::vector<std::vector<double>> measure_inputs(std::span<const double> z, const TimeSeries& x,
                                                       std::size_t t) {
  if (t < 1 || t > x.steps()) throw ContractError("measurement step outside [1, T]");
  std::vector<std::vector<double>> in;
  in.emplace_back(z.begin(), z.end());
  for (std::size_t j = 1; j < t; ++j) {
    auto row = x.row(j - 1);
    in.emplace_back(row.begin(), row.end());
  }
  return in;
}

}  // namespace tsld
