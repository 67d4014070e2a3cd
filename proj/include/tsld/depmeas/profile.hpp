#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsld/depmeas/measure.hpp"

namespace tsld {

/// Global (m_{t,0}) and first-order local (m_{t,t-1}) dependency for every
/// step of one series. Index t-1 holds step t; steps whose representation
/// matched the baseline are empty.
struct DependencyProfile {
  std::vector<std::optional<double>> global;
  std::vector<std::optional<double>> local1;    // empty at t = 1
  std::vector<std::optional<double>> residual;  // sum_j m_{t,j} - 1
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  std::size_t steps() const { return global.size(); }
};

/// Measures every step of (z, X) under `settings`. The path positions for step
/// t come from a stream derived from (seed, t).
template <RepresentationFn F>
DependencyProfile dependency_profile(const F& f, std::span<const double> z, const TimeSeries& x,
                                     const MeasureSettings& settings) {
  DependencyProfile p;
  p.samples = settings.samples;
  p.seed = settings.seed;
  const std::size_t T = x.steps();
  p.global.resize(T);
  p.local1.resize(T);
  p.residual.resize(T);
  for (std::size_t t = 1; t <= T; ++t) {
    MeasureSettings step = settings;
    step.seed = Rng::derive(settings.seed, t).next_seed();
    try {
      const auto m = dependency_measure(f, measure_inputs(z, x, t), step);
      p.global[t - 1] = m.measures[0];
      if (t >= 2) p.local1[t - 1] = m.measures[t - 1];
      p.residual[t - 1] = m.residual();
    } catch (const DegenerateBaseline&) {
      // Step left absent.
    }
  }
  return p;
}

inline DependencyProfile dependency_profile(const Decoder& dec, std::span<const double> z,
                                            const TimeSeries& x, const MeasureSettings& settings) {
  return dependency_profile(DecoderRepresentation(dec), z, x, settings);
}

struct MeasureSummary {
  std::vector<double> mean;   // NaN where no profile has the step
  std::vector<double> sigma;  // sample standard deviation; NaN below two values
  std::vector<std::size_t> n;

  /// Half-width of the error bar.
  double band(std::size_t t_index) const { return 3.0 * sigma[t_index]; }
};

/// Population statistics of a set of profiles.
struct ProfileSummary {
  MeasureSummary global;
  MeasureSummary local1;
  MeasureSummary residual;
  std::size_t population = 0;

  std::size_t steps() const { return global.mean.size(); }
};

namespace detail {

inline MeasureSummary summarize(const std::vector<const std::vector<std::optional<double>>*>& rows,
                                std::size_t T) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  MeasureSummary s;
  s.mean.assign(T, nan);
  s.sigma.assign(T, nan);
  s.n.assign(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* r : rows) {
      if ((*r)[t]) {
        sum += *(*r)[t];
        ++n;
      }
    }
    s.n[t] = n;
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    s.mean[t] = mean;
    if (n < 2) continue;
    double ss = 0.0;
    for (const auto* r : rows) {
      if ((*r)[t]) ss += (*(*r)[t] - mean) * (*(*r)[t] - mean);
    }
    s.sigma[t] = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

}  // namespace detail

/// Per-step mean and sample standard deviation over a population of profiles.
inline ProfileSummary aggregate_profiles(std::span<const DependencyProfile> profiles) {
  if (profiles.size() < 2) throw InputError("aggregate_profiles needs at least two profiles");
  const std::size_t T = profiles[0].steps();
  std::vector<const std::vector<std::optional<double>>*> g, l, r;
  for (const auto& p : profiles) {
    if (p.steps() != T || p.local1.size() != T || p.residual.size() != T) {
      throw InputError("profiles disagree on the number of steps");
    }
    g.push_back(&p.global);
    l.push_back(&p.local1);
    r.push_back(&p.residual);
  }
  ProfileSummary s;
  s.global = detail::summarize(g, T);
  s.local1 = detail::summarize(l, T);
  s.residual = detail::summarize(r, T);
  s.population = profiles.size();
  return s;
}

namespace detail {

inline nlohmann::json optional_array(const std::vector<std::optional<double>>& v) {
  auto a = nlohmann::json::array();
  for (const auto& x : v) a.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
  return a;
}

inline nlohmann::json number_array(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return a;
}

inline nlohmann::json to_json(const MeasureSummary& m) {
  return {{"mean", number_array(m.mean)}, {"sigma", number_array(m.sigma)}, {"n", m.n}};
}

}  // namespace detail

inline nlohmann::json to_json(const DependencyProfile& p) {
  return {{"global", detail::optional_array(p.global)},
          {"local1", detail::optional_array(p.local1)},
          {"residual", detail::optional_array(p.residual)},
          {"samples", p.samples},
          {"seed", p.seed}};
}

inline nlohmann::json to_json(const ProfileSummary& s) {
  return {{"global", detail::to_json(s.global)},
          {"local1", detail::to_json(s.local1)},
          {"residual", detail::to_json(s.residual)},
          {"population", s.population}};
}

/// CSV with header t,measure,mean,sigma,n. Steps are 1-based; missing
/// statistics are written as empty cells.
inline std::string to_csv(const ProfileSummary& s) {
  std::ostringstream os;
  os.precision(17);
  os << "t,measure,mean,sigma,n\n";
  auto cell = [&](double v) {
    if (std::isfinite(v)) os << v;
  };
  auto rows = [&](const char* name, const MeasureSummary& m, std::size_t first) {
    for (std::size_t t = first; t <= m.mean.size(); ++t) {
      os << t << ',' << name << ',';
      cell(m.mean[t - 1]);
      os << ',';
      cell(m.sigma[t - 1]);
      os << ',' << m.n[t - 1] << '\n';
    }
  };
  rows("global", s.global, 1);
  rows("local1", s.local1, 2);
  return os.str();
}

}  // namespace tsld
