#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tsld/numkit/random.hpp"
#include "tsld/seqnets/time_series.hpp"

namespace tsld {

/// Per-feature affine map between original units and the z-scored values the
/// models see.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization identity(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  }

  TimeSeries apply(const TimeSeries& x) const {
    TimeSeries out = x;
    for (std::size_t t = 0; t < x.steps(); ++t)
      for (std::size_t d = 0; d < x.dim(); ++d) out.at(t, d) = (x.at(t, d) - mean[d]) / stddev[d];
    return out;
  }

  TimeSeries invert(const TimeSeries& x) const {
    TimeSeries out = x;
    for (std::size_t t = 0; t < x.steps(); ++t)
      for (std::size_t d = 0; d < x.dim(); ++d) out.at(t, d) = x.at(t, d) * stddev[d] + mean[d];
    return out;
  }
};

/// A collection of equally shaped series, stored normalized, with the
/// statistics needed to map back to original units.
struct Dataset {
  std::string name;
  std::string provenance;
  std::vector<TimeSeries> series;
  Normalization norm;

  std::size_t size() const { return series.size(); }
  std::size_t steps() const { return series.empty() ? 0 : series.front().steps(); }
  std::size_t dim() const { return series.empty() ? 0 : series.front().dim(); }

  void check_shape() const {
    for (const auto& s : series) {
      if (s.steps() != steps() || s.dim() != dim()) {
        throw InputError("dataset '" + name + "' mixes series of different shapes");
      }
    }
    if (norm.mean.size() != dim() || norm.stddev.size() != dim()) {
      throw InputError("dataset '" + name + "' has normalization of the wrong width");
    }
  }

  /// Series mapped back to original units.
  std::vector<TimeSeries> original() const {
    std::vector<TimeSeries> out;
    out.reserve(series.size());
    for (const auto& s : series) out.push_back(norm.invert(s));
    return out;
  }
};

/// Per-feature mean and standard deviation over every step of every series.
/// Constant features get unit scale so the map stays invertible.
inline Normalization fit_normalization(std::span<const TimeSeries> raw) {
  if (raw.empty()) throw InputError("cannot normalize an empty dataset");
  const std::size_t D = raw[0].dim();
  Normalization n{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  double count = 0.0;
  for (const auto& s : raw) {
    for (std::size_t t = 0; t < s.steps(); ++t)
      for (std::size_t d = 0; d < D; ++d) n.mean[d] += s.at(t, d);
    count += static_cast<double>(s.steps());
  }
  for (double& m : n.mean) m /= count;
  for (const auto& s : raw) {
    for (std::size_t t = 0; t < s.steps(); ++t)
      for (std::size_t d = 0; d < D; ++d) n.stddev[d] += (s.at(t, d) - n.mean[d]) * (s.at(t, d) - n.mean[d]);
  }
  for (double& v : n.stddev) {
    v = count > 1.0 ? std::sqrt(v / (count - 1.0)) : 0.0;
    if (!(v > 1e-12)) v = 1.0;
  }
  return n;
}

/// Builds a normalized dataset from series in original units.
inline Dataset make_dataset(std::string name, std::string provenance, std::vector<TimeSeries> raw) {
  if (raw.empty()) throw InputError("dataset '" + name + "' has no series");
  Dataset ds{std::move(name), std::move(provenance), {}, fit_normalization(raw)};
  ds.series.reserve(raw.size());
  for (const auto& s : raw) ds.series.push_back(ds.norm.apply(s));
  ds.check_shape();
  return ds;
}

enum class SyntheticKind { ar1, sine_mixture, regime_switch };

inline const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::ar1: return "ar1";
    case SyntheticKind::sine_mixture: return "sine_mixture";
    case SyntheticKind::regime_switch: return "regime_switch";
  }
  return "?";
}

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "ar1") return SyntheticKind::ar1;
  if (s == "sine_mixture") return SyntheticKind::sine_mixture;
  if (s == "regime_switch") return SyntheticKind::regime_switch;
  throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::ar1;
  std::size_t steps = 12;
  std::size_t dim = 5;
  std::size_t count = 500;
  std::uint64_t seed = 0;
  double phi = 0.8;            // ar1: lag-1 coefficient
  double noise = 0.1;          // sine_mixture: observation noise
  double switch_prob = 0.15;   // regime_switch: per-step switching probability
  double regime_gap = 3.0;     // regime_switch: distance between regime means

  void validate() const {
    if (count < 1) throw ConfigError("synthetic dataset needs n >= 1");
    if (steps < 1 || dim < 1) throw ConfigError("synthetic dataset needs T >= 1 and D >= 1");
    if (kind == SyntheticKind::ar1 && !(std::abs(phi) < 1.0)) throw ConfigError("ar1 needs |phi| < 1");
    if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
    if (!(switch_prob >= 0.0 && switch_prob <= 1.0)) throw ConfigError("switch_prob must lie in [0, 1]");
  }
};

namespace detail {

// Stationary AR(1) with unit marginal variance, independent per feature.
inline TimeSeries ar1_series(const SyntheticSpec& s, Rng& rng) {
  TimeSeries x(s.steps, s.dim);
  const double innov = std::sqrt(1.0 - s.phi * s.phi);
  for (std::size_t d = 0; d < s.dim; ++d) x.at(0, d) = rng.normal();
  for (std::size_t t = 1; t < s.steps; ++t)
    for (std::size_t d = 0; d < s.dim; ++d) x.at(t, d) = s.phi * x.at(t - 1, d) + innov * rng.normal();
  return x;
}

// One of two sinusoid families (slow or fast) chosen per series, with random
// amplitude and per-feature phase.
inline TimeSeries sine_series(const SyntheticSpec& s, Rng& rng) {
  TimeSeries x(s.steps, s.dim);
  const bool fast = rng.uniform() < 0.5;
  const double omega = fast ? 2.0 * std::numbers::pi / 4.0 : 2.0 * std::numbers::pi / 12.0;
  const double amp = rng.uniform(0.5, 1.5);
  for (std::size_t d = 0; d < s.dim; ++d) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < s.steps; ++t) {
      x.at(t, d) = amp * std::sin(omega * static_cast<double>(t) + phase) + s.noise * rng.normal();
    }
  }
  return x;
}

// Two-state Markov regime with means +/- gap/2 and small within-regime noise.
// The marginal is bimodal.
inline TimeSeries regime_series(const SyntheticSpec& s, Rng& rng) {
  TimeSeries x(s.steps, s.dim);
  bool high = rng.uniform() < 0.5;
  for (std::size_t t = 0; t < s.steps; ++t) {
    if (t > 0 && rng.uniform() < s.switch_prob) high = !high;
    const double level = (high ? 0.5 : -0.5) * s.regime_gap;
    for (std::size_t d = 0; d < s.dim; ++d) x.at(t, d) = level + 0.3 * rng.normal();
  }
  return x;
}

}  // namespace detail

/// Raw synthetic series in original units.
inline std::vector<TimeSeries> synthetic_series(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<TimeSeries> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    switch (spec.kind) {
      case SyntheticKind::ar1: out.push_back(detail::ar1_series(spec, rng)); break;
      case SyntheticKind::sine_mixture: out.push_back(detail::sine_series(spec, rng)); break;
      case SyntheticKind::regime_switch: out.push_back(detail::regime_series(spec, rng)); break;
    }
  }
  return out;
}

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  std::ostringstream prov;
  prov << "synthetic:" << to_string(spec.kind) << ":T=" << spec.steps << ":D=" << spec.dim
       << ":n=" << spec.count << ":seed=" << spec.seed;
  return make_dataset(to_string(spec.kind), prov.str(), synthetic_series(spec));
}

/// Permutes the rows of every series with an independent uniform permutation.
inline Dataset shuffle_series(const Dataset& ds, std::uint64_t seed) {
  Rng rng(seed);
  Dataset out = ds;
  out.name = ds.name + "_shuffled";
  out.provenance = ds.provenance + ":shuffled:seed=" + std::to_string(seed);
  for (auto& s : out.series) {
    std::vector<std::size_t> order(s.steps());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    const TimeSeries src = s;
    for (std::size_t t = 0; t < s.steps(); ++t)
      for (std::size_t d = 0; d < s.dim(); ++d) s.at(t, d) = src.at(order[t], d);
  }
  return out;
}

/// Splits off the last `holdout` series (in original order) as a second dataset
/// sharing the first one's normalization.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t holdout) {
  if (holdout >= ds.size()) throw ConfigError("holdout must leave at least one training series");
  Dataset train = ds, test = ds;
  train.series.assign(ds.series.begin(), ds.series.end() - static_cast<std::ptrdiff_t>(holdout));
  test.series.assign(ds.series.end() - static_cast<std::ptrdiff_t>(holdout), ds.series.end());
  test.name = ds.name + "_holdout";
  return {std::move(train), std::move(test)};
}

struct CsvOptions {
  std::size_t steps = 12;
  std::size_t dim = 0;           // 0: take every feature column in the file
  std::size_t top_variance = 0;  // keep only the k highest-variance features; 0 keeps all
};

/// Reads `series_id,step,f1..fD` rows sorted by (series_id, step) and returns a
/// z-normalized dataset. Errors carry the 1-based file line.
inline Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(l);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "series_id" || header[1] != "step") {
    throw ParseError("header must start with series_id,step followed by feature columns", 1);
  }
  const std::size_t D = header.size() - 2;
  if (opt.dim != 0 && opt.dim != D) {
    throw ParseError("expected " + std::to_string(opt.dim) + " features, header has " + std::to_string(D), 1);
  }
  if (opt.steps < 1) throw ConfigError("CSV steps must be >= 1");

  std::vector<TimeSeries> raw;
  std::vector<double> buffer;
  std::string current_id;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != D + 2) {
      throw ParseError("expected " + std::to_string(D + 2) + " cells, found " + std::to_string(cells.size()), row);
    }
    const std::size_t pos = buffer.size() / D;
    if (pos == 0) {
      current_id = cells[0];
    } else if (cells[0] != current_id) {
      throw ParseError("series '" + current_id + "' ended after " + std::to_string(pos) + " of " +
                           std::to_string(opt.steps) + " steps", row);
    }
    try {
      std::size_t used = 0;
      const long step = std::stol(cells[1], &used);
      if (used != cells[1].size() || step != static_cast<long>(pos + 1)) throw std::invalid_argument("step");
    } catch (const std::logic_error&) {
      throw ParseError("step column must count 1.." + std::to_string(opt.steps) + " within a series", row);
    }
    for (std::size_t d = 0; d < D; ++d) {
      const std::string& c = cells[d + 2];
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(c, &used);
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::logic_error&) {
        throw ParseError("non-numeric value '" + c + "' in column f" + std::to_string(d + 1), row);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite value in column f" + std::to_string(d + 1), row);
      buffer.push_back(v);
    }
    if (buffer.size() == opt.steps * D) {
      raw.emplace_back(opt.steps, D, std::move(buffer));
      buffer.clear();
    }
  }
  if (!buffer.empty()) {
    throw ParseError("last series has " + std::to_string(buffer.size() / D) + " of " +
                         std::to_string(opt.steps) + " steps", row);
  }
  if (raw.empty()) throw ParseError("no data rows", row);

  if (opt.top_variance > 0 && opt.top_variance < D) {
    const Normalization stats = fit_normalization(raw);
    std::vector<std::size_t> order(D);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return stats.stddev[a] > stats.stddev[b]; });
    order.resize(opt.top_variance);
    std::sort(order.begin(), order.end());
    for (auto& s : raw) {
      TimeSeries sel(s.steps(), order.size());
      for (std::size_t t = 0; t < s.steps(); ++t)
        for (std::size_t k = 0; k < order.size(); ++k) sel.at(t, k) = s.at(t, order[k]);
      s = std::move(sel);
    }
  }
  return make_dataset(path, "file:" + path, std::move(raw));
}

/// Writes the dataset in original units with full double precision.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.precision(17);
  out << "series_id,step";
  for (std::size_t d = 0; d < ds.dim(); ++d) out << ",f" << d + 1;
  out << '\n';
  const auto orig = ds.original();
  for (std::size_t i = 0; i < orig.size(); ++i) {
    for (std::size_t t = 0; t < orig[i].steps(); ++t) {
      out << i << ',' << t + 1;
      for (std::size_t d = 0; d < orig[i].dim(); ++d) out << ',' << orig[i].at(t, d);
      out << '\n';
    }
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace tsld
