#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsld/errors.hpp"

namespace tsld {

/// T ordered observations of dimension D, stored row-major. Row 0 holds x_1.
class TimeSeries {
 public:
  TimeSeries() = default;

  TimeSeries(std::size_t steps, std::size_t dim) : steps_(steps), dim_(dim), values_(steps * dim, 0.0) {
    check_extents();
  }

  TimeSeries(std::size_t steps, std::size_t dim, std::vector<double> values)
      : steps_(steps), dim_(dim), values_(std::move(values)) {
    check_extents();
    if (values_.size() != steps_ * dim_) {
      throw ShapeError("time series needs " + std::to_string(steps_ * dim_) + " values, got " +
                       std::to_string(values_.size()));
    }
    validate();
  }

  std::size_t steps() const noexcept { return steps_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> row(std::size_t t) const { return {values_.data() + t * dim_, dim_}; }
  std::span<double> row(std::size_t t) { return {values_.data() + t * dim_, dim_}; }

  double at(std::size_t t, std::size_t d) const { return values_[t * dim_ + d]; }
  double& at(std::size_t t, std::size_t d) { return values_[t * dim_ + d]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Throws InputError if any value is NaN or infinite.
  void validate() const {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw InputError("non-finite observation at step " + std::to_string(i / dim_ + 1) +
                         ", feature " + std::to_string(i % dim_ + 1));
      }
    }
  }

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  void check_extents() const {
    if (steps_ < 1 || dim_ < 1) throw InputError("time series needs T >= 1 and D >= 1");
  }

  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

}  // namespace tsld
