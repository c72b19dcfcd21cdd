#pragma once

#include <cstddef>
#include <span>

namespace mpfio {

/// Ordinary least-squares line y = intercept + slope * x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double residual = 0.0;  // root-mean-square residual
  std::size_t n = 0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace mpfio
