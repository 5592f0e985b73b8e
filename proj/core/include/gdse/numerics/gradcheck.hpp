#pragma once

#include <functional>
#include <span>
#include <vector>

namespace gdse {

// Central finite differences of a scalar function.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double step = 1e-5);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

}  // namespace gdse
