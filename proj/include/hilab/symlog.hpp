#pragma once

#include <cmath>

namespace hilab {

/// sign(x) * log(|x| + 1)
inline double symlog(double x) noexcept { return std::copysign(std::log1p(std::abs(x)), x); }

/// sign(x) * (exp(|x|) - 1), the inverse of symlog.
inline double symexp(double x) noexcept { return std::copysign(std::expm1(std::abs(x)), x); }

}  // namespace hilab
