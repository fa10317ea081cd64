#include "hilab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hilab {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "horizon") return ScheduleKind::Horizon;
  if (name == "pyramidal") return ScheduleKind::Pyramidal;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Horizon ? "horizon" : "pyramidal";
}

void ScheduleSpec::check() const {
  if (horizon < 1) throw std::invalid_argument("schedule: horizon must be >= 1");
  if (budget < 1) throw std::invalid_argument("schedule: budget must be >= 1");
  if (kind == ScheduleKind::Horizon) {
    if (!(decay_horizon >= 1.0 && decay_horizon <= static_cast<double>(horizon))) {
      throw std::invalid_argument("schedule: decay horizon must lie in [1, H]");
    }
  } else if (budget < horizon) {
    throw std::invalid_argument("schedule: pyramidal schedule does not support sub-frame budgets (B < H)");
  }
}

ScheduleMatrix::ScheduleMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows_ < 2 || cols_ < 1 || entries_.size() != rows_ * cols_) {
    throw std::invalid_argument("ScheduleMatrix: bad shape");
  }
}

std::vector<double> ScheduleMatrix::time_deltas(std::size_t step) const {
  if (step >= budget()) throw std::out_of_range("time_deltas: step out of range");
  std::vector<double> d(cols_);
  for (std::size_t j = 0; j < cols_; ++j) d[j] = (*this)(step + 1, j) - (*this)(step, j);
  return d;
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

ScheduleMatrix horizon_schedule(const ScheduleSpec& spec) {
  if (spec.kind != ScheduleKind::Horizon) throw std::invalid_argument("horizon_schedule: wrong kind");
  spec.check();
  const std::size_t h = spec.horizon;
  const std::size_t b = spec.budget;
  const double nu = spec.decay_horizon;
  const auto hd = static_cast<double>(h);
  const auto bd = static_cast<double>(b);
  std::vector<double> k((b + 1) * h);
  // f(t, s) = -t/nu + (s/B)(1 + (H-1)/nu), written over the common
  // denominator nu*B so integer inputs reproduce exact staircases.
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t t = 0; t < h; ++t) {
      const double num = static_cast<double>(s) * (nu + hd - 1.0) - static_cast<double>(t) * bd;
      k[s * h + t] = clamp01(num / (nu * bd));
    }
  }
  std::fill(k.begin() + static_cast<std::ptrdiff_t>(b * h), k.end(), 1.0);
  return ScheduleMatrix(b + 1, h, std::move(k));
}

ScheduleMatrix pyramidal_schedule(const ScheduleSpec& spec) {
  if (spec.kind != ScheduleKind::Pyramidal) throw std::invalid_argument("pyramidal_schedule: wrong kind");
  spec.check();
  const std::size_t h = spec.horizon;
  const std::size_t b = spec.budget;
  const double denom = static_cast<double>(b - (h - 1));
  std::vector<double> k((b + 1) * h);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t t = 0; t < h; ++t) {
      const double num = static_cast<double>(s) - static_cast<double>(t);
      k[s * h + t] = clamp01(num / denom);
    }
  }
  std::fill(k.begin() + static_cast<std::ptrdiff_t>(b * h), k.end(), 1.0);
  return ScheduleMatrix(b + 1, h, std::move(k));
}

ScheduleMatrix make_schedule(const ScheduleSpec& spec) {
  return spec.kind == ScheduleKind::Horizon ? horizon_schedule(spec) : pyramidal_schedule(spec);
}

std::optional<ScheduleViolation> validate(const ScheduleMatrix& k) {
  using Kind = ScheduleViolation::Kind;
  const auto report = [](Kind kind, std::size_t r, std::size_t c, const char* what) {
    return ScheduleViolation{kind, r, c,
                             std::string(what) + " at (" + std::to_string(r) + ", " + std::to_string(c) + ")"};
  };
  for (std::size_t r = 0; r < k.rows(); ++r) {
    for (std::size_t c = 0; c < k.cols(); ++c) {
      const double v = k(r, c);
      if (!(v >= 0.0 && v <= 1.0)) return report(Kind::Range, r, c, "entry outside [0,1]");
      if (r == 0 && v != 0.0) return report(Kind::FirstRowNotZero, r, c, "first row not zero");
      if (r + 1 == k.rows() && v != 1.0) return report(Kind::LastRowNotOne, r, c, "last row not one");
      if (r > 0 && v < k(r - 1, c)) return report(Kind::ColumnDecreasing, r, c, "column decreases");
      if (c > 0 && v > k(r, c - 1)) return report(Kind::RowIncreasing, r, c, "row increases");
    }
  }
  return std::nullopt;
}

}  // namespace hilab
