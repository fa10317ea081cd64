#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hilab {

enum class ScheduleKind { Horizon, Pyramidal };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

struct ScheduleSpec {
  std::size_t horizon = 32;  ///< frames generated (H)
  std::size_t budget = 16;   ///< denoising steps (B)
  double decay_horizon = 4;  ///< nu in [1, H]; ignored by Pyramidal
  ScheduleKind kind = ScheduleKind::Horizon;

  /// Throws std::invalid_argument on out-of-range fields.
  void check() const;
};

/// Denoising times per (step, frame): B+1 rows, H columns.
class ScheduleMatrix {
 public:
  ScheduleMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  /// Number of denoising steps (rows - 1).
  [[nodiscard]] std::size_t budget() const noexcept { return rows_ - 1; }
  [[nodiscard]] std::size_t horizon() const noexcept { return cols_; }

  [[nodiscard]] double operator()(std::size_t row, std::size_t col) const noexcept {
    return entries_[row * cols_ + col];
  }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {entries_.data() + r * cols_, cols_};
  }

  /// Row step+1 minus row step, for step in [0, B).
  [[nodiscard]] std::vector<double> time_deltas(std::size_t step) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> entries_;
};

/// Clamped lines of slope -1/nu; every (H, B >= 1, nu in [1, H]) is valid.
ScheduleMatrix horizon_schedule(const ScheduleSpec& spec);

/// Staggered-ramp baseline whose decay horizon is tied to the budget.
/// Requires B >= H.
ScheduleMatrix pyramidal_schedule(const ScheduleSpec& spec);

/// Dispatches on spec.kind.
ScheduleMatrix make_schedule(const ScheduleSpec& spec);

struct ScheduleViolation {
  enum class Kind { Range, ColumnDecreasing, RowIncreasing, FirstRowNotZero, LastRowNotOne };
  Kind kind;
  std::size_t row;
  std::size_t col;
  std::string message;
};

/// First violated invariant in row-major scan order, or nullopt.
std::optional<ScheduleViolation> validate(const ScheduleMatrix& k);

}  // namespace hilab
