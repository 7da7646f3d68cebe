#pragma once

#include <cmath>

namespace nilm {

/// Neumaier-compensated running sum. Two partial sums can be merged without
/// losing the carried error terms.
class CompensatedSum {
 public:
  CompensatedSum() = default;
  explicit CompensatedSum(double value) { add(value); }

  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  void merge(const CompensatedSum& other) noexcept {
    add(other.sum_);
    add(other.compensation_);
  }

  double value() const noexcept { return sum_ + compensation_; }

  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace nilm
