#pragma once

#include <cmath>

namespace oneshot {

/// Compensated (Neumaier) running sum. Results depend only on the order in
/// which values are added, so callers fix that order.
class NeumaierSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace oneshot
