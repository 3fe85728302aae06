#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flowinv {

// Strictly increasing times t_0 = 0 < t_1 < ... <= 1. Full grids end exactly
// at 1; truncated grids (editing) end at t_{round(alpha*N)}.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
        if (times_.size() < 2) throw std::invalid_argument("TimeGrid: need at least two times");
        if (times_.front() != 0.0) throw std::invalid_argument("TimeGrid: first time must be exactly 0");
        if (times_.back() > 1.0) throw std::invalid_argument("TimeGrid: last time must be <= 1");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1]))
                throw std::invalid_argument("TimeGrid: times must be strictly increasing");
    }

    int size() const { return static_cast<int>(times_.size()); }
    int intervals() const { return size() - 1; }
    double operator[](int k) const { return times_[static_cast<std::size_t>(k)]; }
    double front() const { return times_.front(); }
    double back() const { return times_.back(); }
    const std::vector<double>& times() const { return times_; }

private:
    std::vector<double> times_;
};

// Times {k/n_steps : k = 0..round(alpha*n_steps)}. alpha < 1 truncates the
// grid for delayed-injection editing; spacing stays 1/n_steps.
inline TimeGrid uniform_grid(int n_steps, double alpha = 1.0) {
    if (n_steps < 1) throw std::invalid_argument("uniform_grid: n_steps must be >= 1");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("uniform_grid: alpha must be in (0,1]");
    long m = std::lround(alpha * n_steps);
    if (m < 1) throw std::invalid_argument("uniform_grid: round(alpha*n_steps) must be >= 1");
    std::vector<double> times(static_cast<std::size_t>(m) + 1);
    for (long k = 0; k <= m; ++k) times[static_cast<std::size_t>(k)] = static_cast<double>(k) / n_steps;
    return TimeGrid(std::move(times));
}

// round(alpha*n_steps): the number of solver intervals an edit uses.
inline int truncated_steps(int n_steps, double alpha) {
    return static_cast<int>(std::lround(alpha * n_steps));
}

}  // namespace flowinv
