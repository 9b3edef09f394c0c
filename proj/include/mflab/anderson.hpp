#pragma once

#include <Eigen/Dense>

#include <deque>
#include <vector>

namespace mflab::detail {

/// Type-II Anderson mixing for a fixed point x = g(x) with damping θ.
class AndersonMixer {
public:
    explicit AndersonMixer(size_t depth = 6, double damping = 1.0) : depth_(depth), theta_(damping) {}

    void reset() {
        dX_.clear();
        dF_.clear();
        x_prev_.clear();
    }

    /// Next iterate from the current x and g(x).
    std::vector<double> step(const std::vector<double>& x, const std::vector<double>& gx) {
        const size_t n = x.size();
        std::vector<double> f(n);
        for (size_t k = 0; k < n; ++k) f[k] = gx[k] - x[k];
        if (!x_prev_.empty()) {
            std::vector<double> dx(n), df(n);
            for (size_t k = 0; k < n; ++k) {
                dx[k] = x[k] - x_prev_[k];
                df[k] = f[k] - f_prev_[k];
            }
            dX_.push_back(std::move(dx));
            dF_.push_back(std::move(df));
            if (dX_.size() > depth_) {
                dX_.pop_front();
                dF_.pop_front();
            }
        }
        x_prev_ = x;
        f_prev_ = f;
        std::vector<double> out(n);
        for (size_t k = 0; k < n; ++k) out[k] = x[k] + theta_ * f[k];
        if (dF_.empty()) return out;
        const auto cols = static_cast<Eigen::Index>(dF_.size());
        Eigen::MatrixXd F(static_cast<Eigen::Index>(n), cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (size_t k = 0; k < n; ++k) F(static_cast<Eigen::Index>(k), c) = dF_[static_cast<size_t>(c)][k];
        const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd g = F.colPivHouseholderQr().solve(rhs);
        if (!g.allFinite()) {
            reset();
            return out;
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& dx = dX_[static_cast<size_t>(c)];
            const auto& df = dF_[static_cast<size_t>(c)];
            for (size_t k = 0; k < n; ++k) out[k] -= g(c) * (dx[k] + theta_ * df[k]);
        }
        return out;
    }

private:
    size_t depth_;
    double theta_;
    std::deque<std::vector<double>> dX_, dF_;
    std::vector<double> x_prev_, f_prev_;
};

} // namespace mflab::detail
