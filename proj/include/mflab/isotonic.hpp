#pragma once

#include <cmath>
#include <vector>

namespace mflab {

/// Weighted pool-adjacent-violators: nondecreasing fit of y (in the given
/// order) minimizing Σ w (y − fit)².
inline std::vector<double> isotonic_increasing(const std::vector<double>& y, const std::vector<double>& w) {
    struct Block {
        double sum_wy, sum_w;
        size_t len;
    };
    std::vector<Block> st;
    st.reserve(y.size());
    for (size_t k = 0; k < y.size(); ++k) {
        st.push_back({w[k] * y[k], w[k], 1});
        while (st.size() >= 2) {
            const Block& b = st.back();
            const Block& a = st[st.size() - 2];
            if (a.sum_wy / a.sum_w <= b.sum_wy / b.sum_w) break;
            Block m{a.sum_wy + b.sum_wy, a.sum_w + b.sum_w, a.len + b.len};
            st.pop_back();
            st.back() = m;
        }
    }
    std::vector<double> fit;
    fit.reserve(y.size());
    for (const Block& b : st) fit.insert(fit.end(), b.len, b.sum_wy / b.sum_w);
    return fit;
}

} // namespace mflab
