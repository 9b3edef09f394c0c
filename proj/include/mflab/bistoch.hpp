#pragma once

#include "mflab/greens.hpp"
#include "mflab/rearrange.hpp"

#include <queue>

namespace mflab {

inline constexpr size_t kMaxDenseCells = 4096;

/// Dense doubly stochastic matrix, row-major.
class BistochasticMatrix {
public:
    BistochasticMatrix() = default;
    BistochasticMatrix(size_t n, std::vector<double> entries, double tol = 1e-12) : n_(n), a_(std::move(entries)) {
        if (n_ == 0 || n_ > kMaxDenseCells)
            throw Error(ErrorCode::SizeMismatch, "dense bistochastic matrices are limited to 1.." +
                                                     std::to_string(kMaxDenseCells) + " cells");
        if (a_.size() != n_ * n_) throw Error(ErrorCode::SizeMismatch, "entry count is not n*n");
        const double worst = max_marginal_error();
        if (worst > tol) throw Error(ErrorCode::NotBistochastic, "marginal error " + detail::fmt17(worst));
        for (double x : a_)
            if (!(x >= 0.0)) throw Error(ErrorCode::NotBistochastic, "negative or non-finite entry");
    }

    static BistochasticMatrix identity(size_t n) {
        std::vector<double> a(n * n, 0.0);
        for (size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
        return BistochasticMatrix(n, std::move(a));
    }
    static BistochasticMatrix complete_mixing(size_t n) {
        return BistochasticMatrix(n, std::vector<double>(n * n, 1.0 / static_cast<double>(n)));
    }
    /// Σ wₖ P(σₖ) with (Pω)ᵢ = ω_{σ(i)}.
    static BistochasticMatrix from_permutations(const std::vector<double>& w, const std::vector<std::vector<size_t>>& perms) {
        if (w.empty() || w.size() != perms.size()) throw Error(ErrorCode::SizeMismatch, "weights/permutations mismatch");
        const size_t n = perms[0].size();
        std::vector<double> a(n * n, 0.0);
        for (size_t k = 0; k < w.size(); ++k)
            for (size_t i = 0; i < n; ++i) a[i * n + perms[k][i]] += w[k];
        return BistochasticMatrix(n, std::move(a), 1e-10);
    }

    size_t n() const { return n_; }
    double operator()(size_t i, size_t j) const { return a_[i * n_ + j]; }
    const std::vector<double>& entries() const { return a_; }

    double max_marginal_error() const {
        double worst = 0.0;
        for (size_t i = 0; i < n_; ++i) {
            Accumulator r, c;
            for (size_t j = 0; j < n_; ++j) {
                r.add(a_[i * n_ + j]);
                c.add(a_[j * n_ + i]);
            }
            worst = std::max({worst, std::abs(r.value() - 1.0), std::abs(c.value() - 1.0)});
        }
        return worst;
    }

    BistochasticMatrix operator*(const BistochasticMatrix& b) const {
        if (b.n_ != n_) throw Error(ErrorCode::SizeMismatch, "matrix sizes differ");
        std::vector<double> c(n_ * n_, 0.0);
        for (size_t i = 0; i < n_; ++i)
            for (size_t k = 0; k < n_; ++k) {
                const double x = a_[i * n_ + k];
                if (x == 0.0) continue;
                for (size_t j = 0; j < n_; ++j) c[i * n_ + j] += x * b.a_[k * n_ + j];
            }
        return BistochasticMatrix(n_, std::move(c), 1e-11);
    }

private:
    size_t n_ = 0;
    std::vector<double> a_;
};

/// Sinkhorn–Knopp balancing of a positive matrix to double stochasticity.
inline BistochasticMatrix sinkhorn_balance(size_t n, std::vector<double> a, int max_iter = 10000) {
    for (int it = 0; it < max_iter; ++it) {
        for (size_t i = 0; i < n; ++i) {
            double s = 0;
            for (size_t j = 0; j < n; ++j) s += a[i * n + j];
            for (size_t j = 0; j < n; ++j) a[i * n + j] /= s;
        }
        double worst = 0;
        for (size_t j = 0; j < n; ++j) {
            double s = 0;
            for (size_t i = 0; i < n; ++i) s += a[i * n + j];
            for (size_t i = 0; i < n; ++i) a[i * n + j] /= s;
            worst = std::max(worst, std::abs(s - 1.0));
        }
        if (worst < 1e-15) break;
    }
    return BistochasticMatrix(n, std::move(a), 1e-12);
}

inline VorticityField apply(const BistochasticMatrix& K, const VorticityField& f) {
    if (K.n() != f.size()) throw Error(ErrorCode::SizeMismatch, "matrix size does not match cell count");
    const size_t n = K.n();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        Accumulator acc;
        for (size_t j = 0; j < n; ++j) acc.add(K(i, j) * f[j]);
        out[i] = acc.value();
    }
    return VorticityField(f.domain(), std::move(out), f.bound());
}

struct BirkhoffDecomposition {
    std::vector<double> weights;
    std::vector<std::vector<size_t>> permutations;
};

namespace detail {

/// Hopcroft–Karp maximum matching on a bipartite graph rows→cols.
class HopcroftKarp {
public:
    explicit HopcroftKarp(const std::vector<std::vector<size_t>>& adj) : adj_(adj), n_(adj.size()) {}

    /// Returns match_row (column per row) and whether it is perfect.
    bool run(std::vector<size_t>& match_row) {
        const size_t NIL = n_;
        mr_.assign(n_, NIL);
        mc_.assign(n_, NIL);
        size_t matched = 0;
        while (bfs()) {
            for (size_t r = 0; r < n_; ++r)
                if (mr_[r] == NIL && dfs(r)) ++matched;
        }
        match_row = mr_;
        return matched == n_;
    }

private:
    bool bfs() {
        const size_t NIL = n_;
        const size_t inf = std::numeric_limits<size_t>::max();
        dist_.assign(n_ + 1, inf);
        std::queue<size_t> q;
        for (size_t r = 0; r < n_; ++r)
            if (mr_[r] == NIL) {
                dist_[r] = 0;
                q.push(r);
            }
        bool found = false;
        while (!q.empty()) {
            const size_t r = q.front();
            q.pop();
            for (size_t c : adj_[r]) {
                const size_t r2 = mc_[c];
                if (r2 == NIL) {
                    found = true;
                } else if (dist_[r2] == inf) {
                    dist_[r2] = dist_[r] + 1;
                    q.push(r2);
                }
            }
        }
        return found;
    }

    bool dfs(size_t r) {
        const size_t NIL = n_;
        for (size_t c : adj_[r]) {
            const size_t r2 = mc_[c];
            if (r2 == NIL || (dist_[r2] == dist_[r] + 1 && dfs(r2))) {
                mr_[r] = c;
                mc_[c] = r;
                return true;
            }
        }
        dist_[r] = std::numeric_limits<size_t>::max();
        return false;
    }

    const std::vector<std::vector<size_t>>& adj_;
    size_t n_;
    std::vector<size_t> mr_, mc_, dist_;
};

} // namespace detail

/// Greedy Birkhoff–von Neumann extraction on the positivity graph (threshold 1e-13).
inline BirkhoffDecomposition birkhoff(const BistochasticMatrix& K) {
    constexpr double kSupport = 1e-13;
    if (K.max_marginal_error() > 1e-10) throw Error(ErrorCode::NotBistochastic, "marginals off by more than 1e-10");
    const size_t n = K.n();
    std::vector<double> a = K.entries();
    BirkhoffDecomposition out;
    double remaining = 1.0;
    while (remaining > 1e-12) {
        std::vector<std::vector<size_t>> adj(n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                if (a[i * n + j] > kSupport) adj[i].push_back(j);
        std::vector<size_t> match;
        detail::HopcroftKarp hk(adj);
        if (!hk.run(match)) {
            if (remaining < 1e-10) break;
            throw Error(ErrorCode::MatchingFailure, "no perfect matching with residual mass " + detail::fmt17(remaining));
        }
        double w = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < n; ++i) w = std::min(w, a[i * n + match[i]]);
        for (size_t i = 0; i < n; ++i) {
            double& x = a[i * n + match[i]];
            x = x - w;
            if (x <= kSupport) x = 0.0;
        }
        out.weights.push_back(w);
        out.permutations.push_back(match);
        remaining -= w;
    }
    const double total = stable_sum(out.weights.begin(), out.weights.end());
    for (double& w : out.weights) w /= total;
    return out;
}

/// Cycle notation of a permutation, "id" for the identity.
inline std::string cycle_notation(const std::vector<size_t>& perm) {
    std::vector<bool> seen(perm.size(), false);
    std::string s;
    for (size_t i = 0; i < perm.size(); ++i) {
        if (seen[i] || perm[i] == i) {
            seen[i] = true;
            continue;
        }
        s += "(";
        size_t j = i;
        bool first = true;
        while (!seen[j]) {
            seen[j] = true;
            if (!first) s += " ";
            s += std::to_string(j);
            first = false;
            j = perm[j];
        }
        s += ")";
    }
    return s.empty() ? "id" : s;
}

inline std::string birkhoff_report(const BirkhoffDecomposition& d) {
    std::string s = "terms = " + std::to_string(d.weights.size()) + "\n";
    for (size_t k = 0; k < d.weights.size(); ++k)
        s += "weight = " + detail::fmt17(d.weights[k]) + " perm = " + cycle_notation(d.permutations[k]) + "\n";
    return s;
}

/// Fejér low pass K_N on the torus: multiplier (1−|k₁|/N)₊(1−|k₂|/N)₊.
inline VorticityField fejer(int N, const VorticityField& f) {
    const Domain& d = f.domain();
    if (d.kind != DomainKind::Torus) throw Error(ErrorCode::UnsupportedDomain, "Fejér operator acts on the torus");
    if (N < 1 || 2 * N >= d.nx || 2 * N >= d.ny)
        throw Error(ErrorCode::CutoffTooLarge, "need 1 <= N < n/2, got N = " + std::to_string(N));
    auto s = to_spectral(f);
    for (int m2 = 0; m2 < d.ny; ++m2)
        for (int m1 = 0; m1 < d.nx; ++m1) {
            const double w1 = std::max(0.0, 1.0 - std::abs(detail::signed_mode(m1, d.nx)) / static_cast<double>(N));
            const double w2 = std::max(0.0, 1.0 - std::abs(detail::signed_mode(m2, d.ny)) / static_cast<double>(N));
            s.coefficients[d.index(m1, m2)] *= w1 * w2;
        }
    auto out = from_spectral(s, f.bound());
    return VorticityField(d, out.values(), f.bound());
}

namespace detail {

inline void check_swap_sets(const std::vector<size_t>& q1, const std::vector<size_t>& q2, size_t cells) {
    if (q1.size() != q2.size()) throw Error(ErrorCode::SizeMismatch, "swap sets differ in size");
    std::vector<char> used(cells, 0);
    for (size_t c : q1) {
        if (c >= cells) throw Error(ErrorCode::SizeMismatch, "cell index out of range");
        if (used[c]) throw Error(ErrorCode::Overlap, "repeated cell in swap set");
        used[c] = 1;
    }
    for (size_t c : q2) {
        if (c >= cells) throw Error(ErrorCode::SizeMismatch, "cell index out of range");
        if (used[c]) throw Error(ErrorCode::Overlap, "swap sets overlap");
        used[c] = 1;
    }
}

} // namespace detail

/// (1−ε)ω + ε(ω∘φ) where φ exchanges q1[k] ↔ q2[k].
inline VorticityField swap_mix(const std::vector<size_t>& q1, const std::vector<size_t>& q2, double eps,
                               const VorticityField& f) {
    detail::check_swap_sets(q1, q2, f.size());
    if (!(eps >= 0.0 && eps <= 1.0)) throw Error(ErrorCode::Precondition, "eps must lie in [0,1]");
    std::vector<double> v = f.values();
    for (size_t k = 0; k < q1.size(); ++k) {
        const double a = f[q1[k]], b = f[q2[k]];
        v[q1[k]] = (1.0 - eps) * a + eps * b;
        v[q2[k]] = (1.0 - eps) * b + eps * a;
    }
    return VorticityField(f.domain(), std::move(v), f.bound());
}

/// dE/dε at ε = 0 for swap_mix: Σ_{x∈Q1}(ω(x)−ω(φx))(ψ(x)−ψ(φx))·ΔA.
inline double swap_first_variation(const std::vector<size_t>& q1, const std::vector<size_t>& q2,
                                   const VorticityField& f) {
    detail::check_swap_sets(q1, q2, f.size());
    PoissonSolver solver(f.domain());
    const auto psi = physical_psi(solver, f.values());
    Accumulator acc;
    for (size_t k = 0; k < q1.size(); ++k)
        acc.add((f[q1[k]] - f[q2[k]]) * (psi[q1[k]] - psi[q2[k]]));
    return acc.value() * f.domain().cell_area();
}

inline void write_matrix(const BistochasticMatrix& K, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
    os << "MFLABK1 " << K.n() << '\n';
    for (double x : K.entries()) detail::write_le_double(os, x);
}

inline BistochasticMatrix read_matrix(const std::string& path) {
    const std::string bytes = detail::read_all(path);
    const size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw Error(ErrorCode::MalformedHeader, "missing matrix header");
    std::istringstream hs(bytes.substr(0, nl));
    std::string magic, ns, extra;
    hs >> magic >> ns;
    int n = 0;
    if (magic != "MFLABK1" || !detail::parse_int(ns, n) || n <= 0 || (hs >> extra))
        throw Error(ErrorCode::MalformedHeader, "expected 'MFLABK1 <n>'");
    const size_t nn = static_cast<size_t>(n) * n;
    if (bytes.size() - nl - 1 != nn * 8) throw Error(ErrorCode::DimensionMismatch, "matrix payload size mismatch");
    std::vector<double> a(nn);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
    for (size_t k = 0; k < nn; ++k) {
        a[k] = detail::read_le_double(p + 8 * k);
        if (!std::isfinite(a[k])) throw Error(ErrorCode::NonFinite, "non-finite matrix entry");
    }
    return BistochasticMatrix(static_cast<size_t>(n), std::move(a), 1e-10);
}

} // namespace mflab
