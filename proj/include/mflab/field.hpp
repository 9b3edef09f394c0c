#pragma once

#include "mflab/error.hpp"
#include "mflab/fft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace mflab {

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Compensated (Neumaier) summation in fixed order.
class Accumulator {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0, c_ = 0.0;
};

template <class It>
double stable_sum(It first, It last) {
    Accumulator acc;
    for (; first != last; ++first) acc.add(*first);
    return acc.value();
}

enum class DomainKind { Channel, Torus, DiskRadial };

inline const char* kind_token(DomainKind k) {
    switch (k) {
    case DomainKind::Channel: return "channel";
    case DomainKind::Torus: return "torus";
    case DomainKind::DiskRadial: return "disk";
    }
    return "?";
}

/// Channel 𝕋_{Lx}×[0,1], torus 𝕋_{Lx}×𝕋_{Ly}, or the radial disk of radius R.
/// The disk is stored with nx = 1 and ny radial annuli of equal area.
struct Domain {
    DomainKind kind = DomainKind::Torus;
    int nx = 0;
    int ny = 0;
    double lx = kTwoPi;
    double ly = kTwoPi;

    static Domain channel(int nx, int ny, double lx = kTwoPi) {
        Domain d{DomainKind::Channel, nx, ny, lx, 1.0};
        d.validate();
        return d;
    }
    static Domain torus(int nx, int ny, double lx = kTwoPi, double ly = kTwoPi) {
        Domain d{DomainKind::Torus, nx, ny, lx, ly};
        d.validate();
        return d;
    }
    static Domain disk(int nr, double radius = 1.0) {
        Domain d{DomainKind::DiskRadial, 1, nr, kTwoPi, radius};
        d.validate();
        return d;
    }

    void validate() const {
        if (!(std::isfinite(lx) && lx > 0 && std::isfinite(ly) && ly > 0))
            throw Error(ErrorCode::Precondition, "domain lengths must be positive and finite");
        if (kind == DomainKind::DiskRadial) {
            if (nx != 1) throw Error(ErrorCode::ResolutionTooSmall, "disk domain requires nx = 1");
            if (ny < 4) throw Error(ErrorCode::ResolutionTooSmall, "disk needs at least 4 radial cells");
            return;
        }
        if (nx < 4 || ny < 4 || nx % 2 || ny % 2)
            throw Error(ErrorCode::ResolutionTooSmall,
                        "resolution must be >= 4 and even, got " + std::to_string(nx) + "x" +
                            std::to_string(ny));
    }

    bool spectral() const { return kind != DomainKind::DiskRadial; }
    size_t cells() const { return static_cast<size_t>(nx) * static_cast<size_t>(ny); }
    double dx() const { return lx / nx; }
    double dy() const { return ly / ny; }
    double area() const { return kind == DomainKind::DiskRadial ? kPi * ly * ly : lx * ly; }
    double cell_area() const { return area() / static_cast<double>(cells()); }
    double x1(int i) const { return kind == DomainKind::DiskRadial ? 0.0 : (i + 0.5) * dx(); }
    /// Cell-centre x₂, or for the disk the radius of the equal-area midpoint.
    double x2(int j) const {
        if (kind == DomainKind::DiskRadial) return ly * std::sqrt((j + 0.5) / ny);
        return (j + 0.5) * dy();
    }
    size_t index(int i, int j) const { return static_cast<size_t>(j) * nx + i; }

    bool operator==(const Domain& o) const {
        return kind == o.kind && nx == o.nx && ny == o.ny && lx == o.lx && ly == o.ly;
    }
    bool operator!=(const Domain& o) const { return !(*this == o); }
};

inline void require_same_domain(const Domain& a, const Domain& b) {
    if (a != b) throw Error(ErrorCode::DomainMismatch, "fields live on different domains");
}

/// Cell-averaged vorticity; values indexed j*nx + i with x₁ fastest.
class VorticityField {
public:
    VorticityField() = default;
    VorticityField(Domain d, std::vector<double> values, double bound = 1.0)
        : domain_(d), values_(std::move(values)), bound_(bound) {
        if (values_.size() != domain_.cells())
            throw Error(ErrorCode::DimensionMismatch,
                        "expected " + std::to_string(domain_.cells()) + " values, got " +
                            std::to_string(values_.size()));
    }

    static VorticityField zeros(const Domain& d, double bound = 1.0) {
        return VorticityField(d, std::vector<double>(d.cells(), 0.0), bound);
    }
    static VorticityField constant(const Domain& d, double c) {
        return VorticityField(d, std::vector<double>(d.cells(), c), std::max(1.0, std::abs(c)));
    }
    /// Point values at cell centres; bound becomes max(1, sup|f|).
    static VorticityField sample(const Domain& d, const std::function<double(double, double)>& f) {
        std::vector<double> v(d.cells());
        for (int j = 0; j < d.ny; ++j)
            for (int i = 0; i < d.nx; ++i) v[d.index(i, j)] = f(d.x1(i), d.x2(j));
        return with_auto_bound(d, std::move(v));
    }
    static VorticityField with_auto_bound(const Domain& d, std::vector<double> v) {
        double s = 1.0;
        for (double x : v) s = std::max(s, std::abs(x));
        return VorticityField(d, std::move(v), s);
    }

    const Domain& domain() const { return domain_; }
    const std::vector<double>& values() const { return values_; }
    double bound() const { return bound_; }
    size_t size() const { return values_.size(); }
    double operator[](size_t k) const { return values_[k]; }
    double at(int i, int j) const { return values_[domain_.index(i, j)]; }

    double integral() const { return stable_sum(values_.begin(), values_.end()) * domain_.cell_area(); }
    double mean() const { return integral() / domain_.area(); }
    double sup_norm() const {
        double s = 0;
        for (double x : values_) s = std::max(s, std::abs(x));
        return s;
    }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    bool within_bound() const { return sup_norm() <= bound_; }
    /// Discrete L² norm (area weighted).
    double l2() const {
        Accumulator a;
        for (double x : values_) a.add(x * x);
        return std::sqrt(a.value() * domain_.cell_area());
    }

private:
    Domain domain_;
    std::vector<double> values_;
    double bound_ = 1.0;
};

inline VorticityField operator+(const VorticityField& a, const VorticityField& b) {
    require_same_domain(a.domain(), b.domain());
    std::vector<double> v(a.size());
    for (size_t k = 0; k < v.size(); ++k) v[k] = a[k] + b[k];
    return VorticityField::with_auto_bound(a.domain(), std::move(v));
}
inline VorticityField operator-(const VorticityField& a, const VorticityField& b) {
    require_same_domain(a.domain(), b.domain());
    std::vector<double> v(a.size());
    for (size_t k = 0; k < v.size(); ++k) v[k] = a[k] - b[k];
    return VorticityField::with_auto_bound(a.domain(), std::move(v));
}
inline VorticityField operator*(double s, const VorticityField& a) {
    std::vector<double> v(a.values());
    for (double& x : v) x *= s;
    return VorticityField::with_auto_bound(a.domain(), std::move(v));
}

/// Area-weighted inner product.
inline double inner(const VorticityField& a, const VorticityField& b) {
    require_same_domain(a.domain(), b.domain());
    Accumulator acc;
    for (size_t k = 0; k < a.size(); ++k) acc.add(a[k] * b[k]);
    return acc.value() * a.domain().cell_area();
}

/// Horizontal Fourier coefficients, normalized so that f̂_k is the x₁-mean of
/// f e^{-ikx₁}. Torus: full 2D array [m₂*nx + m₁]. Channel: [row*nx + m₁].
struct SpectralField {
    Domain domain;
    std::vector<cplx> coefficients;

    cplx at(int m1, int row_or_m2) const {
        return coefficients[static_cast<size_t>(row_or_m2) * domain.nx + m1];
    }
    /// Wavenumber of DFT slot m along x₁.
    double k1(int m) const { return kTwoPi * detail::signed_mode(m, domain.nx) / domain.lx; }
    double k2(int m) const { return kTwoPi * detail::signed_mode(m, domain.ny) / domain.ly; }
};

inline SpectralField to_spectral(const VorticityField& f) {
    const Domain& d = f.domain();
    if (!d.spectral()) throw Error(ErrorCode::UnsupportedDomain, "no horizontal transform on the disk");
    SpectralField s{d, std::vector<cplx>(d.cells())};
    const bool torus = d.kind == DomainKind::Torus;
    detail::Dft dft(d.ny, d.nx, torus ? detail::Dft::Layout::Grid2D : detail::Dft::Layout::Rows);
    dft.forward_real(f.values().data(), s.coefficients.data());
    const double norm = torus ? 1.0 / static_cast<double>(d.cells()) : 1.0 / d.nx;
    for (auto& c : s.coefficients) c *= norm;
    return s;
}

inline VorticityField from_spectral(const SpectralField& s, double bound = 1.0) {
    const Domain& d = s.domain;
    if (!d.spectral()) throw Error(ErrorCode::UnsupportedDomain, "no horizontal transform on the disk");
    const bool torus = d.kind == DomainKind::Torus;
    detail::Dft dft(d.ny, d.nx, torus ? detail::Dft::Layout::Grid2D : detail::Dft::Layout::Rows);
    std::vector<double> v(d.cells());
    dft.backward_real(s.coefficients.data(), v.data());
    VorticityField out(d, std::move(v), bound);
    if (!out.within_bound()) return VorticityField::with_auto_bound(d, out.values());
    return out;
}

// ---------------------------------------------------------------------------
// File formats

namespace detail {

inline void write_le_double(std::ostream& os, double x) {
    uint64_t u = std::bit_cast<uint64_t>(x);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((u >> (8 * k)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_le_double(const unsigned char* b) {
    uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= static_cast<uint64_t>(b[k]) << (8 * k);
    return std::bit_cast<double>(u);
}

inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    size_t pos = 0;
    try {
        long v = std::stol(s, &pos);
        if (pos != s.size() || v < 0 || v > (1L << 30)) return false;
        out = static_cast<int>(v);
    } catch (...) {
        return false;
    }
    return true;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size() && std::isfinite(out);
}

inline std::string read_all(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace detail

inline std::string field_header(const Domain& d) {
    return std::string("MFLAB1 ") + kind_token(d.kind) + " " + std::to_string(d.nx) + " " +
           std::to_string(d.ny) + " " + detail::fmt17(d.lx) + " " + detail::fmt17(d.ly);
}

inline void write_field(const VorticityField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
    os << field_header(f.domain()) << '\n';
    for (double x : f.values()) detail::write_le_double(os, x);
    if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

/// Parses a field file from memory; bound is max(1, sup|values|).
inline VorticityField parse_field(const std::string& bytes) {
    const size_t nl = bytes.find('\n');
    if (nl == std::string::npos || nl > 512) throw Error(ErrorCode::MalformedHeader, "missing header line");
    std::istringstream hs(bytes.substr(0, nl));
    std::vector<std::string> tok;
    for (std::string t; hs >> t;) tok.push_back(t);
    if (tok.size() != 6 || tok[0] != "MFLAB1")
        throw Error(ErrorCode::MalformedHeader, "expected 'MFLAB1 <kind> <nx> <ny> <Lx> <Ly-or-R>'");
    Domain d;
    if (tok[1] == "channel")
        d.kind = DomainKind::Channel;
    else if (tok[1] == "torus")
        d.kind = DomainKind::Torus;
    else if (tok[1] == "disk")
        d.kind = DomainKind::DiskRadial;
    else
        throw Error(ErrorCode::MalformedHeader, "unknown domain kind '" + tok[1] + "'");
    if (!detail::parse_int(tok[2], d.nx) || !detail::parse_int(tok[3], d.ny) ||
        !detail::parse_double(tok[4], d.lx) || !detail::parse_double(tok[5], d.ly))
        throw Error(ErrorCode::MalformedHeader, "unparsable header numbers");
    try {
        d.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedHeader, e.what());
    }
    if (d.kind == DomainKind::Channel && d.ly != 1.0)
        throw Error(ErrorCode::MalformedHeader, "channel height must be 1");
    const size_t payload = bytes.size() - nl - 1;
    if (payload != d.cells() * 8)
        throw Error(ErrorCode::DimensionMismatch, "payload holds " + std::to_string(payload) +
                                                      " bytes, expected " + std::to_string(d.cells() * 8));
    std::vector<double> v(d.cells());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
    for (size_t k = 0; k < v.size(); ++k) {
        v[k] = detail::read_le_double(p + 8 * k);
        if (!std::isfinite(v[k])) throw Error(ErrorCode::NonFinite, "cell " + std::to_string(k) + " is not finite");
    }
    return VorticityField::with_auto_bound(d, std::move(v));
}

inline VorticityField read_field(const std::string& path) { return parse_field(detail::read_all(path)); }

inline void write_csv(const VorticityField& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
    const Domain& d = f.domain();
    os << "x1,x2,value\n";
    for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i)
            os << detail::fmt17(d.x1(i)) << ',' << detail::fmt17(d.x2(j)) << ',' << detail::fmt17(f.at(i, j))
               << '\n';
}

} // namespace mflab
