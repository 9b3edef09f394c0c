#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

namespace mflab::detail {

using cplx = std::complex<double>;

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// Unnormalized complex DFT over an ny×nx row-major grid, either full 2D or
/// batched along rows (x₁ direction only).
class Dft {
public:
    enum class Layout { Grid2D, Rows };

    Dft(int ny, int nx, Layout layout) : ny_(ny), nx_(nx) {
        const size_t n = static_cast<size_t>(ny) * nx;
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        if (layout == Layout::Grid2D) {
            fwd_ = fftw_plan_dft_2d(ny, nx, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft_2d(ny, nx, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
        } else {
            int len = nx;
            fwd_ = fftw_plan_many_dft(1, &len, ny, buf_, nullptr, 1, nx, buf_, nullptr, 1, nx,
                                      FFTW_FORWARD, FFTW_ESTIMATE);
            bwd_ = fftw_plan_many_dft(1, &len, ny, buf_, nullptr, 1, nx, buf_, nullptr, 1, nx,
                                      FFTW_BACKWARD, FFTW_ESTIMATE);
        }
    }
    Dft(const Dft&) = delete;
    Dft& operator=(const Dft&) = delete;
    ~Dft() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }

    size_t size() const { return static_cast<size_t>(ny_) * nx_; }

    void forward(const cplx* in, cplx* out) { run(fwd_, in, out); }
    void backward(const cplx* in, cplx* out) { run(bwd_, in, out); }

    void forward_real(const double* in, cplx* out) {
        cplx* b = reinterpret_cast<cplx*>(buf_);
        for (size_t i = 0; i < size(); ++i) b[i] = cplx(in[i], 0.0);
        fftw_execute(fwd_);
        std::memcpy(static_cast<void*>(out), buf_, sizeof(cplx) * size());
    }
    /// Backward transform keeping the real part.
    void backward_real(const cplx* in, double* out) {
        std::memcpy(static_cast<void*>(buf_), in, sizeof(cplx) * size());
        fftw_execute(bwd_);
        const cplx* b = reinterpret_cast<const cplx*>(buf_);
        for (size_t i = 0; i < size(); ++i) out[i] = b[i].real();
    }

private:
    void run(fftw_plan p, const cplx* in, cplx* out) {
        std::memcpy(static_cast<void*>(buf_), in, sizeof(cplx) * size());
        fftw_execute(p);
        std::memcpy(static_cast<void*>(out), buf_, sizeof(cplx) * size());
    }

    int ny_, nx_;
    fftw_complex* buf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

/// Signed wavenumber index for DFT slot m of an n-point transform.
inline int signed_mode(int m, int n) { return m <= n / 2 ? m : m - n; }

} // namespace mflab::detail
