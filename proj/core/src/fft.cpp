#include "bilevel/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace bilevel {

namespace {

// FFTW plan creation is not thread-safe; executing distinct plans is. Plans
// (and their work buffers) are cached per thread and per size, with a global
// mutex around creation/destruction.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanEntry {
    int rows = 0, cols = 0;
    double* real = nullptr;
    fftw_complex* cplx = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;

    PlanEntry(int r, int c) : rows(r), cols(c) {
        std::lock_guard<std::mutex> lock(planner_mutex());
        real = fftw_alloc_real(static_cast<std::size_t>(r) * c);
        cplx = fftw_alloc_complex(static_cast<std::size_t>(r) * spectrum_cols(c));
        fwd = fftw_plan_dft_r2c_2d(r, c, real, cplx, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_2d(r, c, cplx, real, FFTW_ESTIMATE);
        if (!fwd || !inv) throw std::runtime_error("fft: plan creation failed");
    }
    ~PlanEntry() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(real);
        fftw_free(cplx);
    }
    PlanEntry(const PlanEntry&) = delete;
    PlanEntry& operator=(const PlanEntry&) = delete;
};

PlanEntry& plans_for(int rows, int cols) {
    thread_local std::map<std::pair<int, int>, std::unique_ptr<PlanEntry>> cache;
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_unique<PlanEntry>(rows, cols);
    return *slot;
}

inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

}  // namespace

Spectrum fft2(const Image& img) {
    if (img.rows() <= 0 || img.cols() <= 0) throw std::invalid_argument("fft2: empty image");
    PlanEntry& p = plans_for(img.rows(), img.cols());
    std::memcpy(p.real, img.data(), img.size() * sizeof(double));
    fftw_execute(p.fwd);
    const std::size_t bins = static_cast<std::size_t>(img.rows()) * spectrum_cols(img.cols());
    Spectrum out(bins);
    // std::complex<double> is layout-compatible with fftw_complex.
    std::memcpy(static_cast<void*>(out.data()), p.cplx, bins * sizeof(fftw_complex));
    return out;
}

Image ifft2(const Spectrum& spec, int rows, int cols) {
    const std::size_t bins = static_cast<std::size_t>(rows) * spectrum_cols(cols);
    if (spec.size() != bins) throw std::invalid_argument("ifft2: spectrum size mismatch");
    PlanEntry& p = plans_for(rows, cols);
    std::memcpy(p.cplx, spec.data(), bins * sizeof(fftw_complex));
    fftw_execute(p.inv);
    Image out(rows, cols);
    const double scale = 1.0 / (static_cast<double>(rows) * cols);
    for (std::size_t k = 0; k < out.size(); ++k) out.values()[k] = p.real[k] * scale;
    return out;
}

Spectrum kernel_spectrum(const Kernel& ker, int rows, int cols) {
    Image padded(rows, cols, 0.0);
    for (int a = 0; a < ker.rows; ++a)
        for (int b = 0; b < ker.cols; ++b)
            padded(wrap_index(a - ker.anchor_row, rows), wrap_index(b - ker.anchor_col, cols)) +=
                ker.at(a, b);
    return fft2(padded);
}

double spectrum_mag2_at(const Spectrum& spec, int rows, int cols, int i, int j) {
    i = wrap_index(i, rows);
    j = wrap_index(j, cols);
    const int wc = spectrum_cols(cols);
    if (j >= wc) {
        i = (rows - i) % rows;
        j = cols - j;
    }
    const std::complex<double> v = spec[static_cast<std::size_t>(i) * wc + j];
    return std::norm(v);
}

}  // namespace bilevel
