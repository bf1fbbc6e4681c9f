#pragma once

#include <complex>
#include <vector>

#include "bilevel/image.hpp"

namespace bilevel {

/// Half-plane spectrum of a rows x cols real image in FFTW r2c layout:
/// rows * (cols/2 + 1) bins, row-major.
using Spectrum = std::vector<std::complex<double>>;

inline int spectrum_cols(int cols) { return cols / 2 + 1; }

Spectrum fft2(const Image& img);
Image ifft2(const Spectrum& spec, int rows, int cols);

/// Spectrum of the kernel zero-padded onto a rows x cols periodic grid with
/// its anchor at the origin.
Spectrum kernel_spectrum(const Kernel& ker, int rows, int cols);

/// |spec|^2 at an arbitrary full-plane frequency index, using Hermitian
/// symmetry to reach bins outside the stored half plane.
double spectrum_mag2_at(const Spectrum& spec, int rows, int cols, int i, int j);

}  // namespace bilevel
