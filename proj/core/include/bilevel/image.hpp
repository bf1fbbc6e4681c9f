#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace bilevel {

/// 2D grayscale image with row-major double storage.
///
/// Values are nominally in [0,1] but solver iterates are free to leave that
/// range; clipping only happens when an image is exported to an 8/16-bit
/// format. All pixel-wise operators treat the grid as periodic.
class Image {
public:
    Image() = default;
    Image(int rows, int cols, double fill = 0.0);
    static Image from_values(int rows, int cols, std::vector<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }

    double& operator()(int i, int j) { return values_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return values_[static_cast<std::size_t>(i) * cols_ + j]; }

    /// Periodic access: indices wrap modulo the image extent.
    double wrap(int i, int j) const;

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Image& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

    Image& operator+=(const Image& other);
    Image& operator-=(const Image& other);
    Image& operator*=(double s);

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

double dot(const Image& a, const Image& b);
double norm2(const Image& a);
double max_abs(const Image& a);

/// Small convolution stencil. The anchor marks which tap sits on the output
/// pixel; taps are row-major.
struct Kernel {
    int rows = 0;
    int cols = 0;
    int anchor_row = 0;
    int anchor_col = 0;
    std::vector<double> taps;

    Kernel() = default;
    Kernel(int r, int c);  // centered anchor, zero taps

    double& at(int a, int b) { return taps[static_cast<std::size_t>(a) * cols + b]; }
    double at(int a, int b) const { return taps[static_cast<std::size_t>(a) * cols + b]; }
    double tap_sum() const;

    static Kernel delta();  // 1x1 identity stencil
};

/// Pair of same-shaped images holding the vertical and horizontal forward
/// differences of a source image.
struct GradientField {
    Image dv;
    Image dh;
};

enum class DegradationKind { Identity, Blur, DecimatedBlur };

/// Forward model of the acquisition: identity, periodic blur, or periodic
/// blur followed by keep-every-d-th-row/column decimation.
struct DegradationOp {
    DegradationKind kind = DegradationKind::Identity;
    Kernel kernel;
    int factor = 1;

    static DegradationOp identity();
    static DegradationOp blur(Kernel k);
    static DegradationOp decimated_blur(Kernel k, int d);
};

/// One training pair: clean target and its degraded observation.
struct TrainSample {
    Image ground_truth;
    Image observed;
};

// --- periodic convolution -------------------------------------------------

Image periodic_convolve(const Image& img, const Kernel& ker);
Image periodic_convolve_direct(const Image& img, const Kernel& ker);
Image periodic_convolve_fft(const Image& img, const Kernel& ker);

/// Exact adjoint of periodic_convolve under the standard inner product.
Image adjoint_convolve(const Image& img, const Kernel& ker);
Image adjoint_convolve_direct(const Image& img, const Kernel& ker);
Image adjoint_convolve_fft(const Image& img, const Kernel& ker);

/// Kernel-shaped correlation: tap (a,b) holds
/// sum_i x[i + ((a,b) - anchor)] * w[i] with periodic indexing. This is the
/// derivative of <x, periodic_convolve(w, k)> with respect to the taps of k.
Kernel tap_correlation(const Image& x, const Image& w, int rows, int cols, int anchor_row,
                       int anchor_col);

// --- blur kernel constructors (taps normalized to sum 1) -------------------

Kernel make_gaussian_kernel(int width, double sigma);
Kernel make_disk_kernel(int diameter);
Kernel make_motion_kernel(int length, double angle);

// --- degradation ------------------------------------------------------------

Image apply_degradation(const DegradationOp& op, const Image& img);
Image apply_degradation_adjoint(const DegradationOp& op, const Image& img);

/// Keep pixels with row % d == 0 and col % d == 0.
Image decimate(const Image& img, int d);
/// Zero-filling upsample, the exact adjoint of decimate.
Image zero_upsample(const Image& img, int d);

// --- discrete gradient ------------------------------------------------------

/// Forward differences with periodic wrap; dv[i][j] = u[i+1][j] - u[i][j].
GradientField grad_op(const Image& img);
/// Exact adjoint of grad_op (negative periodic divergence).
Image grad_adjoint(const GradientField& gf);

// --- noise and quality ------------------------------------------------------

/// Adds i.i.d. zero-mean Gaussian noise; output is a pure function of
/// (img, sigma, seed).
Image add_awgn(const Image& img, double sigma, std::uint64_t seed);

/// Peak-signal-to-noise ratio in dB for unit-range images, capped at
/// kPsnrCap when the images coincide.
inline constexpr double kPsnrCap = 300.0;
double psnr(const Image& u, const Image& g);

}  // namespace bilevel
