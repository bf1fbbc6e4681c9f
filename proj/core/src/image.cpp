#include "bilevel/image.hpp"

#include <cmath>
#include <stdexcept>

#include "bilevel/fft.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

namespace {

inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

void require_kernel_fits(const Image& img, const Kernel& ker) {
    if (ker.rows <= 0 || ker.cols <= 0 ||
        static_cast<std::size_t>(ker.rows) * ker.cols != ker.taps.size())
        throw std::invalid_argument("kernel: inconsistent tap storage");
    if (ker.rows > img.rows() || ker.cols > img.cols())
        throw std::invalid_argument("kernel support exceeds image size");
}

// Direct path pays O(pixels * taps); FFT wins for larger stencils.
constexpr int kDirectTapLimit = 49;

}  // namespace

Image::Image(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Image: negative extent");
}

Image Image::from_values(int rows, int cols, std::vector<double> values) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("Image::from_values: size mismatch");
    Image img;
    img.rows_ = rows;
    img.cols_ = cols;
    img.values_ = std::move(values);
    return img;
}

double Image::wrap(int i, int j) const {
    return (*this)(wrap_index(i, rows_), wrap_index(j, cols_));
}

bool Image::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

Image& Image::operator+=(const Image& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
    return *this;
}

Image& Image::operator-=(const Image& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
    return *this;
}

Image& Image::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a.values()[k] * b.values()[k];
    return acc;
}

double norm2(const Image& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Image& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

Kernel::Kernel(int r, int c)
    : rows(r), cols(c), anchor_row((r - 1) / 2), anchor_col((c - 1) / 2),
      taps(static_cast<std::size_t>(r) * c, 0.0) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("Kernel: nonpositive extent");
}

double Kernel::tap_sum() const {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
}

Kernel Kernel::delta() {
    Kernel k(1, 1);
    k.taps[0] = 1.0;
    return k;
}

DegradationOp DegradationOp::identity() { return {}; }

DegradationOp DegradationOp::blur(Kernel k) {
    DegradationOp op;
    op.kind = DegradationKind::Blur;
    op.kernel = std::move(k);
    return op;
}

DegradationOp DegradationOp::decimated_blur(Kernel k, int d) {
    if (d < 2) throw std::invalid_argument("decimated_blur: factor must be >= 2");
    DegradationOp op;
    op.kind = DegradationKind::DecimatedBlur;
    op.kernel = std::move(k);
    op.factor = d;
    return op;
}

// --- periodic convolution ---------------------------------------------------

Image periodic_convolve_direct(const Image& img, const Kernel& ker) {
    require_kernel_fits(img, ker);
    const int h = img.rows(), w = img.cols();
    Image out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int a = 0; a < ker.rows; ++a) {
                const int si = wrap_index(i - (a - ker.anchor_row), h);
                for (int b = 0; b < ker.cols; ++b) {
                    const int sj = wrap_index(j - (b - ker.anchor_col), w);
                    acc += ker.at(a, b) * img(si, sj);
                }
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Image adjoint_convolve_direct(const Image& img, const Kernel& ker) {
    require_kernel_fits(img, ker);
    const int h = img.rows(), w = img.cols();
    Image out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int a = 0; a < ker.rows; ++a) {
                const int si = wrap_index(i + (a - ker.anchor_row), h);
                for (int b = 0; b < ker.cols; ++b) {
                    const int sj = wrap_index(j + (b - ker.anchor_col), w);
                    acc += ker.at(a, b) * img(si, sj);
                }
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Image periodic_convolve_fft(const Image& img, const Kernel& ker) {
    require_kernel_fits(img, ker);
    Spectrum fi = fft2(img);
    Spectrum fk = kernel_spectrum(ker, img.rows(), img.cols());
    for (std::size_t k = 0; k < fi.size(); ++k) fi[k] *= fk[k];
    return ifft2(fi, img.rows(), img.cols());
}

Image adjoint_convolve_fft(const Image& img, const Kernel& ker) {
    require_kernel_fits(img, ker);
    Spectrum fi = fft2(img);
    Spectrum fk = kernel_spectrum(ker, img.rows(), img.cols());
    for (std::size_t k = 0; k < fi.size(); ++k) fi[k] *= std::conj(fk[k]);
    return ifft2(fi, img.rows(), img.cols());
}

Image periodic_convolve(const Image& img, const Kernel& ker) {
    if (ker.rows * ker.cols <= kDirectTapLimit) return periodic_convolve_direct(img, ker);
    return periodic_convolve_fft(img, ker);
}

Kernel tap_correlation(const Image& x, const Image& w, int rows, int cols, int anchor_row,
                       int anchor_col) {
    require_same_shape(x, w, "tap_correlation");
    Kernel out(rows, cols);
    out.anchor_row = anchor_row;
    out.anchor_col = anchor_col;
    const int h = x.rows(), wd = x.cols();
    for (int a = 0; a < rows; ++a) {
        const int di = a - anchor_row;
        for (int b = 0; b < cols; ++b) {
            const int dj = b - anchor_col;
            double acc = 0.0;
            for (int i = 0; i < h; ++i) {
                const int si = wrap_index(i + di, h);
                for (int j = 0; j < wd; ++j) acc += x(si, wrap_index(j + dj, wd)) * w(i, j);
            }
            out.at(a, b) = acc;
        }
    }
    return out;
}

Image adjoint_convolve(const Image& img, const Kernel& ker) {
    if (ker.rows * ker.cols <= kDirectTapLimit) return adjoint_convolve_direct(img, ker);
    return adjoint_convolve_fft(img, ker);
}

// --- blur kernels -----------------------------------------------------------

namespace {
void normalize_taps(Kernel& k) {
    const double s = k.tap_sum();
    if (s == 0.0) throw std::invalid_argument("kernel normalization: zero tap sum");
    for (double& t : k.taps) t /= s;
}
}  // namespace

Kernel make_gaussian_kernel(int width, double sigma) {
    if (width <= 0) throw std::invalid_argument("gaussian kernel: width must be positive");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian kernel: sigma must be positive");
    Kernel k(width, width);
    const double c = (width - 1) / 2.0;
    for (int a = 0; a < width; ++a)
        for (int b = 0; b < width; ++b) {
            const double di = a - c, dj = b - c;
            k.at(a, b) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        }
    normalize_taps(k);
    return k;
}

Kernel make_disk_kernel(int diameter) {
    if (diameter <= 0) throw std::invalid_argument("disk kernel: diameter must be positive");
    Kernel k(diameter, diameter);
    const double c = (diameter - 1) / 2.0;
    const double r = diameter / 2.0;
    for (int a = 0; a < diameter; ++a)
        for (int b = 0; b < diameter; ++b) {
            const double di = a - c, dj = b - c;
            if (std::sqrt(di * di + dj * dj) <= r) k.at(a, b) = 1.0;
        }
    normalize_taps(k);
    return k;
}

Kernel make_motion_kernel(int length, double angle) {
    if (length <= 0) throw std::invalid_argument("motion kernel: length must be positive");
    // Sample `length` points along the segment and bin them to pixels.
    const double c = (length - 1) / 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<std::pair<int, int>> hits(length);
    int min_r = 0, max_r = 0, min_c = 0, max_c = 0;
    for (int s = 0; s < length; ++s) {
        const double t = s - c;
        const int oi = static_cast<int>(std::lround(t * sa));
        const int oj = static_cast<int>(std::lround(t * ca));
        hits[s] = {oi, oj};
        min_r = std::min(min_r, oi);
        max_r = std::max(max_r, oi);
        min_c = std::min(min_c, oj);
        max_c = std::max(max_c, oj);
    }
    Kernel k(max_r - min_r + 1, max_c - min_c + 1);
    k.anchor_row = -min_r;
    k.anchor_col = -min_c;
    for (auto [oi, oj] : hits) k.at(oi - min_r, oj - min_c) += 1.0;
    normalize_taps(k);
    return k;
}

// --- degradation ------------------------------------------------------------

Image decimate(const Image& img, int d) {
    if (d < 1) throw std::invalid_argument("decimate: factor must be >= 1");
    if (img.rows() % d != 0 || img.cols() % d != 0)
        throw std::invalid_argument("decimate: image extents not divisible by factor");
    Image out(img.rows() / d, img.cols() / d);
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) = img(i * d, j * d);
    return out;
}

Image zero_upsample(const Image& img, int d) {
    Image out(img.rows() * d, img.cols() * d, 0.0);
    for (int i = 0; i < img.rows(); ++i)
        for (int j = 0; j < img.cols(); ++j) out(i * d, j * d) = img(i, j);
    return out;
}

Image apply_degradation(const DegradationOp& op, const Image& img) {
    switch (op.kind) {
        case DegradationKind::Identity:
            return img;
        case DegradationKind::Blur:
            return periodic_convolve(img, op.kernel);
        case DegradationKind::DecimatedBlur:
            return decimate(periodic_convolve(img, op.kernel), op.factor);
    }
    throw std::logic_error("apply_degradation: unknown kind");
}

Image apply_degradation_adjoint(const DegradationOp& op, const Image& img) {
    switch (op.kind) {
        case DegradationKind::Identity:
            return img;
        case DegradationKind::Blur:
            return adjoint_convolve(img, op.kernel);
        case DegradationKind::DecimatedBlur:
            return adjoint_convolve(zero_upsample(img, op.factor), op.kernel);
    }
    throw std::logic_error("apply_degradation_adjoint: unknown kind");
}

// --- discrete gradient ------------------------------------------------------

GradientField grad_op(const Image& img) {
    const int h = img.rows(), w = img.cols();
    GradientField gf{Image(h, w), Image(h, w)};
    for (int i = 0; i < h; ++i) {
        const int ip = (i + 1 == h) ? 0 : i + 1;
        for (int j = 0; j < w; ++j) {
            const int jp = (j + 1 == w) ? 0 : j + 1;
            gf.dv(i, j) = img(ip, j) - img(i, j);
            gf.dh(i, j) = img(i, jp) - img(i, j);
        }
    }
    return gf;
}

Image grad_adjoint(const GradientField& gf) {
    require_same_shape(gf.dv, gf.dh, "grad_adjoint");
    const int h = gf.dv.rows(), w = gf.dv.cols();
    Image out(h, w);
    for (int i = 0; i < h; ++i) {
        const int im = (i == 0) ? h - 1 : i - 1;
        for (int j = 0; j < w; ++j) {
            const int jm = (j == 0) ? w - 1 : j - 1;
            out(i, j) = gf.dv(im, j) - gf.dv(i, j) + gf.dh(i, jm) - gf.dh(i, j);
        }
    }
    return out;
}

// --- noise and quality ------------------------------------------------------

Image add_awgn(const Image& img, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_awgn: negative sigma");
    Image out = img;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& v : out.values()) v += sigma * rng.normal();
    return out;
}

double psnr(const Image& u, const Image& g) {
    require_same_shape(u, g, "psnr");
    double mse = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = u.values()[k] - g.values()[k];
        mse += d * d;
    }
    mse /= static_cast<double>(u.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace bilevel
