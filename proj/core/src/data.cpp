#include "bilevel/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bilevel/rng.hpp"

namespace bilevel::data {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

int reflect_index(int i, int n) {
    // Half-sample symmetric: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

Image crop(const Image& img, int top, int left, int rows, int cols) {
    Image out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = img(top + i, left + j);
    return out;
}

}  // namespace

Image gen_edge_image(double theta, double shift, int size) {
    require(size >= 2, "gen_edge_image: size must be >= 2");
    Image img(size, size);
    const double c = (size - 1) / 2.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            img(i, j) = ((j - c) * ct + (i - c) * st >= shift) ? 1.0 : 0.0;
    return img;
}

std::vector<TrainSample> gen_edge_dataset(const EdgeSetSpec& spec) {
    require(spec.count >= 1, "gen_edge_dataset: count must be >= 1");
    Rng rng(spec.seed);
    std::vector<TrainSample> out;
    out.reserve(spec.count);
    for (int j = 0; j < spec.count; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / spec.count;
        const double shift = rng.uniform(-0.5, 0.5);
        Image g = gen_edge_image(theta, shift, spec.size);
        out.push_back(degrade_pair(g, spec.degradation, spec.noise_sigma,
                                   spec.seed + static_cast<std::uint64_t>(j) + 1, spec.padding));
    }
    return out;
}

std::vector<PatchRef> extract_patch_refs(const std::vector<Image>& sources, int patches_per_image,
                                         int patch_size, std::uint64_t seed) {
    require(patches_per_image >= 1, "extract_patches: patches_per_image must be >= 1");
    require(patch_size >= 1, "extract_patches: patch_size must be >= 1");
    Rng rng(seed);
    std::vector<PatchRef> out;
    out.reserve(sources.size() * patches_per_image);
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const Image& src = sources[s];
        if (src.rows() < patch_size || src.cols() < patch_size)
            throw std::invalid_argument("extract_patches: patch larger than source image");
        for (int k = 0; k < patches_per_image; ++k) {
            const int top = rng.uniform_int(0, src.rows() - patch_size);
            const int left = rng.uniform_int(0, src.cols() - patch_size);
            out.push_back({crop(src, top, left, patch_size, patch_size),
                           static_cast<int>(s), top, left});
        }
    }
    return out;
}

std::vector<Image> extract_patches(const std::vector<Image>& sources, int patches_per_image,
                                   int patch_size, std::uint64_t seed) {
    std::vector<PatchRef> refs = extract_patch_refs(sources, patches_per_image, patch_size, seed);
    std::vector<Image> out;
    out.reserve(refs.size());
    for (PatchRef& ref : refs) out.push_back(std::move(ref.patch));
    return out;
}

Image reflexive_pad(const Image& img, int pad) {
    require(pad >= 0, "reflexive_pad: negative pad");
    Image out(img.rows() + 2 * pad, img.cols() + 2 * pad);
    for (int i = 0; i < out.rows(); ++i) {
        const int si = reflect_index(i - pad, img.rows());
        for (int j = 0; j < out.cols(); ++j) out(i, j) = img(si, reflect_index(j - pad, img.cols()));
    }
    return out;
}

TrainSample degrade_pair(const Image& g, const DegradationOp& op, double sigma,
                         std::uint64_t seed, Padding padding) {
    Image degraded;
    if (padding == Padding::ReflexiveCrop && op.kind != DegradationKind::Identity) {
        const int pad = std::max(op.kernel.rows, op.kernel.cols);
        const Image blurred = periodic_convolve(reflexive_pad(g, pad), op.kernel);
        degraded = crop(blurred, pad, pad, g.rows(), g.cols());
        if (op.kind == DegradationKind::DecimatedBlur) degraded = decimate(degraded, op.factor);
    } else {
        degraded = apply_degradation(op, g);
    }
    return {g, add_awgn(degraded, sigma, seed)};
}

Image gen_synthetic_image(int size, std::uint64_t seed) {
    require(size >= 2, "gen_synthetic_image: size must be >= 2");
    Rng rng(seed);
    Image img(size, size, 0.0);

    // Smooth background: a handful of Gaussian bumps.
    const int bumps = 6;
    for (int b = 0; b < bumps; ++b) {
        const double cx = rng.uniform(0.0, size - 1.0);
        const double cy = rng.uniform(0.0, size - 1.0);
        const double width = rng.uniform(size / 8.0, size / 2.0);
        const double amp = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                img(i, j) += amp * std::exp(-d2 / (2.0 * width * width));
            }
    }

    // Piecewise-constant content: straight steps across random half planes.
    const int steps = 3;
    const double c = (size - 1) / 2.0;
    for (int sidx = 0; sidx < steps; ++sidx) {
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double offset = rng.uniform(-size / 4.0, size / 4.0);
        const double amp = rng.uniform(-0.8, 0.8);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j)
                if ((j - c) * ct + (i - c) * st >= offset) img(i, j) += amp;
    }

    double lo = img.values()[0], hi = img.values()[0];
    for (double v : img.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    for (double& v : img.values()) v = (v - lo) * scale;
    return img;
}

}  // namespace bilevel::data
