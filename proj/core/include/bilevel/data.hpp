#pragma once

#include <cstdint>
#include <vector>

#include "bilevel/image.hpp"

namespace bilevel::data {

enum class Padding { Periodic, ReflexiveCrop };

/// Parameters for an oriented-edge training set: binary half-plane images
/// with equally spaced edge orientations and small seeded shifts.
struct EdgeSetSpec {
    int count = 64;
    int size = 64;
    std::uint64_t seed = 0;
    DegradationOp degradation;
    double noise_sigma = 0.0;
    Padding padding = Padding::Periodic;
};

/// Binary half-plane image: pixel 1 where
/// (j - cx)*cos(theta) + (i - cy)*sin(theta) >= shift, center at
/// ((size-1)/2, (size-1)/2).
Image gen_edge_image(double theta, double shift, int size);

/// Edge orientations theta_j = 2*pi*j/count with shifts drawn uniformly from
/// [-0.5, 0.5]; pairs are degraded with the spec's operator and noise.
std::vector<TrainSample> gen_edge_dataset(const EdgeSetSpec& spec);

struct PatchRef {
    Image patch;
    int source_index = 0;
    int row = 0;
    int col = 0;
};

std::vector<PatchRef> extract_patch_refs(const std::vector<Image>& sources, int patches_per_image,
                                         int patch_size, std::uint64_t seed);
std::vector<Image> extract_patches(const std::vector<Image>& sources, int patches_per_image,
                                   int patch_size, std::uint64_t seed);

/// Degrades a clean image: apply the forward model, then additive Gaussian
/// noise. With ReflexiveCrop the blur runs on a reflexively padded copy that
/// is cropped back before decimation, suppressing wrap-around artifacts.
TrainSample degrade_pair(const Image& g, const DegradationOp& op, double sigma,
                         std::uint64_t seed, Padding padding = Padding::Periodic);

/// Mirror-pads by `pad` pixels on every side (half-sample symmetric).
Image reflexive_pad(const Image& img, int pad);

/// Piecewise-smooth fixture image: random smooth bumps plus a few straight
/// discontinuities, normalized to [0, 1].
Image gen_synthetic_image(int size, std::uint64_t seed);

}  // namespace bilevel::data
