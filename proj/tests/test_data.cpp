#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bilevel/data.hpp"
#include "bilevel/rng.hpp"
#include "oracles.hpp"

using namespace bilevel;
using namespace bilevel::data;

TEST_CASE("edge image: vertical split, complement, binary values") {
    const Image edge = gen_edge_image(0.0, 0.0, 64);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) CHECK(edge(i, j) == ((j >= 32) ? 1.0 : 0.0));

    // Opposite orientations complement each other away from the boundary line.
    const double theta = 0.77;
    const Image a = gen_edge_image(theta, 0.0, 32);
    const Image b = gen_edge_image(theta + std::numbers::pi, 0.0, 32);
    int overlap = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK((a.values()[k] == 0.0 || a.values()[k] == 1.0));
        const double sum = a.values()[k] + b.values()[k];
        CHECK(sum >= 1.0);
        if (sum == 2.0) ++overlap;
    }
    CHECK(overlap <= 32);  // at most the boundary line itself

    CHECK_THROWS_AS(gen_edge_image(0.0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("edge image mean stays near one half across orientations") {
    for (int j = 0; j < 64; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / 64.0;
        for (double shift : {-0.5, -0.2, 0.0, 0.3, 0.5}) {
            const Image img = gen_edge_image(theta, shift, 64);
            double mean = 0.0;
            for (double v : img.values()) mean += v;
            mean /= static_cast<double>(img.size());
            CHECK(mean >= 0.4);
            CHECK(mean <= 0.6);
        }
    }
}

TEST_CASE("edge dataset: clean path, determinism, binary truth") {
    EdgeSetSpec spec;
    spec.count = 8;
    spec.size = 16;
    spec.seed = 9;
    spec.degradation = DegradationOp::identity();
    spec.noise_sigma = 0.0;

    const auto clean = gen_edge_dataset(spec);
    REQUIRE(clean.size() == 8);
    for (const TrainSample& s : clean) {
        for (std::size_t k = 0; k < s.ground_truth.size(); ++k) {
            CHECK(s.observed.values()[k] == s.ground_truth.values()[k]);
            CHECK((s.ground_truth.values()[k] == 0.0 || s.ground_truth.values()[k] == 1.0));
        }
    }

    spec.degradation = DegradationOp::blur(make_gaussian_kernel(3, 0.8));
    spec.noise_sigma = 0.01;
    const auto once = gen_edge_dataset(spec);
    const auto twice = gen_edge_dataset(spec);
    for (std::size_t j = 0; j < once.size(); ++j)
        for (std::size_t k = 0; k < once[j].observed.size(); ++k)
            CHECK(once[j].observed.values()[k] == twice[j].observed.values()[k]);
}

TEST_CASE("patch extraction: identity, determinism, provenance") {
    std::vector<Image> sources;
    for (int s = 0; s < 3; ++s) sources.push_back(gen_synthetic_image(24, 100 + s));

    const auto whole = extract_patches(sources, 1, 24, 5);
    REQUIRE(whole.size() == 3);
    for (int s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < whole[s].size(); ++k)
            CHECK(whole[s].values()[k] == sources[s].values()[k]);

    const auto a = extract_patch_refs(sources, 2, 10, 77);
    const auto b = extract_patch_refs(sources, 2, 10, 77);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].row == b[i].row);
        CHECK(a[i].col == b[i].col);
        // Every pixel of the patch must appear in the source at the offset.
        const Image& src = sources[a[i].source_index];
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                CHECK(a[i].patch(r, c) == src(a[i].row + r, a[i].col + c));
    }

    CHECK_THROWS_AS(extract_patches(sources, 1, 25, 0), std::invalid_argument);
}

TEST_CASE("degrade_pair: identity, noise statistics, decimation shape") {
    const Image g = gen_synthetic_image(64, 11);
    const TrainSample same = degrade_pair(g, DegradationOp::identity(), 0.0, 1);
    for (std::size_t k = 0; k < g.size(); ++k)
        CHECK(same.observed.values()[k] == g.values()[k]);

    // PSNR of sigma = 0.01 noise on a flat image is 10*log10(1/sigma^2) = 40 dB.
    const Image flat(64, 64, 0.5);
    const TrainSample noisy = degrade_pair(flat, DegradationOp::identity(), 0.01, 3);
    CHECK(std::abs(psnr(noisy.observed, flat) - 40.0) < 0.5);

    const TrainSample small =
        degrade_pair(g, DegradationOp::decimated_blur(make_gaussian_kernel(3, 0.5), 2), 0.0, 4);
    CHECK(small.observed.rows() == 32);
    CHECK(small.observed.cols() == 32);
}

TEST_CASE("reflexive padding mirrors without repeating") {
    const Image img = Image::from_values(2, 3, {1, 2, 3, 4, 5, 6});
    const Image padded = reflexive_pad(img, 2);
    REQUIRE(padded.rows() == 6);
    REQUIRE(padded.cols() == 7);
    // Row 0 mirrors row 1 of the source block, row 1 mirrors row 0.
    CHECK(padded(1, 2) == 1.0);
    CHECK(padded(0, 2) == 4.0);
    CHECK(padded(2, 1) == 1.0);  // column mirror: col index -1 -> 0
    CHECK(padded(2, 0) == 2.0);  // col index -2 -> 1
    CHECK(padded(2, 2) == 1.0);
    CHECK(padded(4, 2) == 4.0);  // row index 2 reflects to source row 1
    CHECK(padded(5, 2) == 1.0);  // row index 3 reflects to source row 0
    CHECK(padded(2, 6) == 2.0);
}

TEST_CASE("reflexive-crop degradation differs from periodic at the boundary") {
    const Image g = gen_edge_image(0.3, 0.0, 32);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.5));
    const TrainSample periodic = degrade_pair(g, op, 0.0, 0, Padding::Periodic);
    const TrainSample reflexive = degrade_pair(g, op, 0.0, 0, Padding::ReflexiveCrop);
    CHECK(periodic.observed.same_shape(reflexive.observed));
    CHECK(max_abs(periodic.observed - reflexive.observed) > 1e-6);

    // The interior is unaffected by the padding convention.
    double interior_diff = 0.0;
    for (int i = 8; i < 24; ++i)
        for (int j = 8; j < 24; ++j)
            interior_diff = std::max(interior_diff, std::abs(periodic.observed(i, j) -
                                                             reflexive.observed(i, j)));
    CHECK(interior_diff < 1e-12);
}

TEST_CASE("synthetic fixture images are deterministic and in range") {
    const Image a = gen_synthetic_image(32, 7);
    const Image b = gen_synthetic_image(32, 7);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a.values()[k] == b.values()[k]);

    double lo = 1.0, hi = 0.0;
    for (double v : a.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
    CHECK(hi - lo > 0.5);  // actual content, not a constant
}
