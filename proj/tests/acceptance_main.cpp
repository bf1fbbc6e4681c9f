// Acceptance suite: end-to-end checks at fixed tolerances, one line per
// criterion. Exits nonzero if any criterion fails.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel/cli.hpp"
#include "bilevel/data.hpp"
#include "bilevel/foe.hpp"
#include "bilevel/metio.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/tvdisc.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace bilevel;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

double rel_component(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-8});
}

// ---- criterion 1: prox maps vs dense direct solves --------------------------

Eigen::MatrixXd dense_forward(const DegradationOp& op, int rows, int cols) {
    return oracles::dense_operator(
        [&](const Image& x) {
            if (op.kind == DegradationKind::Identity) return x;
            const Image blurred = oracles::convolve_scatter(x, op.kernel);
            if (op.kind == DegradationKind::Blur) return blurred;
            Image coarse(rows / op.factor, cols / op.factor);
            for (int i = 0; i < coarse.rows(); ++i)
                for (int j = 0; j < coarse.cols(); ++j)
                    coarse(i, j) = blurred(i * op.factor, j * op.factor);
            return coarse;
        },
        rows, cols);
}

Outcome criterion_prox_oracle() {
    Outcome out;
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const bool sr = trial % 2 == 1;
        const DegradationOp op =
            sr ? DegradationOp::decimated_blur(make_gaussian_kernel(3, 0.5 + 0.1 * (trial % 5)), 2)
               : DegradationOp::blur(make_gaussian_kernel(3, 0.6 + 0.1 * (trial % 5)));
        const double tau = 0.05 + 0.15 * (trial % 7);
        const Image u_bar = oracles::random_image(8, 8, rng);
        const int data_n = sr ? 4 : 8;
        const Image g = oracles::random_image(data_n, data_n, rng);

        const Image got = tvdisc::prox_data(op, g, tau, u_bar);

        const Eigen::MatrixXd A = dense_forward(op, 8, 8);
        const Eigen::MatrixXd M =
            tau * A.transpose() * A + Eigen::MatrixXd::Identity(64, 64);
        const Eigen::VectorXd rhs =
            tau * A.transpose() * oracles::to_vector(g) + oracles::to_vector(u_bar);
        const Eigen::VectorXd want = M.lu().solve(rhs);

        double max_diff = 0.0;
        for (std::size_t k = 0; k < got.size(); ++k)
            max_diff = std::max(max_diff, std::abs(got.values()[k] - want(static_cast<int>(k))));
        std::ostringstream what;
        what << (sr ? "sr" : "deblur") << " trial " << trial << ": max-abs " << max_diff;
        out.require(max_diff < 1e-8, what.str());
    }
    if (out.ok) out.detail = "20 random instances within 1e-8 of the dense solve";
    return out;
}

// ---- criterion 2: FoE parameter gradients vs bilevel finite differences ------

Outcome criterion_foe_gradients() {
    Outcome out;
    const Image g = data::gen_synthetic_image(8, 404);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(3, 0.8));
    const Image f = add_awgn(apply_degradation(op, g), 0.01, 405);
    const foe::FoEParams params = foe::init_params(2, 3, 0.08, 0.12, 406);

    foe::LowerSolveConfig tight;
    tight.tol_inner = 1e-12;
    tight.t_max = 100000;
    const auto loss = [&](const foe::FoEParams& p) {
        const Image u = foe::solve_lower(f, op, p, f, tight);
        const Image diff = u - g;
        return 0.5 * dot(diff, diff);
    };

    const Image u_star = foe::solve_lower(f, op, params, f, tight);
    const foe::CgResult adj =
        foe::solve_adjoint_cg(u_star, params, op, g - u_star, {1e-12, 5000, 0.0});
    out.require(adj.converged, "adjoint CG did not converge");

    const double h = 1e-4;
    double worst = 0.0;
    for (int l = 0; l < 2; ++l) {
        const double got = foe::grad_alpha(u_star, adj.solution, params, l);
        foe::FoEParams pp = params, pm = params;
        pp.alphas[l] += h;
        pm.alphas[l] -= h;
        const double fd = (loss(pp) - loss(pm)) / (2 * h);
        const double err = rel_component(got, fd);
        worst = std::max(worst, err);
        std::ostringstream what;
        what << "alpha[" << l << "] rel err " << err;
        out.require(err < 1e-2, what.str());

        const Kernel gk = foe::grad_kernel(u_star, adj.solution, params, l);
        for (int m = 0; m < 9; ++m) {
            foe::FoEParams kp = params, km = params;
            kp.kernels[l].taps[m] += h;
            km.kernels[l].taps[m] -= h;
            const double kfd = (loss(kp) - loss(km)) / (2 * h);
            const double kerr = rel_component(gk.taps[m], kfd);
            worst = std::max(worst, kerr);
            std::ostringstream kwhat;
            kwhat << "kernel[" << l << "] tap " << m << " rel err " << kerr;
            out.require(kerr < 1e-2, kwhat.str());
        }
    }
    if (out.ok) {
        std::ostringstream d;
        d << "all 20 components within 1e-2 (worst " << worst << ")";
        out.detail = d.str();
    }
    return out;
}

// ---- criterion 3: piggyback filter gradient vs finite differences ------------

Outcome criterion_piggyback_gradient() {
    Outcome out;
    // lambda is scaled down so the dual-field block is active on a 8x8 grid
    // (with lambda = 1 the shrink dead zone absorbs q entirely and the loss
    // is locally independent of the filters).
    const int n = 8, K = 5000;
    const double lambda = 0.1;
    const Image g = data::gen_edge_image(2.2, 0.13, n);
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(3, 0.8));
    const Image f = add_awgn(apply_degradation(op, g), 0.01, 77);

    const auto run_forward = [&](const tvdisc::FilterFamily& fam) {
        const tvdisc::PiggybackConfig pb = tvdisc::default_piggyback_config(fam, n, n, K, lambda);
        tvdisc::PiggybackRun run = tvdisc::piggyback_pd(
            fam, op, f, nullptr, pb, tvdisc::make_saddle_state(op, f, fam.count()),
            tvdisc::make_adjoint_state(n, n, fam.count()), false);
        const Image diff = run.saddle.u - g;
        return 0.5 * dot(diff, diff);
    };

    const tvdisc::FilterFamily fam = tvdisc::fd_family(1);
    const tvdisc::PiggybackConfig pb = tvdisc::default_piggyback_config(fam, n, n, K, lambda);
    const tvdisc::PiggybackRun run = tvdisc::piggyback_pd(
        fam, op, f, &g, pb, tvdisc::make_saddle_state(op, f, 1),
        tvdisc::make_adjoint_state(n, n, 1), true);
    double q_mag = 0.0;
    for (const tvdisc::DualPair& q : run.saddle.q)
        q_mag = std::max({q_mag, max_abs(q.p1), max_abs(q.p2)});
    out.require(q_mag > 0.0, "degenerate fixture: dual field is identically zero");
    const tvdisc::FilterFamily grad = tvdisc::filter_grad(run.saddle, run.adjoint);

    const double h = 1e-4;
    int good = 0, total = 0;
    double dot_gf = 0.0, norm_g = 0.0, norm_f = 0.0;
    for (int c = 0; c < 2; ++c) {
        for (std::size_t m = 0; m < grad.filters[0][c].taps.size(); ++m) {
            tvdisc::FilterFamily fp = fam, fm = fam;
            fp.filters[0][c].taps[m] += h;
            fm.filters[0][c].taps[m] -= h;
            const double fd = (run_forward(fp) - run_forward(fm)) / (2 * h);
            const double an = grad.filters[0][c].taps[m];
            ++total;
            if (rel_component(an, fd) < 5e-2) ++good;
            dot_gf += an * fd;
            norm_g += an * an;
            norm_f += fd * fd;
        }
    }
    const double cosine = dot_gf / std::max(std::sqrt(norm_g * norm_f), 1e-300);
    std::ostringstream d;
    d << good << "/" << total << " taps within 5e-2, cosine " << cosine;
    out.require(good * 5 >= total * 4, d.str());  // >= 80%
    out.require(cosine > 0.95, d.str());
    if (out.ok) out.detail = d.str();
    return out;
}

// ---- criteria 4 and 6a: desk-scale TV learning vs the FD baseline ------------

std::vector<double> g_tv_loss_history;
std::vector<double> g_foe_loss_history;

Outcome criterion_tv_learning() {
    Outcome out;
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.5));

    data::EdgeSetSpec train_spec;
    train_spec.count = 8;
    train_spec.size = 32;
    train_spec.seed = 91;
    train_spec.degradation = op;
    train_spec.noise_sigma = 0.0;
    train_spec.padding = data::Padding::ReflexiveCrop;
    const auto train_set = data::gen_edge_dataset(train_spec);

    tvdisc::TrainConfigTV cfg;
    cfg.filter_count = 2;
    cfg.symmetry = tvdisc::Symmetry::Transpose;
    cfg.step = 100.0;
    cfg.outer_iterations = 50;
    cfg.pb_iterations = 500;
    cfg.seed = 92;

    const tvdisc::TrainResultTV result = tvdisc::train_tv_filters(train_set, op, cfg);
    g_tv_loss_history = result.loss_history;

    data::EdgeSetSpec test_spec = train_spec;
    test_spec.seed = 1091;
    const auto test_set = data::gen_edge_dataset(test_spec);

    const auto mean_psnr = [&](const tvdisc::FilterFamily& fam) {
        const tvdisc::PiggybackConfig pb =
            tvdisc::default_piggyback_config(fam, test_spec.size, test_spec.size, 2000);
        double acc = 0.0;
        for (const TrainSample& s : test_set)
            acc += psnr(tvdisc::restore_tv(s.observed, op, fam, pb), s.ground_truth);
        return acc / static_cast<double>(test_set.size());
    };

    const double learned = mean_psnr(result.family);
    const double baseline = mean_psnr(tvdisc::fd_family(1));
    std::ostringstream d;
    d << "learned " << learned << " dB vs fd " << baseline << " dB";
    out.require(learned >= baseline + 2.0, d.str());
    if (out.ok) out.detail = d.str() + " (margin >= 2 dB)";
    return out;
}

// ---- criteria 5 and 6b: desk-scale FoE improvement ----------------------------

Outcome criterion_foe_training() {
    Outcome out;
    const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(5, 1.0));

    std::vector<Image> sources;
    for (int s = 0; s < 4; ++s) sources.push_back(data::gen_synthetic_image(96, 500 + s));
    const std::vector<Image> patches = data::extract_patches(sources, 1, 64, 501);

    std::vector<TrainSample> train_set;
    for (std::size_t j = 0; j < patches.size(); ++j)
        train_set.push_back(data::degrade_pair(patches[j], op, 0.01, 600 + j));

    foe::TrainConfigFoE cfg;
    cfg.filter_count = 4;
    cfg.filter_size = 5;
    cfg.tau = 0.02;
    cfg.outer_iterations = 15;
    cfg.seed = 502;

    const foe::TrainResultFoE result = foe::train_foe(train_set, op, cfg);
    g_foe_loss_history = result.loss_history;

    // Held-out patch.
    const Image held_source = data::gen_synthetic_image(96, 777);
    const Image held = data::extract_patches({held_source}, 1, 64, 778)[0];
    const TrainSample test = data::degrade_pair(held, op, 0.01, 779);

    const Image restored = foe::restore_foe(test.observed, op, result.params, cfg.lower);
    const double before = psnr(test.observed, held);
    const double after = psnr(restored, held);
    std::ostringstream d;
    d << "degraded " << before << " dB -> restored " << after << " dB";
    out.require(after >= before + 1.5, d.str());
    if (out.ok) out.detail = d.str() + " (gain >= 1.5 dB)";
    return out;
}

// ---- criterion 6: loss decay trends -------------------------------------------

Outcome trend_check(const std::vector<double>& history, const char* label) {
    Outcome out;
    out.require(!history.empty(), std::string(label) + ": empty history");
    if (!out.ok) return out;
    out.require(history.back() < history.front(),
                std::string(label) + ": final loss not below initial");

    const int window = 5;
    std::vector<double> ma;
    for (std::size_t i = window - 1; i < history.size(); ++i) {
        double acc = 0.0;
        for (int k = 0; k < window; ++k) acc += history[i - k];
        ma.push_back(acc / window);
    }
    for (std::size_t i = ma.size() / 2; i + 1 < ma.size(); ++i) {
        if (!(ma[i + 1] <= ma[i] + 1e-12)) {
            std::ostringstream what;
            what << label << ": moving average rises at index " << i + 1;
            out.require(false, what.str());
            break;
        }
    }
    return out;
}

Outcome criterion_loss_trends() {
    Outcome out;
    const Outcome tv = trend_check(g_tv_loss_history, "tv");
    const Outcome fe = trend_check(g_foe_loss_history, "foe");
    out.require(tv.ok, tv.detail);
    out.require(fe.ok, fe.detail);
    if (out.ok) out.detail = "both loss curves decay with nonincreasing 5-step averages";
    return out;
}

// ---- criterion 7: invariant suites ---------------------------------------------

Outcome criterion_invariants() {
    Outcome out;
    Rng rng(31337);

    // Adjoint identities at 1e-10.
    for (int trial = 0; trial < 6; ++trial) {
        const Kernel ker = oracles::random_kernel(3, 3, rng);
        const Image x = oracles::random_image(8, 8, rng);
        const Image y = oracles::random_image(8, 8, rng);
        out.require(std::abs(dot(periodic_convolve_direct(x, ker), y) -
                             dot(x, adjoint_convolve_direct(y, ker))) < 1e-10,
                    "convolution adjoint identity (direct)");
        out.require(std::abs(dot(periodic_convolve_fft(x, ker), y) -
                             dot(x, adjoint_convolve_fft(y, ker))) < 1e-10,
                    "convolution adjoint identity (fft)");

        const GradientField dx = grad_op(x);
        const GradientField p{oracles::random_image(8, 8, rng),
                              oracles::random_image(8, 8, rng)};
        out.require(std::abs(dot(dx.dv, p.dv) + dot(dx.dh, p.dh) - dot(x, grad_adjoint(p))) <
                        1e-10,
                    "gradient adjoint identity");

        const DegradationOp sr = DegradationOp::decimated_blur(make_gaussian_kernel(3, 0.7), 2);
        const Image ax = apply_degradation(sr, x);
        const Image ys = oracles::random_image(4, 4, rng);
        out.require(std::abs(dot(ax, ys) - dot(x, apply_degradation_adjoint(sr, ys))) < 1e-10,
                    "degradation adjoint identity");
    }

    // FFT vs direct convolution up to 32x32.
    for (int size : {9, 16, 27, 32}) {
        const Image img = oracles::random_image(size, size, rng);
        const Kernel ker = oracles::random_kernel(3, 3, rng);
        const Image a = periodic_convolve_direct(img, ker);
        const Image b = periodic_convolve_fft(img, ker);
        out.require(max_abs(a - b) < 1e-10, "fft-vs-direct convolution");
    }

    // Projection idempotence.
    {
        foe::FoEParams params;
        params.alphas = {-0.3, 0.7, 0.1};
        for (int l = 0; l < 3; ++l) {
            Kernel k(3, 3);
            for (double& t : k.taps) t = rng.uniform(-1.0, 1.0);
            params.kernels.push_back(k);
        }
        const foe::FoEParams once = foe::project_params(params);
        const foe::FoEParams twice = foe::project_params(once);
        for (int l = 0; l < 3; ++l) {
            out.require(once.alphas[l] == twice.alphas[l], "weight projection idempotence");
            // Mean subtraction leaves a ~1e-17 residue, so the second pass can
            // move taps by one ulp; 1e-12 is the documented alternative bound.
            for (int m = 0; m < 9; ++m)
                out.require(std::abs(once.kernels[l].taps[m] - twice.kernels[l].taps[m]) < 1e-12,
                            "filter projection idempotence");
        }

        tvdisc::FilterFamily fam = tvdisc::zero_family(4, tvdisc::Symmetry::Rot90);
        for (auto& pair : fam.filters)
            for (Kernel& k : pair)
                for (double& t : k.taps) t = rng.uniform(-1.0, 1.0);
        const tvdisc::FilterFamily once_tv =
            tvdisc::project_symmetry(tvdisc::project_sum_mu(fam));
        const tvdisc::FilterFamily twice_tv =
            tvdisc::project_symmetry(tvdisc::project_sum_mu(once_tv));
        for (int l = 0; l < 4; ++l)
            for (int c = 0; c < 2; ++c)
                for (std::size_t m = 0; m < once_tv.filters[l][c].taps.size(); ++m)
                    out.require(std::abs(once_tv.filters[l][c].taps[m] -
                                         twice_tv.filters[l][c].taps[m]) < 1e-12,
                                "family projection idempotence");
    }

    // Homogeneous adjoint invariant, exact.
    {
        const Image g = data::gen_edge_image(0.5, 0.0, 8);
        const DegradationOp op = DegradationOp::blur(make_gaussian_kernel(3, 0.8));
        const Image f = apply_degradation(op, g);
        const tvdisc::FilterFamily fam = tvdisc::fd_family(2);
        const tvdisc::PiggybackConfig pb = tvdisc::default_piggyback_config(fam, 8, 8, 50);
        const tvdisc::PiggybackRun run = tvdisc::piggyback_pd(
            fam, op, f, nullptr, pb, tvdisc::make_saddle_state(op, f, 2),
            tvdisc::make_adjoint_state(8, 8, 2), true);
        out.require(max_abs(run.adjoint.u) == 0.0, "homogeneous adjoint: U stays zero");
        out.require(max_abs(run.adjoint.p.p1) == 0.0 && max_abs(run.adjoint.p.p2) == 0.0,
                    "homogeneous adjoint: P stays zero");
        for (const tvdisc::DualPair& q : run.adjoint.q)
            out.require(max_abs(q.p1) == 0.0 && max_abs(q.p2) == 0.0,
                        "homogeneous adjoint: Q stays zero");
    }

    // Shrink and prox Jacobians vs finite differences at 1e-5.
    {
        std::vector<tvdisc::DualPair> z, w;
        for (int l = 0; l < 2; ++l) {
            z.push_back({oracles::random_image(4, 4, rng), oracles::random_image(4, 4, rng)});
            w.push_back({oracles::random_image(4, 4, rng), oracles::random_image(4, 4, rng)});
        }
        const double kappa = 0.2, h = 1e-7;
        const auto jw = tvdisc::group_shrink_jacobian_apply(z, kappa, w);
        std::vector<tvdisc::DualPair> zp = z, zm = z;
        for (int l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < z[l].p1.size(); ++i) {
                zp[l].p1.values()[i] += h * w[l].p1.values()[i];
                zp[l].p2.values()[i] += h * w[l].p2.values()[i];
                zm[l].p1.values()[i] -= h * w[l].p1.values()[i];
                zm[l].p2.values()[i] -= h * w[l].p2.values()[i];
            }
        const auto sp = tvdisc::group_shrink(zp, kappa);
        const auto sm = tvdisc::group_shrink(zm, kappa);
        for (int l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < z[l].p1.size(); ++i) {
                const double r = std::hypot(z[l].p1.values()[i], z[l].p2.values()[i]);
                if (std::abs(r - kappa) < 0.02) continue;
                const double fd1 = (sp[l].p1.values()[i] - sm[l].p1.values()[i]) / (2 * h);
                const double fd2 = (sp[l].p2.values()[i] - sm[l].p2.values()[i]) / (2 * h);
                out.require(rel_component(jw[l].p1.values()[i], fd1) < 1e-5 ||
                                std::abs(jw[l].p1.values()[i] - fd1) < 1e-7,
                            "shrink jacobian finite difference");
                out.require(rel_component(jw[l].p2.values()[i], fd2) < 1e-5 ||
                                std::abs(jw[l].p2.values()[i] - fd2) < 1e-7,
                            "shrink jacobian finite difference");
            }

        const DegradationOp op = DegradationOp::decimated_blur(make_gaussian_kernel(3, 0.6), 2);
        const tvdisc::ProxDataSolver solver(op, Image(4, 4, 0.3), 0.4, 8, 8);
        const Image u_bar = oracles::random_image(8, 8, rng);
        const Image dir = oracles::random_image(8, 8, rng);
        Image up = u_bar, um = u_bar;
        const double hp = 1e-6;
        for (std::size_t k = 0; k < dir.size(); ++k) {
            up.values()[k] += hp * dir.values()[k];
            um.values()[k] -= hp * dir.values()[k];
        }
        const Image fd = (1.0 / (2 * hp)) * (solver.apply(up) - solver.apply(um));
        out.require(max_abs(solver.apply_jacobian(dir) - fd) < 1e-5,
                    "prox jacobian finite difference");

        // Nonexpansiveness at 1e-12.
        for (int trial = 0; trial < 4; ++trial) {
            const Image x = oracles::random_image(8, 8, rng);
            const Image y = oracles::random_image(8, 8, rng);
            out.require(norm2(solver.apply(x) - solver.apply(y)) <= norm2(x - y) + 1e-12,
                        "prox nonexpansiveness");
        }
        const auto sx = tvdisc::group_shrink(z, 0.3);
        const auto sy = tvdisc::group_shrink(w, 0.3);
        double d_in = 0.0, d_out = 0.0;
        for (int l = 0; l < 2; ++l)
            for (std::size_t i = 0; i < z[l].p1.size(); ++i) {
                const double a1 = z[l].p1.values()[i] - w[l].p1.values()[i];
                const double a2 = z[l].p2.values()[i] - w[l].p2.values()[i];
                const double b1 = sx[l].p1.values()[i] - sy[l].p1.values()[i];
                const double b2 = sx[l].p2.values()[i] - sy[l].p2.values()[i];
                d_in += a1 * a1 + a2 * a2;
                d_out += b1 * b1 + b2 * b2;
            }
        out.require(std::sqrt(d_out) <= std::sqrt(d_in) + 1e-12, "shrink nonexpansiveness");
    }

    if (out.ok) out.detail = "adjoints, fft-vs-direct, projections, adjoint zeros, jacobians";
    return out;
}

// ---- criterion 8: crossover harness shape ---------------------------------------

Outcome criterion_crossover() {
    Outcome out;
    const fs::path root = fs::temp_directory_path() / "bilevel_acceptance" / "crossover";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::string dataset = R"("dataset": {"kind": "edges", "count": 3, "size": 16},)";
    const std::string tv_train =
        R"("tv": {"L": 2, "symmetry": "transpose", "step": 100.0, "outer_iters": 3, "K": 60,
                 "restore_iters": 60},)";

    // Train one model per task setting.
    const auto train = [&](const std::string& name, const std::string& degradation) {
        const fs::path dir = root / name;
        fs::create_directories(dir);
        const std::string cfg_text = "{\"seed\": 700," + dataset + tv_train +
                                     "\"degradation\": " + degradation + ", \"out\": \"" +
                                     dir.string() + "\"}";
        const cli::RunConfig cfg = cli::parse_config(cfg_text);
        if (cli::cmd_train_tvdisc(cfg) != 0) out.require(false, "training " + name + " failed");
        const fs::path model = dir / "tv_model.blrf";
        const fs::path renamed = root / (name + ".blrf");
        fs::copy_file(model, renamed);
        fs::copy_file(model.string() + ".json", renamed.string() + ".json");
        return renamed;
    };
    const fs::path model_deblur = train("deblurA", R"({"task": "deblur", "blur": "gaussianA"})");
    const fs::path model_sr = train("srmodel", R"({"task": "sr", "blur": "delta"})");
    if (!out.ok) return out;

    const fs::path xdir = root / "matrix";
    fs::create_directories(xdir);
    const std::string xcfg_text = "{\"seed\": 701," + dataset + tv_train +
                                  R"("crossover": {"models": [")" + model_deblur.string() +
                                  "\", \"" + model_sr.string() +
                                  R"("], "tasks": ["gaussianA", "sr"]}, "out": ")" +
                                  xdir.string() + "\"}";
    out.require(cli::cmd_crossover(cli::parse_config(xcfg_text)) == 0, "crossover failed");
    if (!out.ok) return out;

    std::ifstream csv((xdir / "crossover.csv").string());
    std::string header;
    std::getline(csv, header);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    out.require(rows.size() == 2, "expected 2 evaluation-task rows");
    if (!out.ok) return out;
    for (const auto& cells : rows) {
        out.require(cells.size() == 6, "expected task + 2 models + 3 presets per row");
        for (std::size_t c = 1; c < cells.size(); ++c) {
            out.require(!cells[c].empty(), "empty matrix cell");
            out.require(std::isfinite(std::strtod(cells[c].c_str(), nullptr)),
                        "non-finite matrix cell");
        }
    }
    if (!out.ok) return out;

    // The sr-trained model evaluated on deblurring must be finite (already
    // checked) and the diagonal must match a task-mode restore exactly.
    const fs::path rdir = root / "diag";
    fs::create_directories(rdir);
    const std::string rcfg_text = "{\"seed\": 701," + dataset + tv_train +
                                  R"("degradation": {"task": "deblur", "blur": "gaussianA"},)" +
                                  R"("restore": {"model": ")" + model_deblur.string() +
                                  "\"}, \"out\": \"" + rdir.string() + "\"}";
    out.require(cli::cmd_restore(cli::parse_config(rcfg_text)) == 0, "restore failed");

    std::ifstream rcsv((rdir / "restore_psnr.csv").string());
    std::string mean_value;
    while (std::getline(rcsv, line)) {
        const auto comma1 = line.find(',');
        if (comma1 == std::string::npos) continue;
        if (line.substr(0, comma1).find("-mean") == std::string::npos) continue;
        mean_value = line.substr(line.rfind(',') + 1);
    }
    out.require(!mean_value.empty(), "restore mean row missing");
    out.require(rows[0].size() == 6 && rows[0][1] == mean_value,
                "diagonal cell differs from cmd_restore (" + rows[0][1] + " vs " + mean_value +
                    ")");
    if (out.ok) out.detail = "2x5 matrix complete; diagonal equals restore byte-for-byte";
    return out;
}

// ---- criterion 9: format round trips ---------------------------------------------

Outcome criterion_formats() {
    Outcome out;
    const fs::path root = fs::temp_directory_path() / "bilevel_acceptance" / "formats";
    fs::remove_all(root);
    fs::create_directories(root);

    // Filter banks, bitwise.
    const foe::FoEParams params = foe::init_params(3, 5, 1.0 / 3.0, 0.1, 55);
    const std::string foe_path = (root / "p.blrf").string();
    metio::write_filter_bank(metio::FilterBank::from_foe(params), foe_path);
    const metio::FilterBank foe_back = metio::read_filter_bank(foe_path);
    for (int l = 0; l < 3; ++l) {
        out.require(foe_back.foe_params.alphas[l] == params.alphas[l], "weight round trip");
        for (int m = 0; m < 25; ++m)
            out.require(foe_back.foe_params.kernels[l].taps[m] == params.kernels[l].taps[m],
                        "filter tap round trip");
    }
    const std::string foe_path2 = (root / "p2.blrf").string();
    metio::write_filter_bank(foe_back, foe_path2);
    {
        std::ifstream a(foe_path, std::ios::binary), b(foe_path2, std::ios::binary);
        std::ostringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        out.require(sa.str() == sb.str(), "filter bank bytes differ after round trip");
    }

    const tvdisc::FilterFamily fam = tvdisc::init_family(4, tvdisc::Symmetry::Rot90, 1e-3, 56);
    const std::string tv_path = (root / "t.blrf").string();
    metio::write_filter_bank(metio::FilterBank::from_tv(fam), tv_path);
    const metio::FilterBank tv_back = metio::read_filter_bank(tv_path);
    out.require(tv_back.tv_family.symmetry == tvdisc::Symmetry::Rot90, "symmetry tag round trip");
    for (int l = 0; l < 4; ++l)
        for (int c = 0; c < 2; ++c)
            for (std::size_t m = 0; m < fam.filters[l][c].taps.size(); ++m)
                out.require(tv_back.tv_family.filters[l][c].taps[m] ==
                                fam.filters[l][c].taps[m],
                            "family tap round trip");

    // Quantized image round trip.
    Rng rng(57);
    Image img(12, 9);
    for (double& v : img.values()) v = rng.uniform_int(0, 255) / 255.0;
    const std::string pgm_path = (root / "img.pgm").string();
    metio::write_pgm(img, pgm_path);
    const Image img_back = metio::read_pgm(pgm_path);
    for (std::size_t k = 0; k < img.size(); ++k)
        out.require(img_back.values()[k] == img.values()[k], "pgm round trip");

    // Error map color anchors.
    Image u(1, 3, 0.0), g(1, 3, 0.0);
    u(0, 0) = 1.0;  // +1 -> red
    g(0, 1) = 1.0;  // -1 -> blue
    u(0, 2) = 0.5;
    g(0, 2) = 0.5;  // 0 -> white
    const std::string ppm_path = (root / "err.ppm").string();
    metio::write_error_map(u, g, ppm_path);
    std::ifstream ppm(ppm_path, std::ios::binary);
    std::ostringstream pm;
    pm << ppm.rdbuf();
    const std::string bytes = pm.str();
    const std::string header = "P6\n3 1\n255\n";
    out.require(bytes.size() == header.size() + 9, "error map payload size");
    if (out.ok) {
        const unsigned char* px =
            reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
        out.require(px[0] == 255 && px[1] == 0 && px[2] == 0, "error +1 must be pure red");
        out.require(px[3] == 0 && px[4] == 0 && px[5] == 255, "error -1 must be pure blue");
        out.require(px[6] == 255 && px[7] == 255 && px[8] == 255, "zero error must be white");
    }

    if (out.ok) out.detail = "filter banks and pgm bitwise; error-map anchors exact";
    return out;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "prox maps match dense direct solves", criterion_prox_oracle},
        {2, "regularizer parameter gradients match bilevel finite differences",
         criterion_foe_gradients},
        {3, "piggyback filter gradient matches finite differences", criterion_piggyback_gradient},
        {4, "desk-scale filter learning beats the forward-difference baseline",
         criterion_tv_learning},
        {5, "desk-scale regularizer training improves restoration", criterion_foe_training},
        {6, "training loss decays with a nonincreasing trend", criterion_loss_trends},
        {7, "invariant suites", criterion_invariants},
        {8, "crossover harness emits a complete, consistent matrix", criterion_crossover},
        {9, "file format round trips", criterion_formats},
    };

    bool all_ok = true;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d: %s (%.1fs) %s\n", outcome.ok ? "PASS" : "FAIL", c.id,
                    c.name, seconds, outcome.detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && outcome.ok;
    }
    return all_ok ? 0 : 1;
}
