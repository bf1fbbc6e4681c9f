#include "bilevel/foe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bilevel/parallel.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::foe {

namespace {

constexpr int kMaxBacktracks = 60;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double kernel_mean(const Kernel& k) {
    return k.tap_sum() / static_cast<double>(k.taps.size());
}

}  // namespace

void FoEParams::validate() const {
    require(alphas.size() == kernels.size(), "FoEParams: weight/filter count mismatch");
    for (double a : alphas) require(a >= 0.0, "FoEParams: negative weight");
    for (const Kernel& k : kernels)
        require(std::abs(k.tap_sum()) <= 1e-12 * std::max<double>(1, k.taps.size()),
                "FoEParams: filter taps must sum to zero");
}

void LowerSolveConfig::validate() const {
    require(sigma_armijo > 0.0 && sigma_armijo < 1.0, "LowerSolveConfig: sigma in (0,1) required");
    require(beta > 0.0 && beta < 1.0, "LowerSolveConfig: beta in (0,1) required");
    require(gamma_min > 0.0 && gamma_min < gamma_max, "LowerSolveConfig: 0 < gamma_min < gamma_max");
    require(gamma0 > 0.0, "LowerSolveConfig: gamma0 must be positive");
    require(tol_inner >= 0.0, "LowerSolveConfig: negative tolerance");
    require(t_max >= 1, "LowerSolveConfig: t_max must be >= 1");
}

double phi(double x) { return std::log1p(x * x); }

double phi_prime(double x) { return 2.0 * x / (1.0 + x * x); }

double phi_second(double x) {
    const double d = 1.0 + x * x;
    return 2.0 * (1.0 - x * x) / (d * d);
}

double foe_energy(const Image& u, const FoEParams& params, const Image& f,
                  const DegradationOp& op) {
    const Image residual = apply_degradation(op, u) - f;
    double value = 0.5 * dot(residual, residual);
    for (int l = 0; l < params.count(); ++l) {
        const double alpha = params.alphas[l];
        if (alpha == 0.0) continue;
        const Image r = periodic_convolve(u, params.kernels[l]);
        double reg = 0.0;
        for (double v : r.values()) reg += phi(v);
        value += alpha * reg;
    }
    return value;
}

Image foe_grad_u(const Image& u, const FoEParams& params, const Image& f,
                 const DegradationOp& op) {
    Image grad = apply_degradation_adjoint(op, apply_degradation(op, u) - f);
    for (int l = 0; l < params.count(); ++l) {
        const double alpha = params.alphas[l];
        if (alpha == 0.0) continue;
        Image r = periodic_convolve(u, params.kernels[l]);
        for (double& v : r.values()) v = phi_prime(v);
        Image term = adjoint_convolve(r, params.kernels[l]);
        term *= alpha;
        grad += term;
    }
    return grad;
}

Image foe_hessian_apply(const Image& u, const FoEParams& params, const DegradationOp& op,
                        const Image& v) {
    Image out = apply_degradation_adjoint(op, apply_degradation(op, v));
    for (int l = 0; l < params.count(); ++l) {
        const double alpha = params.alphas[l];
        if (alpha == 0.0) continue;
        Image curvature = periodic_convolve(u, params.kernels[l]);
        for (double& c : curvature.values()) c = phi_second(c);
        Image kv = periodic_convolve(v, params.kernels[l]);
        for (std::size_t k = 0; k < kv.size(); ++k) kv.values()[k] *= curvature.values()[k];
        Image term = adjoint_convolve(kv, params.kernels[l]);
        term *= alpha;
        out += term;
    }
    return out;
}

Image solve_lower(const Image& f, const DegradationOp& op, const FoEParams& params,
                  const Image& u0, const LowerSolveConfig& cfg) {
    cfg.validate();
    Image u = u0;
    double energy = foe_energy(u, params, f, op);
    if (!std::isfinite(energy)) throw std::runtime_error("solve_lower: non-finite initial energy");

    double gamma = std::clamp(cfg.gamma0, cfg.gamma_min, cfg.gamma_max);
    Image grad = foe_grad_u(u, params, f, op);

    for (int t = 0; t < cfg.t_max; ++t) {
        if (max_abs(grad) == 0.0) break;  // stationary start or exact minimizer

        // d = -gamma * grad, unit trial step nu backtracked by beta.
        const double slope = -gamma * dot(grad, grad);
        double nu = 1.0;
        Image trial = u;
        double trial_energy = energy;
        bool accepted = false;
        for (int bt = 0; bt < kMaxBacktracks; ++bt) {
            trial = u;
            const double step = -nu * gamma;
            for (std::size_t k = 0; k < trial.size(); ++k)
                trial.values()[k] += step * grad.values()[k];
            trial_energy = foe_energy(trial, params, f, op);
            if (!std::isfinite(trial_energy))
                throw std::runtime_error("solve_lower: non-finite energy during line search");
            if (trial_energy <= energy + cfg.sigma_armijo * nu * slope) {
                accepted = true;
                break;
            }
            nu *= cfg.beta;
        }
        if (!accepted) break;  // step collapsed to numerical noise

        Image displacement = trial - u;
        const double rel_change = norm2(displacement) / std::max(norm2(u), 1e-300);

        Image new_grad = foe_grad_u(trial, params, f, op);
        Image grad_change = new_grad - grad;
        const double rho_y = dot(displacement, grad_change);
        const double rho_sq = dot(displacement, displacement);
        // BB1 step with safeguard; non-positive curvature falls back to gamma_max.
        gamma = rho_y > 0.0 ? std::clamp(rho_sq / rho_y, cfg.gamma_min, cfg.gamma_max)
                            : cfg.gamma_max;

        u = std::move(trial);
        energy = trial_energy;
        grad = std::move(new_grad);

        if (rel_change < cfg.tol_inner) break;
    }
    return u;
}

CgResult solve_adjoint_cg(const Image& u_star, const FoEParams& params, const DegradationOp& op,
                          const Image& rhs, const CgConfig& cfg) {
    require(cfg.tol > 0.0, "solve_adjoint_cg: tolerance must be positive");
    CgResult res;
    res.solution = Image(rhs.rows(), rhs.cols(), 0.0);
    const double rhs_norm = norm2(rhs);
    if (rhs_norm == 0.0) {
        res.converged = true;
        return res;
    }

    auto system_apply = [&](const Image& v) {
        Image out = foe_hessian_apply(u_star, params, op, v);
        if (cfg.shift != 0.0) {
            for (std::size_t k = 0; k < out.size(); ++k)
                out.values()[k] += cfg.shift * v.values()[k];
        }
        return out;
    };

    Image r = rhs;  // residual for x = 0
    Image d = r;
    double rr = dot(r, r);
    for (int it = 0; it < cfg.max_iter; ++it) {
        Image ad = system_apply(d);
        const double dad = dot(d, ad);
        if (dad <= 0.0) break;  // indefinite curvature; return best iterate
        const double step = rr / dad;
        for (std::size_t k = 0; k < r.size(); ++k) {
            res.solution.values()[k] += step * d.values()[k];
            r.values()[k] -= step * ad.values()[k];
        }
        const double rr_new = dot(r, r);
        res.iterations = it + 1;
        if (std::sqrt(rr_new) <= cfg.tol * rhs_norm) {
            res.converged = true;
            rr = rr_new;
            break;
        }
        const double ratio = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < d.size(); ++k)
            d.values()[k] = r.values()[k] + ratio * d.values()[k];
    }
    res.relative_residual = std::sqrt(rr) / rhs_norm;
    return res;
}

double grad_alpha(const Image& u_star, const Image& p, const FoEParams& params, int l) {
    require(l >= 0 && l < params.count(), "grad_alpha: filter index out of range");
    Image r = periodic_convolve(u_star, params.kernels[l]);
    for (double& v : r.values()) v = phi_prime(v);
    // <K^T phi'(K u), p> = <phi'(K u), K p>
    return dot(r, periodic_convolve(p, params.kernels[l]));
}

Kernel grad_kernel(const Image& u_star, const Image& p, const FoEParams& params, int l) {
    require(l >= 0 && l < params.count(), "grad_kernel: filter index out of range");
    const Kernel& k = params.kernels[l];
    const double alpha = params.alphas[l];

    Kernel out(k.rows, k.cols);
    out.anchor_row = k.anchor_row;
    out.anchor_col = k.anchor_col;
    if (alpha == 0.0) return out;

    Image ku = periodic_convolve(u_star, k);
    Image first = ku;
    for (double& v : first.values()) v = phi_prime(v);

    Image second = periodic_convolve(p, k);
    for (std::size_t i = 0; i < second.size(); ++i)
        second.values()[i] *= phi_second(ku.values()[i]);

    Kernel g1 = tap_correlation(first, p, k.rows, k.cols, k.anchor_row, k.anchor_col);
    Kernel g2 = tap_correlation(second, u_star, k.rows, k.cols, k.anchor_row, k.anchor_col);
    for (std::size_t m = 0; m < out.taps.size(); ++m)
        out.taps[m] = alpha * (g1.taps[m] + g2.taps[m]);
    return out;
}

FoEParams project_params(FoEParams params) {
    for (double& a : params.alphas) a = std::max(a, 0.0);
    for (Kernel& k : params.kernels) {
        const double m = kernel_mean(k);
        for (double& t : k.taps) t -= m;
    }
    return params;
}

FoEParams init_params(int filter_count, int filter_size, double alpha0, double kernel_std,
                      std::uint64_t seed) {
    require(filter_count >= 1, "init_params: filter_count must be >= 1");
    require(filter_size >= 1, "init_params: filter_size must be >= 1");
    Rng rng(seed);
    FoEParams params;
    params.alphas.assign(filter_count, alpha0);
    params.kernels.reserve(filter_count);
    for (int l = 0; l < filter_count; ++l) {
        Kernel k(filter_size, filter_size);
        for (double& t : k.taps) t = kernel_std * rng.normal();
        params.kernels.push_back(std::move(k));
    }
    return project_params(std::move(params));
}

namespace {

double upper_loss(const std::vector<TrainSample>& dataset, const std::vector<Image>& solutions) {
    double loss = 0.0;
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        const Image diff = solutions[j] - dataset[j].ground_truth;
        loss += 0.5 * dot(diff, diff);
    }
    return loss / static_cast<double>(dataset.size());
}

}  // namespace

TrainResultFoE train_foe(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                         const TrainConfigFoE& cfg) {
    return train_foe(dataset, op, cfg,
                     init_params(cfg.filter_count, cfg.filter_size, cfg.init_alpha,
                                 cfg.init_kernel_std, cfg.seed));
}

TrainResultFoE train_foe(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                         const TrainConfigFoE& cfg, FoEParams init) {
    require(!dataset.empty(), "train_foe: empty dataset");
    cfg.lower.validate();
    const int s = static_cast<int>(dataset.size());
    for (int j = 1; j < s; ++j)
        require(dataset[j].ground_truth.same_shape(dataset[0].ground_truth) &&
                    dataset[j].observed.same_shape(dataset[0].observed),
                "train_foe: inconsistent sample shapes");

    TrainStateFoE state;
    state.params = project_params(std::move(init));
    state.tau = cfg.tau;
    state.warm_starts.reserve(s);
    for (const TrainSample& sample : dataset)
        state.warm_starts.push_back(apply_degradation_adjoint(op, sample.observed));

    const int L = state.params.count();
    std::vector<Image> solutions(s);
    std::vector<std::vector<double>> alpha_grads(s);
    std::vector<std::vector<Kernel>> kernel_grads(s);

    auto sweep = [&](bool with_gradients) {
        parallel_for(
            s,
            [&](int j) {
                solutions[j] = solve_lower(dataset[j].observed, op, state.params,
                                           state.warm_starts[j], cfg.lower);
                if (!with_gradients) return;
                const Image rhs = dataset[j].ground_truth - solutions[j];
                const CgResult adj =
                    solve_adjoint_cg(solutions[j], state.params, op, rhs, cfg.cg);
                alpha_grads[j].resize(L);
                kernel_grads[j].resize(L);
                for (int l = 0; l < L; ++l) {
                    alpha_grads[j][l] = grad_alpha(solutions[j], adj.solution, state.params, l);
                    kernel_grads[j][l] = grad_kernel(solutions[j], adj.solution, state.params, l);
                }
            },
            cfg.threads);
        state.warm_starts = solutions;
    };

    for (state.iteration = 0; state.iteration < cfg.outer_iterations; ++state.iteration) {
        sweep(true);
        state.loss_history.push_back(upper_loss(dataset, solutions));

        // One projected gradient step on the dataset-averaged derivatives,
        // reduced in index order.
        const double scale = state.tau / static_cast<double>(s);
        for (int l = 0; l < L; ++l) {
            double ga = 0.0;
            for (int j = 0; j < s; ++j) ga += alpha_grads[j][l];
            state.params.alphas[l] -= scale * ga;
            Kernel& k = state.params.kernels[l];
            for (std::size_t m = 0; m < k.taps.size(); ++m) {
                double gk = 0.0;
                for (int j = 0; j < s; ++j) gk += kernel_grads[j][l].taps[m];
                k.taps[m] -= scale * gk;
            }
        }
        state.params = project_params(std::move(state.params));
    }

    // Loss at the final parameters.
    sweep(false);
    state.loss_history.push_back(upper_loss(dataset, solutions));

    return {std::move(state.params), std::move(state.loss_history)};
}

Image restore_foe(const Image& f, const DegradationOp& op, const FoEParams& params,
                  const LowerSolveConfig& cfg) {
    const Image u0 = (op.kind == DegradationKind::DecimatedBlur)
                         ? apply_degradation_adjoint(op, f)
                         : f;
    return solve_lower(f, op, params, u0, cfg);
}

}  // namespace bilevel::foe
