#pragma once

#include <cstdint>
#include <vector>

#include "bilevel/image.hpp"

namespace bilevel::foe {

/// Learned regularizer parameters: L nonnegative weights paired with L
/// zero-mean square filters.
struct FoEParams {
    std::vector<double> alphas;
    std::vector<Kernel> kernels;

    int count() const { return static_cast<int>(alphas.size()); }
    void validate() const;  // sizes consistent, weights >= 0, kernels zero-mean
};

/// Settings for the spectral-gradient lower solver.
struct LowerSolveConfig {
    double sigma_armijo = 1e-4;  // sufficient-decrease slope
    double beta = 0.5;           // backtracking factor
    double gamma_min = 1e-4;
    double gamma_max = 1.0;
    double gamma0 = 1.0;
    double tol_inner = 1e-6;  // relative-change stopping threshold
    int t_max = 8000;

    void validate() const;
};

struct CgConfig {
    double tol = 1e-8;  // relative residual target
    int max_iter = 500;
    double shift = 0.0;  // optional Tikhonov term added to the system matrix
};

struct CgResult {
    Image solution;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

// Penalty phi(x) = log(1 + x^2) and its first two derivatives.
double phi(double x);
double phi_prime(double x);
double phi_second(double x);

/// Reconstruction objective: 0.5*||A u - f||^2 + sum_l alpha_l sum_i phi((k_l * u)_i).
double foe_energy(const Image& u, const FoEParams& params, const Image& f,
                  const DegradationOp& op);

/// Gradient of foe_energy in u.
Image foe_grad_u(const Image& u, const FoEParams& params, const Image& f,
                 const DegradationOp& op);

/// Matrix-free Hessian-vector product of foe_energy at u.
Image foe_hessian_apply(const Image& u, const FoEParams& params, const DegradationOp& op,
                        const Image& v);

/// Gradient descent with BB1 spectral steps and Armijo backtracking.
/// Stops on relative change below cfg.tol_inner or after cfg.t_max steps;
/// the result never has higher energy than u0.
Image solve_lower(const Image& f, const DegradationOp& op, const FoEParams& params,
                  const Image& u0, const LowerSolveConfig& cfg);

/// Conjugate-gradient solve of the (shifted) Hessian system at u_star.
CgResult solve_adjoint_cg(const Image& u_star, const FoEParams& params, const DegradationOp& op,
                          const Image& rhs, const CgConfig& cfg = {});

/// Loss derivative w.r.t. the l-th weight, given the adjoint solution p of
/// the Hessian system with right-hand side (g - u_star).
double grad_alpha(const Image& u_star, const Image& p, const FoEParams& params, int l);

/// Loss derivative w.r.t. the taps of the l-th filter, same convention.
Kernel grad_kernel(const Image& u_star, const Image& p, const FoEParams& params, int l);

/// Projects onto the feasible set: weights clamped to [0, inf), filters
/// recentred to zero mean. Idempotent.
FoEParams project_params(FoEParams params);

struct TrainConfigFoE {
    int filter_count = 4;  // L
    int filter_size = 5;   // square filter edge
    double tau = 1e-3;     // outer projected-gradient step
    int outer_iterations = 100;
    LowerSolveConfig lower;
    CgConfig cg;
    std::uint64_t seed = 0;
    double init_alpha = 0.1;
    double init_kernel_std = 0.1;
    int threads = 0;  // 0 = automatic
};

/// Mutable state of the outer training loop.
struct TrainStateFoE {
    FoEParams params;
    std::vector<Image> warm_starts;  // one per training sample
    double tau = 0.0;
    int iteration = 0;
    std::vector<double> loss_history;
};

struct TrainResultFoE {
    FoEParams params;
    std::vector<double> loss_history;  // upper loss at iterations 0..k_max
};

/// Seeded default initialization: equal weights, zero-mean Gaussian filters.
FoEParams init_params(int filter_count, int filter_size, double alpha0, double kernel_std,
                      std::uint64_t seed);

TrainResultFoE train_foe(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                         const TrainConfigFoE& cfg);
TrainResultFoE train_foe(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                         const TrainConfigFoE& cfg, FoEParams init);

/// Restores a degraded image with trained parameters (lower solve started
/// from the observation itself, lifted by the adjoint when decimated).
Image restore_foe(const Image& f, const DegradationOp& op, const FoEParams& params,
                  const LowerSolveConfig& cfg);

}  // namespace bilevel::foe
