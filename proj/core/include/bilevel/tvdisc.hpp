#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "bilevel/image.hpp"

namespace bilevel::tvdisc {

enum class Symmetry { None, Transpose, Rot90 };

std::string symmetry_name(Symmetry s);
Symmetry symmetry_from_name(const std::string& name);

/// Family of L interpolation filter pairs acting on the two components of
/// the dual variable: a 2x3 stencil on the first component and a 3x2 stencil
/// on the second, anchors fixed at (0,1) and (1,0).
struct FilterFamily {
    std::vector<std::array<Kernel, 2>> filters;
    Symmetry symmetry = Symmetry::None;

    int count() const { return static_cast<int>(filters.size()); }
};

/// Makes an all-zero family of the standard stencil shapes.
FilterFamily zero_family(int count, Symmetry symmetry = Symmetry::None);

/// The two staggered components of a dual field.
struct DualPair {
    Image p1;
    Image p2;
};

/// Saddle-point iterate (u, q, p) of the reconstruction problem.
struct SaddleState {
    Image u;
    std::vector<DualPair> q;
    DualPair p;
};

/// Adjoint iterate (U, Q, P) mirroring SaddleState.
struct AdjointState {
    Image u;
    std::vector<DualPair> q;
    DualPair p;
};

struct PiggybackConfig {
    double sigma_p = 0.0;  // dual ascent step
    double tau_u = 0.0;    // primal step on u
    double tau_q = 0.0;    // primal step on q
    double theta = 1.0;    // extrapolation weight
    int iterations = 2000;
    double lambda = 1.0;  // weight of the dual-field norm

    void validate() const;
};

// --- filter application -----------------------------------------------------

/// Componentwise periodic convolution: result l holds (F^{l,1} p1, F^{l,2} p2).
std::vector<DualPair> apply_filters(const FilterFamily& fam, const DualPair& p);
/// Exact adjoint of apply_filters.
DualPair apply_filters_adjoint(const FilterFamily& fam, const std::vector<DualPair>& z);

// --- proximal maps ----------------------------------------------------------

/// Per-pixel block soft-thresholding of the (z1, z2) pairs across each index l.
std::vector<DualPair> group_shrink(const std::vector<DualPair>& z, double kappa);

/// Applies the (generalized) Jacobian of group_shrink at z to w; the zero
/// branch is used on the sphere |v| = kappa.
std::vector<DualPair> group_shrink_jacobian_apply(const std::vector<DualPair>& z, double kappa,
                                                  const std::vector<DualPair>& w);

/// Solver for (tau A^T A + I) u = tau A^T data + u_bar with A the degradation
/// operator; FFT closed forms for periodic blur, and the exact
/// Woodbury/polyphase elimination on the coarse grid for decimated blur.
/// Factorizes once so repeated applies only pay transforms.
class ProxDataSolver {
public:
    ProxDataSolver(const DegradationOp& op, const Image& data, double tau, int rows, int cols);

    /// prox of tau * 0.5*||A . - data||^2 evaluated at u_bar.
    Image apply(const Image& u_bar) const;
    /// The (constant) Jacobian of the prox: w -> (tau A^T A + I)^{-1} w.
    Image apply_jacobian(const Image& w) const;

private:
    Image solve_system(const Image& rhs) const;

    DegradationOp op_;
    double tau_ = 0.0;
    int rows_ = 0, cols_ = 0;
    // Blur path
    std::vector<std::complex<double>> kernel_spec_;
    std::vector<double> denom_;
    // Decimated path
    std::vector<double> coarse_denom_;
    Image data_term_;  // tau * A^T data
};

Image prox_data(const DegradationOp& op, const Image& data, double tau, const Image& u_bar);
Image prox_data_jacobian_apply(const DegradationOp& op, double tau, const Image& w);

// --- piggyback primal-dual ---------------------------------------------------

struct PiggybackRun {
    SaddleState saddle;
    AdjointState adjoint;
};

SaddleState make_saddle_state(const DegradationOp& op, const Image& data, int count);
AdjointState make_adjoint_state(int rows, int cols, int count);

/// Runs the coupled saddle/adjoint iteration for cfg.iterations steps.
/// loss_target, when non-null, injects the upper-loss gradient (u - target)
/// into the adjoint update; with a null target and zero adjoint
/// initialization the adjoint states stay identically zero. When run_adjoint
/// is false the adjoint half is skipped entirely; the saddle half computes
/// the same values either way.
PiggybackRun piggyback_pd(const FilterFamily& fam, const DegradationOp& op, const Image& data,
                          const Image* loss_target, const PiggybackConfig& cfg, SaddleState init,
                          AdjointState adjoint_init, bool run_adjoint = true);

/// Per-sample loss derivative w.r.t. every filter tap, assembled from the
/// final saddle and adjoint states of one piggyback run.
FilterFamily filter_grad(const SaddleState& saddle, const AdjointState& adjoint);

// --- constraint and symmetry projections -------------------------------------

/// Nearest taps with the prescribed sum: every tap shifted by
/// (mu - sum) / tap_count.
Kernel project_taps_to_sum(Kernel k, double mu);

/// Equalizes all kernel tap sums to their common mean. Idempotent.
FilterFamily project_sum_mu(FilterFamily fam);

/// Orthogonal projection onto the family's symmetry class by averaging over
/// the group orbit. Errors when the symmetry is incompatible with L.
FilterFamily project_symmetry(FilterFamily fam);

/// Power-iteration estimate of the operator norm of apply_filters on a
/// rows x cols grid.
double family_operator_norm(const FilterFamily& fam, int rows, int cols);

/// Steps satisfying sigma_p*tau_u*||D||^2 <= 1 and sigma_p*tau_q*||F||^2 <= 1
/// with theta = 1.
PiggybackConfig default_piggyback_config(const FilterFamily& fam, int rows, int cols,
                                         int iterations, double lambda = 1.0);

// --- named filter presets -----------------------------------------------------

/// Plain forward-difference discretization: delta stencils, L copies.
FilterFamily fd_family(int count = 1);
/// Condat-style averaging discretizations with 3 and 4 directional filters.
FilterFamily cd3_family();
FilterFamily cd4_family();
/// Lookup by preset name "fd" | "cd3" | "cd4".
FilterFamily preset_family(const std::string& name);

// --- training and restoration --------------------------------------------------

struct TrainConfigTV {
    int filter_count = 2;  // L
    Symmetry symmetry = Symmetry::None;
    double step = 100.0;  // outer proximal-gradient step
    int outer_iterations = 500;
    int pb_iterations = 2000;  // K
    double lambda = 1.0;
    double theta = 1.0;
    double init_perturb_std = 1e-3;
    std::uint64_t seed = 0;
    int threads = 0;
};

struct TrainResultTV {
    FilterFamily family;
    std::vector<double> loss_history;  // normalized upper loss at iterations 0..I
};

/// Seeded default initialization: delta stencils plus Gaussian perturbation,
/// projected onto the constraint and symmetry sets.
FilterFamily init_family(int count, Symmetry symmetry, double perturb_std, std::uint64_t seed);

TrainResultTV train_tv_filters(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                               const TrainConfigTV& cfg);
TrainResultTV train_tv_filters(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                               const TrainConfigTV& cfg, FilterFamily init);

/// Reconstruction with a fixed family: the saddle iteration alone, adjoint
/// branch disabled.
Image restore_tv(const Image& f, const DegradationOp& op, const FilterFamily& fam,
                 const PiggybackConfig& cfg);

}  // namespace bilevel::tvdisc
