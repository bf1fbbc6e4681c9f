#include "bilevel/tvdisc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bilevel/fft.hpp"
#include "bilevel/parallel.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::tvdisc {

namespace {

// Stencil shapes for the two dual components, anchors included.
constexpr int kShape1Rows = 2, kShape1Cols = 3, kAnchor1Row = 0, kAnchor1Col = 1;
constexpr int kShape2Rows = 3, kShape2Cols = 2, kAnchor2Row = 1, kAnchor2Col = 0;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

Kernel shaped_kernel(int component) {
    if (component == 0) {
        Kernel k(kShape1Rows, kShape1Cols);
        k.anchor_row = kAnchor1Row;
        k.anchor_col = kAnchor1Col;
        return k;
    }
    Kernel k(kShape2Rows, kShape2Cols);
    k.anchor_row = kAnchor2Row;
    k.anchor_col = kAnchor2Col;
    return k;
}

Kernel delta_kernel(int component) {
    Kernel k = shaped_kernel(component);
    k.at(k.anchor_row, k.anchor_col) = 1.0;
    return k;
}

void check_family(const FilterFamily& fam) {
    for (const auto& pair : fam.filters) {
        require(pair[0].rows == kShape1Rows && pair[0].cols == kShape1Cols,
                "FilterFamily: first stencil must be 2x3");
        require(pair[1].rows == kShape2Rows && pair[1].cols == kShape2Cols,
                "FilterFamily: second stencil must be 3x2");
    }
}

Kernel transpose_kernel(const Kernel& k) {
    Kernel out(k.cols, k.rows);
    out.anchor_row = k.anchor_col;
    out.anchor_col = k.anchor_row;
    for (int i = 0; i < k.rows; ++i)
        for (int j = 0; j < k.cols; ++j) out.at(j, i) = k.at(i, j);
    return out;
}

// Counter-clockwise quarter turn of the tap grid; anchors are reassigned to
// the standard positions for the rotated shape.
Kernel rot90_kernel(const Kernel& k) {
    Kernel out = shaped_kernel(k.rows == kShape1Rows ? 1 : 0);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) = k.at(j, k.cols - 1 - i);
    return out;
}

FilterFamily apply_rot90_action(const FilterFamily& fam) {
    FilterFamily out = fam;
    const int L = fam.count();
    for (int l = 0; l < L; ++l) {
        const int block = l / 4;
        const int target = block * 4 + (l % 4 + 1) % 4;
        out.filters[target][0] = rot90_kernel(fam.filters[l][1]);
        out.filters[target][1] = rot90_kernel(fam.filters[l][0]);
    }
    return out;
}

void family_accumulate(FilterFamily& acc, const FilterFamily& add) {
    for (int l = 0; l < acc.count(); ++l)
        for (int c = 0; c < 2; ++c)
            for (std::size_t m = 0; m < acc.filters[l][c].taps.size(); ++m)
                acc.filters[l][c].taps[m] += add.filters[l][c].taps[m];
}

void family_scale(FilterFamily& fam, double s) {
    for (auto& pair : fam.filters)
        for (Kernel& k : pair)
            for (double& t : k.taps) t *= s;
}

void check_pair_shapes(const DualPair& p, const char* what) {
    if (!p.p1.same_shape(p.p2)) throw std::invalid_argument(std::string(what) + ": component shapes differ");
}

DualPair zero_pair(int rows, int cols) { return {Image(rows, cols), Image(rows, cols)}; }

}  // namespace

std::string symmetry_name(Symmetry s) {
    switch (s) {
        case Symmetry::None: return "none";
        case Symmetry::Transpose: return "transpose";
        case Symmetry::Rot90: return "rot90";
    }
    return "none";
}

Symmetry symmetry_from_name(const std::string& name) {
    if (name == "none") return Symmetry::None;
    if (name == "transpose") return Symmetry::Transpose;
    if (name == "rot90") return Symmetry::Rot90;
    throw std::invalid_argument("unknown symmetry name: " + name);
}

FilterFamily zero_family(int count, Symmetry symmetry) {
    require(count >= 1, "zero_family: count must be >= 1");
    FilterFamily fam;
    fam.symmetry = symmetry;
    fam.filters.resize(count);
    for (auto& pair : fam.filters) {
        pair[0] = shaped_kernel(0);
        pair[1] = shaped_kernel(1);
    }
    return fam;
}

void PiggybackConfig::validate() const {
    require(sigma_p > 0.0 && tau_u > 0.0 && tau_q > 0.0,
            "PiggybackConfig: step sizes must be positive");
    require(theta >= 0.0 && theta <= 1.0, "PiggybackConfig: theta in [0,1] required");
    require(iterations >= 0, "PiggybackConfig: negative iteration count");
    require(lambda > 0.0, "PiggybackConfig: lambda must be positive");
}

std::vector<DualPair> apply_filters(const FilterFamily& fam, const DualPair& p) {
    check_family(fam);
    check_pair_shapes(p, "apply_filters");
    std::vector<DualPair> out;
    out.reserve(fam.count());
    for (const auto& pair : fam.filters)
        out.push_back({periodic_convolve(p.p1, pair[0]), periodic_convolve(p.p2, pair[1])});
    return out;
}

DualPair apply_filters_adjoint(const FilterFamily& fam, const std::vector<DualPair>& z) {
    check_family(fam);
    require(static_cast<int>(z.size()) == fam.count(),
            "apply_filters_adjoint: index count mismatch");
    if (z.empty()) throw std::invalid_argument("apply_filters_adjoint: empty input");
    DualPair out = zero_pair(z[0].p1.rows(), z[0].p1.cols());
    for (int l = 0; l < fam.count(); ++l) {
        out.p1 += adjoint_convolve(z[l].p1, fam.filters[l][0]);
        out.p2 += adjoint_convolve(z[l].p2, fam.filters[l][1]);
    }
    return out;
}

std::vector<DualPair> group_shrink(const std::vector<DualPair>& z, double kappa) {
    require(kappa >= 0.0, "group_shrink: negative threshold");
    std::vector<DualPair> out = z;
    if (kappa == 0.0) return out;
    for (DualPair& pair : out) {
        check_pair_shapes(pair, "group_shrink");
        double* a = pair.p1.data();
        double* b = pair.p2.data();
        for (std::size_t i = 0; i < pair.p1.size(); ++i) {
            const double r = std::hypot(a[i], b[i]);
            const double scale = r > kappa ? 1.0 - kappa / r : 0.0;
            a[i] *= scale;
            b[i] *= scale;
        }
    }
    return out;
}

std::vector<DualPair> group_shrink_jacobian_apply(const std::vector<DualPair>& z, double kappa,
                                                  const std::vector<DualPair>& w) {
    require(kappa >= 0.0, "group_shrink_jacobian_apply: negative threshold");
    require(z.size() == w.size(), "group_shrink_jacobian_apply: index count mismatch");
    std::vector<DualPair> out = w;
    if (kappa == 0.0) return out;
    for (std::size_t l = 0; l < z.size(); ++l) {
        const double* za = z[l].p1.data();
        const double* zb = z[l].p2.data();
        double* wa = out[l].p1.data();
        double* wb = out[l].p2.data();
        for (std::size_t i = 0; i < z[l].p1.size(); ++i) {
            const double r = std::hypot(za[i], zb[i]);
            if (r > kappa) {
                const double shrink = 1.0 - kappa / r;
                const double rank1 = kappa / (r * r * r) * (za[i] * wa[i] + zb[i] * wb[i]);
                const double na = shrink * wa[i] + rank1 * za[i];
                const double nb = shrink * wb[i] + rank1 * zb[i];
                wa[i] = na;
                wb[i] = nb;
            } else {
                wa[i] = 0.0;
                wb[i] = 0.0;
            }
        }
    }
    return out;
}

// --- data-fit prox ------------------------------------------------------------

ProxDataSolver::ProxDataSolver(const DegradationOp& op, const Image& data, double tau, int rows,
                               int cols)
    : op_(op), tau_(tau), rows_(rows), cols_(cols) {
    require(tau >= 0.0, "ProxDataSolver: negative step");
    require(rows > 0 && cols > 0, "ProxDataSolver: empty grid");

    switch (op.kind) {
        case DegradationKind::Identity: {
            require(data.rows() == rows && data.cols() == cols,
                    "ProxDataSolver: data shape mismatch");
            break;
        }
        case DegradationKind::Blur: {
            require(data.rows() == rows && data.cols() == cols,
                    "ProxDataSolver: data shape mismatch");
            kernel_spec_ = kernel_spectrum(op.kernel, rows, cols);
            denom_.resize(kernel_spec_.size());
            for (std::size_t k = 0; k < kernel_spec_.size(); ++k)
                denom_[k] = tau_ * std::norm(kernel_spec_[k]) + 1.0;
            break;
        }
        case DegradationKind::DecimatedBlur: {
            const int d = op.factor;
            require(rows % d == 0 && cols % d == 0,
                    "ProxDataSolver: grid extents not divisible by decimation factor");
            require(data.rows() == rows / d && data.cols() == cols / d,
                    "ProxDataSolver: data shape mismatch");
            kernel_spec_ = kernel_spectrum(op.kernel, rows, cols);
            // Eliminating the coarse residual leaves a coarse-grid circulant
            // system whose symbol is the aliased average of |H|^2.
            const int hc = rows / d, wc = cols / d;
            coarse_denom_.resize(static_cast<std::size_t>(hc) * spectrum_cols(wc));
            for (int i = 0; i < hc; ++i)
                for (int j = 0; j < spectrum_cols(wc); ++j) {
                    double alias = 0.0;
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b)
                            alias += spectrum_mag2_at(kernel_spec_, rows, cols, i + a * hc,
                                                      j + b * wc);
                    coarse_denom_[static_cast<std::size_t>(i) * spectrum_cols(wc) + j] =
                        1.0 + tau_ * alias / (d * d);
                }
            break;
        }
    }
    data_term_ = apply_degradation_adjoint(op, data);
    data_term_ *= tau_;
}

Image ProxDataSolver::solve_system(const Image& rhs) const {
    switch (op_.kind) {
        case DegradationKind::Identity: {
            Image out = rhs;
            out *= 1.0 / (1.0 + tau_);
            return out;
        }
        case DegradationKind::Blur: {
            Spectrum s = fft2(rhs);
            for (std::size_t k = 0; k < s.size(); ++k) s[k] /= denom_[k];
            return ifft2(s, rows_, cols_);
        }
        case DegradationKind::DecimatedBlur: {
            const int d = op_.factor;
            // Woodbury elimination: solve the small coarse system, then
            // correct the fine-grid iterate.
            Spectrum rhs_spec = fft2(rhs);
            Spectrum blurred_spec = rhs_spec;
            for (std::size_t k = 0; k < blurred_spec.size(); ++k)
                blurred_spec[k] *= kernel_spec_[k];
            const Image coarse = decimate(ifft2(blurred_spec, rows_, cols_), d);

            Spectrum coarse_spec = fft2(coarse);
            for (std::size_t k = 0; k < coarse_spec.size(); ++k)
                coarse_spec[k] /= coarse_denom_[k];
            const Image coarse_sol = ifft2(coarse_spec, rows_ / d, cols_ / d);

            Spectrum lift = fft2(zero_upsample(coarse_sol, d));
            for (std::size_t k = 0; k < lift.size(); ++k)
                lift[k] *= std::conj(kernel_spec_[k]);
            Image correction = ifft2(lift, rows_, cols_);
            correction *= tau_;
            return rhs - correction;
        }
    }
    throw std::logic_error("ProxDataSolver: unknown kind");
}

Image ProxDataSolver::apply(const Image& u_bar) const {
    require(u_bar.rows() == rows_ && u_bar.cols() == cols_, "prox_data: iterate shape mismatch");
    return solve_system(data_term_ + u_bar);
}

Image ProxDataSolver::apply_jacobian(const Image& w) const {
    require(w.rows() == rows_ && w.cols() == cols_, "prox_data_jacobian: shape mismatch");
    return solve_system(w);
}

Image prox_data(const DegradationOp& op, const Image& data, double tau, const Image& u_bar) {
    return ProxDataSolver(op, data, tau, u_bar.rows(), u_bar.cols()).apply(u_bar);
}

Image prox_data_jacobian_apply(const DegradationOp& op, double tau, const Image& w) {
    Image zero_data;
    switch (op.kind) {
        case DegradationKind::DecimatedBlur:
            zero_data = Image(w.rows() / op.factor, w.cols() / op.factor, 0.0);
            break;
        default:
            zero_data = Image(w.rows(), w.cols(), 0.0);
            break;
    }
    return ProxDataSolver(op, zero_data, tau, w.rows(), w.cols()).apply_jacobian(w);
}

// --- piggyback iteration --------------------------------------------------------

SaddleState make_saddle_state(const DegradationOp& op, const Image& data, int count) {
    require(count >= 1, "make_saddle_state: count must be >= 1");
    SaddleState st;
    st.u = apply_degradation_adjoint(op, data);
    st.p = zero_pair(st.u.rows(), st.u.cols());
    st.q.assign(count, zero_pair(st.u.rows(), st.u.cols()));
    return st;
}

AdjointState make_adjoint_state(int rows, int cols, int count) {
    AdjointState st;
    st.u = Image(rows, cols);
    st.p = zero_pair(rows, cols);
    st.q.assign(count, zero_pair(rows, cols));
    return st;
}

PiggybackRun piggyback_pd(const FilterFamily& fam, const DegradationOp& op, const Image& data,
                          const Image* loss_target, const PiggybackConfig& cfg, SaddleState init,
                          AdjointState adjoint_init, bool run_adjoint) {
    cfg.validate();
    check_family(fam);
    const int L = fam.count();
    require(static_cast<int>(init.q.size()) == L, "piggyback_pd: saddle q count mismatch");
    require(static_cast<int>(adjoint_init.q.size()) == L,
            "piggyback_pd: adjoint q count mismatch");
    const int rows = init.u.rows(), cols = init.u.cols();
    if (loss_target)
        require(loss_target->rows() == rows && loss_target->cols() == cols,
                "piggyback_pd: loss target shape mismatch");

    const ProxDataSolver prox(op, data, cfg.tau_u, rows, cols);
    const double shrink_level = cfg.tau_q * cfg.lambda;

    SaddleState s = std::move(init);
    AdjointState a = std::move(adjoint_init);

    auto diverged = [&]() {
        std::ostringstream msg;
        msg << "piggyback_pd: non-finite iterate (sigma_p=" << cfg.sigma_p
            << ", tau_u=" << cfg.tau_u << ", tau_q=" << cfg.tau_q << ")";
        return std::runtime_error(msg.str());
    };

    for (int k = 0; k < cfg.iterations; ++k) {
        // Dual ascent on p with the residual D u - F* q, then extrapolation.
        const GradientField du = grad_op(s.u);
        const DualPair fsq = apply_filters_adjoint(fam, s.q);
        DualPair p_new{s.p.p1, s.p.p2};
        DualPair p_bar = zero_pair(rows, cols);
        for (std::size_t i = 0; i < p_new.p1.size(); ++i) {
            const double n1 = s.p.p1.values()[i] +
                              cfg.sigma_p * (du.dv.values()[i] - fsq.p1.values()[i]);
            const double n2 = s.p.p2.values()[i] +
                              cfg.sigma_p * (du.dh.values()[i] - fsq.p2.values()[i]);
            p_new.p1.values()[i] = n1;
            p_new.p2.values()[i] = n2;
            p_bar.p1.values()[i] = n1 + cfg.theta * (n1 - s.p.p1.values()[i]);
            p_bar.p2.values()[i] = n2 + cfg.theta * (n2 - s.p.p2.values()[i]);
        }

        // Primal descent on u through the data prox.
        Image u_bar = grad_adjoint({p_bar.p1, p_bar.p2});
        for (std::size_t i = 0; i < u_bar.size(); ++i)
            u_bar.values()[i] = s.u.values()[i] - cfg.tau_u * u_bar.values()[i];
        Image u_new = prox.apply(u_bar);

        // Primal descent on q through the group shrink. The smooth part of
        // the q objective is -<q, F p>, so the forward step moves along
        // +F p_bar.
        std::vector<DualPair> q_bar = apply_filters(fam, p_bar);
        for (int l = 0; l < L; ++l)
            for (std::size_t i = 0; i < q_bar[l].p1.size(); ++i) {
                q_bar[l].p1.values()[i] =
                    s.q[l].p1.values()[i] + cfg.tau_q * q_bar[l].p1.values()[i];
                q_bar[l].p2.values()[i] =
                    s.q[l].p2.values()[i] + cfg.tau_q * q_bar[l].p2.values()[i];
            }
        std::vector<DualPair> q_new = group_shrink(q_bar, shrink_level);

        if (run_adjoint) {
            // The adjoint states follow the same linearized dynamics, with
            // the upper-loss gradient injected alongside D* P_bar.
            const GradientField dU = grad_op(a.u);
            const DualPair fsQ = apply_filters_adjoint(fam, a.q);
            DualPair P_new{a.p.p1, a.p.p2};
            DualPair P_bar = zero_pair(rows, cols);
            for (std::size_t i = 0; i < P_new.p1.size(); ++i) {
                const double n1 = a.p.p1.values()[i] +
                                  cfg.sigma_p * (dU.dv.values()[i] - fsQ.p1.values()[i]);
                const double n2 = a.p.p2.values()[i] +
                                  cfg.sigma_p * (dU.dh.values()[i] - fsQ.p2.values()[i]);
                P_new.p1.values()[i] = n1;
                P_new.p2.values()[i] = n2;
                P_bar.p1.values()[i] = n1 + cfg.theta * (n1 - a.p.p1.values()[i]);
                P_bar.p2.values()[i] = n2 + cfg.theta * (n2 - a.p.p2.values()[i]);
            }

            Image U_bar = grad_adjoint({P_bar.p1, P_bar.p2});
            if (loss_target) {
                for (std::size_t i = 0; i < U_bar.size(); ++i)
                    U_bar.values()[i] = a.u.values()[i] -
                                        cfg.tau_u * (U_bar.values()[i] + s.u.values()[i] -
                                                     loss_target->values()[i]);
            } else {
                for (std::size_t i = 0; i < U_bar.size(); ++i)
                    U_bar.values()[i] = a.u.values()[i] - cfg.tau_u * U_bar.values()[i];
            }
            Image U_new = prox.apply_jacobian(U_bar);

            std::vector<DualPair> Q_bar = apply_filters(fam, P_bar);
            for (int l = 0; l < L; ++l)
                for (std::size_t i = 0; i < Q_bar[l].p1.size(); ++i) {
                    Q_bar[l].p1.values()[i] =
                        a.q[l].p1.values()[i] + cfg.tau_q * Q_bar[l].p1.values()[i];
                    Q_bar[l].p2.values()[i] =
                        a.q[l].p2.values()[i] + cfg.tau_q * Q_bar[l].p2.values()[i];
                }
            a.q = group_shrink_jacobian_apply(q_bar, shrink_level, Q_bar);
            a.u = std::move(U_new);
            a.p = std::move(P_new);
        }

        s.u = std::move(u_new);
        s.p = std::move(p_new);
        s.q = std::move(q_new);

        if (!s.u.all_finite() || (run_adjoint && !a.u.all_finite())) throw diverged();
    }
    return {std::move(s), std::move(a)};
}

FilterFamily filter_grad(const SaddleState& saddle, const AdjointState& adjoint) {
    require(saddle.q.size() == adjoint.q.size(), "filter_grad: state count mismatch");
    const int L = static_cast<int>(saddle.q.size());
    FilterFamily grad = zero_family(L);
    for (int l = 0; l < L; ++l) {
        const Kernel gq1 = tap_correlation(adjoint.q[l].p1, saddle.p.p1, kShape1Rows, kShape1Cols,
                                           kAnchor1Row, kAnchor1Col);
        const Kernel gQ1 = tap_correlation(saddle.q[l].p1, adjoint.p.p1, kShape1Rows, kShape1Cols,
                                           kAnchor1Row, kAnchor1Col);
        const Kernel gq2 = tap_correlation(adjoint.q[l].p2, saddle.p.p2, kShape2Rows, kShape2Cols,
                                           kAnchor2Row, kAnchor2Col);
        const Kernel gQ2 = tap_correlation(saddle.q[l].p2, adjoint.p.p2, kShape2Rows, kShape2Cols,
                                           kAnchor2Row, kAnchor2Col);
        for (std::size_t m = 0; m < grad.filters[l][0].taps.size(); ++m)
            grad.filters[l][0].taps[m] = -(gq1.taps[m] + gQ1.taps[m]);
        for (std::size_t m = 0; m < grad.filters[l][1].taps.size(); ++m)
            grad.filters[l][1].taps[m] = -(gq2.taps[m] + gQ2.taps[m]);
    }
    return grad;
}

// --- projections ------------------------------------------------------------------

Kernel project_taps_to_sum(Kernel k, double mu) {
    const double shift = (mu - k.tap_sum()) / static_cast<double>(k.taps.size());
    for (double& t : k.taps) t += shift;
    return k;
}

FilterFamily project_sum_mu(FilterFamily fam) {
    check_family(fam);
    if (fam.filters.empty()) return fam;
    double mu = 0.0;
    for (const auto& pair : fam.filters)
        for (const Kernel& k : pair) mu += k.tap_sum();
    mu /= static_cast<double>(2 * fam.count());
    for (auto& pair : fam.filters)
        for (Kernel& k : pair) k = project_taps_to_sum(std::move(k), mu);
    return fam;
}

FilterFamily project_symmetry(FilterFamily fam) {
    check_family(fam);
    switch (fam.symmetry) {
        case Symmetry::None:
            return fam;
        case Symmetry::Transpose: {
            // Grid transposition swaps the two dual components and exchanges
            // consecutive filter indices (the last one maps to itself when L
            // is odd).
            FilterFamily out = fam;
            const int L = fam.count();
            for (int l = 0; l < L; ++l) {
                const int partner = (l % 2 == 0) ? std::min(l + 1, L - 1) : l - 1;
                const Kernel t2 = transpose_kernel(fam.filters[partner][1]);
                const Kernel t1 = transpose_kernel(fam.filters[partner][0]);
                for (std::size_t m = 0; m < out.filters[l][0].taps.size(); ++m)
                    out.filters[l][0].taps[m] =
                        0.5 * (fam.filters[l][0].taps[m] + t2.taps[m]);
                for (std::size_t m = 0; m < out.filters[l][1].taps.size(); ++m)
                    out.filters[l][1].taps[m] =
                        0.5 * (fam.filters[l][1].taps[m] + t1.taps[m]);
            }
            return out;
        }
        case Symmetry::Rot90: {
            if (fam.count() % 4 != 0)
                throw std::invalid_argument(
                    "project_symmetry: rot90 requires the filter count to be a multiple of 4");
            FilterFamily acc = fam;
            FilterFamily cur = fam;
            for (int turn = 0; turn < 3; ++turn) {
                cur = apply_rot90_action(cur);
                family_accumulate(acc, cur);
            }
            family_scale(acc, 0.25);
            return acc;
        }
    }
    return fam;
}

double family_operator_norm(const FilterFamily& fam, int rows, int cols) {
    check_family(fam);
    Rng rng(0x9e3779b97f4a7c15ULL);
    DualPair v = zero_pair(rows, cols);
    for (double& x : v.p1.values()) x = rng.uniform(-1.0, 1.0);
    for (double& x : v.p2.values()) x = rng.uniform(-1.0, 1.0);
    double norm_sq = 0.0;
    for (int it = 0; it < 50; ++it) {
        DualPair w = apply_filters_adjoint(fam, apply_filters(fam, v));
        norm_sq = std::sqrt(dot(w.p1, w.p1) + dot(w.p2, w.p2));
        if (norm_sq == 0.0) return 0.0;
        const double inv = 1.0 / norm_sq;
        w.p1 *= inv;
        w.p2 *= inv;
        v = std::move(w);
    }
    return std::sqrt(norm_sq);
}

PiggybackConfig default_piggyback_config(const FilterFamily& fam, int rows, int cols,
                                         int iterations, double lambda) {
    // The dual variable sees the joint operator (u, q) -> D u - F* q, so the
    // primal blocks share the stability budget:
    // sigma_p * (tau_u * ||D||^2 + tau_q * ||F||^2) <= 1 with ||D||^2 <= 8.
    PiggybackConfig cfg;
    cfg.sigma_p = 1.0 / std::sqrt(8.0);
    cfg.tau_u = 0.5 / (8.0 * cfg.sigma_p);
    const double fn = family_operator_norm(fam, rows, cols);
    // Small inflation compensates the power iteration approaching the norm
    // from below.
    const double fn_sq = std::max(fn * fn * 1.02, 1e-8);
    cfg.tau_q = 0.5 / (fn_sq * cfg.sigma_p);
    cfg.theta = 1.0;
    cfg.iterations = iterations;
    cfg.lambda = lambda;
    return cfg;
}

// --- presets -----------------------------------------------------------------------

FilterFamily fd_family(int count) {
    FilterFamily fam = zero_family(count);
    for (auto& pair : fam.filters) {
        pair[0] = delta_kernel(0);
        pair[1] = delta_kernel(1);
    }
    return fam;
}

FilterFamily cd3_family() {
    FilterFamily fam = zero_family(3);
    // Pairs of identity and cell-average stencils, transpose-symmetric by
    // construction.
    auto quarter1 = shaped_kernel(0);
    quarter1.at(0, 0) = quarter1.at(0, 1) = quarter1.at(1, 0) = quarter1.at(1, 1) = 0.25;
    auto quarter2 = shaped_kernel(1);
    quarter2.at(0, 0) = quarter2.at(0, 1) = quarter2.at(1, 0) = quarter2.at(1, 1) = 0.25;

    fam.filters[0][0] = delta_kernel(0);
    fam.filters[0][1] = quarter2;
    fam.filters[1][0] = quarter1;
    fam.filters[1][1] = delta_kernel(1);

    auto half1 = shaped_kernel(0);
    half1.at(0, 1) = half1.at(1, 1) = 0.5;
    auto half2 = shaped_kernel(1);
    half2.at(1, 0) = half2.at(1, 1) = 0.5;
    fam.filters[2][0] = half1;
    fam.filters[2][1] = half2;
    return fam;
}

FilterFamily cd4_family() {
    FilterFamily fam = zero_family(4);
    fam.filters[0][0] = delta_kernel(0);
    fam.filters[0][1] = shaped_kernel(1);
    fam.filters[0][1].at(1, 0) = fam.filters[0][1].at(1, 1) = 0.5;
    // The remaining three filters are the quarter-turn orbit of the first.
    for (int l = 1; l < 4; ++l) {
        fam.filters[l][0] = rot90_kernel(fam.filters[l - 1][1]);
        fam.filters[l][1] = rot90_kernel(fam.filters[l - 1][0]);
    }
    return fam;
}

FilterFamily preset_family(const std::string& name) {
    if (name == "fd") return fd_family();
    if (name == "cd3") return cd3_family();
    if (name == "cd4") return cd4_family();
    throw std::invalid_argument("unknown filter preset: " + name);
}

// --- training ------------------------------------------------------------------------

FilterFamily init_family(int count, Symmetry symmetry, double perturb_std, std::uint64_t seed) {
    FilterFamily fam = fd_family(count);
    fam.symmetry = symmetry;
    Rng rng(seed);
    for (auto& pair : fam.filters)
        for (Kernel& k : pair)
            for (double& t : k.taps) t += perturb_std * rng.normal();
    return project_symmetry(project_sum_mu(std::move(fam)));
}

TrainResultTV train_tv_filters(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                               const TrainConfigTV& cfg) {
    return train_tv_filters(dataset, op, cfg,
                            init_family(cfg.filter_count, cfg.symmetry, cfg.init_perturb_std,
                                        cfg.seed));
}

TrainResultTV train_tv_filters(const std::vector<TrainSample>& dataset, const DegradationOp& op,
                               const TrainConfigTV& cfg, FilterFamily init) {
    require(!dataset.empty(), "train_tv_filters: empty dataset");
    const int s = static_cast<int>(dataset.size());
    const int rows = dataset[0].ground_truth.rows(), cols = dataset[0].ground_truth.cols();
    for (const TrainSample& sample : dataset)
        require(sample.ground_truth.rows() == rows && sample.ground_truth.cols() == cols,
                "train_tv_filters: inconsistent sample shapes");

    FilterFamily fam = project_symmetry(project_sum_mu(std::move(init)));
    const int L = fam.count();
    const double normalization = 1.0 / (static_cast<double>(s) * rows * cols);

    std::vector<SaddleState> saddles;
    std::vector<AdjointState> adjoints;
    saddles.reserve(s);
    adjoints.reserve(s);
    for (const TrainSample& sample : dataset) {
        saddles.push_back(make_saddle_state(op, sample.observed, L));
        adjoints.push_back(make_adjoint_state(rows, cols, L));
    }

    std::vector<FilterFamily> grads(s);
    std::vector<double> sample_loss(s, 0.0);
    TrainResultTV result;

    auto sweep = [&](bool with_adjoint) {
        const PiggybackConfig pb =
            default_piggyback_config(fam, rows, cols, cfg.pb_iterations, cfg.lambda);
        parallel_for(
            s,
            [&](int j) {
                PiggybackRun run =
                    piggyback_pd(fam, op, dataset[j].observed, &dataset[j].ground_truth, pb,
                                 std::move(saddles[j]), std::move(adjoints[j]), with_adjoint);
                saddles[j] = std::move(run.saddle);
                adjoints[j] = std::move(run.adjoint);
                if (with_adjoint) grads[j] = filter_grad(saddles[j], adjoints[j]);
                const Image diff = saddles[j].u - dataset[j].ground_truth;
                sample_loss[j] = 0.5 * dot(diff, diff);
            },
            cfg.threads);
        double loss = 0.0;
        for (int j = 0; j < s; ++j) loss += sample_loss[j];
        return loss * normalization;
    };

    for (int i = 0; i < cfg.outer_iterations; ++i) {
        result.loss_history.push_back(sweep(true));
        FilterFamily step_grad = zero_family(L);
        for (int j = 0; j < s; ++j) family_accumulate(step_grad, grads[j]);
        family_scale(step_grad, -cfg.step * normalization);
        family_accumulate(fam, step_grad);
        fam = project_symmetry(project_sum_mu(std::move(fam)));
    }
    result.loss_history.push_back(sweep(false));

    result.family = std::move(fam);
    return result;
}

Image restore_tv(const Image& f, const DegradationOp& op, const FilterFamily& fam,
                 const PiggybackConfig& cfg) {
    SaddleState init = make_saddle_state(op, f, fam.count());
    const int rows = init.u.rows(), cols = init.u.cols();
    PiggybackRun run = piggyback_pd(fam, op, f, nullptr, cfg, std::move(init),
                                    make_adjoint_state(rows, cols, fam.count()),
                                    /*run_adjoint=*/false);
    return std::move(run.saddle.u);
}

}  // namespace bilevel::tvdisc
