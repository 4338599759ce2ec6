#include "pendcbc/floquet.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "pendcbc/pendulum.hpp"

namespace pendcbc {

namespace {

// Cubic Lagrange stencil for a read at `pos` node units into an array of
// length n. On-node positions collapse to a clean delta.
void make_stencil(double pos, int n, int& base, double w[4]) {
    int i0 = static_cast<int>(std::floor(pos));
    base = std::clamp(i0 - 1, 0, n - 4);
    const double x = pos - base;
    w[0] = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    w[1] = x * (x - 2.0) * (x - 3.0) / 2.0;
    w[2] = -x * (x - 1.0) * (x - 3.0) / 2.0;
    w[3] = x * (x - 1.0) * (x - 2.0) / 6.0;
}

double read4(const double* arr, int base, const double w[4]) {
    return w[0] * arr[base] + w[1] * arr[base + 1] + w[2] * arr[base + 2] +
           w[3] * arr[base + 3];
}

}  // namespace

LinearizedLoop::LinearizedLoop(const PendulumParams& par,
                               const ControlConfig& cfg, double p,
                               const Eigen::VectorXd& phi_nodes,
                               const MonodromySettings& ms)
    : par_(par), cfg_(cfg), ms_(ms) {
    par_.validate();
    cfg_.validate();
    const int spp = ms_.steps_per_period;
    const int M = ms_.mesh;
    if (phi_nodes.size() != 2 * spp + 1)
        throw std::invalid_argument(
            "LinearizedLoop: need orbit phi at 2*steps_per_period+1 nodes");
    if (M < 4 || M % 2 != 0 || spp % M != 0)
        throw std::invalid_argument(
            "LinearizedLoop: mesh must be even, >= 4, and divide the steps");

    nphi_ = 2 * M + 1;
    nref_ = cfg_.relaxation == 1.0 ? 0 : M + 1;
    dim_ = 2 * nphi_ + 2 * nref_;

    const double T = par_.period;
    const int nstage = 2 * spp + 1;
    a_phi_.resize(nstage);
    a_p_.resize(nstage);
    for (int j = 0; j < nstage; ++j) {
        const double t = T * j / (2.0 * spp);
        a_phi_[j] = rotating_accel_dphi(phi_nodes[j], t, par_, p);
        a_p_[j] = rotating_accel_dp(phi_nodes[j], t, par_);
    }
    a_vel_ = rotating_accel_dphi_dot(par_);

    read_T_.resize(nstage);
    read_2T_.resize(nstage);
    read_ref_.resize(nref_ > 0 ? nstage : 0);
    const double q = static_cast<double>(M) / (2.0 * spp);
    for (int j = 0; j < nstage; ++j) {
        make_stencil(M + j * q, nphi_, read_T_[j].base, read_T_[j].w);
        make_stencil(j * q, nphi_, read_2T_[j].base, read_2T_[j].w);
        if (nref_ > 0)
            make_stencil(j * q, nref_, read_ref_[j].base, read_ref_[j].w);
    }

    // Window quadrature: composite Simpson over the mesh, scaled so a dot
    // with the samples gives the window average directly.
    simpson_.resize(M + 1);
    const double scale = (T / M) / 3.0 / T;
    for (int i = 0; i <= M; ++i)
        simpson_[i] =
            scale * ((i == 0 || i == M) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0));

    op_.resize(dim_, dim_);
    Eigen::VectorXd seed = Eigen::VectorXd::Zero(dim_);
    for (int c = 0; c < dim_; ++c) {
        seed[c] = 1.0;
        op_.col(c) = integrate(&seed, 0.0, 0.0);
        seed[c] = 0.0;
    }
}

Eigen::VectorXd LinearizedLoop::apply(const Eigen::VectorXd& state) const {
    if (state.size() != dim_)
        throw std::invalid_argument("LinearizedLoop: state size mismatch");
    return integrate(&state, 0.0, 0.0);
}

Eigen::VectorXd LinearizedLoop::forced_period(bool amplitude) const {
    return integrate(nullptr, amplitude ? 0.0 : 1.0, amplitude ? 1.0 : 0.0);
}

double LinearizedLoop::window_mean(const Eigen::VectorXd& state) const {
    const int M = ms_.mesh;
    double acc = 0.5 * (state[M] + state[2 * M]);
    for (int i = M + 1; i < 2 * M; ++i) acc += state[i];
    return acc / M;
}

Eigen::VectorXd LinearizedLoop::integrate(const Eigen::VectorXd* state,
                                          double f_target, double f_p) const {
    const int spp = ms_.steps_per_period;
    const int M = ms_.mesh;
    const int N = cfg_.projection_order;
    const int record_every = spp / M;
    const double T = par_.period;
    const double h = T / spp;
    const double R = cfg_.relaxation;
    const double s2t = std::sqrt(2.0 * T);
    const double cb = std::sqrt(2.0 / T) / T;
    const double ml2 = par_.mass * par_.length * par_.length;

    const double* xphi = state ? state->data() : nullptr;
    const double* xpd = state ? state->data() + nphi_ : nullptr;
    const double* xref = state && nref_ > 0 ? state->data() + 2 * nphi_ : nullptr;
    const double* xrefd = xref ? xref + nref_ : nullptr;

    // ODE state during the period: phi, phi_dot, window average, then the
    // harmonic window coefficients as cos/sin pairs.
    const int nv = 3 + 2 * N;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(nv);
    if (state) {
        y[0] = xphi[2 * M];
        y[1] = xpd[2 * M];
        for (int i = 0; i <= M; ++i) {
            const double sample = xphi[M - i];
            y[2] += simpson_[i] * sample;
            for (int k = 1; k <= N; ++k) {
                const double arg = 2.0 * std::numbers::pi * k * i / M;
                const double amp = std::sqrt(2.0 / T);
                y[3 + 2 * (k - 1)] += simpson_[i] * amp * std::cos(arg) * sample;
                y[3 + 2 * (k - 1) + 1] +=
                    simpson_[i] * amp * std::sin(arg) * sample;
            }
        }
    }

    struct Filter {
        double ref, ref_dot;
    };
    auto filter_at = [&](int j, const Eigen::VectorXd& v) -> Filter {
        const double phiT = xphi ? read4(xphi, read_T_[j].base, read_T_[j].w) : 0.0;
        const double phidT = xpd ? read4(xpd, read_T_[j].base, read_T_[j].w) : 0.0;
        const double phi2T =
            xphi ? read4(xphi, read_2T_[j].base, read_2T_[j].w) : 0.0;
        double proj = v[2];
        double projdot = (phiT - phi2T) / T;
        for (int k = 1; k <= N; ++k) {
            proj += s2t * v[3 + 2 * (k - 1)];
            projdot += s2t * (cb * (phiT - phi2T) -
                              2.0 * std::numbers::pi * k / T *
                                  v[3 + 2 * (k - 1) + 1]);
        }
        const double raw = phiT - proj;
        const double raw_dot = phidT - projdot;
        if (nref_ == 0) return {raw, raw_dot};
        const double old_ref =
            xref ? read4(xref, read_ref_[j].base, read_ref_[j].w) : 0.0;
        const double old_refd =
            xrefd ? read4(xrefd, read_ref_[j].base, read_ref_[j].w) : 0.0;
        return {(1.0 - R) * old_ref + R * raw,
                (1.0 - R) * old_refd + R * raw_dot};
    };

    Eigen::VectorXd k1(nv), k2(nv), k3(nv), k4(nv), tmp(nv);
    auto eval = [&](int j, const Eigen::VectorXd& v, Eigen::VectorXd& dv) {
        const Filter f = filter_at(j, v);
        const double u = v[0] - f.ref - f_target;
        const double u_dot = v[1] - f.ref_dot;
        const double torque =
            pd_torque(u, u_dot, par_, cfg_.gain, cfg_.deriv_ratio);
        dv[0] = v[1];
        dv[1] = a_phi_[j] * v[0] + a_vel_ * v[1] + torque / ml2 + a_p_[j] * f_p;
        const double phiT = xphi ? read4(xphi, read_T_[j].base, read_T_[j].w) : 0.0;
        const double phi2T =
            xphi ? read4(xphi, read_2T_[j].base, read_2T_[j].w) : 0.0;
        dv[2] = (phiT - phi2T) / T;
        for (int k = 1; k <= N; ++k) {
            const double rot = 2.0 * std::numbers::pi * k / T;
            dv[3 + 2 * (k - 1)] =
                cb * (phiT - phi2T) - rot * v[3 + 2 * (k - 1) + 1];
            dv[3 + 2 * (k - 1) + 1] = rot * v[3 + 2 * (k - 1)];
        }
    };

    Eigen::VectorXd fresh_phi(M + 1), fresh_pd(M + 1);
    Eigen::VectorXd fresh_ref(nref_ > 0 ? M + 1 : 0),
        fresh_refd(nref_ > 0 ? M + 1 : 0);
    fresh_phi[0] = y[0];
    fresh_pd[0] = y[1];
    if (nref_ > 0) {
        const Filter f0 = filter_at(0, y);
        fresh_ref[0] = f0.ref;
        fresh_refd[0] = f0.ref_dot;
    }

    for (int step = 0; step < spp; ++step) {
        const int j = 2 * step;
        eval(j, y, k1);
        tmp = y + 0.5 * h * k1;
        eval(j + 1, tmp, k2);
        tmp = y + 0.5 * h * k2;
        eval(j + 1, tmp, k3);
        tmp = y + h * k3;
        eval(j + 2, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if ((step + 1) % record_every == 0) {
            const int node = (step + 1) / record_every;
            fresh_phi[node] = y[0];
            fresh_pd[node] = y[1];
            if (nref_ > 0) {
                const Filter f = filter_at(j + 2, y);
                fresh_ref[node] = f.ref;
                fresh_refd[node] = f.ref_dot;
            }
        }
    }

    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    for (int i = 0; i <= M; ++i) {
        out[i] = state ? xphi[i + M] : 0.0;
        out[nphi_ + i] = state ? xpd[i + M] : 0.0;
    }
    for (int i = 1; i <= M; ++i) {
        out[M + i] = fresh_phi[i];
        out[nphi_ + M + i] = fresh_pd[i];
    }
    if (nref_ > 0)
        for (int i = 0; i <= M; ++i) {
            out[2 * nphi_ + i] = fresh_ref[i];
            out[2 * nphi_ + nref_ + i] = fresh_refd[i];
        }
    return out;
}

namespace {

Eigen::VectorXcd sorted_desc(Eigen::VectorXcd v) {
    std::sort(v.begin(), v.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  return std::abs(a) > std::abs(b);
              });
    return v;
}

}  // namespace

FloquetResult LinearizedLoop::multipliers() const {
    FloquetResult out;
    out.dim = dim_;
    if (dim_ <= ms_.dense_dim_limit) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(op_, false);
        out.multipliers = sorted_desc(es.eigenvalues());
        return out;
    }

    // Subspace iteration with a deterministic start; the leading cluster of
    // an operator this structured (a contraction plus a nilpotent shift)
    // settles in a few dozen sweeps.
    out.iterative = true;
    const int m = std::min(ms_.subspace_dim, dim_);
    std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd basis(dim_, m);
    for (int c = 0; c < m; ++c)
        for (int r = 0; r < dim_; ++r) basis(r, c) = gauss(rng);
    basis = Eigen::HouseholderQR<Eigen::MatrixXd>(basis)
                .householderQ() *
            Eigen::MatrixXd::Identity(dim_, m);

    std::complex<double> last(0.0, 0.0);
    Eigen::VectorXcd ritz;
    for (int it = 0; it < ms_.max_iterations; ++it) {
        Eigen::MatrixXd w = op_ * basis;
        basis = Eigen::HouseholderQR<Eigen::MatrixXd>(w).householderQ() *
                Eigen::MatrixXd::Identity(dim_, m);
        const Eigen::MatrixXd h = basis.transpose() * (op_ * basis);
        Eigen::EigenSolver<Eigen::MatrixXd> es(h, false);
        ritz = sorted_desc(es.eigenvalues());
        if (std::abs(ritz[0] - last) < ms_.iter_tol * std::abs(ritz[0])) break;
        last = ritz[0];
    }
    out.multipliers = ritz;
    return out;
}

MeanResponse LinearizedLoop::mean_response() const {
    MeanResponse out;
    const Eigen::MatrixXd a =
        Eigen::MatrixXd::Identity(dim_, dim_) - op_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) {
        out.singular = true;
        return out;
    }
    out.dmean_dtarget = window_mean(lu.solve(forced_period(false)));
    out.dmean_dp = window_mean(lu.solve(forced_period(true)));
    return out;
}

FloquetResult closed_loop_multipliers(const PendulumParams& par,
                                      const ControlConfig& cfg, double p,
                                      const Eigen::VectorXd& phi_nodes,
                                      const MonodromySettings& ms) {
    return LinearizedLoop(par, cfg, p, phi_nodes, ms).multipliers();
}

}  // namespace pendcbc
