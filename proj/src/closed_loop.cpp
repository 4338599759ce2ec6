#include "pendcbc/closed_loop.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pendcbc/spectral.hpp"

namespace pendcbc {

namespace {

// Composite trapezoid mean of phi over the node window [first, first+n].
double window_mean(const std::vector<double>& phi, std::size_t first,
                   std::size_t n) {
    double acc = 0.5 * (phi[first] + phi[first + n]);
    for (std::size_t j = 1; j < n; ++j) acc += phi[first + j];
    return acc / static_cast<double>(n);
}

struct WindowProj {
    double avg;
    Eigen::VectorXd cos_c, sin_c;  // mode coefficients 1..N
};

// Projection of the lag window w(s) = phi[young - i] (s = i*dt, i = 0..spp)
// by composite Simpson. The running filter states are seeded from this;
// trapezoid here would cap the whole integration at second order.
WindowProj window_projection(const std::vector<double>& phi, std::size_t young,
                             int spp, int order, double period) {
    const double dt = period / spp;
    WindowProj out;
    out.cos_c = Eigen::VectorXd::Zero(order);
    out.sin_c = Eigen::VectorXd::Zero(order);
    double acc = 0.0;
    const double amp = std::sqrt(2.0 / period);
    for (int i = 0; i <= spp; ++i) {
        const double w =
            (i == 0 || i == spp) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double sample = phi[young - i];
        acc += w * sample;
        for (int k = 1; k <= order; ++k) {
            const double arg = 2.0 * std::numbers::pi * k * i / spp;
            out.cos_c[k - 1] += w * amp * std::cos(arg) * sample;
            out.sin_c[k - 1] += w * amp * std::sin(arg) * sample;
        }
    }
    const double scale = dt / 3.0 / period;
    out.avg = acc * scale;
    out.cos_c *= scale;
    out.sin_c *= scale;
    return out;
}

}  // namespace

void ControlConfig::validate() const {
    if (!(relaxation > 0.0) || relaxation > 1.0)
        throw std::invalid_argument("ControlConfig: relaxation outside (0, 1]");
    if (projection_order < 0)
        throw std::invalid_argument("ControlConfig: negative projection order");
    if (target.size() != 2 * projection_order + 1)
        throw std::invalid_argument(
            "ControlConfig: target size must be 2*order+1");
    if (steps_per_period < 16)
        throw std::invalid_argument("ControlConfig: steps_per_period too small");
    if (warmup_periods < 3)
        throw std::invalid_argument(
            "ControlConfig: warmup shorter than the filter memory");
    if (!(deriv_ratio >= 0.0) || !(velocity_limit > 0.0))
        throw std::invalid_argument("ControlConfig: bad PD or guard setting");
}

ClosedLoopSim::ClosedLoopSim(const PendulumParams& par, const ControlConfig& cfg,
                             double p)
    : par_(par),
      cfg_(cfg),
      p_(p),
      dt_(par.period / cfg.steps_per_period),
      hist_(0.0, dt_,
            static_cast<std::size_t>(cfg.warmup_periods * cfg.steps_per_period +
                                     cfg.steps_per_period / 4 + 8)) {
    par_.validate();
    cfg_.validate();
    if (!(p >= 0.0))
        throw std::invalid_argument("ClosedLoopSim: negative excitation");
    y_.cs.setZero(2 * cfg_.projection_order);
    for (auto& s : scratch_) s.cs.setZero(2 * cfg_.projection_order);
}

ClosedLoopSim::ClosedLoopSim(const PendulumParams& par, const ControlConfig& cfg,
                             double p, const PlantState& start)
    : ClosedLoopSim(par, cfg, p) {
    const int spp = cfg_.steps_per_period;
    const int n = cfg_.warmup_periods * spp;
    std::vector<double> phi(n + 1), phi_dot(n + 1);
    phi[0] = start.phi;
    phi_dot[0] = start.phi_dot;
    Eigen::Vector2d y(start.phi, start.phi_dot);
    auto f = [&](const Eigen::Vector2d& v, double tt) {
        return rhs_rotating({v[0], v[1], tt}, par_, p_, 0.0);
    };
    for (int i = 1; i <= n; ++i) {
        // Node times are always start + index*dt, never accumulated; repeated
        // summation would let the integrated and replayed clocks drift apart.
        const double t = start.t + dt_ * (i - 1);
        const Eigen::Vector2d k1 = f(y, t);
        const Eigen::Vector2d k2 = f(y + 0.5 * dt_ * k1, t + 0.5 * dt_);
        const Eigen::Vector2d k3 = f(y + 0.5 * dt_ * k2, t + 0.5 * dt_);
        const Eigen::Vector2d k4 = f(y + dt_ * k3, t + dt_);
        y += dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        phi[i] = y[0];
        phi_dot[i] = y[1];
    }
    seed_from_samples(phi, phi_dot, start.t);
}

ClosedLoopSim ClosedLoopSim::from_periodic(const PendulumParams& par,
                                           const ControlConfig& cfg, double p,
                                           const Eigen::VectorXd& phi_nodes,
                                           const Eigen::VectorXd& phi_dot_nodes,
                                           double t0) {
    ClosedLoopSim sim(par, cfg, p);
    const int spp = cfg.steps_per_period;
    if (phi_nodes.size() != spp + 1 || phi_dot_nodes.size() != spp + 1)
        throw std::invalid_argument("from_periodic: need steps_per_period+1 nodes");
    const int n = cfg.warmup_periods * spp;
    std::vector<double> phi(n + 1), phi_dot(n + 1);
    for (int i = 0; i <= n; ++i) {
        const int j = i % spp;  // exact periodic extension
        phi[i] = phi_nodes[j];
        phi_dot[i] = phi_dot_nodes[j];
    }
    sim.seed_from_samples(phi, phi_dot, t0 - cfg.warmup_periods * par.period);
    return sim;
}

void ClosedLoopSim::seed_from_samples(const std::vector<double>& phi,
                                      const std::vector<double>& phi_dot,
                                      double t0_warmup) {
    const int spp = cfg_.steps_per_period;
    const int n = static_cast<int>(phi.size()) - 1;
    const int N = cfg_.projection_order;
    const double T = par_.period;
    t0_ = t0_warmup + cfg_.warmup_periods * T;
    hist_ = HistorySegment(
        t0_warmup, dt_,
        static_cast<std::size_t>(cfg_.warmup_periods * spp + spp / 4 + 8));

    // Bootstrap the filter trace over the trailing period with its
    // one-period-memory-free form; earlier nodes never feed a lookup.
    std::vector<double> ref(n + 1, 0.0), ref_dot(n + 1, 0.0);
    const double s2t = std::sqrt(2.0 * T);
    const double cb = std::sqrt(2.0 / T) / T;
    for (int j = 2 * spp; j <= n; ++j) {
        const WindowProj wp = window_projection(phi, j - spp, spp, N, T);
        double proj = wp.avg;
        double projdot = (phi[j - spp] - phi[j - 2 * spp]) / T;
        for (int k = 1; k <= N; ++k) {
            proj += s2t * wp.cos_c[k - 1];
            projdot += s2t * (cb * (phi[j - spp] - phi[j - 2 * spp]) -
                              2.0 * std::numbers::pi * k / T * wp.sin_c[k - 1]);
        }
        ref[j] = phi[j - spp] - proj;
        ref_dot[j] = phi_dot[j - spp] - projdot;
    }

    for (int i = 0; i < n; ++i) {
        const double t = t0_warmup + dt_ * i;
        HistoryRecord r;
        r.phi = phi[i];
        r.phi_dot = phi_dot[i];
        r.phi_ddot = rhs_rotating({phi[i], phi_dot[i], t}, par_, p_, 0.0)[1];
        r.ref = ref[i];
        r.ref_dot = ref_dot[i];
        hist_.append(r);
    }

    // Projection states at the moment control engages.
    y_.phi = phi[n];
    y_.phi_dot = phi_dot[n];
    const WindowProj wp = window_projection(phi, n - spp, spp, N, T);
    y_.avg = wp.avg;
    for (int k = 1; k <= N; ++k) {
        y_.cs[2 * (k - 1)] = wp.cos_c[k - 1];
        y_.cs[2 * (k - 1) + 1] = wp.sin_c[k - 1];
    }
    last_mean_ = window_mean(phi, n - spp, spp);
    last_u_sup_ = 0.0;
    lost_ = false;

    // The switch-on node carries both one-sided limits: the trajectory
    // arrives uncontrolled, leaves under the feedback law. For partial
    // relaxation the filter output steps off its seeded trace here as well.
    HistoryRecord on;
    on.phi = phi[n];
    on.phi_dot = phi_dot[n];
    on.phi_ddot_in = rhs_rotating({phi[n], phi_dot[n], t0_}, par_, p_, 0.0)[1];
    on.ref_in = ref[n];
    on.ref_dot_in = ref_dot[n];
    if (cfg_.relaxation == 1.0) {
        on.ref = ref[n];
        on.ref_dot = ref_dot[n];
    } else {
        const double R = cfg_.relaxation;
        on.ref = (1.0 - R) * ref[n - spp] + R * ref[n];
        on.ref_dot = (1.0 - R) * ref_dot[n - spp] + R * ref_dot[n];
    }
    on.u = phi[n] - on.ref - target_signal(t0_);
    const double u_dot = phi_dot[n] - on.ref_dot - target_signal_dot(t0_);
    on.torque = pd_torque(on.u, u_dot, par_, cfg_.gain, cfg_.deriv_ratio);
    on.phi_ddot =
        rhs_rotating({phi[n], phi_dot[n], t0_}, par_, p_, on.torque)[1];
    hist_.append(on);
    t_ = hist_.newest_time();
}

double ClosedLoopSim::projection_term(const LoopState& y) const {
    double v = y.avg;
    const int N = cfg_.projection_order;
    if (N == 0 && !cfg_.force_general_projection) return v;
    const double s2t = std::sqrt(2.0 * par_.period);
    for (int k = 1; k <= N; ++k) v += s2t * y.cs[2 * (k - 1)];
    return v;
}

double ClosedLoopSim::projection_term_dot(double, const LoopState& y,
                                          double phi_T, double phi_2T) const {
    const double T = par_.period;
    double v = (phi_T - phi_2T) / T;
    const int N = cfg_.projection_order;
    if (N == 0 && !cfg_.force_general_projection) return v;
    const double s2t = std::sqrt(2.0 * T);
    const double cb = std::sqrt(2.0 / T) / T;
    for (int k = 1; k <= N; ++k)
        v += s2t * (cb * (phi_T - phi_2T) -
                    2.0 * std::numbers::pi * k / T * y.cs[2 * (k - 1) + 1]);
    return v;
}

double ClosedLoopSim::target_signal(double t) const {
    const int N = cfg_.projection_order;
    double v = cfg_.target[N];
    for (int k = -N; k <= N; ++k)
        if (k != 0) v += cfg_.target[k + N] * basis(k, t, par_.period);
    return v;
}

double ClosedLoopSim::target_signal_dot(double t) const {
    const int N = cfg_.projection_order;
    double v = 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int k = -N; k <= N; ++k) {
        if (k == 0) continue;
        const double rate = two_pi * std::abs(k) / par_.period;
        v += cfg_.target[k + N] * rate *
             (k > 0 ? basis(-k, t, par_.period) : -basis(-k, t, par_.period));
    }
    return v;
}

ClosedLoopSim::FilterOut ClosedLoopSim::filter_eval(double t,
                                                    const LoopState& y,
                                                    Side side) const {
    const double T = par_.period;
    const double phi_T = hist_.phi(t - T);
    const double phi_2T = hist_.phi(t - 2.0 * T);
    const double raw = phi_T - projection_term(y);
    const double raw_dot =
        hist_.phi_dot(t - T) - projection_term_dot(t, y, phi_T, phi_2T);
    if (cfg_.relaxation == 1.0) return {raw, raw_dot};
    const double R = cfg_.relaxation;
    return {(1.0 - R) * hist_.ref(t - T, side) + R * raw,
            (1.0 - R) * hist_.ref_dot(t - T, side) + R * raw_dot};
}

void ClosedLoopSim::derivative(double t, const LoopState& y, LoopState& dy,
                               Side side) const {
    const double T = par_.period;
    const double phi_T = hist_.phi(t - T);
    const double phi_2T = hist_.phi(t - 2.0 * T);
    const double raw = phi_T - projection_term(y);
    const double raw_dot =
        hist_.phi_dot(t - T) - projection_term_dot(t, y, phi_T, phi_2T);
    double refv, refd;
    if (cfg_.relaxation == 1.0) {
        refv = raw;
        refd = raw_dot;
    } else {
        const double R = cfg_.relaxation;
        refv = (1.0 - R) * hist_.ref(t - T, side) + R * raw;
        refd = (1.0 - R) * hist_.ref_dot(t - T, side) + R * raw_dot;
    }
    const double u = y.phi - refv - target_signal(t);
    const double u_dot = y.phi_dot - refd - target_signal_dot(t);
    const double torque =
        pd_torque(u, u_dot, par_, cfg_.gain, cfg_.deriv_ratio);
    dy.phi = y.phi_dot;
    dy.phi_dot = rhs_rotating({y.phi, y.phi_dot, t}, par_, p_, torque)[1];
    dy.avg = (phi_T - phi_2T) / T;
    const int N = cfg_.projection_order;
    if (N > 0) {
        const double cb = std::sqrt(2.0 / T) / T;
        for (int k = 1; k <= N; ++k) {
            const double rot = 2.0 * std::numbers::pi * k / T;
            dy.cs[2 * (k - 1)] = cb * (phi_T - phi_2T) - rot * y.cs[2 * (k - 1) + 1];
            dy.cs[2 * (k - 1) + 1] = rot * y.cs[2 * (k - 1)];
        }
    }
}

void ClosedLoopSim::step() {
    LoopState& k1 = scratch_[0];
    LoopState& k2 = scratch_[1];
    LoopState& k3 = scratch_[2];
    LoopState& k4 = scratch_[3];
    LoopState& tmp = scratch_[4];
    const double h = dt_;

    auto blend = [&](const LoopState& base, double w, const LoopState& slope) {
        tmp.phi = base.phi + w * slope.phi;
        tmp.phi_dot = base.phi_dot + w * slope.phi_dot;
        tmp.avg = base.avg + w * slope.avg;
        if (tmp.cs.size() > 0) tmp.cs = base.cs + w * slope.cs;
    };

    // The end stage closes the step at a node; if an input switched exactly
    // one delay earlier, it must see the arrival limits there.
    derivative(t_, y_, k1, Side::right);
    blend(y_, 0.5 * h, k1);
    derivative(t_ + 0.5 * h, tmp, k2, Side::right);
    blend(y_, 0.5 * h, k2);
    derivative(t_ + 0.5 * h, tmp, k3, Side::right);
    blend(y_, h, k3);
    derivative(t_ + h, tmp, k4, Side::left);

    const double w = h / 6.0;
    y_.phi += w * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
    y_.phi_dot +=
        w * (k1.phi_dot + 2.0 * k2.phi_dot + 2.0 * k3.phi_dot + k4.phi_dot);
    y_.avg += w * (k1.avg + 2.0 * k2.avg + 2.0 * k3.avg + k4.avg);
    if (y_.cs.size() > 0)
        y_.cs += w * (k1.cs + 2.0 * k2.cs + 2.0 * k3.cs + k4.cs);
    t_ = hist_.time_of(hist_.newest_index() + 1);

    // Node record at the new time.
    const FilterOut f = filter_eval(t_, y_);
    HistoryRecord r;
    r.phi = y_.phi;
    r.phi_dot = y_.phi_dot;
    r.ref = f.ref;
    r.ref_dot = f.ref_dot;
    r.u = y_.phi - f.ref - target_signal(t_);
    const double u_dot = y_.phi_dot - f.ref_dot - target_signal_dot(t_);
    r.torque = pd_torque(r.u, u_dot, par_, cfg_.gain, cfg_.deriv_ratio);
    r.phi_ddot = rhs_rotating({y_.phi, y_.phi_dot, t_}, par_, p_, r.torque)[1];
    // Under partial relaxation a jump in the filter trace re-enters through
    // the recursion one period later, attenuated by 1-R: when the delayed
    // parent node carries one, this node does too.
    if (cfg_.relaxation != 1.0) {
        const HistoryRecord& parent =
            hist_.node(hist_.newest_index() + 1 - cfg_.steps_per_period);
        if (parent.ref_in != parent.ref || parent.ref_dot_in != parent.ref_dot) {
            const FilterOut fin = filter_eval(t_, y_, Side::left);
            r.ref_in = fin.ref;
            r.ref_dot_in = fin.ref_dot;
            const double u_in = y_.phi - fin.ref - target_signal(t_);
            const double ud_in =
                y_.phi_dot - fin.ref_dot - target_signal_dot(t_);
            const double tq_in =
                pd_torque(u_in, ud_in, par_, cfg_.gain, cfg_.deriv_ratio);
            r.phi_ddot_in =
                rhs_rotating({y_.phi, y_.phi_dot, t_}, par_, p_, tq_in)[1];
        }
    }
    hist_.append(r);

    if (!std::isfinite(y_.phi) || !std::isfinite(y_.phi_dot) ||
        std::abs(y_.phi_dot) > cfg_.velocity_limit)
        lost_ = true;
}

void ClosedLoopSim::finish_period() {
    const int spp = cfg_.steps_per_period;
    const std::int64_t newest = hist_.newest_index();
    double acc = 0.5 * (hist_.node(newest - spp).phi + hist_.node(newest).phi);
    double sup = std::abs(hist_.node(newest).u);
    for (int j = 1; j < spp; ++j) {
        const HistoryRecord& rec = hist_.node(newest - spp + j);
        acc += rec.phi;
        sup = std::max(sup, std::abs(rec.u));
    }
    sup = std::max(sup, std::abs(hist_.node(newest - spp).u));
    last_mean_ = acc / spp;
    last_u_sup_ = sup;
    // A rotation that keeps up with the excitation has mean lab velocity
    // omega; dropping out shows as the period-average falling below omega/2.
    const double drift =
        (hist_.node(newest).phi - hist_.node(newest - spp).phi) / par_.period;
    if (drift < -0.5 * par_.omega) lost_ = true;
}

void ClosedLoopSim::run_periods(int n, Trajectory* capture) {
    const int spp = cfg_.steps_per_period;
    if (capture && capture->empty()) {
        const HistoryRecord& r = hist_.newest();
        capture->push_back({t_, r.phi, r.phi_dot, r.ref, r.u, r.torque});
    }
    for (int period = 0; period < n && !lost_; ++period) {
        for (int i = 0; i < spp && !lost_; ++i) {
            step();
            if (capture) {
                const HistoryRecord& r = hist_.newest();
                capture->push_back({t_, r.phi, r.phi_dot, r.ref, r.u, r.torque});
            }
        }
        if (!lost_) finish_period();
    }
}

SettleResult ClosedLoopSim::settle(const SettlePolicy& policy) {
    SettleResult out;
    double prev = last_mean_;
    int streak = 0;
    for (int k = 0; k < policy.max_periods; ++k) {
        run_periods(1);
        ++out.periods_used;
        if (lost_) break;
        streak = std::abs(last_mean_ - prev) < policy.mean_tol ? streak + 1 : 0;
        prev = last_mean_;
        if (streak >= policy.consecutive) {
            out.converged = true;
            break;
        }
    }
    out.lost = lost_;
    out.mean_phase = last_mean_;
    out.u_sup = last_u_sup_;
    if (!lost_) {
        const int spp = cfg_.steps_per_period;
        out.final_phi.resize(spp + 1);
        out.final_phi_dot.resize(spp + 1);
        const std::int64_t newest = hist_.newest_index();
        for (int j = 0; j <= spp; ++j) {
            const HistoryRecord& r = hist_.node(newest - spp + j);
            out.final_phi[j] = r.phi;
            out.final_phi_dot[j] = r.phi_dot;
        }
    }
    return out;
}

void ClosedLoopSim::refresh_departure() {
    // The filter trace does not depend on amplitude or target, so ref stays;
    // u, torque and the departure acceleration follow the new inputs. The
    // arrival fields keep what the trajectory arrived with.
    HistoryRecord& r = hist_.mutable_newest();
    r.u = r.phi - r.ref - target_signal(t_);
    const double u_dot = r.phi_dot - r.ref_dot - target_signal_dot(t_);
    r.torque = pd_torque(r.u, u_dot, par_, cfg_.gain, cfg_.deriv_ratio);
    r.phi_ddot = rhs_rotating({r.phi, r.phi_dot, t_}, par_, p_, r.torque)[1];
}

void ClosedLoopSim::set_amplitude(double p) {
    p_ = p;
    refresh_departure();
}

void ClosedLoopSim::set_target_mean(double v) {
    cfg_.set_target_mean(v);
    refresh_departure();
}

void ClosedLoopSim::set_target(const Eigen::VectorXd& coeffs) {
    if (coeffs.size() != cfg_.target.size())
        throw std::invalid_argument("set_target: wrong coefficient count");
    cfg_.target = coeffs;
    refresh_departure();
}

// ---------------------------------------------------------------------------
// Stand-alone filter evaluation from stored history (reference path).

namespace {

struct GridPos {
    std::int64_t node;
    int spp;
};

GridPos grid_position(const HistorySegment& hist, const ControlConfig& cfg,
                      const PendulumParams& par, double t) {
    const double T = par.period;
    const int spp = cfg.steps_per_period;
    if (std::abs(hist.dt() * spp - T) > 1e-9 * T)
        throw std::invalid_argument("history grid does not match the period");
    const std::int64_t i = hist.floor_index(t + 0.5 * hist.dt());
    if (std::abs(hist.time_of(i) - t) > 1e-6 * hist.dt())
        throw std::invalid_argument("filter update requires a node-aligned time");
    return {i, spp};
}

}  // namespace

double delay_filter_update(const HistorySegment& hist, const ControlConfig& cfg,
                           const PendulumParams& par, double t) {
    const auto [node, spp] = grid_position(hist, cfg, par, t);
    const double T = par.period;
    const int N = cfg.projection_order;

    double acc = 0.5 * (hist.node(node - 2 * spp).phi + hist.node(node - spp).phi);
    for (int j = 1; j < spp; ++j) acc += hist.node(node - 2 * spp + j).phi;
    double proj = acc / spp;

    if (N > 0) {
        Eigen::VectorXd window(spp + 1);
        for (int i = 0; i <= spp; ++i) window[i] = hist.node(node - spp - i).phi;
        const SpectralCoeffs x = project(window, N, T);
        const double s2t = std::sqrt(2.0 * T);
        for (int k = 1; k <= N; ++k) proj += s2t * x.at(-k);
    }
    const double raw = hist.node(node - spp).phi - proj;
    if (cfg.relaxation == 1.0) return raw;
    return (1.0 - cfg.relaxation) * hist.node(node - spp).ref +
           cfg.relaxation * raw;
}

Eigen::Vector2d control_input(const HistorySegment& hist,
                              const ControlConfig& cfg,
                              const PendulumParams& par, double t) {
    const auto [node, spp] = grid_position(hist, cfg, par, t);
    const double T = par.period;
    const int N = cfg.projection_order;

    const double refv = delay_filter_update(hist, cfg, par, t);

    double projdot =
        (hist.node(node - spp).phi - hist.node(node - 2 * spp).phi) / T;
    if (N > 0) {
        Eigen::VectorXd window(spp + 1);
        for (int i = 0; i <= spp; ++i) window[i] = hist.node(node - spp - i).phi;
        const SpectralCoeffs x = project(window, N, T);
        const double s2t = std::sqrt(2.0 * T);
        const double cb = std::sqrt(2.0 / T) / T;
        for (int k = 1; k <= N; ++k)
            projdot += s2t * (cb * (hist.node(node - spp).phi -
                                    hist.node(node - 2 * spp).phi) -
                              2.0 * std::numbers::pi * k / T * x.at(k));
    }
    double refd = hist.node(node - spp).phi_dot - projdot;
    if (cfg.relaxation != 1.0)
        refd = (1.0 - cfg.relaxation) * hist.node(node - spp).ref_dot +
               cfg.relaxation * refd;

    double target = cfg.target[N], target_dot = 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int k = -N; k <= N; ++k) {
        if (k == 0) continue;
        target += cfg.target[k + N] * basis(k, t, T);
        const double rate = two_pi * std::abs(k) / T;
        target_dot += cfg.target[k + N] * rate *
                      (k > 0 ? basis(-k, t, T) : -basis(-k, t, T));
    }
    const HistoryRecord& now = hist.node(node);
    return {now.phi - refv - target, now.phi_dot - refd - target_dot};
}

ClosedLoopSim integrate_controlled(const PendulumParams& par,
                                   const ControlConfig& cfg, double p,
                                   const PlantState& start, int periods,
                                   Trajectory* capture) {
    ClosedLoopSim sim(par, cfg, p, start);
    sim.run_periods(periods, capture);
    return sim;
}

}  // namespace pendcbc
