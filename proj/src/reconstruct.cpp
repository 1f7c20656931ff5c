#include "ccrn/reconstruct.hpp"

#include <algorithm>
#include <cmath>

#include "ccrn/parser.hpp"

namespace ccrn {

ReconstructionError::ReconstructionError(double t, double residual)
    : std::runtime_error("control reconstruction failed at t=" + format_double(t) + " (residual " +
                         format_double(residual) + ")"),
      time_(t),
      residual_(residual) {}

DriftMatchProblem build_drift_match(const Ccrn& net, const Partition& part, std::span<const double> v,
                                    std::span<const double> target) {
    if (v.size() != net.num_species() || part.universe() != net.num_species())
        throw StructuralError("drift match: state does not match the network");
    if (target.size() != part.num_blocks()) throw StructuralError("drift match: target needs one entry per block");
    const auto nr = net.num_reactions();
    const auto nb = part.num_blocks();
    const MassAction ma(net);
    std::vector<double> mono(nr);
    ma.monomials(v, mono);

    DriftMatchProblem p;
    p.M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nr));
    p.b = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(nb));
    p.lo.resize(static_cast<Eigen::Index>(nr));
    p.hi.resize(static_cast<Eigen::Index>(nr));
    for (std::size_t r = 0; r < nr; ++r) {
        const auto c = static_cast<Eigen::Index>(r);
        for (const auto& [idx, d] : ma.terms()[r].change)
            p.M(static_cast<Eigen::Index>(part.block_of(idx)), c) += d * mono[r];
        p.lo(c) = net.reaction(r).rate.lo;
        p.hi(c) = net.reaction(r).rate.hi;
    }
    return p;
}

namespace {

Eigen::VectorXd clamp_box(const Eigen::VectorXd& a, const DriftMatchProblem& p) {
    return a.cwiseMax(p.lo).cwiseMin(p.hi);
}

double power_norm(const Eigen::MatrixXd& M) {
    Eigen::VectorXd x = Eigen::VectorXd::Ones(M.cols());
    x.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 50; ++it) {
        Eigen::VectorXd y = M.transpose() * (M * x);
        const double n = y.norm();
        if (n == 0.0) return 0.0;
        lambda = n;
        x = y / n;
    }
    return lambda;
}

// One least-squares solve over the variables not pinned to a bound, followed
// by a feasible step towards it. Returns true when the residual improved.
bool polish(const DriftMatchProblem& p, Eigen::VectorXd& a, const Eigen::VectorXd& grad, double& res) {
    const auto n = a.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (p.lo(i) == p.hi(i)) continue;
        const bool at_lo = a(i) <= p.lo(i) && grad(i) > 0.0;
        const bool at_hi = a(i) >= p.hi(i) && grad(i) < 0.0;
        if (!at_lo && !at_hi) free.push_back(i);
    }
    if (free.empty()) return false;
    Eigen::MatrixXd Mf(p.M.rows(), static_cast<Eigen::Index>(free.size()));
    for (std::size_t j = 0; j < free.size(); ++j) Mf.col(static_cast<Eigen::Index>(j)) = p.M.col(free[j]);
    const Eigen::VectorXd r = p.b - p.M * a;
    const Eigen::VectorXd delta = Mf.completeOrthogonalDecomposition().solve(r);

    // largest feasible fraction of the step
    double tmax = 1.0;
    for (std::size_t j = 0; j < free.size(); ++j) {
        const auto i = free[j];
        const double d = delta(static_cast<Eigen::Index>(j));
        if (d > 0.0 && a(i) + d > p.hi(i)) tmax = std::min(tmax, (p.hi(i) - a(i)) / d);
        if (d < 0.0 && a(i) + d < p.lo(i)) tmax = std::min(tmax, (p.lo(i) - a(i)) / d);
    }
    Eigen::VectorXd cand = a;
    for (std::size_t j = 0; j < free.size(); ++j) cand(free[j]) += tmax * delta(static_cast<Eigen::Index>(j));
    cand = clamp_box(cand, p);
    const double cres = (p.M * cand - p.b).norm();
    if (cres < res) {
        a = std::move(cand);
        res = cres;
        return true;
    }
    return false;
}

}  // namespace

BoxLsResult solve_box_ls(const DriftMatchProblem& prob, double tol, std::size_t max_iter,
                         const std::optional<Eigen::VectorXd>& warm_start) {
    const auto n = prob.M.cols();
    if (prob.lo.size() != n || prob.hi.size() != n || prob.b.size() != prob.M.rows())
        throw StructuralError("box least squares: inconsistent dimensions");
    BoxLsResult out;
    const Eigen::VectorXd mid = 0.5 * (prob.lo + prob.hi);
    const double lambda = power_norm(prob.M);
    if (lambda == 0.0) {
        out.a = mid;
        out.residual = prob.b.norm();
        out.converged = true;
        return out;
    }
    const double step = 0.9 / lambda;
    Eigen::VectorXd a = warm_start && warm_start->size() == n ? clamp_box(*warm_start, prob) : mid;
    double res = (prob.M * a - prob.b).norm();
    const double res_tol = tol * (1.0 + prob.b.norm());

    for (std::size_t it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        if (res <= res_tol) {
            out.converged = true;
            break;
        }
        const Eigen::VectorXd grad = prob.M.transpose() * (prob.M * a - prob.b);
        const Eigen::VectorXd pg = a - clamp_box(a - grad, prob);
        const double pg_scale = 1.0 + (prob.M.transpose() * prob.b).norm() + lambda * a.cwiseAbs().maxCoeff();
        if (pg.norm() <= tol * pg_scale) {
            out.converged = true;
            break;
        }
        if (it % 8 == 0 && polish(prob, a, grad, res)) continue;
        a = clamp_box(a - step * grad, prob);
        res = (prob.M * a - prob.b).norm();
    }
    out.a = std::move(a);
    out.residual = res;
    return out;
}

Reconstruction reconstruct_trajectory(const Ccrn& net, const Partition& part, const Ccrn& lumped,
                                      const Trajectory& lumped_traj, const ControlSchedule& lumped_sched,
                                      std::span<const double> v0, const ReconstructOptions& opt) {
    if (lumped.num_species() != part.num_blocks())
        throw StructuralError("lumped network does not have one species per block");
    if (part.universe() != net.num_species() || v0.size() != net.num_species())
        throw StructuralError("initial state does not match the network");
    if (lumped_traj.times.empty()) throw StructuralError("empty lumped trajectory");
    lumped_sched.validate(lumped);

    const auto n = net.num_species();
    const auto nb = part.num_blocks();
    const auto sums0 = block_sums(v0, part);
    for (std::size_t h = 0; h < nb; ++h) {
        const double ref = lumped_traj.states.front()[h];
        if (std::abs(sums0[h] - ref) > opt.initial_tolerance * (1.0 + std::abs(ref)))
            throw StructuralError("initial state does not sum to the lumped initial state in block " +
                                  std::to_string(h));
    }

    const MassAction ma(net);
    const MassAction mh(lumped);
    Reconstruction out;
    out.trajectory.times = lumped_traj.times;
    out.trajectory.states.reserve(lumped_traj.times.size());

    std::vector<double> v(v0.begin(), v0.end());
    std::vector<double> vh = lumped_traj.states.front();
    std::vector<double> k[4], kh[4];
    for (int s = 0; s < 4; ++s) {
        k[s].resize(n);
        kh[s].resize(nb);
    }
    std::vector<double> tmp(n), tmph(nb), a_vec;
    std::optional<Eigen::VectorXd> warm;
    Eigen::VectorXd first_control;
    bool step_started = false;
    double step_worst = 0.0;

    detail::walk_grid(
        lumped_traj.times, lumped_sched,
        [&](double t, double dt, std::size_t seg) {
            const auto& ah = lumped_sched.values[seg];
            const double c[4] = {0.0, 0.5, 0.5, 1.0};
            for (int s = 0; s < 4; ++s) {
                for (std::size_t i = 0; i < nb; ++i) tmph[i] = vh[i] + (s ? c[s] * dt * kh[s - 1][i] : 0.0);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + (s ? c[s] * dt * k[s - 1][i] : 0.0);
                mh.eval(tmph, ah, kh[s]);
                auto prob = build_drift_match(net, part, tmp, kh[s]);
                auto res = solve_box_ls(prob, opt.qp_tolerance, opt.qp_max_iter, warm);
                double scale = 1.0;
                for (double y : kh[s]) scale = std::max(scale, 1.0 + std::abs(y));
                const double rel = res.residual / scale;
                step_worst = std::max(step_worst, rel);
                if (rel > opt.residual_threshold) throw ReconstructionError(t + c[s] * dt, rel);
                warm = res.a;
                a_vec.assign(res.a.data(), res.a.data() + res.a.size());
                ma.eval(tmp, a_vec, k[s]);
                if (s == 0 && !step_started) {
                    first_control = res.a;
                    step_started = true;
                }
            }
            for (std::size_t i = 0; i < n; ++i) v[i] += dt / 6.0 * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
            for (std::size_t i = 0; i < nb; ++i)
                vh[i] += dt / 6.0 * (kh[0][i] + 2.0 * (kh[1][i] + kh[2][i]) + kh[3][i]);
            for (double x : v)
                if (!std::isfinite(x)) throw DivergenceError(t + dt, "non-finite reconstructed state");
        },
        [&](std::size_t idx) {
            if (idx > 0) {
                vh = lumped_traj.states[idx];
                out.schedule.starts.push_back(lumped_traj.times[idx - 1]);
                std::vector<double> a(first_control.data(), first_control.data() + first_control.size());
                for (std::size_t r = 0; r < a.size(); ++r)
                    a[r] = std::clamp(a[r], net.reaction(r).rate.lo, net.reaction(r).rate.hi);
                out.schedule.values.push_back(std::move(a));
                out.step_residuals.push_back(step_worst);
                out.max_residual = std::max(out.max_residual, step_worst);
                step_worst = 0.0;
                step_started = false;
            }
            const auto sums = block_sums(v, part);
            for (std::size_t h = 0; h < nb; ++h)
                out.max_tracking_error =
                    std::max(out.max_tracking_error, std::abs(sums[h] - lumped_traj.states[idx][h]));
            out.trajectory.states.push_back(v);
        });
    if (out.schedule.starts.empty()) out.schedule = ControlSchedule::at_midpoint(net);
    out.trajectory.schedule = out.schedule;
    return out;
}

}  // namespace ccrn
