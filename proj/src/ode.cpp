#include "ccrn/ode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "ccrn/parser.hpp"
#include "ccrn/reconstruct.hpp"

namespace ccrn {

DivergenceError::DivergenceError(double t, const std::string& what)
    : std::runtime_error("integration diverged at t=" + format_double(t) + ": " + what), time_(t) {}

ProjectionError::ProjectionError(double t, double residual)
    : std::runtime_error("control projection failed at t=" + format_double(t) +
                         " (residual " + format_double(residual) + ")"),
      time_(t),
      residual_(residual) {}

ControlSchedule ControlSchedule::constant(std::vector<double> value) {
    ControlSchedule s;
    s.starts = {0.0};
    s.values = {std::move(value)};
    return s;
}

ControlSchedule ControlSchedule::at_extremal(const Ccrn& net, Extremal e) {
    std::vector<double> v;
    for (const auto& r : net.reactions()) v.push_back(extremal_rate(r.rate, e));
    return constant(std::move(v));
}

ControlSchedule ControlSchedule::at_midpoint(const Ccrn& net) {
    std::vector<double> v;
    for (const auto& r : net.reactions()) v.push_back(r.rate.midpoint());
    return constant(std::move(v));
}

std::size_t ControlSchedule::segment_at(double t, double eps) const {
    auto it = std::upper_bound(starts.begin(), starts.end(), t + eps);
    if (it == starts.begin()) return 0;
    return static_cast<std::size_t>(it - starts.begin()) - 1;
}

void ControlSchedule::validate(const Ccrn& net) const {
    if (starts.empty() || starts.size() != values.size())
        throw StructuralError("schedule needs one value vector per segment");
    if (starts.front() != 0.0) throw StructuralError("schedule must start at t=0");
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (k > 0 && !(starts[k] > starts[k - 1]))
            throw StructuralError("schedule breakpoints must increase strictly");
        if (values[k].size() != net.num_reactions())
            throw StructuralError("schedule segment has wrong number of controls");
        for (std::size_t r = 0; r < values[k].size(); ++r)
            if (!net.reaction(r).rate.contains(values[k][r]))
                throw StructuralError("control of reaction " + std::to_string(r) + " outside its interval at t=" +
                                      format_double(starts[k]));
    }
}

std::vector<double> Trajectory::state_at(double t) const {
    if (times.empty()) throw StructuralError("empty trajectory");
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    std::vector<double> out(states[k].size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * states[k][i] + w * states[k + 1][i];
    return out;
}

MassAction::MassAction(const Ccrn& net) : num_species_(net.num_species()) {
    terms_.reserve(net.num_reactions());
    for (const auto& r : net.reactions()) {
        Term t;
        double fact = 1.0;
        for (const auto& [idx, cnt] : r.reactant.entries()) {
            t.reactant.emplace_back(idx, cnt);
            for (std::uint32_t k = 2; k <= cnt; ++k) fact *= k;
        }
        t.inv_factorial = 1.0 / fact;
        std::vector<std::pair<std::uint32_t, double>> change;
        auto a = r.product.entries().begin();
        auto b = r.reactant.entries().begin();
        const auto ae = r.product.entries().end();
        const auto be = r.reactant.entries().end();
        while (a != ae || b != be) {
            if (b == be || (a != ae && a->first < b->first)) {
                change.emplace_back(a->first, static_cast<double>(a->second));
                ++a;
            } else if (a == ae || b->first < a->first) {
                change.emplace_back(b->first, -static_cast<double>(b->second));
                ++b;
            } else {
                const double d = static_cast<double>(a->second) - static_cast<double>(b->second);
                if (d != 0.0) change.emplace_back(a->first, d);
                ++a;
                ++b;
            }
        }
        t.change = std::move(change);
        terms_.push_back(std::move(t));
    }
}

void MassAction::monomials(std::span<const double> v, std::span<double> out) const {
    for (std::size_t r = 0; r < terms_.size(); ++r) {
        double m = terms_[r].inv_factorial;
        for (const auto& [idx, cnt] : terms_[r].reactant) {
            const double x = v[idx];
            double p = x;
            for (std::uint32_t k = 1; k < cnt; ++k) p *= x;
            m *= p;
        }
        out[r] = m;
    }
}

void MassAction::eval(std::span<const double> v, std::span<const double> alpha, std::span<double> dv) const {
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t r = 0; r < terms_.size(); ++r) {
        const auto& t = terms_[r];
        if (t.change.empty() || alpha[r] == 0.0) continue;
        double m = alpha[r] * t.inv_factorial;
        for (const auto& [idx, cnt] : t.reactant) {
            const double x = v[idx];
            double p = x;
            for (std::uint32_t k = 1; k < cnt; ++k) p *= x;
            m *= p;
        }
        for (const auto& [idx, d] : t.change) dv[idx] += d * m;
    }
}

std::vector<double> vector_field(const Ccrn& net, std::span<const double> v, std::span<const double> alpha) {
    if (v.size() != net.num_species() || alpha.size() != net.num_reactions())
        throw StructuralError("vector_field: dimension mismatch");
    MassAction ma(net);
    std::vector<double> dv(net.num_species());
    ma.eval(v, alpha, dv);
    return dv;
}

namespace detail {

std::vector<double> make_grid(double horizon, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw StructuralError("step must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw StructuralError("horizon must be nonnegative");
    const double q = horizon / step;
    auto n = static_cast<std::size_t>(std::llround(q));
    if (std::abs(q - static_cast<double>(n)) > 1e-9 * std::max(1.0, q)) n = static_cast<std::size_t>(std::ceil(q));
    std::vector<double> times(n + 1);
    for (std::size_t k = 0; k < n; ++k) times[k] = static_cast<double>(k) * step;
    times[n] = horizon;
    return times;
}

double breakpoint_eps(double h) { return 1e-7 * h; }

void walk_grid(std::span<const double> times, const ControlSchedule& sched,
               const std::function<void(double, double, std::size_t)>& step,
               const std::function<void(std::size_t)>& grid_point) {
    grid_point(0);
    std::vector<double> cuts;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double t0 = times[k];
        const double t1 = times[k + 1];
        const double eps = breakpoint_eps(t1 - t0);
        cuts.assign(1, t0);
        auto it = std::upper_bound(sched.starts.begin(), sched.starts.end(), t0 + eps);
        for (; it != sched.starts.end() && *it < t1 - eps; ++it) cuts.push_back(*it);
        cuts.push_back(t1);
        for (std::size_t j = 0; j + 1 < cuts.size(); ++j)
            step(cuts[j], cuts[j + 1] - cuts[j], sched.segment_at(cuts[j], eps));
        grid_point(k + 1);
    }
}

}  // namespace detail

namespace {

void check_finite(std::span<const double> v, double t) {
    for (double x : v)
        if (!std::isfinite(x)) throw DivergenceError(t, "non-finite state");
}

}  // namespace

Trajectory simulate(const Ccrn& net, std::span<const double> v0, const ControlSchedule& sched, double horizon,
                    const SimulateOptions& opt) {
    if (v0.size() != net.num_species()) throw StructuralError("initial state has wrong dimension");
    sched.validate(net);
    const MassAction ma(net);
    const auto n = net.num_species();

    Trajectory traj;
    traj.times = detail::make_grid(horizon, opt.step);
    traj.states.reserve(traj.times.size());
    traj.schedule = sched;

    std::vector<double> v(v0.begin(), v0.end());
    check_finite(v, 0.0);
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    detail::walk_grid(
        traj.times, sched,
        [&](double t, double dt, std::size_t seg) {
            const auto& alpha = sched.values[seg];
            ma.eval(v, alpha, k1);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * dt * k1[i];
            ma.eval(tmp, alpha, k2);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + 0.5 * dt * k2[i];
            ma.eval(tmp, alpha, k3);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + dt * k3[i];
            ma.eval(tmp, alpha, k4);
            for (std::size_t i = 0; i < n; ++i) v[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            check_finite(v, t + dt);
        },
        [&](std::size_t) { traj.states.push_back(v); });
    return traj;
}

std::vector<double> block_sums(std::span<const double> v, const Partition& part) {
    if (v.size() != part.universe()) throw StructuralError("state dimension does not match partition");
    std::vector<double> out(part.num_blocks(), 0.0);
    for (std::size_t s = 0; s < v.size(); ++s) out[part.block_of(static_cast<SpeciesIndex>(s))] += v[s];
    return out;
}

Trajectory block_sums(const Trajectory& traj, const Partition& part) {
    Trajectory out;
    out.times = traj.times;
    out.schedule = traj.schedule;
    out.states.reserve(traj.states.size());
    for (const auto& s : traj.states) out.states.push_back(block_sums(s, part));
    return out;
}

void CostSpec::check_block_respecting(const Partition& part) const {
    if (running.size() != part.universe() || final_weights.size() != part.universe())
        throw StructuralError("cost weights do not match the species universe");
    for (const auto& blk : part.blocks())
        for (auto s : blk)
            if (running[s] != running[blk.front()] || final_weights[s] != final_weights[blk.front()])
                throw StructuralError("cost weights are not constant on a block");
}

CostSpec CostSpec::lumped(const Partition& part) const {
    check_block_respecting(part);
    CostSpec out;
    out.horizon = horizon;
    for (const auto& blk : part.blocks()) {
        out.running.push_back(running[blk.front()]);
        out.final_weights.push_back(final_weights[blk.front()]);
    }
    return out;
}

double evaluate_cost(const Trajectory& traj, const CostSpec& cost) {
    if (traj.times.empty()) throw StructuralError("empty trajectory");
    const auto dim = traj.states.front().size();
    if (cost.running.size() != dim || cost.final_weights.size() != dim)
        throw StructuralError("cost weights do not match the trajectory dimension");
    const double t_end = traj.times.back();
    if (cost.horizon > t_end + 1e-9 * std::max(1.0, t_end) || cost.horizon < traj.times.front())
        throw StructuralError("cost horizon exceeds the trajectory");
    const double horizon = std::min(cost.horizon, t_end);

    auto running = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += cost.running[i] * v[i];
        return s;
    };
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < traj.times.size() && traj.times[k] < horizon; ++k) {
        const double a = traj.times[k];
        const double b = std::min(traj.times[k + 1], horizon);
        const double la = running(traj.states[k]);
        const double lb = b == traj.times[k + 1] ? running(traj.states[k + 1]) : running(traj.state_at(b));
        integral += 0.5 * (b - a) * (la + lb);
    }
    const auto vT = traj.state_at(horizon);
    double final_cost = 0.0;
    for (std::size_t i = 0; i < dim; ++i) final_cost += cost.final_weights[i] * vT[i];
    return integral + final_cost;
}

ProjectedControl project_control(const Ccrn& net, const Partition& part, const Ccrn& lumped,
                                 const Trajectory& traj, const ControlSchedule& sched, const ProjectOptions& opt) {
    if (lumped.num_species() != part.num_blocks())
        throw StructuralError("lumped network does not have one species per block");
    if (traj.times.empty()) throw StructuralError("empty trajectory");
    sched.validate(net);
    const MassAction ma(net);
    const MassAction mh(lumped);
    const auto n = net.num_species();
    const auto nb = part.num_blocks();
    const auto discrete = Partition::discrete(nb);

    ProjectedControl out;
    out.lumped.times = traj.times;
    out.lumped.states.reserve(traj.times.size());

    std::vector<double> v = traj.states.front();
    std::vector<double> vh = block_sums(v, part);
    std::vector<double> k[4], kh[4];
    for (int s = 0; s < 4; ++s) {
        k[s].resize(n);
        kh[s].resize(nb);
    }
    std::vector<double> tmp(n), tmph(nb);
    Eigen::VectorXd first_stage_control;
    bool step_started = false;

    // The drift match only fixes net fluxes, so the minimiser is not unique.
    // Each solve starts from the lumped image of the original controls (rates
    // of fused reactions summed), which is itself exact for symmetric
    // controls and otherwise pulls the solution towards it.
    std::map<std::pair<Multiset, Multiset>, std::size_t> lumped_index;
    for (const auto& r : lumped.reactions()) lumped_index.emplace(std::pair{r.reactant, r.product}, r.id);
    std::vector<std::optional<std::size_t>> image(net.num_reactions());
    for (const auto& r : net.reactions()) {
        bool reps_only = true;
        for (const auto& [s, c] : r.reactant.entries())
            reps_only = reps_only && part.representative(part.block_of(s)) == s;
        if (!reps_only) continue;
        auto it = lumped_index.find({lift(r.reactant, part), lift(r.product, part)});
        if (it != lumped_index.end()) image[r.id] = it->second;
    }
    std::optional<Eigen::VectorXd> warm;
    auto lumped_image = [&](const std::vector<double>& alpha) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lumped.num_reactions()));
        std::vector<bool> hit(lumped.num_reactions(), false);
        for (std::size_t r = 0; r < alpha.size(); ++r)
            if (image[r]) {
                a(static_cast<Eigen::Index>(*image[r])) += alpha[r];
                hit[*image[r]] = true;
            }
        for (std::size_t r = 0; r < lumped.num_reactions(); ++r) {
            const auto& rate = lumped.reaction(r).rate;
            const auto i = static_cast<Eigen::Index>(r);
            a(i) = hit[r] ? std::clamp(a(i), rate.lo, rate.hi) : rate.midpoint();
        }
        return a;
    };

    auto match = [&](const std::vector<double>& xh, const std::vector<double>& drift, double t,
                     std::vector<double>& dxh) {
        const auto target = block_sums(drift, part);
        auto prob = build_drift_match(lumped, discrete, xh, target);
        auto res = solve_box_ls(prob, opt.qp_tolerance, opt.qp_max_iter, warm);
        double scale = 1.0;
        for (double y : target) scale = std::max(scale, 1.0 + std::abs(y));
        const double rel = res.residual / scale;
        out.max_residual = std::max(out.max_residual, rel);
        if (rel > opt.residual_threshold) throw ProjectionError(t, rel);
        std::vector<double> ah(res.a.data(), res.a.data() + res.a.size());
        mh.eval(xh, ah, dxh);
        return res.a;
    };

    detail::walk_grid(
        traj.times, sched,
        [&](double t, double dt, std::size_t seg) {
            const auto& alpha = sched.values[seg];
            warm = lumped_image(alpha);
            const double c[4] = {0.0, 0.5, 0.5, 1.0};
            for (int s = 0; s < 4; ++s) {
                if (s == 0) {
                    tmp = v;
                    tmph = vh;
                } else {
                    for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] + c[s] * dt * k[s - 1][i];
                    for (std::size_t i = 0; i < nb; ++i) tmph[i] = vh[i] + c[s] * dt * kh[s - 1][i];
                }
                ma.eval(tmp, alpha, k[s]);
                auto a = match(tmph, k[s], t + c[s] * dt, kh[s]);
                if (s == 0 && !step_started) {
                    first_stage_control = a;
                    step_started = true;
                }
            }
            for (std::size_t i = 0; i < n; ++i) v[i] += dt / 6.0 * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
            for (std::size_t i = 0; i < nb; ++i)
                vh[i] += dt / 6.0 * (kh[0][i] + 2.0 * (kh[1][i] + kh[2][i]) + kh[3][i]);
            check_finite(vh, t + dt);
        },
        [&](std::size_t idx) {
            if (idx > 0) {
                // resynchronise with the supplied trajectory at grid points
                v = traj.states[idx];
                out.schedule.starts.push_back(traj.times[idx - 1]);
                std::vector<double> a(first_stage_control.data(),
                                      first_stage_control.data() + first_stage_control.size());
                // clamp away rounding so the schedule validates against the lumped box
                for (std::size_t r = 0; r < a.size(); ++r)
                    a[r] = std::clamp(a[r], lumped.reaction(r).rate.lo, lumped.reaction(r).rate.hi);
                out.schedule.values.push_back(std::move(a));
                step_started = false;
            }
            out.lumped.states.push_back(vh);
        });
    if (out.schedule.starts.empty()) {
        std::vector<double> mid;
        for (const auto& r : lumped.reactions()) mid.push_back(r.rate.midpoint());
        out.schedule = ControlSchedule::constant(std::move(mid));
    }
    out.lumped.schedule = out.schedule;
    return out;
}

std::vector<std::string> species_names(const Ccrn& net) {
    std::vector<std::string> names;
    for (const auto& s : net.species()) names.push_back(s.name);
    return names;
}

std::string trajectory_csv(const Trajectory& traj, const std::vector<std::string>& names) {
    std::string out = "t";
    for (const auto& nm : names) out += "," + nm;
    out += '\n';
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        out += format_double(traj.times[k]);
        for (double x : traj.states[k]) out += "," + format_double(x);
        out += '\n';
    }
    return out;
}

namespace {
std::string reaction_header(const Ccrn& net, std::size_t r) {
    const auto& lbl = net.reaction(r).label;
    return lbl.empty() ? "r" + std::to_string(r) : lbl;
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto comma = line.find(',', start);
        auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
            cell.remove_suffix(1);
        out.emplace_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}
}  // namespace

std::string schedule_csv(const ControlSchedule& sched, const Ccrn& net) {
    std::string out = "t_start";
    for (std::size_t r = 0; r < net.num_reactions(); ++r) out += "," + reaction_header(net, r);
    out += '\n';
    for (std::size_t k = 0; k < sched.starts.size(); ++k) {
        out += format_double(sched.starts[k]);
        for (double x : sched.values[k]) out += "," + format_double(x);
        out += '\n';
    }
    return out;
}

ControlSchedule parse_schedule_csv(std::string_view text, const Ccrn& net) {
    ControlSchedule sched;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (!header) {
            if (cells.size() != net.num_reactions() + 1 || cells[0] != "t_start")
                throw ParseError(lineno, 1, "schedule header must be t_start followed by one column per reaction");
            for (std::size_t r = 0; r < net.num_reactions(); ++r)
                if (cells[r + 1] != reaction_header(net, r))
                    throw ParseError(lineno, 1, "schedule column '" + cells[r + 1] + "' does not match reaction " +
                                                    reaction_header(net, r));
            header = true;
            continue;
        }
        if (cells.size() != net.num_reactions() + 1) throw ParseError(lineno, 1, "wrong number of schedule columns");
        std::vector<double> row;
        for (const auto& c : cells) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(c, &used));
                if (used != c.size()) throw std::invalid_argument(c);
            } catch (const std::exception&) {
                throw ParseError(lineno, 1, "malformed number '" + c + "'");
            }
        }
        sched.starts.push_back(row.front());
        sched.values.emplace_back(row.begin() + 1, row.end());
    }
    if (!header) throw ParseError(lineno, 1, "empty schedule file");
    sched.validate(net);
    return sched;
}

}  // namespace ccrn
