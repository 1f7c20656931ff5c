#pragma once

// Deterministic mass-action semantics: vector field, fixed-step RK4
// integration under piecewise-constant controls, block sums, cost functionals
// and the projection of original controls onto a lumped network.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccrn/model.hpp"

namespace ccrn {

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(double t, const std::string& what);
    [[nodiscard]] double time() const { return time_; }

private:
    double time_;
};

class ProjectionError : public std::runtime_error {
public:
    ProjectionError(double t, double residual);
    [[nodiscard]] double time() const { return time_; }
    [[nodiscard]] double residual() const { return residual_; }

private:
    double time_;
    double residual_;
};

/// Piecewise-constant per-reaction controls. Segment k holds values[k] on
/// [starts[k], starts[k+1]); the last segment extends to the horizon.
struct ControlSchedule {
    std::vector<double> starts;
    std::vector<std::vector<double>> values;

    static ControlSchedule constant(std::vector<double> value);
    /// Every reaction at one extremal, or at its interval midpoint.
    static ControlSchedule at_extremal(const Ccrn& net, Extremal e);
    static ControlSchedule at_midpoint(const Ccrn& net);

    /// Segment containing t; a breakpoint within `eps` of t counts as passed.
    [[nodiscard]] std::size_t segment_at(double t, double eps = 0.0) const;
    [[nodiscard]] const std::vector<double>& value_at(double t, double eps = 0.0) const {
        return values[segment_at(t, eps)];
    }
    /// Throws StructuralError unless starts begin at 0, increase strictly and
    /// every value lies inside its reaction's interval.
    void validate(const Ccrn& net) const;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    ControlSchedule schedule;

    [[nodiscard]] std::size_t size() const { return times.size(); }
    /// Linear interpolation between grid points.
    [[nodiscard]] std::vector<double> state_at(double t) const;
};

/// Precomputed mass-action terms of a network for repeated evaluation.
class MassAction {
public:
    explicit MassAction(const Ccrn& net);

    [[nodiscard]] std::size_t num_species() const { return num_species_; }
    [[nodiscard]] std::size_t num_reactions() const { return terms_.size(); }

    /// Π_B v_B^{ρ(B)} / ρ(B)! for every reaction.
    void monomials(std::span<const double> v, std::span<double> out) const;
    /// f(v, α) written into dv.
    void eval(std::span<const double> v, std::span<const double> alpha, std::span<double> dv) const;

    struct Term {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> reactant;
        std::vector<std::pair<std::uint32_t, double>> change;  // π(A) − ρ(A), non-zero only
        double inv_factorial = 1.0;
    };
    [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

private:
    std::size_t num_species_;
    std::vector<Term> terms_;
};

[[nodiscard]] std::vector<double> vector_field(const Ccrn& net, std::span<const double> v,
                                               std::span<const double> alpha);

struct SimulateOptions {
    double step = 1e-3;
};

/// Classical RK4 on the grid t_k = k·h (last step shortened to end at T);
/// steps are split at schedule breakpoints that fall strictly inside them.
[[nodiscard]] Trajectory simulate(const Ccrn& net, std::span<const double> v0, const ControlSchedule& sched,
                                  double horizon, const SimulateOptions& opt = {});

/// Per-time block sums Σ_{A∈H} v_A(t), indexed by block id.
[[nodiscard]] Trajectory block_sums(const Trajectory& traj, const Partition& part);
[[nodiscard]] std::vector<double> block_sums(std::span<const double> v, const Partition& part);

/// Linear running cost Σ_A running[A]·v_A and final cost Σ_A final[A]·v_A(T).
struct CostSpec {
    std::vector<double> running;
    std::vector<double> final_weights;
    double horizon = 0.0;

    /// Throws StructuralError unless weights are constant on every block.
    void check_block_respecting(const Partition& part) const;
    /// The same cost over block representatives.
    [[nodiscard]] CostSpec lumped(const Partition& part) const;
};

/// Trapezoidal quadrature of the running cost over the trajectory grid plus
/// the final cost at the horizon.
[[nodiscard]] double evaluate_cost(const Trajectory& traj, const CostSpec& cost);

struct ProjectedControl {
    ControlSchedule schedule;   // lumped controls, one segment per grid step
    Trajectory lumped;          // lumped trajectory integrated alongside
    double max_residual = 0.0;  // largest drift-match residual over all stages
};

struct ProjectOptions {
    double residual_threshold = 1e-6;  // relative to 1 + |target drift|
    double qp_tolerance = 1e-13;
    std::size_t qp_max_iter = 20000;
};

/// Lumped controls matching the block-summed drift of `traj` (produced from
/// `net` under `sched`). Original and lumped states advance together with
/// the same RK4 steps; at each stage the lumped control solves a
/// box-constrained least-squares drift match inside the lumped rate box,
/// starting from the lumped image of the original controls (fused rates
/// summed). The schedule records the first-stage solution of each step.
/// Throws ProjectionError when a residual exceeds the threshold.
[[nodiscard]] ProjectedControl project_control(const Ccrn& net, const Partition& part, const Ccrn& lumped,
                                               const Trajectory& traj, const ControlSchedule& sched,
                                               const ProjectOptions& opt = {});

/// `t,<species...>` CSV.
[[nodiscard]] std::string trajectory_csv(const Trajectory& traj, const std::vector<std::string>& names);
[[nodiscard]] std::vector<std::string> species_names(const Ccrn& net);

/// `t_start,<reaction controls...>` CSV; headers are reaction labels or r<id>.
[[nodiscard]] std::string schedule_csv(const ControlSchedule& sched, const Ccrn& net);
[[nodiscard]] ControlSchedule parse_schedule_csv(std::string_view text, const Ccrn& net);

namespace detail {
/// Walks the integration grid of `times`, splitting each step at breakpoints
/// of `sched`. Calls step(t0, dt, segment) for every sub-step and
/// grid_point(k) after reaching times[k].
void walk_grid(std::span<const double> times, const ControlSchedule& sched,
               const std::function<void(double, double, std::size_t)>& step,
               const std::function<void(std::size_t)>& grid_point);
std::vector<double> make_grid(double horizon, double step);
double breakpoint_eps(double h);
}  // namespace detail

}  // namespace ccrn
