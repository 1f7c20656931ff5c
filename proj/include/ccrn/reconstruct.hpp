#pragma once

// Recovering original-network controls from a lumped trajectory by
// box-constrained least-squares drift matching.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ccrn/model.hpp"
#include "ccrn/ode.hpp"

namespace ccrn {

class ReconstructionError : public std::runtime_error {
public:
    ReconstructionError(double t, double residual);
    [[nodiscard]] double time() const { return time_; }
    [[nodiscard]] double residual() const { return residual_; }

private:
    double time_;
    double residual_;
};

/// min ‖M·a − b‖² subject to lo ≤ a ≤ hi. Rows are blocks, columns are
/// reactions.
struct DriftMatchProblem {
    Eigen::MatrixXd M;
    Eigen::VectorXd b;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

/// M[H][r] = Σ_{A∈H}(π_r(A) − ρ_r(A)) · Π_B v_B^{ρ_r(B)}/ρ_r(B)!, b = target.
[[nodiscard]] DriftMatchProblem build_drift_match(const Ccrn& net, const Partition& part,
                                                  std::span<const double> v, std::span<const double> target);

struct BoxLsResult {
    Eigen::VectorXd a;
    double residual = 0.0;  // ‖M·a − b‖
    std::size_t iterations = 0;
    bool converged = false;
};

/// Projected gradient with step 0.9/λ where λ estimates ‖MᵀM‖₂ by 50 power
/// iterations, interleaved with least-squares solves on the free variables.
/// Stops when the projected-gradient norm or the residual drops to `tol`.
/// When M vanishes the box midpoint is returned.
[[nodiscard]] BoxLsResult solve_box_ls(const DriftMatchProblem& prob, double tol, std::size_t max_iter,
                                       const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

struct ReconstructOptions {
    double qp_tolerance = 1e-13;
    std::size_t qp_max_iter = 20000;
    double residual_threshold = 1e-6;  // relative to 1 + |target drift|
    double initial_tolerance = 1e-9;
};

struct Reconstruction {
    Trajectory trajectory;     // v* on the lumped trajectory's grid
    ControlSchedule schedule;  // realized original controls, one segment per step
    std::vector<double> step_residuals;  // worst stage residual of each step
    double max_residual = 0.0;
    double max_tracking_error = 0.0;  // max |Σ_{A∈H} v*_A − v̂_H| over the grid
};

/// Closed-loop integration of ∂v* = f(v*, a(v*, t)) where a solves the drift
/// match against the lumped drift f̂(v̂(t), α̂(t)). The lumped state at each RK4
/// stage is rebuilt from the lumped trajectory's grid value with the same
/// step. Throws StructuralError if v0's block sums differ from the lumped
/// initial state, ReconstructionError if a residual exceeds the threshold.
[[nodiscard]] Reconstruction reconstruct_trajectory(const Ccrn& net, const Partition& part, const Ccrn& lumped,
                                                    const Trajectory& lumped_traj,
                                                    const ControlSchedule& lumped_sched,
                                                    std::span<const double> v0,
                                                    const ReconstructOptions& opt = {});

}  // namespace ccrn
