#pragma once

// Brute-force stochastic semantics over an enumerated state space: generator
// matrices of the extremal networks, ordinary lumpability of lifted
// partitions, transient distributions by uniformization, the population-scaled
// approximation with cutoff, and Gillespie simulation.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccrn/model.hpp"

namespace ccrn {

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PropensityOverflowError : public std::runtime_error {
public:
    PropensityOverflowError(double t, std::vector<std::uint64_t> state);
    [[nodiscard]] double time() const { return time_; }
    [[nodiscard]] const std::vector<std::uint64_t>& state() const { return state_; }

private:
    double time_;
    std::vector<std::uint64_t> state_;
};

struct StateSpace {
    std::vector<Multiset> states;
    std::unordered_map<Multiset, std::size_t, MultisetHash> index;
    bool truncated = false;  // some transition left the retained states

    [[nodiscard]] std::size_t size() const { return states.size(); }
    [[nodiscard]] std::optional<std::size_t> find(const Multiset& m) const;
};

inline constexpr std::size_t kDefaultStateCap = 1'000'000;

/// Breadth-first closure from the seeds under the reactions, keeping states
/// of total population at most pop_bound. States of one BFS level are listed
/// in lexicographic multiset order.
[[nodiscard]] StateSpace enumerate_states(const Ccrn& net, const Multiset& init, std::uint64_t pop_bound,
                                          std::size_t cap = kDefaultStateCap);
[[nodiscard]] StateSpace enumerate_states(const Ccrn& net, std::span<const Multiset> seeds,
                                          std::uint64_t pop_bound, std::size_t cap = kDefaultStateCap);

/// Every multiset of total size ≤ max_size, by size then lexicographically.
/// The truncated flag records whether some reaction leaves the set.
[[nodiscard]] StateSpace all_multisets(const Ccrn& net, std::uint64_t max_size,
                                       std::size_t cap = kDefaultStateCap);

struct Generator {
    // off-diagonal entries of each row, sorted by target index
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
    std::vector<double> diag;
    bool truncated = false;

    [[nodiscard]] std::size_t size() const { return diag.size(); }
    [[nodiscard]] double rate(std::size_t from, std::size_t to) const;
};

/// q(σ, θ) = Σ α_r · C(σ, ρ_r) over reactions with θ = σ − ρ_r + π_r ≠ σ.
/// Transitions leaving the space are dropped; the diagonal is the negated
/// sum of the retained row.
[[nodiscard]] Generator build_generator(const StateSpace& space, const Ccrn& net, Extremal e);
[[nodiscard]] Generator build_generator(const StateSpace& space, const Ccrn& net, std::span<const double> alpha);

struct LumpabilityCounterexample {
    std::size_t state_a = 0;
    std::size_t state_b = 0;
    BlockProjection target;  // offending class of the lifted partition
    double rate_a = 0.0;
    double rate_b = 0.0;
};

struct LumpabilityResult {
    bool lumpable = true;
    std::optional<LumpabilityCounterexample> counterexample;
};

/// Groups states by block projection and compares the aggregate rates of
/// every pair of states of one class into every other class, exactly.
[[nodiscard]] LumpabilityResult check_ordinary_lumpability(const Generator& gen, const StateSpace& space,
                                                           const Partition& part);

[[nodiscard]] std::string counterexample_json(const LumpabilityCounterexample& cex, const StateSpace& space,
                                              const Ccrn& net, const Partition& part, Extremal e);

struct TransientResult {
    std::vector<double> p;
    bool approximate = false;  // solved on a truncated space
    std::size_t terms = 0;     // Poisson terms summed over all chunks
};

/// Forward equations p' = pQ by uniformization; each chunk of the horizon is
/// truncated once the Poisson tail drops below 1e-12.
[[nodiscard]] TransientResult transient_solve(const Generator& gen, std::span<const double> p0, double t);

/// Probability mass per lifted class.
[[nodiscard]] std::map<BlockProjection, double> class_distribution(const StateSpace& space,
                                                                   std::span<const double> p,
                                                                   const Partition& part);

/// Rates of the N-th population-scaled chain. States are integer counts
/// x = N·σ; the cutoff is g = max(0, min(1, 2 − |x|/(N·c))) and each
/// reaction's rate becomes α / N^{|ρ|−1}.
class ScaledRates {
public:
    ScaledRates(const Ccrn& net, std::vector<double> alpha, std::uint64_t N, double c);
    ScaledRates(const Ccrn& net, Extremal e, std::uint64_t N, double c);

    [[nodiscard]] double cutoff(const Multiset& x) const;
    /// Outgoing (target, rate) pairs with identical targets merged.
    [[nodiscard]] std::vector<std::pair<Multiset, double>> outgoing(const Multiset& x) const;

private:
    const Ccrn* net_;
    std::vector<double> alpha_;
    std::uint64_t n_;
    double c_;
};

struct SsaOptions {
    std::optional<std::uint64_t> scale;  // N
    std::optional<double> cutoff;        // c, only with scale
    std::size_t max_events = 100'000'000;
};

struct JumpPath {
    std::vector<double> times;                       // jump times, times[0] = 0
    std::vector<std::vector<std::uint64_t>> states;  // counts after each jump
    bool event_limit_hit = false;

    /// Counts at time t (right-continuous).
    [[nodiscard]] const std::vector<std::uint64_t>& at(double t) const;
};

/// Gillespie direct method with propensities α_r · C(x, ρ_r), scaled when
/// options.scale is set. Reproducible for a fixed seed.
[[nodiscard]] JumpPath ssa_simulate(const Ccrn& net, const Multiset& init, std::span<const double> alpha,
                                    double horizon, std::uint64_t seed, const SsaOptions& opt = {});

[[nodiscard]] std::string jump_path_csv(const JumpPath& path, const std::vector<std::string>& names);
[[nodiscard]] std::string distribution_csv(const StateSpace& space, std::span<const double> p, const Ccrn& net);

}  // namespace ccrn
