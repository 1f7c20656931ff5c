#pragma once

// Case-study networks: SIR with vaccination over a star or an arbitrary
// weighted graph, and multisite binding with n sites.

#include <cstddef>
#include <optional>
#include <vector>

#include "ccrn/model.hpp"
#include "ccrn/parser.hpp"

namespace ccrn {

struct SirParams {
    double beta = 0.0;   // infection scaling on star edges
    double gamma = 0.0;  // recovery
    double eta = 0.0;    // loss of immunity
    RateInterval vac{0.0, 1.0};

    void validate() const;
};

/// 4n species S_i, I_i, R_i, V_i (location 1 is the centre) and infections
/// only along centre-leaf edges. Bundled partition: {S_1}, {I_1}, {R_1},
/// {V_1..V_n}, {everything else}.
[[nodiscard]] ModelDocument gen_sir_star(std::size_t n, const SirParams& p);

/// One infection S_j + I_i -> I_j + I_i per edge i -> j, at the edge weight
/// or over [w − hw, w + hw]. Species are named after node labels when these
/// are identifiers, otherwise after 1-based node positions. Bundled partition
/// groups species by type.
[[nodiscard]] ModelDocument gen_sir_network(const WeightedGraph& graph, const SirParams& p,
                                            std::optional<double> uncertainty_halfwidth = std::nullopt);

/// Undirected star on nodes 1..n with centre 1.
[[nodiscard]] WeightedGraph star_graph(std::size_t n, double weight = 1.0);

inline constexpr std::size_t kMaxMultisiteSites = 20;

/// Species B and A_b for b ∈ {0,1}^n, written as bit strings. Each free site
/// gets an association with B and each occupied site a dissociation.
/// Bundled partition: all species in one block.
[[nodiscard]] ModelDocument gen_multisite(std::size_t n, RateInterval assoc = {9.95, 10.05},
                                          RateInterval dissoc = {0.05, 0.15},
                                          std::size_t max_sites = kMaxMultisiteSites);

/// Blocks holding at least one counted species over the number of counted
/// species.
[[nodiscard]] double reduction_ratio(const Partition& part, const std::vector<bool>& counted);

/// Every species except the vaccination counters V_*.
[[nodiscard]] std::vector<bool> sir_state_mask(const Ccrn& net);

}  // namespace ccrn
