#pragma once

// Coarsest species equivalence of a controlled reaction network and the
// corresponding lumped (quotient) network.
//
// A partition H is a species equivalence of a network with fixed rates when,
// for any two species A_i, A_j in one block, any context multiset ρ and any
// class of the multiset lifting of H, the total rate from A_i + ρ into that
// class equals the total rate from A_j + ρ. For interval rates the condition
// must hold for both extremal networks.

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccrn/model.hpp"

namespace ccrn {

class InvalidPartitionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reaction rate from ρ to π in one extremal network; the diagonal ρ = π is
/// the negated total rate out of ρ.
[[nodiscard]] double rr(const Ccrn& net, Extremal e, const Multiset& rho, const Multiset& pi);

/// Signature key: the context multiset (over species) and the lifted target
/// class, written as a multiset over block ids.
struct SignatureKey {
    Multiset context;
    Multiset target;
    friend bool operator==(const SignatureKey&, const SignatureKey&) = default;
    friend auto operator<=>(const SignatureKey&, const SignatureKey&) = default;
};
using Signature = std::map<SignatureKey, double>;

/// Aggregated rates of `species` towards lifted classes, per context. Targets
/// equal to the source class and zero aggregates are left out.
[[nodiscard]] Signature compute_signature(const Ccrn& net, const Partition& part, Extremal e,
                                          SpeciesIndex species);

struct RefineOptions {
    /// Absolute slack when comparing aggregated rates. Zero means exact
    /// comparison; anything else may merge species that are not equivalent.
    double tolerance = 0.0;
};

/// Coarsest refinement of `part` that is a species equivalence of one
/// extremal network (signature splitting to a fixpoint).
[[nodiscard]] Partition refine_once(const Ccrn& net, const Partition& part, Extremal e,
                                    const RefineOptions& opt = {});

struct RefinementStats {
    std::size_t rounds = 0;        // outer alternations lower/upper
    std::size_t split_passes = 0;  // signature passes over all rounds
};

/// Alternates refine_once on the lower and upper extremal until a full round
/// leaves the partition unchanged.
[[nodiscard]] Partition coarsest_equivalence(const Ccrn& net, const Partition& initial,
                                             const RefineOptions& opt = {},
                                             RefinementStats* stats = nullptr);

/// Same fixpoint as coarsest_equivalence, splitting on the pair of lower and
/// upper signatures in each pass.
[[nodiscard]] Partition coarsest_equivalence_joint(const Ccrn& net, const Partition& initial,
                                                   const RefineOptions& opt = {},
                                                   RefinementStats* stats = nullptr);

/// Direct check of the equivalence criterion for both extremals, evaluated
/// through rr() rather than the refinement engine.
[[nodiscard]] bool check_equivalence(const Ccrn& net, const Partition& part, double tolerance = 0.0);

struct BlockMap {
    std::vector<SpeciesIndex> representative;  // block id -> species
    std::vector<BlockId> member_of;            // species -> block id
};

struct LumpedNetwork {
    Ccrn lumped;  // species are the block representatives, in block order
    BlockMap map;
};

/// Lumped network: drop reactions whose reactant has a non-representative,
/// map product species to representatives, fuse equal (reactant, product)
/// pairs summing lower and upper bounds separately. Throws
/// InvalidPartitionError if `part` is not a species equivalence.
[[nodiscard]] LumpedNetwork quotient(const Ccrn& net, const Partition& part, double tolerance = 0.0);

/// Quotient with explicit representatives (one member per block, in block
/// order). Skips the equivalence check.
[[nodiscard]] LumpedNetwork quotient_with(const Ccrn& net, const Partition& part,
                                          const std::vector<SpeciesIndex>& representatives);

/// `{"blocks":[{"representative":"A01","members":["A01","A10"]}, ...]}`
[[nodiscard]] std::string block_map_json(const Ccrn& net, const Partition& part, const BlockMap& map);

}  // namespace ccrn
