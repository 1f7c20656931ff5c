#pragma once

// Core domain types for controlled mass-action reaction networks: species,
// multisets, rate intervals, reactions, networks and species partitions.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ccrn {

using SpeciesIndex = std::uint32_t;
using BlockId = std::uint32_t;

/// Raised when an operation is handed inconsistent structure (species out of
/// range, partition not covering the universe, horizon past a trajectory...).
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Species {
    std::string name;
    SpeciesIndex index = 0;
};

/// Finite multiset over dense indices, stored as (index, count) pairs sorted
/// by index with no zero counts. Two multisets are equal iff their entry
/// vectors are equal, so the type can key maps directly.
class Multiset {
public:
    using Entry = std::pair<std::uint32_t, std::uint32_t>;

    Multiset() = default;
    /// Accepts unsorted entries with repeats; zero counts are dropped.
    explicit Multiset(std::vector<Entry> entries);

    static Multiset single(std::uint32_t index, std::uint32_t count = 1);
    static Multiset from_dense(std::span<const std::uint32_t> counts);

    [[nodiscard]] std::uint32_t count(std::uint32_t index) const;
    [[nodiscard]] std::uint64_t size() const;  // total multiplicity |σ|
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
    [[nodiscard]] std::size_t support() const { return entries_.size(); }

    /// True iff every count of `other` is at most the count here.
    [[nodiscard]] bool contains(const Multiset& other) const;

    void add(std::uint32_t index, std::uint32_t count = 1);
    /// Removes copies; throws StructuralError if not enough are present.
    void remove(std::uint32_t index, std::uint32_t count = 1);

    [[nodiscard]] Multiset plus(const Multiset& other) const;
    /// Multiset difference; requires contains(other).
    [[nodiscard]] Multiset minus(const Multiset& other) const;

    [[nodiscard]] std::vector<std::uint32_t> to_dense(std::size_t n) const;

    friend bool operator==(const Multiset&, const Multiset&) = default;
    friend auto operator<=>(const Multiset& a, const Multiset& b) {
        return a.entries_ <=> b.entries_;
    }

    [[nodiscard]] std::size_t hash() const;

private:
    std::vector<Entry> entries_;
};

struct MultisetHash {
    std::size_t operator()(const Multiset& m) const { return m.hash(); }
};

struct RateInterval {
    double lo = 0.0;
    double hi = 0.0;

    RateInterval() = default;
    /// Throws StructuralError on lo > hi, negative or non-finite bounds.
    RateInterval(double lo, double hi);
    static RateInterval point(double k) { return {k, k}; }

    [[nodiscard]] bool degenerate() const { return lo == hi; }
    [[nodiscard]] bool contains(double x) const { return lo <= x && x <= hi; }
    [[nodiscard]] double midpoint() const { return lo + 0.5 * (hi - lo); }

    friend bool operator==(const RateInterval&, const RateInterval&) = default;
};

/// Which extremal network to look at: every rate at its lower or upper bound.
enum class Extremal { lower, upper };

[[nodiscard]] inline double extremal_rate(const RateInterval& r, Extremal e) {
    return e == Extremal::lower ? r.lo : r.hi;
}
[[nodiscard]] std::string_view to_string(Extremal e);

struct Reaction {
    std::uint32_t id = 0;
    std::string label;  // optional, empty when unlabeled
    Multiset reactant;
    Multiset product;
    RateInterval rate;

    [[nodiscard]] bool is_noop() const { return reactant == product; }
};

/// Controlled reaction network: species, interval-rated reactions and optional
/// initial data.
class Ccrn {
public:
    Ccrn() = default;

    /// Registers a species and returns its index; throws StructuralError on a
    /// duplicate name.
    SpeciesIndex add_species(std::string name);
    /// Index of `name`, registering it if unknown.
    SpeciesIndex intern(std::string_view name);
    [[nodiscard]] std::optional<SpeciesIndex> find(std::string_view name) const;
    [[nodiscard]] SpeciesIndex index_of(std::string_view name) const;

    /// Appends a reaction; assigns id = current reaction count.
    std::uint32_t add_reaction(Multiset reactant, Multiset product, RateInterval rate,
                               std::string label = {});

    [[nodiscard]] std::size_t num_species() const { return species_.size(); }
    [[nodiscard]] std::size_t num_reactions() const { return reactions_.size(); }
    [[nodiscard]] const std::vector<Species>& species() const { return species_; }
    [[nodiscard]] const std::vector<Reaction>& reactions() const { return reactions_; }
    [[nodiscard]] const Reaction& reaction(std::size_t i) const { return reactions_.at(i); }
    [[nodiscard]] const std::string& name(SpeciesIndex i) const { return species_.at(i).name; }

    /// Replaces the rate of one reaction (used by tests and generators).
    void set_rate(std::size_t reaction, RateInterval rate);

    /// Initial concentrations, one per species; empty when not given.
    std::vector<double> initial;

    /// Throws StructuralError if any reaction references an unknown species.
    void validate() const;

private:
    std::vector<Species> species_;
    std::unordered_map<std::string, SpeciesIndex> by_name_;
    std::vector<Reaction> reactions_;
};

/// Dense per-block count vector of a multiset under a partition.
struct BlockProjection {
    std::vector<std::uint64_t> counts;
    friend bool operator==(const BlockProjection&, const BlockProjection&) = default;
    friend auto operator<=>(const BlockProjection&, const BlockProjection&) = default;
};

/// Partition of species 0..n-1 into non-empty disjoint blocks. Stored in
/// canonical form: members sorted ascending, blocks ordered by their minimum
/// member, so structural equality is partition equality.
class Partition {
public:
    Partition() = default;
    /// Throws StructuralError unless blocks form a partition of 0..n-1.
    Partition(std::size_t n, std::vector<std::vector<SpeciesIndex>> blocks);

    /// Groups species by label; labels are arbitrary integers.
    static Partition from_labels(std::span<const std::uint64_t> labels);
    static Partition trivial(std::size_t n);    // one block
    static Partition discrete(std::size_t n);   // all singletons

    [[nodiscard]] std::size_t universe() const { return block_of_.size(); }
    [[nodiscard]] std::size_t num_blocks() const { return blocks_.size(); }
    [[nodiscard]] const std::vector<std::vector<SpeciesIndex>>& blocks() const { return blocks_; }
    [[nodiscard]] const std::vector<SpeciesIndex>& block(BlockId b) const { return blocks_.at(b); }
    [[nodiscard]] BlockId block_of(SpeciesIndex s) const { return block_of_.at(s); }
    [[nodiscard]] const std::vector<BlockId>& block_ids() const { return block_of_; }
    /// Minimum species index in block b.
    [[nodiscard]] SpeciesIndex representative(BlockId b) const { return blocks_.at(b).front(); }

    friend bool operator==(const Partition& a, const Partition& b) {
        return a.blocks_ == b.blocks_;
    }

private:
    std::vector<std::vector<SpeciesIndex>> blocks_;
    std::vector<BlockId> block_of_;
};

/// Per-block cumulative counts; equal projections characterise the multiset
/// lifting of the partition.
[[nodiscard]] BlockProjection block_projection(const Multiset& sigma, const Partition& part);
/// Same information as block_projection, sparse: a multiset over block ids.
[[nodiscard]] Multiset lift(const Multiset& sigma, const Partition& part);

/// Π_B C(σ(B), ρ(B)); zero when ρ is not contained in σ. Throws
/// std::overflow_error if the product exceeds 64 bits.
[[nodiscard]] std::uint64_t falling_binomial(const Multiset& sigma, const Multiset& rho);
/// Floating-point variant for large populations (propensities).
[[nodiscard]] double falling_binomial_real(std::span<const std::int64_t> counts,
                                           const Multiset& rho);

/// True iff every block of `fine` lies within a block of `coarse`.
[[nodiscard]] bool refines(const Partition& fine, const Partition& coarse);

std::string to_string(const Multiset& m, const Ccrn& net);

}  // namespace ccrn
