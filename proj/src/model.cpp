#include "ccrn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ccrn {

Multiset::Multiset(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end());
    for (const auto& [idx, cnt] : entries) {
        if (cnt == 0) continue;
        if (!entries_.empty() && entries_.back().first == idx)
            entries_.back().second += cnt;
        else
            entries_.emplace_back(idx, cnt);
    }
}

Multiset Multiset::single(std::uint32_t index, std::uint32_t count) {
    Multiset m;
    if (count > 0) m.entries_.emplace_back(index, count);
    return m;
}

Multiset Multiset::from_dense(std::span<const std::uint32_t> counts) {
    Multiset m;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] > 0) m.entries_.emplace_back(static_cast<std::uint32_t>(i), counts[i]);
    return m;
}

std::uint32_t Multiset::count(std::uint32_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    return (it != entries_.end() && it->first == index) ? it->second : 0;
}

std::uint64_t Multiset::size() const {
    std::uint64_t s = 0;
    for (const auto& e : entries_) s += e.second;
    return s;
}

bool Multiset::contains(const Multiset& other) const {
    auto it = entries_.begin();
    for (const auto& [idx, cnt] : other.entries_) {
        while (it != entries_.end() && it->first < idx) ++it;
        if (it == entries_.end() || it->first != idx || it->second < cnt) return false;
    }
    return true;
}

void Multiset::add(std::uint32_t index, std::uint32_t count) {
    if (count == 0) return;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    if (it != entries_.end() && it->first == index)
        it->second += count;
    else
        entries_.insert(it, {index, count});
}

void Multiset::remove(std::uint32_t index, std::uint32_t count) {
    if (count == 0) return;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    if (it == entries_.end() || it->first != index || it->second < count)
        throw StructuralError("multiset removal of absent element");
    it->second -= count;
    if (it->second == 0) entries_.erase(it);
}

Multiset Multiset::plus(const Multiset& other) const {
    Multiset out;
    out.entries_.reserve(entries_.size() + other.entries_.size());
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() || b != other.entries_.end()) {
        if (b == other.entries_.end() || (a != entries_.end() && a->first < b->first)) {
            out.entries_.push_back(*a++);
        } else if (a == entries_.end() || b->first < a->first) {
            out.entries_.push_back(*b++);
        } else {
            out.entries_.emplace_back(a->first, a->second + b->second);
            ++a;
            ++b;
        }
    }
    return out;
}

Multiset Multiset::minus(const Multiset& other) const {
    Multiset out = *this;
    for (const auto& [idx, cnt] : other.entries_) out.remove(idx, cnt);
    return out;
}

std::vector<std::uint32_t> Multiset::to_dense(std::size_t n) const {
    std::vector<std::uint32_t> d(n, 0);
    for (const auto& [idx, cnt] : entries_) {
        if (idx >= n) throw StructuralError("multiset index outside universe");
        d[idx] = cnt;
    }
    return d;
}

std::size_t Multiset::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [idx, cnt] : entries_) {
        h ^= (static_cast<std::uint64_t>(idx) << 32) | cnt;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
}

RateInterval::RateInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw StructuralError("non-finite rate bound");
    if (lo < 0.0) throw StructuralError("negative rate bound");
    if (lo > hi) throw StructuralError("rate interval with lo > hi");
}

std::string_view to_string(Extremal e) { return e == Extremal::lower ? "lower" : "upper"; }

SpeciesIndex Ccrn::add_species(std::string name) {
    if (by_name_.contains(name)) throw StructuralError("duplicate species '" + name + "'");
    auto idx = static_cast<SpeciesIndex>(species_.size());
    by_name_.emplace(name, idx);
    species_.push_back({std::move(name), idx});
    if (!initial.empty()) initial.push_back(0.0);
    return idx;
}

SpeciesIndex Ccrn::intern(std::string_view name) {
    if (auto f = find(name)) return *f;
    return add_species(std::string(name));
}

std::optional<SpeciesIndex> Ccrn::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

SpeciesIndex Ccrn::index_of(std::string_view name) const {
    if (auto f = find(name)) return *f;
    throw StructuralError("unknown species '" + std::string(name) + "'");
}

std::uint32_t Ccrn::add_reaction(Multiset reactant, Multiset product, RateInterval rate,
                                 std::string label) {
    auto id = static_cast<std::uint32_t>(reactions_.size());
    reactions_.push_back({id, std::move(label), std::move(reactant), std::move(product), rate});
    return id;
}

void Ccrn::set_rate(std::size_t reaction, RateInterval rate) { reactions_.at(reaction).rate = rate; }

void Ccrn::validate() const {
    const auto n = species_.size();
    for (const auto& r : reactions_) {
        for (const auto* m : {&r.reactant, &r.product})
            for (const auto& e : m->entries())
                if (e.first >= n)
                    throw StructuralError("reaction " + std::to_string(r.id) +
                                          " references species index out of range");
    }
    if (!initial.empty() && initial.size() != n)
        throw StructuralError("initial concentration vector has wrong length");
}

Partition::Partition(std::size_t n, std::vector<std::vector<SpeciesIndex>> blocks) {
    constexpr auto unset = std::numeric_limits<BlockId>::max();
    block_of_.assign(n, unset);
    for (auto& b : blocks) {
        if (b.empty()) throw StructuralError("partition has an empty block");
        std::sort(b.begin(), b.end());
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
    for (BlockId id = 0; id < blocks.size(); ++id) {
        for (auto s : blocks[id]) {
            if (s >= n) throw StructuralError("partition member outside species universe");
            if (block_of_[s] != unset) throw StructuralError("partition blocks overlap");
            block_of_[s] = id;
        }
    }
    for (auto b : block_of_)
        if (b == unset) throw StructuralError("partition does not cover all species");
    blocks_ = std::move(blocks);
}

Partition Partition::from_labels(std::span<const std::uint64_t> labels) {
    std::unordered_map<std::uint64_t, std::size_t> slot;
    std::vector<std::vector<SpeciesIndex>> blocks;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        auto [it, fresh] = slot.try_emplace(labels[s], blocks.size());
        if (fresh) blocks.emplace_back();
        blocks[it->second].push_back(static_cast<SpeciesIndex>(s));
    }
    return Partition(labels.size(), std::move(blocks));
}

Partition Partition::trivial(std::size_t n) {
    if (n == 0) return Partition(0, {});
    std::vector<SpeciesIndex> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<SpeciesIndex>(i);
    return Partition(n, {std::move(all)});
}

Partition Partition::discrete(std::size_t n) {
    std::vector<std::vector<SpeciesIndex>> blocks(n);
    for (std::size_t i = 0; i < n; ++i) blocks[i] = {static_cast<SpeciesIndex>(i)};
    return Partition(n, std::move(blocks));
}

BlockProjection block_projection(const Multiset& sigma, const Partition& part) {
    BlockProjection p;
    p.counts.assign(part.num_blocks(), 0);
    for (const auto& [idx, cnt] : sigma.entries()) {
        if (idx >= part.universe()) throw StructuralError("species outside partition");
        p.counts[part.block_of(idx)] += cnt;
    }
    return p;
}

Multiset lift(const Multiset& sigma, const Partition& part) {
    std::vector<Multiset::Entry> e;
    e.reserve(sigma.support());
    for (const auto& [idx, cnt] : sigma.entries()) {
        if (idx >= part.universe()) throw StructuralError("species outside partition");
        e.emplace_back(part.block_of(idx), cnt);
    }
    return Multiset(std::move(e));
}

namespace {
std::uint64_t binom(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max())
            throw std::overflow_error("binomial coefficient overflows 64 bits");
    }
    return static_cast<std::uint64_t>(r);
}
}  // namespace

std::uint64_t falling_binomial(const Multiset& sigma, const Multiset& rho) {
    unsigned __int128 prod = 1;
    for (const auto& [idx, cnt] : rho.entries()) {
        auto b = binom(sigma.count(idx), cnt);
        if (b == 0) return 0;
        prod *= b;
        if (prod > std::numeric_limits<std::uint64_t>::max())
            throw std::overflow_error("falling binomial overflows 64 bits");
    }
    return static_cast<std::uint64_t>(prod);
}

double falling_binomial_real(std::span<const std::int64_t> counts, const Multiset& rho) {
    double prod = 1.0;
    for (const auto& [idx, cnt] : rho.entries()) {
        const auto n = counts[idx];
        if (n < static_cast<std::int64_t>(cnt)) return 0.0;
        double b = 1.0;
        for (std::uint32_t i = 1; i <= cnt; ++i) b = b * static_cast<double>(n - cnt + i) / i;
        prod *= b;
    }
    return prod;
}

bool refines(const Partition& fine, const Partition& coarse) {
    if (fine.universe() != coarse.universe())
        throw StructuralError("partitions over different species universes");
    for (const auto& blk : fine.blocks()) {
        const auto target = coarse.block_of(blk.front());
        for (auto s : blk)
            if (coarse.block_of(s) != target) return false;
    }
    return true;
}

std::string to_string(const Multiset& m, const Ccrn& net) {
    if (m.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [idx, cnt] : m.entries()) {
        if (!first) os << " + ";
        first = false;
        if (cnt > 1) os << cnt << ' ';
        os << net.name(idx);
    }
    return os.str();
}

}  // namespace ccrn
