#include "ccrn/lumping.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

namespace ccrn {

double rr(const Ccrn& net, Extremal e, const Multiset& rho, const Multiset& pi) {
    double sum = 0.0;
    if (rho != pi) {
        for (const auto& r : net.reactions())
            if (r.reactant == rho && r.product == pi) sum += extremal_rate(r.rate, e);
        return sum;
    }
    for (const auto& r : net.reactions())
        if (r.reactant == rho && r.product != rho) sum += extremal_rate(r.rate, e);
    return -sum;
}

Signature compute_signature(const Ccrn& net, const Partition& part, Extremal e, SpeciesIndex species) {
    Signature sig;
    for (const auto& r : net.reactions()) {
        if (r.reactant.count(species) == 0) continue;
        Multiset source = lift(r.reactant, part);
        Multiset target = lift(r.product, part);
        if (source == target) continue;
        Multiset context = r.reactant;
        context.remove(species);
        sig[{std::move(context), std::move(target)}] += extremal_rate(r.rate, e);
    }
    std::erase_if(sig, [](const auto& kv) { return kv.second == 0.0; });
    return sig;
}

namespace {

struct KeyHash {
    std::size_t operator()(const std::vector<std::uint32_t>& v) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ v.size();
        for (auto x : v) {
            h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

struct Contribution {
    std::uint32_t key;
    std::uint32_t ext;  // position in the extremal list
    double rate;
};

struct SigEntry {
    std::uint32_t key;
    std::uint32_t ext;
    double value;
};

void lift_into(const Multiset& m, const std::vector<BlockId>& block_of, std::vector<Multiset::Entry>& out) {
    out.clear();
    for (const auto& [idx, cnt] : m.entries()) out.emplace_back(block_of[idx], cnt);
    std::sort(out.begin(), out.end());
    std::size_t w = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (w > 0 && out[w - 1].first == out[i].first)
            out[w - 1].second += out[i].second;
        else
            out[w++] = out[i];
    }
    out.resize(w);
}

// One signature pass: splits every block by the signatures of its members
// under `extremals`. Returns the refined partition; block count grows iff a
// split happened.
Partition split_pass(const Ccrn& net, const Partition& part, const std::vector<Extremal>& extremals,
                     double tolerance) {
    const auto n = net.num_species();
    const auto& block_of = part.block_ids();
    std::vector<char> active(n, 0);
    bool any_active = false;
    for (const auto& blk : part.blocks())
        if (blk.size() > 1) {
            for (auto s : blk) active[s] = 1;
            any_active = true;
        }
    if (!any_active) return part;

    std::unordered_map<std::vector<std::uint32_t>, std::uint32_t, KeyHash> keys;
    std::vector<std::vector<Contribution>> contrib(n);
    std::vector<Multiset::Entry> src, dst;
    std::vector<std::uint32_t> key;
    std::vector<double> rates(extremals.size());

    for (const auto& r : net.reactions()) {
        bool touches = false;
        for (const auto& e : r.reactant.entries()) touches |= active[e.first] != 0;
        if (!touches) continue;
        bool nonzero = false;
        for (std::size_t k = 0; k < extremals.size(); ++k) {
            rates[k] = extremal_rate(r.rate, extremals[k]);
            nonzero |= rates[k] != 0.0;
        }
        if (!nonzero) continue;
        lift_into(r.reactant, block_of, src);
        lift_into(r.product, block_of, dst);
        if (src == dst) continue;  // stays in its own lifted class

        for (const auto& [species, cnt] : r.reactant.entries()) {
            if (!active[species]) continue;
            key.clear();
            for (const auto& [idx, c] : r.reactant.entries()) {
                const auto cc = idx == species ? c - 1 : c;
                if (cc == 0) continue;
                key.push_back(idx);
                key.push_back(cc);
            }
            key.push_back(0xffffffffu);
            for (const auto& [b, c] : dst) {
                key.push_back(b);
                key.push_back(c);
            }
            auto [it, fresh] = keys.try_emplace(key, static_cast<std::uint32_t>(keys.size()));
            for (std::size_t k = 0; k < extremals.size(); ++k)
                if (rates[k] != 0.0)
                    contrib[species].push_back({it->second, static_cast<std::uint32_t>(k), rates[k]});
        }
    }

    std::vector<std::vector<SigEntry>> sig(n);
    for (SpeciesIndex s = 0; s < n; ++s) {
        if (!active[s]) continue;
        auto& c = contrib[s];
        std::stable_sort(c.begin(), c.end(), [](const Contribution& a, const Contribution& b) {
            return a.key != b.key ? a.key < b.key : a.ext < b.ext;
        });
        auto& out = sig[s];
        for (std::size_t i = 0; i < c.size();) {
            std::size_t j = i;
            double sum = 0.0;
            while (j < c.size() && c[j].key == c[i].key && c[j].ext == c[i].ext) sum += c[j++].rate;
            if (sum != 0.0) out.push_back({c[i].key, c[i].ext, sum});
            i = j;
        }
    }

    auto less = [&](SpeciesIndex a, SpeciesIndex b) {
        const auto& x = sig[a];
        const auto& y = sig[b];
        const auto m = std::min(x.size(), y.size());
        for (std::size_t i = 0; i < m; ++i) {
            if (x[i].key != y[i].key) return x[i].key < y[i].key;
            if (x[i].ext != y[i].ext) return x[i].ext < y[i].ext;
            if (x[i].value != y[i].value) return x[i].value < y[i].value;
        }
        if (x.size() != y.size()) return x.size() < y.size();
        return a < b;
    };
    auto same = [&](SpeciesIndex a, SpeciesIndex b) {
        const auto& x = sig[a];
        const auto& y = sig[b];
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].key != y[i].key || x[i].ext != y[i].ext) return false;
            if (tolerance == 0.0 ? x[i].value != y[i].value
                                 : std::abs(x[i].value - y[i].value) > tolerance)
                return false;
        }
        return true;
    };

    std::vector<std::uint64_t> label(n);
    std::uint64_t next = 0;
    std::vector<SpeciesIndex> members;
    for (const auto& blk : part.blocks()) {
        if (blk.size() == 1) {
            label[blk.front()] = next++;
            continue;
        }
        members = blk;
        std::sort(members.begin(), members.end(), less);
        SpeciesIndex leader = members.front();
        label[leader] = next;
        for (std::size_t i = 1; i < members.size(); ++i) {
            if (!same(leader, members[i])) {
                leader = members[i];
                ++next;
            }
            label[members[i]] = next;
        }
        ++next;
    }
    return Partition::from_labels(label);
}

Partition refine_fixpoint(const Ccrn& net, Partition part, const std::vector<Extremal>& extremals,
                          double tolerance, std::size_t* passes) {
    for (;;) {
        Partition next = split_pass(net, part, extremals, tolerance);
        if (passes) ++*passes;
        if (next.num_blocks() == part.num_blocks()) return part;
        part = std::move(next);
    }
}

void check_universe(const Ccrn& net, const Partition& part) {
    if (part.universe() != net.num_species())
        throw StructuralError("partition universe does not match the network's species");
}

}  // namespace

Partition refine_once(const Ccrn& net, const Partition& part, Extremal e, const RefineOptions& opt) {
    check_universe(net, part);
    return refine_fixpoint(net, part, {e}, opt.tolerance, nullptr);
}

Partition coarsest_equivalence(const Ccrn& net, const Partition& initial, const RefineOptions& opt,
                               RefinementStats* stats) {
    check_universe(net, initial);
    Partition g = initial;
    std::size_t passes = 0;
    std::size_t rounds = 0;
    for (;;) {
        ++rounds;
        Partition h = refine_fixpoint(net, g, {Extremal::lower}, opt.tolerance, &passes);
        Partition h2 = refine_fixpoint(net, h, {Extremal::upper}, opt.tolerance, &passes);
        if (h2 == g) break;
        g = std::move(h2);
    }
    if (stats) *stats = {rounds, passes};
    return g;
}

Partition coarsest_equivalence_joint(const Ccrn& net, const Partition& initial, const RefineOptions& opt,
                                     RefinementStats* stats) {
    check_universe(net, initial);
    std::size_t passes = 0;
    Partition out =
        refine_fixpoint(net, initial, {Extremal::lower, Extremal::upper}, opt.tolerance, &passes);
    if (stats) *stats = {1, passes};
    return out;
}

bool check_equivalence(const Ccrn& net, const Partition& part, double tolerance) {
    check_universe(net, part);
    const auto n = net.num_species();
    std::map<Multiset, std::vector<std::size_t>> by_reactant;
    std::vector<std::vector<std::size_t>> touching(n);
    for (std::size_t i = 0; i < net.num_reactions(); ++i) {
        const auto& r = net.reaction(i);
        by_reactant[r.reactant].push_back(i);
        for (const auto& e : r.reactant.entries()) touching[e.first].push_back(i);
    }

    // Σ_{π ∈ class} rr(state, π) for every lifted class reached from state,
    // own class included (as the negated outflow).
    auto class_rates = [&](const Multiset& state, Extremal e) {
        std::map<Multiset, double> out;
        const Multiset own = lift(state, part);
        double outflow = 0.0;
        if (auto it = by_reactant.find(state); it != by_reactant.end()) {
            for (auto i : it->second) {
                const auto& r = net.reaction(i);
                if (r.product == r.reactant) continue;
                const double a = extremal_rate(r.rate, e);
                Multiset cls = lift(r.product, part);
                if (cls == own) continue;
                out[cls] += a;
                outflow += a;
            }
        }
        out[own] = -outflow;
        std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
        return out;
    };
    auto equal = [&](const std::map<Multiset, double>& a, const std::map<Multiset, double>& b) {
        if (a.size() != b.size()) return false;
        for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
            if (ia->first != ib->first) return false;
            if (tolerance == 0.0 ? ia->second != ib->second : std::abs(ia->second - ib->second) > tolerance)
                return false;
        }
        return true;
    };

    for (const auto& blk : part.blocks()) {
        if (blk.size() < 2) continue;
        std::map<Multiset, int> contexts;
        for (auto s : blk)
            for (auto i : touching[s]) contexts.emplace(net.reaction(i).reactant.minus(Multiset::single(s)), 0);
        for (const auto& [ctx, unused] : contexts) {
            for (Extremal e : {Extremal::lower, Extremal::upper}) {
                const auto ref = class_rates(ctx.plus(Multiset::single(blk.front())), e);
                for (std::size_t k = 1; k < blk.size(); ++k)
                    if (!equal(ref, class_rates(ctx.plus(Multiset::single(blk[k])), e))) return false;
            }
        }
    }
    return true;
}

LumpedNetwork quotient_with(const Ccrn& net, const Partition& part,
                            const std::vector<SpeciesIndex>& representatives) {
    check_universe(net, part);
    if (representatives.size() != part.num_blocks())
        throw InvalidPartitionError("one representative per block required");
    const auto n = net.num_species();
    std::vector<char> is_rep(n, 0);
    for (BlockId b = 0; b < part.num_blocks(); ++b) {
        const auto s = representatives[b];
        if (s >= n || part.block_of(s) != b)
            throw InvalidPartitionError("representative is not a member of its block");
        is_rep[s] = 1;
    }

    LumpedNetwork out;
    out.map.representative = representatives;
    out.map.member_of = part.block_ids();
    for (BlockId b = 0; b < part.num_blocks(); ++b) out.lumped.add_species(net.name(representatives[b]));

    struct Fused {
        Multiset reactant;
        Multiset product;
        double lo = 0.0;
        double hi = 0.0;
        std::string label;
    };
    std::vector<Fused> fused;
    std::map<std::pair<Multiset, Multiset>, std::size_t> slot;
    for (const auto& r : net.reactions()) {
        bool keep = true;
        for (const auto& e : r.reactant.entries()) keep &= is_rep[e.first] != 0;
        if (!keep) continue;
        Multiset reactant = lift(r.reactant, part);
        Multiset product = lift(r.product, part);
        auto [it, fresh] = slot.try_emplace({reactant, product}, fused.size());
        if (fresh) fused.push_back({std::move(reactant), std::move(product), 0.0, 0.0, r.label});
        auto& f = fused[it->second];
        f.lo += r.rate.lo;
        f.hi += r.rate.hi;
        if (f.label.empty()) f.label = r.label;
    }
    for (auto& f : fused)
        out.lumped.add_reaction(std::move(f.reactant), std::move(f.product), RateInterval(f.lo, f.hi),
                                std::move(f.label));

    if (!net.initial.empty()) {
        out.lumped.initial.assign(part.num_blocks(), 0.0);
        for (SpeciesIndex s = 0; s < n; ++s) out.lumped.initial[part.block_of(s)] += net.initial[s];
    }
    return out;
}

LumpedNetwork quotient(const Ccrn& net, const Partition& part, double tolerance) {
    if (!check_equivalence(net, part, tolerance))
        throw InvalidPartitionError("partition is not a species equivalence of both extremal networks");
    std::vector<SpeciesIndex> reps(part.num_blocks());
    for (BlockId b = 0; b < part.num_blocks(); ++b) reps[b] = part.representative(b);
    return quotient_with(net, part, reps);
}

std::string block_map_json(const Ccrn& net, const Partition& part, const BlockMap& map) {
    nlohmann::json blocks = nlohmann::json::array();
    for (BlockId b = 0; b < part.num_blocks(); ++b) {
        nlohmann::json members = nlohmann::json::array();
        for (auto s : part.block(b)) members.push_back(net.name(s));
        blocks.push_back({{"representative", net.name(map.representative[b])}, {"members", members}});
    }
    return nlohmann::json{{"blocks", blocks}}.dump();
}

}  // namespace ccrn
