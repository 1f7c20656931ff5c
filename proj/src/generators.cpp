#include "ccrn/generators.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace ccrn {

void SirParams::validate() const {
    if (!(beta >= 0.0) || !(gamma >= 0.0) || !(eta >= 0.0))
        throw StructuralError("SIR parameters must be nonnegative");
    if (!(vac.lo >= 0.0) || vac.lo > vac.hi) throw StructuralError("vaccination interval is invalid");
}

namespace {

struct SirIds {
    SpeciesIndex s, i, r, v;
};

std::vector<SirIds> add_sir_species(Ccrn& net, const std::vector<std::string>& tags) {
    std::vector<SirIds> ids;
    ids.reserve(tags.size());
    for (const auto& tag : tags) {
        SirIds x{};
        x.s = net.add_species("S_" + tag);
        x.i = net.add_species("I_" + tag);
        x.r = net.add_species("R_" + tag);
        x.v = net.add_species("V_" + tag);
        ids.push_back(x);
    }
    return ids;
}

void add_local_reactions(Ccrn& net, const SirIds& x, const SirParams& p) {
    net.add_reaction(Multiset::single(x.s), Multiset({{x.r, 1}, {x.v, 1}}), p.vac);
    net.add_reaction(Multiset::single(x.i), Multiset::single(x.r), RateInterval::point(p.gamma));
    net.add_reaction(Multiset::single(x.r), Multiset::single(x.s), RateInterval::point(p.eta));
}

// S_dst + I_src -> I_dst + I_src
void add_infection(Ccrn& net, const SirIds& dst, const SirIds& src, RateInterval rate) {
    Multiset reactant({{dst.s, 1}, {src.i, 1}});
    Multiset product = dst.i == src.i ? Multiset::single(src.i, 2) : Multiset({{dst.i, 1}, {src.i, 1}});
    net.add_reaction(std::move(reactant), std::move(product), rate);
}

void sir_initial_state(Ccrn& net, const std::vector<SirIds>& ids) {
    net.initial.assign(net.num_species(), 0.0);
    for (const auto& x : ids) net.initial[x.s] = 1.0;
    if (!ids.empty()) {
        net.initial[ids.front().s] = 0.9;
        net.initial[ids.front().i] = 0.1;
    }
}

}  // namespace

ModelDocument gen_sir_star(std::size_t n, const SirParams& p) {
    if (n < 2) throw StructuralError("a star needs at least 2 locations");
    p.validate();
    ModelDocument doc;
    doc.source = "<sir-star>";
    std::vector<std::string> tags;
    for (std::size_t i = 1; i <= n; ++i) tags.push_back(std::to_string(i));
    auto& net = doc.ccrn;
    const auto ids = add_sir_species(net, tags);
    for (const auto& x : ids) add_local_reactions(net, x, p);
    const auto beta = RateInterval::point(p.beta);
    for (std::size_t j = 1; j < n; ++j) {
        add_infection(net, ids[0], ids[j], beta);
        add_infection(net, ids[j], ids[0], beta);
    }
    sir_initial_state(net, ids);

    std::vector<std::uint64_t> labels(net.num_species(), 4);
    labels[ids[0].s] = 0;
    labels[ids[0].i] = 1;
    labels[ids[0].r] = 2;
    for (const auto& x : ids) labels[x.v] = 3;
    doc.initial_partition = Partition::from_labels(labels);
    return doc;
}

ModelDocument gen_sir_network(const WeightedGraph& graph, const SirParams& p,
                              std::optional<double> uncertainty_halfwidth) {
    p.validate();
    if (uncertainty_halfwidth && !(*uncertainty_halfwidth >= 0.0))
        throw StructuralError("uncertainty halfwidth must be nonnegative");
    ModelDocument doc;
    doc.source = "<sir-network>";
    const bool named = std::all_of(graph.nodes.begin(), graph.nodes.end(), [](const std::string& s) {
        return !s.empty() &&
               std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
    });
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) tags.push_back(named ? graph.nodes[i] : std::to_string(i + 1));
    auto& net = doc.ccrn;
    const auto ids = add_sir_species(net, tags);
    for (const auto& x : ids) add_local_reactions(net, x, p);
    for (const auto& e : graph.edges) {
        if (e.src >= ids.size() || e.dst >= ids.size()) throw StructuralError("edge refers to an unknown node");
        RateInterval rate = RateInterval::point(e.weight);
        if (uncertainty_halfwidth) {
            const double lo = e.weight - *uncertainty_halfwidth;
            if (lo < 0.0)
                throw StructuralError("edge weight " + std::to_string(e.weight) +
                                      " is below the uncertainty halfwidth");
            rate = RateInterval(lo, e.weight + *uncertainty_halfwidth);
        }
        add_infection(net, ids[e.dst], ids[e.src], rate);
    }
    sir_initial_state(net, ids);

    std::vector<std::uint64_t> labels(net.num_species());
    for (const auto& x : ids) {
        labels[x.s] = 0;
        labels[x.i] = 1;
        labels[x.r] = 2;
        labels[x.v] = 3;
    }
    if (!ids.empty()) doc.initial_partition = Partition::from_labels(labels);
    return doc;
}

WeightedGraph star_graph(std::size_t n, double weight) {
    WeightedGraph g;
    for (std::size_t i = 1; i <= n; ++i) g.nodes.push_back(std::to_string(i));
    for (std::size_t j = 1; j < n; ++j) {
        g.edges.push_back({0, j, weight});
        g.edges.push_back({j, 0, weight});
    }
    return g;
}

ModelDocument gen_multisite(std::size_t n, RateInterval assoc, RateInterval dissoc, std::size_t max_sites) {
    if (n < 1) throw StructuralError("multisite needs at least one site");
    if (n > max_sites)
        throw StructuralError("multisite with " + std::to_string(n) + " sites exceeds the cap of " +
                              std::to_string(max_sites));
    ModelDocument doc;
    doc.source = "<multisite>";
    auto& net = doc.ccrn;
    const std::size_t count = std::size_t{1} << n;
    const auto b = net.add_species("B");

    // Site i (1-based) is bit i−1 of the configuration mask; names print
    // sites 1..n left to right, and species are declared in name order.
    auto name_of = [n](std::size_t mask) {
        std::string s = "A";
        for (std::size_t i = 0; i < n; ++i) s += (mask >> i) & 1U ? '1' : '0';
        return s;
    };
    std::vector<std::size_t> by_name(count);
    for (std::size_t m = 0; m < count; ++m) by_name[m] = m;
    std::sort(by_name.begin(), by_name.end(),
              [&](std::size_t x, std::size_t y) { return name_of(x) < name_of(y); });
    std::vector<SpeciesIndex> id(count);
    for (auto m : by_name) id[m] = net.add_species(name_of(m));

    for (std::size_t m = 0; m < count; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            if ((m >> i) & 1U) continue;
            const auto bound = m | (std::size_t{1} << i);
            net.add_reaction(Multiset({{id[m], 1}, {b, 1}}), Multiset::single(id[bound]), assoc);
            net.add_reaction(Multiset::single(id[bound]), Multiset({{id[m], 1}, {b, 1}}), dissoc);
        }
    }
    net.initial.assign(net.num_species(), 0.0);
    net.initial[b] = 2.0;
    net.initial[id[0]] = 1.0;
    doc.initial_partition = Partition::trivial(net.num_species());
    return doc;
}

double reduction_ratio(const Partition& part, const std::vector<bool>& counted) {
    if (counted.size() != part.universe()) throw StructuralError("mask does not match the partition");
    std::size_t total = 0, blocks = 0;
    for (bool c : counted) total += c ? 1 : 0;
    for (const auto& blk : part.blocks())
        if (std::any_of(blk.begin(), blk.end(), [&](SpeciesIndex s) { return counted[s]; })) ++blocks;
    if (total == 0) throw StructuralError("no counted species");
    return static_cast<double>(blocks) / static_cast<double>(total);
}

std::vector<bool> sir_state_mask(const Ccrn& net) {
    std::vector<bool> mask(net.num_species());
    for (std::size_t s = 0; s < mask.size(); ++s) mask[s] = net.name(static_cast<SpeciesIndex>(s)).rfind("V_", 0) != 0;
    return mask;
}

}  // namespace ccrn
