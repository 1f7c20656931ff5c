#pragma once

// Shared fixtures for the test binaries.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ccrn/model.hpp"
#include "ccrn/parser.hpp"

namespace ccrn::test {

// Two-site binding with site-independent dyadic intervals, so every sum of
// rates the tests form is exact in binary floating point.
inline constexpr const char* kExample1 = R"(species B A00 A01 A10 A11
r1: A00 + B -> A10 , [0.75 : 1.25]
r2: A10 -> A00 + B , [0.375 : 0.625]
r3: A00 + B -> A01 , [0.75 : 1.25]
r4: A01 -> A00 + B , [0.375 : 0.625]
r5: A10 + B -> A11 , [1.5 : 2.5]
r6: A11 -> A10 + B , [0.25 : 0.75]
r7: A01 + B -> A11 , [1.5 : 2.5]
r8: A11 -> A01 + B , [0.25 : 0.75]
init B = 2, A00 = 1
)";

inline Ccrn example1() { return parse_model(kExample1).ccrn; }

// {B} {A00} {A01 A10} {A11}
inline Partition example1_partition(const Ccrn& net) {
    return parse_partition("partition { B } { A00 } { A01 A10 } { A11 }", net);
}

inline Multiset ms(const Ccrn& net, std::initializer_list<std::pair<const char*, std::uint32_t>> terms) {
    std::vector<Multiset::Entry> e;
    for (const auto& [name, cnt] : terms) e.emplace_back(net.index_of(name), cnt);
    return Multiset(std::move(e));
}

struct RandomCcrnOptions {
    std::size_t max_species = 5;
    std::size_t max_reactions = 8;
    std::uint32_t max_reactant = 2;
    bool population_non_increasing = false;
    bool intervals = true;
};

// Rates are multiples of 0.25 drawn from a tiny set so that coincidences,
// and hence non-trivial equivalences, are frequent and sums stay exact.
inline Ccrn random_ccrn(std::mt19937_64& rng, const RandomCcrnOptions& opt = {}) {
    std::uniform_int_distribution<std::size_t> nsp(1, opt.max_species);
    const auto n = nsp(rng);
    Ccrn net;
    for (std::size_t i = 0; i < n; ++i) net.add_species("X" + std::to_string(i));
    std::uniform_int_distribution<std::size_t> nre(0, opt.max_reactions);
    std::uniform_int_distribution<std::uint32_t> sp(0, static_cast<std::uint32_t>(n - 1));
    std::uniform_int_distribution<std::uint32_t> size(0, opt.max_reactant);
    std::uniform_int_distribution<int> rate_pick(0, 3);
    const double lo_vals[] = {0.25, 0.5, 0.5, 1.0};
    const auto nr = nre(rng);
    for (std::size_t r = 0; r < nr; ++r) {
        Multiset reactant, product;
        const auto rs = std::max<std::uint32_t>(1, size(rng));
        for (std::uint32_t k = 0; k < rs; ++k) reactant.add(sp(rng));
        auto ps = size(rng);
        if (opt.population_non_increasing) ps = std::min<std::uint32_t>(ps, rs);
        for (std::uint32_t k = 0; k < ps; ++k) product.add(sp(rng));
        const double lo = lo_vals[rate_pick(rng)];
        const double hi = opt.intervals ? lo + 0.25 * rate_pick(rng) : lo;
        net.add_reaction(std::move(reactant), std::move(product), RateInterval(lo, hi));
    }
    return net;
}

inline Partition random_partition(std::mt19937_64& rng, std::size_t n, std::size_t max_blocks) {
    std::uniform_int_distribution<std::uint64_t> lab(0, std::max<std::size_t>(1, max_blocks) - 1);
    std::vector<std::uint64_t> labels(n);
    for (auto& l : labels) l = lab(rng);
    return Partition::from_labels(labels);
}

// Calls f on every set partition of {0..n-1} (restricted growth strings).
inline void for_each_set_partition(std::size_t n, const std::function<void(const Partition&)>& f) {
    std::vector<std::uint64_t> a(n, 0);
    std::function<void(std::size_t, std::uint64_t)> rec = [&](std::size_t i, std::uint64_t max_used) {
        if (i == n) {
            f(Partition::from_labels(a));
            return;
        }
        for (std::uint64_t v = 0; v <= max_used + 1; ++v) {
            a[i] = v;
            rec(i + 1, std::max(max_used, v));
        }
    };
    if (n == 0) return;
    a[0] = 0;
    rec(1, 0);
}

}  // namespace ccrn::test
