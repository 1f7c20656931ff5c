#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ccrn/ctmc.hpp"
#include "ccrn/generators.hpp"
#include "ccrn/lumping.hpp"
#include "ccrn/ode.hpp"
#include "support.hpp"

using namespace ccrn;
using ccrn::test::ms;

namespace {

std::vector<Multiset> sorted_states(const StateSpace& s) {
    auto v = s.states;
    std::sort(v.begin(), v.end());
    return v;
}

bool oracle(const Ccrn& net, const StateSpace& space, const Partition& part) {
    return check_ordinary_lumpability(build_generator(space, net, Extremal::lower), space, part).lumpable &&
           check_ordinary_lumpability(build_generator(space, net, Extremal::upper), space, part).lumpable;
}

// Same network with one reaction's upper bound raised.
Ccrn bump_upper(const Ccrn& net, std::size_t r, double by) {
    Ccrn out;
    for (SpeciesIndex s = 0; s < net.num_species(); ++s) out.add_species(net.name(s));
    for (const auto& x : net.reactions())
        out.add_reaction(x.reactant, x.product, x.id == r ? RateInterval(x.rate.lo, x.rate.hi + by) : x.rate, x.label);
    out.initial = net.initial;
    return out;
}

}  // namespace

TEST(EnumerateStates, Example1BindingPair) {
    auto net = ccrn::test::example1();
    auto init = ms(net, {{"A00", 1}, {"B", 1}});
    auto space = enumerate_states(net, init, 2);
    EXPECT_EQ(space.states.front(), init);
    std::vector<Multiset> want{init, ms(net, {{"A10", 1}}), ms(net, {{"A01", 1}})};
    std::sort(want.begin(), want.end());
    EXPECT_EQ(sorted_states(space), want);
    EXPECT_FALSE(space.truncated);
    for (std::size_t i = 0; i < space.size(); ++i) EXPECT_EQ(space.find(space.states[i]), i);
}

TEST(EnumerateStates, NoReactionsGivesSingleton) {
    Ccrn net;
    net.add_species("A");
    auto space = enumerate_states(net, Multiset::single(0, 2), 5);
    ASSERT_EQ(space.size(), 1u);
    EXPECT_FALSE(space.truncated);
}

TEST(EnumerateStates, CreationIsTruncated) {
    auto net = parse_model("A -> A + A , 1\n").ccrn;
    auto space = enumerate_states(net, Multiset::single(0), 3);
    EXPECT_EQ(space.states,
              (std::vector<Multiset>{Multiset::single(0, 1), Multiset::single(0, 2), Multiset::single(0, 3)}));
    EXPECT_TRUE(space.truncated);
    EXPECT_THROW((void)enumerate_states(net, Multiset::single(0), 100, 10), CapacityError);
    EXPECT_THROW((void)enumerate_states(net, Multiset::single(0, 4), 3), StructuralError);
}

TEST(EnumerateStates, LevelsAreLexicographic) {
    auto net = ccrn::test::example1();
    auto space = enumerate_states(net, ms(net, {{"A00", 1}, {"B", 2}}), 3);
    // BFS distance from the seed never decreases along the listing
    std::vector<std::size_t> dist(space.size(), 0);
    for (std::size_t i = 1; i < space.size(); ++i) {
        std::size_t best = space.size();
        for (std::size_t j = 0; j < i; ++j) {
            for (const auto& r : net.reactions()) {
                if (!space.states[j].contains(r.reactant)) continue;
                if (space.states[j].minus(r.reactant).plus(r.product) == space.states[i]) best = std::min(best, dist[j] + 1);
            }
        }
        dist[i] = best;
        EXPECT_GE(dist[i], dist[i - 1]);
        if (dist[i] == dist[i - 1]) {
            EXPECT_LT(space.states[i - 1], space.states[i]);
        }
    }
    EXPECT_FALSE(space.truncated);
}

TEST(AllMultisets, CountsAndClosure) {
    auto net = parse_model("species A B C\nA + B -> C , 1\n").ccrn;
    auto space = all_multisets(net, 3);
    EXPECT_EQ(space.size(), 20u);  // C(3 + 3, 3)
    EXPECT_FALSE(space.truncated);
    auto grow = parse_model("species A B\nA -> A + B , 1\n").ccrn;
    EXPECT_TRUE(all_multisets(grow, 2).truncated);
}

TEST(BuildGenerator, Example1OutgoingRates) {
    auto net = ccrn::test::example1();
    auto sigma = ms(net, {{"A01", 1}, {"A10", 1}, {"B", 1}});
    auto space = enumerate_states(net, sigma, 4);
    auto gen = build_generator(space, net, Extremal::upper);
    const auto i = *space.find(sigma);
    auto at = [&](std::initializer_list<std::pair<const char*, std::uint32_t>> t) {
        return gen.rate(i, *space.find(ms(net, t)));
    };
    auto hi = [&](std::size_t k) { return net.reaction(k - 1).rate.hi; };
    EXPECT_EQ(at({{"A11", 1}, {"A10", 1}}), hi(7));
    EXPECT_EQ(at({{"A11", 1}, {"A01", 1}}), hi(5));
    EXPECT_EQ(at({{"A00", 1}, {"A10", 1}, {"B", 2}}), hi(4));
    EXPECT_EQ(at({{"A00", 1}, {"A01", 1}, {"B", 2}}), hi(2));
    EXPECT_EQ(gen.rows[i].size(), 4u);
    EXPECT_EQ(gen.diag[i], -(hi(7) + hi(5) + hi(4) + hi(2)));
}

TEST(BuildGenerator, PairAnnihilation) {
    auto net = parse_model("2 A -> 0 , [0.5 : 3]\n").ccrn;
    auto space = enumerate_states(net, Multiset::single(0, 2), 2);
    auto gen = build_generator(space, net, Extremal::upper);
    EXPECT_EQ(gen.rate(*space.find(Multiset::single(0, 2)), *space.find(Multiset{})), 3.0);
    auto lo = build_generator(space, net, Extremal::lower);
    EXPECT_EQ(lo.rate(0, 1), 0.5);
}

TEST(BuildGenerator, NoReactionsZeroMatrix) {
    Ccrn net;
    net.add_species("A");
    net.add_species("B");
    auto space = all_multisets(net, 2);
    auto gen = build_generator(space, net, Extremal::upper);
    for (std::size_t i = 0; i < gen.size(); ++i) {
        EXPECT_TRUE(gen.rows[i].empty());
        EXPECT_EQ(gen.diag[i], 0.0);
    }
}

TEST(BuildGenerator, RowsSumToZeroExactly) {
    std::mt19937_64 rng(1);
    for (int it = 0; it < 100; ++it) {
        auto net = ccrn::test::random_ccrn(rng);
        auto space = all_multisets(net, 3);
        for (auto e : {Extremal::lower, Extremal::upper}) {
            auto gen = build_generator(space, net, e);
            for (std::size_t i = 0; i < gen.size(); ++i) {
                double s = gen.diag[i];
                double out = 0.0;
                for (const auto& [j, q] : gen.rows[i]) {
                    EXPECT_GT(q, 0.0);
                    EXPECT_NE(j, i);
                    out += q;
                }
                EXPECT_EQ(s + out, 0.0);
            }
        }
    }
}

TEST(Lumpability, DiscretePartitionAlwaysLumpable) {
    std::mt19937_64 rng(2);
    for (int it = 0; it < 50; ++it) {
        auto net = ccrn::test::random_ccrn(rng);
        auto space = all_multisets(net, 3);
        EXPECT_TRUE(oracle(net, space, Partition::discrete(net.num_species())));
    }
}

TEST(Lumpability, Example1) {
    auto net = ccrn::test::example1();
    auto part = ccrn::test::example1_partition(net);
    auto space = enumerate_states(net, ms(net, {{"A00", 1}, {"B", 2}}), 3);
    EXPECT_FALSE(space.truncated);
    EXPECT_TRUE(oracle(net, space, part));

    auto bad = bump_upper(net, 4, 0.01);  // r5
    auto gen = build_generator(space, bad, Extremal::upper);
    auto res = check_ordinary_lumpability(gen, space, part);
    ASSERT_FALSE(res.lumpable);
    ASSERT_TRUE(res.counterexample.has_value());
    const auto& c = *res.counterexample;
    EXPECT_EQ(block_projection(space.states[c.state_a], part), block_projection(space.states[c.state_b], part));
    EXPECT_NE(c.rate_a, c.rate_b);
    // the two contexts are A01 + B and A10 + B
    std::vector<Multiset> pair{space.states[c.state_a], space.states[c.state_b]};
    std::sort(pair.begin(), pair.end());
    std::vector<Multiset> want{ms(net, {{"A01", 1}, {"B", 1}}), ms(net, {{"A10", 1}, {"B", 1}})};
    std::sort(want.begin(), want.end());
    EXPECT_EQ(pair, want);
    EXPECT_TRUE(check_ordinary_lumpability(build_generator(space, bad, Extremal::lower), space, part).lumpable);

    auto json = counterexample_json(c, space, bad, part, Extremal::upper);
    EXPECT_NE(json.find("\"upper\""), std::string::npos);
    EXPECT_NE(json.find("A11"), std::string::npos);
}

TEST(Lumpability, AgreesWithReactionLevelCheckOnRandomNetworks) {
    std::mt19937_64 rng(3);
    int agree_true = 0, agree_false = 0;
    for (int it = 0; it < 200; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.population_non_increasing = true});
        const std::uint64_t K = 2 + rng() % 3;
        auto space = all_multisets(net, K);
        ASSERT_FALSE(space.truncated);
        auto h = coarsest_equivalence(net, ccrn::test::random_partition(rng, net.num_species(), 2));
        std::vector<std::pair<Ccrn, Partition>> cases{
            {net, h},
            {net, ccrn::test::random_partition(rng, net.num_species(), 3)},
            {net, Partition::trivial(net.num_species())}};
        if (net.num_reactions() > 0) cases.emplace_back(bump_upper(net, rng() % net.num_reactions(), 0.25), h);
        for (const auto& [n, p] : cases) {
            const bool fast = check_equivalence(n, p);
            EXPECT_EQ(fast, oracle(n, space, p)) << serialize_partition(p, n);
            (fast ? agree_true : agree_false) += 1;
        }
    }
    EXPECT_GT(agree_true, 100);
    EXPECT_GT(agree_false, 50);
}

TEST(Transient, TimeZeroIsIdentity) {
    auto net = ccrn::test::example1();
    auto space = enumerate_states(net, ms(net, {{"A00", 1}, {"B", 2}}), 3);
    auto gen = build_generator(space, net, Extremal::lower);
    std::vector<double> p0(space.size(), 0.0);
    p0[0] = 1.0;
    EXPECT_EQ(transient_solve(gen, p0, 0.0).p, p0);
    std::vector<double> bad(space.size(), 0.0);
    bad[0] = 0.5;
    EXPECT_THROW((void)transient_solve(gen, bad, 1.0), StructuralError);
}

TEST(Transient, TwoStateClosedForm) {
    auto net = parse_model("A -> B , 1\nB -> A , 1\n").ccrn;
    auto space = enumerate_states(net, Multiset::single(0), 1);
    auto gen = build_generator(space, net, Extremal::upper);
    const auto a = *space.find(Multiset::single(0)), b = *space.find(Multiset::single(1));
    std::vector<double> p0(2, 0.0);
    p0[a] = 1.0;
    for (double t : {0.1, 0.3, 1.0, 2.5}) {
        auto r = transient_solve(gen, p0, t);
        EXPECT_NEAR(r.p[a], 0.5 * (1 + std::exp(-2 * t)), 1e-12);
        EXPECT_NEAR(r.p[b], 0.5 * (1 - std::exp(-2 * t)), 1e-12);
        EXPECT_FALSE(r.approximate);
    }
    auto late = transient_solve(gen, p0, 10.0);
    EXPECT_NEAR(late.p[a], 0.5, 1e-6);
    EXPECT_NEAR(late.p[a] + late.p[b], 1.0, 1e-10);
}

TEST(Transient, LongHorizonIsChunked) {
    auto net = parse_model("A -> B , 40\nB -> A , 40\n").ccrn;
    auto space = enumerate_states(net, Multiset::single(0), 1);
    auto gen = build_generator(space, net, Extremal::upper);
    std::vector<double> p0{1.0, 0.0};
    auto r = transient_solve(gen, p0, 30.0);  // Λt = 2400
    EXPECT_NEAR(r.p[0], 0.5, 1e-10);
    EXPECT_NEAR(r.p[0] + r.p[1], 1.0, 1e-10);
}

TEST(Transient, QuotientCommutesWithAggregation) {
    auto net = ccrn::test::example1();
    auto part = ccrn::test::example1_partition(net);
    auto q = quotient(net, part);
    auto init = ms(net, {{"A00", 1}, {"B", 2}});
    auto space = enumerate_states(net, init, 3);
    auto lumped_init = lift(init, part);
    auto lspace = enumerate_states(q.lumped, lumped_init, 3);
    ASSERT_FALSE(lspace.truncated);
    for (auto e : {Extremal::lower, Extremal::upper}) {
        auto gen = build_generator(space, net, e);
        auto lgen = build_generator(lspace, q.lumped, e);
        std::vector<double> p0(space.size(), 0.0), l0(lspace.size(), 0.0);
        p0[*space.find(init)] = 1.0;
        l0[*lspace.find(lumped_init)] = 1.0;
        for (double t : {0.5, 1.0, 5.0}) {
            auto orig = class_distribution(space, transient_solve(gen, p0, t).p, part);
            auto lumped = transient_solve(lgen, l0, t).p;
            ASSERT_EQ(orig.size(), lspace.size());
            for (std::size_t j = 0; j < lspace.size(); ++j) {
                BlockProjection key{std::vector<std::uint64_t>(4, 0)};
                for (const auto& [b, c] : lspace.states[j].entries()) key.counts[b] = c;
                ASSERT_TRUE(orig.contains(key));
                EXPECT_NEAR(orig[key], lumped[j], 1e-9);
            }
        }
    }
}

TEST(ScaledRates, UnitScaleMatchesGenerator) {
    auto net = ccrn::test::example1();
    auto space = all_multisets(net, 3);
    auto gen = build_generator(space, net, Extremal::upper);
    ScaledRates sr(net, Extremal::upper, 1, 3.0);
    for (std::size_t i = 0; i < space.size(); ++i) {
        for (const auto& [target, rate] : sr.outgoing(space.states[i])) {
            auto j = space.find(target);
            if (!j) continue;  // leaves the enumerated space
            EXPECT_EQ(rate, gen.rate(i, *j));
        }
    }
}

TEST(ScaledRates, CutoffAndScaling) {
    auto net = parse_model("A + B -> C , 1\nC -> A + B , 2\n").ccrn;
    const auto A = net.index_of("A"), B = net.index_of("B"), C = net.index_of("C");
    ScaledRates sr(net, Extremal::upper, 10, 1.0);
    Multiset x({{A, 3}, {B, 2}});
    EXPECT_EQ(sr.cutoff(x), 1.0);  // |x| = 5 ≤ N·c = 10
    auto out = sr.outgoing(x);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out[0].second, 1.0 / 10.0 * 6.0);
    Multiset mid({{A, 5}, {B, 5}, {C, 5}});  // |x| = 15 → g = 0.5
    EXPECT_EQ(sr.cutoff(mid), 0.5);
    Multiset far({{A, 10}, {B, 10}});
    EXPECT_EQ(sr.cutoff(far), 0.0);
    for (const auto& [t, r] : sr.outgoing(far)) EXPECT_EQ(r, 0.0);
    Multiset one_c = Multiset::single(C, 1);
    auto back = sr.outgoing(one_c);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].second, 2.0);  // unimolecular: no scaling
}

TEST(Ssa, ZeroRatesConstantPath) {
    auto net = parse_model("A -> B , [0 : 1]\n").ccrn;
    auto path = ssa_simulate(net, Multiset::single(0, 5), std::vector<double>{0.0}, 10.0, 1);
    EXPECT_EQ(path.times.size(), 1u);
    EXPECT_EQ(path.at(7.0), (std::vector<std::uint64_t>{5, 0}));
}

TEST(Ssa, ReproducibleForSeed) {
    auto net = ccrn::test::example1();
    auto init = ms(net, {{"A00", 10}, {"B", 20}});
    std::vector<double> a;
    for (const auto& r : net.reactions()) a.push_back(r.rate.hi);
    auto p1 = ssa_simulate(net, init, a, 5.0, 9);
    auto p2 = ssa_simulate(net, init, a, 5.0, 9);
    auto p3 = ssa_simulate(net, init, a, 5.0, 10);
    EXPECT_EQ(p1.times, p2.times);
    EXPECT_EQ(p1.states, p2.states);
    EXPECT_NE(p1.times, p3.times);
    // binding conserves A sites and B + bound sites
    for (const auto& x : p1.states) {
        EXPECT_EQ(x[1] + x[2] + x[3] + x[4], 10u);
        EXPECT_EQ(x[0] + x[2] + x[3] + 2 * x[4], 20u);
    }
}

TEST(Ssa, DeathProcessMean) {
    auto net = parse_model("A -> 0 , 1\n").ccrn;
    const int paths = 10000;
    double sum = 0.0;
    for (int s = 0; s < paths; ++s)
        sum += static_cast<double>(ssa_simulate(net, Multiset::single(0, 100), std::vector<double>{1.0}, 1.0,
                                                static_cast<std::uint64_t>(s))
                                       .at(1.0)[0]);
    const double p = std::exp(-1.0);
    const double se = std::sqrt(100.0 * p * (1 - p) / paths);
    EXPECT_NEAR(sum / paths, 100.0 * p, 3.0 * se);
}

TEST(Ssa, HoldingTimesAreExponential) {
    auto net = parse_model("A -> 0 , 2\n").ccrn;
    const std::size_t n = 2000;
    std::vector<double> t;
    for (std::size_t s = 0; s < n; ++s) {
        auto path = ssa_simulate(net, Multiset::single(0), std::vector<double>{2.0}, 1e9, s + 1);
        ASSERT_EQ(path.times.size(), 2u);
        t.push_back(path.times[1]);
    }
    std::sort(t.begin(), t.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = 1.0 - std::exp(-2.0 * t[i]);
        d = std::max({d, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
    }
    EXPECT_LT(d, 1.628 / std::sqrt(static_cast<double>(n)));  // 1% critical value
}

TEST(Ssa, OverflowAbortsWithState) {
    auto net = parse_model("200 A -> 0 , 1\n").ccrn;
    try {
        (void)ssa_simulate(net, Multiset::single(0, 4000000000u), std::vector<double>{1.0}, 1.0, 1);
        FAIL() << "no overflow";
    } catch (const PropensityOverflowError& e) {
        EXPECT_EQ(e.state(), (std::vector<std::uint64_t>{4000000000u}));
        EXPECT_EQ(e.time(), 0.0);
    }
}

TEST(Ssa, ControlsOutsideBoxRejected) {
    auto net = parse_model("A -> 0 , [1 : 2]\n").ccrn;
    EXPECT_THROW((void)ssa_simulate(net, Multiset::single(0), std::vector<double>{3.0}, 1.0, 1), StructuralError);
}

TEST(CtmcCsv, DistributionAndPath) {
    auto net = parse_model("A -> B , 1\n").ccrn;
    auto space = enumerate_states(net, Multiset::single(0), 1);
    auto text = distribution_csv(space, std::vector<double>{0.25, 0.75}, net);
    EXPECT_TRUE(text.starts_with("state,probability\n"));
    EXPECT_NE(text.find(",0.75\n"), std::string::npos);
    auto path = ssa_simulate(net, Multiset::single(0), std::vector<double>{1.0}, 100.0, 3);
    auto csv = jump_path_csv(path, species_names(net));
    EXPECT_TRUE(csv.starts_with("t,A,B\n0,1,0\n"));
}
