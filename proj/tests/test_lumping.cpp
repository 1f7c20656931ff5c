#include <gtest/gtest.h>

#include <map>
#include <random>

#include <json.hpp>

#include "ccrn/generators.hpp"
#include "ccrn/lumping.hpp"
#include "support.hpp"

using namespace ccrn;
using ccrn::test::ms;

namespace {

std::string as_text(const Ccrn& net) {
    ModelDocument d;
    d.ccrn = net;
    return serialize_model(d);
}

// Example 1 with every upper bound distinct from its lower bound.
struct Ex1 : ::testing::Test {
    Ccrn net = ccrn::test::example1();
    Partition part = ccrn::test::example1_partition(net);
    SpeciesIndex B = net.index_of("B"), A00 = net.index_of("A00"), A01 = net.index_of("A01"),
                 A10 = net.index_of("A10"), A11 = net.index_of("A11");
    double hi(std::size_t r) const { return net.reaction(r - 1).rate.hi; }
};

// Species equivalence by brute force: every lifted class, every context of
// bounded size, straight from the definition of rr.
bool equivalence_by_definition(const Ccrn& net, const Partition& part) {
    std::vector<Multiset> products;
    for (const auto& r : net.reactions()) products.push_back(r.product);
    std::vector<Multiset> contexts{Multiset{}};
    for (const auto& r : net.reactions())
        for (const auto& [s, c] : r.reactant.entries()) contexts.push_back(r.reactant.minus(Multiset::single(s)));
    for (auto e : {Extremal::lower, Extremal::upper}) {
        for (const auto& blk : part.blocks()) {
            for (std::size_t m = 1; m < blk.size(); ++m) {
                for (const auto& rho : contexts) {
                    const auto a = rho.plus(Multiset::single(blk[0]));
                    const auto b = rho.plus(Multiset::single(blk[m]));
                    // aggregate over each lifted class reachable as a product
                    std::map<BlockProjection, std::pair<double, double>> agg;
                    for (const auto& pi : products) {
                        agg[block_projection(pi, part)];
                    }
                    agg[block_projection(a, part)];
                    for (auto& [cls, sums] : agg) {
                        std::vector<Multiset> members;
                        for (const auto& pi : products)
                            if (block_projection(pi, part) == cls) members.push_back(pi);
                        if (block_projection(a, part) == cls) {
                            members.push_back(a);
                            members.push_back(b);
                        }
                        std::sort(members.begin(), members.end());
                        members.erase(std::unique(members.begin(), members.end()), members.end());
                        for (const auto& pi : members) {
                            sums.first += rr(net, e, a, pi);
                            sums.second += rr(net, e, b, pi);
                        }
                        if (sums.first != sums.second) return false;
                    }
                }
            }
        }
    }
    return true;
}

}  // namespace

TEST_F(Ex1, RrOffDiagonalAndDiagonal) {
    EXPECT_EQ(rr(net, Extremal::upper, ms(net, {{"A01", 1}}), ms(net, {{"A00", 1}, {"B", 1}})), hi(4));
    EXPECT_EQ(rr(net, Extremal::upper, ms(net, {{"A01", 1}}), ms(net, {{"A00", 1}, {"B", 1}})),
              rr(net, Extremal::upper, ms(net, {{"A10", 1}}), ms(net, {{"A00", 1}, {"B", 1}})));
    const auto s = ms(net, {{"A00", 1}, {"B", 1}});
    EXPECT_EQ(rr(net, Extremal::upper, s, s), -(hi(1) + hi(3)));
    EXPECT_EQ(rr(net, Extremal::lower, ms(net, {{"B", 2}}), ms(net, {{"A11", 1}})), 0.0);
}

TEST_F(Ex1, SignatureOfA01) {
    auto sig = compute_signature(net, part, Extremal::upper, A01);
    Signature expected{{{Multiset{}, lift(ms(net, {{"A00", 1}, {"B", 1}}), part)}, hi(4)},
                       {{Multiset::single(B), lift(ms(net, {{"A11", 1}}), part)}, hi(7)}};
    EXPECT_EQ(sig, expected);
}

TEST_F(Ex1, SignatureOfA00AggregatesBothBindings) {
    auto sig = compute_signature(net, part, Extremal::upper, A00);
    ASSERT_EQ(sig.size(), 1u);
    EXPECT_EQ(sig.begin()->first.context, Multiset::single(B));
    EXPECT_EQ(sig.begin()->first.target, lift(ms(net, {{"A10", 1}}), part));
    EXPECT_EQ(sig.begin()->second, hi(1) + hi(3));
}

TEST(Signature, SpeciesWithoutReactionsIsEmpty) {
    auto net = parse_model("species A B\nA -> B , 1\n").ccrn;
    EXPECT_TRUE(compute_signature(net, Partition::trivial(2), Extremal::lower, 1).empty());
}

TEST(Signature, NoOpAndDiagonalSuppressed) {
    auto net = parse_model("species A B\nA -> A , 3\nA -> B , 1\n").ccrn;
    // A and B share a block, so A -> B stays inside the source class
    EXPECT_TRUE(compute_signature(net, Partition::trivial(2), Extremal::lower, 0).empty());
    auto sig = compute_signature(net, Partition::discrete(2), Extremal::lower, 0);
    ASSERT_EQ(sig.size(), 1u);
    EXPECT_EQ(sig.begin()->second, 1.0);
}

TEST_F(Ex1, StablePartitionIsKept) {
    EXPECT_EQ(refine_once(net, part, Extremal::lower), part);
    EXPECT_EQ(coarsest_equivalence(net, part), part);
    EXPECT_EQ(refine_once(net, Partition::discrete(5), Extremal::upper), Partition::discrete(5));
}

TEST_F(Ex1, IsolatingA10GivesSingletons) {
    auto g = parse_partition("partition { A10 }", net);
    EXPECT_EQ(coarsest_equivalence(net, g), Partition::discrete(5));
}

TEST_F(Ex1, FromOneBlockFindsSiteCount) {
    auto h = coarsest_equivalence(net, Partition::trivial(5));
    EXPECT_EQ(h, part);
}

TEST_F(Ex1, CheckEquivalence) {
    EXPECT_TRUE(check_equivalence(net, part));
    EXPECT_TRUE(check_equivalence(net, Partition::discrete(5)));
    EXPECT_FALSE(check_equivalence(net, Partition::trivial(5)));
}

TEST_F(Ex1, PerturbedDissociationBreaksEquivalence) {
    auto r2 = net.reaction(1).rate;
    net.set_rate(1, RateInterval(r2.lo, r2.hi + 0.01));
    EXPECT_FALSE(check_equivalence(net, part));
    EXPECT_EQ(coarsest_equivalence(net, part), Partition::discrete(5));
}

TEST_F(Ex1, PerturbedSecondBindingBreaksEquivalence) {
    auto r5 = net.reaction(4).rate;
    net.set_rate(4, RateInterval(r5.lo, r5.hi + 0.01));
    EXPECT_FALSE(check_equivalence(net, part));
}

// Binding rates out of A00 land in one lifted class whatever their split, so
// an asymmetric change to the first binding keeps the partition.
TEST_F(Ex1, PerturbedFirstBindingKeepsEquivalence) {
    auto r1 = net.reaction(0).rate;
    net.set_rate(0, RateInterval(r1.lo, r1.hi + 0.01));
    EXPECT_TRUE(check_equivalence(net, part));
}

TEST_F(Ex1, QuotientMatchesHandLumpedNetwork) {
    auto q = quotient(net, part);
    const auto& l = q.lumped;
    ASSERT_EQ(l.num_species(), 4u);
    EXPECT_EQ(l.name(0), "B");
    EXPECT_EQ(l.name(1), "A00");
    EXPECT_EQ(l.name(2), "A01");
    EXPECT_EQ(l.name(3), "A11");
    ASSERT_EQ(l.num_reactions(), 4u);
    auto lo = [&](std::size_t r) { return net.reaction(r - 1).rate.lo; };
    const Multiset b = Multiset::single(0), a00 = Multiset::single(1), a01 = Multiset::single(2),
                   a11 = Multiset::single(3);
    EXPECT_EQ(l.reaction(0).reactant, a00.plus(b));
    EXPECT_EQ(l.reaction(0).product, a01);
    EXPECT_EQ(l.reaction(0).rate, RateInterval(lo(1) + lo(3), hi(1) + hi(3)));
    EXPECT_EQ(l.reaction(1).reactant, a01);
    EXPECT_EQ(l.reaction(1).product, a00.plus(b));
    EXPECT_EQ(l.reaction(1).rate, RateInterval(lo(4), hi(4)));
    EXPECT_EQ(l.reaction(2).reactant, a11);
    EXPECT_EQ(l.reaction(2).product, a01.plus(b));
    EXPECT_EQ(l.reaction(2).rate, RateInterval(lo(6) + lo(8), hi(6) + hi(8)));
    EXPECT_EQ(l.reaction(3).reactant, a01.plus(b));
    EXPECT_EQ(l.reaction(3).product, a11);
    EXPECT_EQ(l.reaction(3).rate, RateInterval(lo(7), hi(7)));
    EXPECT_EQ(l.initial, (std::vector<double>{2.0, 1.0, 0.0, 0.0}));
    EXPECT_EQ(q.map.representative, (std::vector<SpeciesIndex>{B, A00, A01, A11}));
    EXPECT_EQ(q.map.member_of[A10], 2u);
}

TEST_F(Ex1, QuotientRejectsNonEquivalence) {
    EXPECT_THROW((void)quotient(net, Partition::trivial(5)), InvalidPartitionError);
}

TEST_F(Ex1, QuotientUnderFinestIsIdentity) {
    auto q = quotient(net, Partition::discrete(5));
    ASSERT_EQ(q.lumped.num_reactions(), net.num_reactions());
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
        EXPECT_EQ(q.lumped.reaction(r).reactant, net.reaction(r).reactant);
        EXPECT_EQ(q.lumped.reaction(r).product, net.reaction(r).product);
        EXPECT_EQ(q.lumped.reaction(r).rate, net.reaction(r).rate);
    }
}

TEST_F(Ex1, BlockMapJson) {
    auto q = quotient(net, part);
    auto j = nlohmann::json::parse(block_map_json(net, part, q.map));
    ASSERT_EQ(j["blocks"].size(), 4u);
    EXPECT_EQ(j["blocks"][2]["representative"], "A01");
    EXPECT_EQ(j["blocks"][2]["members"], nlohmann::json::array({"A01", "A10"}));
}

TEST(Quotient, MultisiteThreeSitesIsChain) {
    auto doc = gen_multisite(3);
    auto h = coarsest_equivalence(doc.ccrn, doc.partition_or_trivial());
    auto q = quotient(doc.ccrn, h);
    EXPECT_EQ(q.lumped.num_species(), 5u);
    EXPECT_EQ(q.lumped.num_reactions(), 6u);
}

TEST(Tolerance, MergesNearlyEqualRates) {
    auto net = parse_model("species A B C\nA -> C , 1\nB -> C , 1.0000001\n").ccrn;
    auto g = parse_partition("partition { A B } { C }", net);
    EXPECT_EQ(coarsest_equivalence(net, g).num_blocks(), 3u);
    EXPECT_EQ(coarsest_equivalence(net, g, RefineOptions{1e-3}).num_blocks(), 2u);
    EXPECT_TRUE(check_equivalence(net, g, 1e-3));
    EXPECT_FALSE(check_equivalence(net, g));
}

// Properties over random networks.

TEST(LumpingProperties, SoundRefiningIdempotentAndJointAgrees) {
    std::mt19937_64 rng(2024);
    for (int it = 0; it < 400; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.max_species = 7, .max_reactions = 10});
        auto g = ccrn::test::random_partition(rng, net.num_species(), 3);
        RefinementStats stats;
        auto h = coarsest_equivalence(net, g, {}, &stats);
        EXPECT_TRUE(refines(h, g));
        EXPECT_TRUE(check_equivalence(net, h)) << as_text(net);
        EXPECT_EQ(coarsest_equivalence(net, h), h);
        EXPECT_EQ(coarsest_equivalence_joint(net, g), h);
        EXPECT_LE(stats.rounds, net.num_species() + 1);
        // a single-extremal pass never merges blocks
        EXPECT_TRUE(refines(refine_once(net, g, Extremal::lower), g));
    }
}

TEST(LumpingProperties, CheckerMatchesDefinition) {
    std::mt19937_64 rng(77);
    int positives = 0;
    for (int it = 0; it < 300; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.max_species = 4, .max_reactions = 6});
        auto p = ccrn::test::random_partition(rng, net.num_species(), 2);
        const bool fast = check_equivalence(net, p);
        positives += fast ? 1 : 0;
        EXPECT_EQ(fast, equivalence_by_definition(net, p)) << as_text(net);
    }
    EXPECT_GT(positives, 20);
}

TEST(LumpingProperties, CoarsestAmongAllEquivalences) {
    std::mt19937_64 rng(99);
    for (int it = 0; it < 150; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.max_species = 6, .max_reactions = 8});
        auto g = ccrn::test::random_partition(rng, net.num_species(), 2);
        auto h = coarsest_equivalence(net, g);
        ccrn::test::for_each_set_partition(net.num_species(), [&](const Partition& p) {
            if (refines(p, g) && check_equivalence(net, p)) {
                EXPECT_TRUE(refines(p, h));
            }
        });
    }
}

TEST(LumpingProperties, DegenerateIntervalsNeedOneExtremal) {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 200; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.max_species = 6, .max_reactions = 9, .intervals = false});
        auto g = ccrn::test::random_partition(rng, net.num_species(), 2);
        EXPECT_EQ(coarsest_equivalence(net, g), refine_once(net, g, Extremal::lower));
    }
}

TEST(LumpingProperties, RepresentativeChoiceGivesIsomorphicQuotients) {
    std::mt19937_64 rng(8);
    int nontrivial = 0;
    for (int it = 0; it < 200; ++it) {
        auto net = ccrn::test::random_ccrn(rng, {.max_species = 6, .max_reactions = 9});
        auto h = coarsest_equivalence(net, Partition::trivial(net.num_species()));
        std::vector<SpeciesIndex> reps;
        for (const auto& blk : h.blocks()) reps.push_back(blk.back());
        if (reps != std::vector<SpeciesIndex>(h.num_blocks())) ++nontrivial;
        auto a = quotient_with(net, h, [&] {
            std::vector<SpeciesIndex> r;
            for (const auto& blk : h.blocks()) r.push_back(blk.front());
            return r;
        }());
        auto b = quotient_with(net, h, reps);
        // lumped species are indexed by block in both, so reactions coincide
        // as (reactant, product) -> interval maps once no-ops are ignored
        auto as_map = [](const Ccrn& l) {
            std::map<std::pair<Multiset, Multiset>, std::pair<double, double>> m;
            for (const auto& r : l.reactions()) {
                if (r.reactant == r.product) continue;
                auto& e = m[{r.reactant, r.product}];
                e.first += r.rate.lo;
                e.second += r.rate.hi;
            }
            return m;
        };
        auto ma = as_map(a.lumped), mb = as_map(b.lumped);
        ASSERT_EQ(ma.size(), mb.size());
        for (const auto& [k, v] : ma) {
            ASSERT_TRUE(mb.contains(k));
            EXPECT_DOUBLE_EQ(v.first, mb[k].first);
            EXPECT_DOUBLE_EQ(v.second, mb[k].second);
        }
    }
    EXPECT_GT(nontrivial, 10);
}

TEST(LumpingProperties, UniverseMismatchRejected) {
    auto net = ccrn::test::example1();
    EXPECT_THROW((void)coarsest_equivalence(net, Partition::trivial(3)), StructuralError);
}
