#include "ccrn/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "ccrn/parser.hpp"

namespace ccrn {

PropensityOverflowError::PropensityOverflowError(double t, std::vector<std::uint64_t> state)
    : std::runtime_error("propensity overflow at t=" + format_double(t)), time_(t), state_(std::move(state)) {}

std::optional<std::size_t> StateSpace::find(const Multiset& m) const {
    auto it = index.find(m);
    if (it == index.end()) return std::nullopt;
    return it->second;
}

namespace {

Multiset fire(const Multiset& sigma, const Reaction& r) { return sigma.minus(r.reactant).plus(r.product); }

void push_state(StateSpace& space, Multiset m, std::size_t cap) {
    if (space.states.size() >= cap)
        throw CapacityError("state space exceeds the cap of " + std::to_string(cap) + " states");
    space.index.emplace(m, space.states.size());
    space.states.push_back(std::move(m));
}

}  // namespace

StateSpace enumerate_states(const Ccrn& net, const Multiset& init, std::uint64_t pop_bound, std::size_t cap) {
    const Multiset seeds[] = {init};
    return enumerate_states(net, seeds, pop_bound, cap);
}

StateSpace enumerate_states(const Ccrn& net, std::span<const Multiset> seeds, std::uint64_t pop_bound,
                            std::size_t cap) {
    StateSpace space;
    std::vector<Multiset> level;
    for (const auto& s : seeds) {
        if (s.size() > pop_bound) throw StructuralError("population bound is below the initial population");
        for (const auto& [idx, cnt] : s.entries())
            if (idx >= net.num_species()) throw StructuralError("initial state mentions an unknown species");
        level.push_back(s);
    }
    std::sort(level.begin(), level.end());
    level.erase(std::unique(level.begin(), level.end()), level.end());
    for (auto& s : level) push_state(space, s, cap);

    while (!level.empty()) {
        std::set<Multiset> next;
        for (const auto& sigma : level) {
            for (const auto& r : net.reactions()) {
                if (r.is_noop() || !sigma.contains(r.reactant)) continue;
                auto theta = fire(sigma, r);
                if (theta.size() > pop_bound) {
                    space.truncated = true;
                    continue;
                }
                if (!space.index.contains(theta)) next.insert(std::move(theta));
            }
        }
        level.assign(next.begin(), next.end());
        for (const auto& s : level) push_state(space, s, cap);
    }
    return space;
}

StateSpace all_multisets(const Ccrn& net, std::uint64_t max_size, std::size_t cap) {
    const auto n = net.num_species();
    StateSpace space;
    std::vector<std::uint32_t> counts(n, 0);
    for (std::uint64_t size = 0; size <= max_size; ++size) {
        std::vector<Multiset> level;
        std::function<void(std::size_t, std::uint64_t)> fill = [&](std::size_t pos, std::uint64_t left) {
            if (pos + 1 >= n) {
                if (n == 0) {
                    if (left == 0) level.push_back(Multiset{});
                    return;
                }
                counts[pos] = static_cast<std::uint32_t>(left);
                level.push_back(Multiset::from_dense(counts));
                counts[pos] = 0;
                return;
            }
            for (std::uint64_t k = 0; k <= left; ++k) {
                counts[pos] = static_cast<std::uint32_t>(k);
                fill(pos + 1, left - k);
            }
            counts[pos] = 0;
        };
        fill(0, size);
        std::sort(level.begin(), level.end());
        for (auto& s : level) push_state(space, std::move(s), cap);
        if (n == 0) break;
    }
    for (const auto& sigma : space.states)
        for (const auto& r : net.reactions())
            if (!r.is_noop() && sigma.contains(r.reactant) && fire(sigma, r).size() > max_size) space.truncated = true;
    return space;
}

double Generator::rate(std::size_t from, std::size_t to) const {
    if (from == to) return diag.at(from);
    const auto& row = rows.at(from);
    auto it = std::lower_bound(row.begin(), row.end(), to, [](const auto& e, std::size_t t) { return e.first < t; });
    return it != row.end() && it->first == to ? it->second : 0.0;
}

Generator build_generator(const StateSpace& space, const Ccrn& net, Extremal e) {
    std::vector<double> alpha;
    alpha.reserve(net.num_reactions());
    for (const auto& r : net.reactions()) alpha.push_back(extremal_rate(r.rate, e));
    return build_generator(space, net, alpha);
}

Generator build_generator(const StateSpace& space, const Ccrn& net, std::span<const double> alpha) {
    if (alpha.size() != net.num_reactions()) throw StructuralError("one rate per reaction expected");
    Generator gen;
    gen.rows.resize(space.size());
    gen.diag.assign(space.size(), 0.0);
    std::vector<std::pair<std::size_t, double>> contrib;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& sigma = space.states[i];
        contrib.clear();
        for (const auto& r : net.reactions()) {
            if (r.is_noop()) continue;
            const auto fb = falling_binomial(sigma, r.reactant);
            if (fb == 0) continue;
            const double rate = alpha[r.id] * static_cast<double>(fb);
            if (rate == 0.0) continue;
            auto j = space.find(fire(sigma, r));
            if (!j) {
                gen.truncated = true;
                continue;
            }
            contrib.emplace_back(*j, rate);
        }
        // merge per target, summing in reaction order
        std::stable_sort(contrib.begin(), contrib.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& row = gen.rows[i];
        for (const auto& [j, q] : contrib) {
            if (!row.empty() && row.back().first == j)
                row.back().second += q;
            else
                row.emplace_back(j, q);
        }
        double out = 0.0;
        for (const auto& [j, q] : row) out += q;
        gen.diag[i] = -out;
    }
    return gen;
}

LumpabilityResult check_ordinary_lumpability(const Generator& gen, const StateSpace& space,
                                             const Partition& part) {
    std::map<BlockProjection, std::size_t> class_id;
    std::vector<BlockProjection> class_key;
    std::vector<std::size_t> cls(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        auto bp = block_projection(space.states[i], part);
        auto [it, fresh] = class_id.emplace(bp, class_key.size());
        if (fresh) class_key.push_back(std::move(bp));
        cls[i] = it->second;
    }

    auto aggregate = [&](std::size_t i) {
        std::map<std::size_t, double> agg;
        for (const auto& [j, q] : gen.rows[i])
            if (cls[j] != cls[i]) agg[cls[j]] += q;
        std::erase_if(agg, [](const auto& kv) { return kv.second == 0.0; });
        return agg;
    };

    std::vector<std::optional<std::size_t>> leader(class_key.size());
    std::vector<std::map<std::size_t, double>> leader_agg(class_key.size());
    LumpabilityResult res;
    for (std::size_t i = 0; i < space.size(); ++i) {
        auto agg = aggregate(i);
        const auto c = cls[i];
        if (!leader[c]) {
            leader[c] = i;
            leader_agg[c] = std::move(agg);
            continue;
        }
        const auto& ref = leader_agg[c];
        if (agg == ref) continue;
        LumpabilityCounterexample cex;
        cex.state_a = *leader[c];
        cex.state_b = i;
        // first class where the two aggregates disagree
        std::set<std::size_t> targets;
        for (const auto& [k, v] : ref) targets.insert(k);
        for (const auto& [k, v] : agg) targets.insert(k);
        for (auto k : targets) {
            const double a = ref.contains(k) ? ref.at(k) : 0.0;
            const double b = agg.contains(k) ? agg.at(k) : 0.0;
            if (a != b) {
                cex.target = class_key[k];
                cex.rate_a = a;
                cex.rate_b = b;
                break;
            }
        }
        res.lumpable = false;
        res.counterexample = std::move(cex);
        return res;
    }
    return res;
}

std::string counterexample_json(const LumpabilityCounterexample& cex, const StateSpace& space, const Ccrn& net,
                                const Partition& part, Extremal e) {
    nlohmann::json target = nlohmann::json::object();
    for (std::size_t b = 0; b < cex.target.counts.size(); ++b)
        if (cex.target.counts[b] != 0) target[net.name(part.representative(static_cast<BlockId>(b)))] =
            cex.target.counts[b];
    nlohmann::json j = {{"extremal", std::string(to_string(e))},
                        {"state_a", to_string(space.states.at(cex.state_a), net)},
                        {"state_b", to_string(space.states.at(cex.state_b), net)},
                        {"target_class", target},
                        {"rate_a", cex.rate_a},
                        {"rate_b", cex.rate_b}};
    return j.dump();
}

TransientResult transient_solve(const Generator& gen, std::span<const double> p0, double t) {
    const auto n = gen.size();
    if (p0.size() != n) throw StructuralError("initial distribution has wrong dimension");
    if (!(t >= 0.0) || !std::isfinite(t)) throw StructuralError("time must be nonnegative");
    double mass = 0.0;
    for (double x : p0) {
        if (x < 0.0) throw StructuralError("initial distribution has negative entries");
        mass += x;
    }
    if (std::abs(mass - 1.0) > 1e-10) throw StructuralError("initial distribution does not sum to 1");

    TransientResult res;
    res.approximate = gen.truncated;
    res.p.assign(p0.begin(), p0.end());
    double lambda = 0.0;
    for (double d : gen.diag) lambda = std::max(lambda, -d);
    if (lambda == 0.0 || t == 0.0) return res;

    const auto chunks = static_cast<std::size_t>(std::ceil(lambda * t / 50.0));
    const double dt = t / static_cast<double>(chunks);
    const double m = lambda * dt;
    std::vector<double> v(n), next(n), acc(n);
    for (std::size_t c = 0; c < chunks; ++c) {
        v = res.p;
        double w = std::exp(-m);
        double cum = w;
        for (std::size_t i = 0; i < n; ++i) acc[i] = w * v[i];
        const auto kmax = static_cast<std::size_t>(m + 20.0 * std::sqrt(m) + 100.0);
        for (std::size_t k = 1; k <= kmax && cum < 1.0 - 1e-12; ++k) {
            // v <- v (I + Q/λ)
            for (std::size_t i = 0; i < n; ++i) next[i] = v[i] * (1.0 + gen.diag[i] / lambda);
            for (std::size_t i = 0; i < n; ++i) {
                if (v[i] == 0.0) continue;
                for (const auto& [j, q] : gen.rows[i]) next[j] += v[i] * q / lambda;
            }
            v.swap(next);
            w *= m / static_cast<double>(k);
            cum += w;
            for (std::size_t i = 0; i < n; ++i) acc[i] += w * v[i];
            ++res.terms;
        }
        res.p = acc;
    }
    return res;
}

std::map<BlockProjection, double> class_distribution(const StateSpace& space, std::span<const double> p,
                                                     const Partition& part) {
    if (p.size() != space.size()) throw StructuralError("distribution has wrong dimension");
    std::map<BlockProjection, double> out;
    for (std::size_t i = 0; i < space.size(); ++i) out[block_projection(space.states[i], part)] += p[i];
    return out;
}

ScaledRates::ScaledRates(const Ccrn& net, std::vector<double> alpha, std::uint64_t N, double c)
    : net_(&net), alpha_(std::move(alpha)), n_(N), c_(c) {
    if (alpha_.size() != net.num_reactions()) throw StructuralError("one rate per reaction expected");
    if (N < 1) throw StructuralError("scale must be at least 1");
    if (!(c > 0.0)) throw StructuralError("cutoff must be positive");
}

ScaledRates::ScaledRates(const Ccrn& net, Extremal e, std::uint64_t N, double c)
    : ScaledRates(net,
                  [&] {
                      std::vector<double> a;
                      for (const auto& r : net.reactions()) a.push_back(extremal_rate(r.rate, e));
                      return a;
                  }(),
                  N, c) {}

double ScaledRates::cutoff(const Multiset& x) const {
    const double density = static_cast<double>(x.size()) / static_cast<double>(n_);
    return std::max(0.0, std::min(1.0, 2.0 - density / c_));
}

std::vector<std::pair<Multiset, double>> ScaledRates::outgoing(const Multiset& x) const {
    std::vector<std::pair<Multiset, double>> out;
    const double g = cutoff(x);
    if (g == 0.0) return out;
    for (const auto& r : net_->reactions()) {
        if (r.is_noop()) continue;
        const auto fb = falling_binomial(x, r.reactant);
        if (fb == 0) continue;
        const double scale = std::pow(static_cast<double>(n_), static_cast<double>(r.reactant.size()) - 1.0);
        const double rate = g * alpha_[r.id] / scale * static_cast<double>(fb);
        if (rate == 0.0) continue;
        auto theta = fire(x, r);
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == theta; });
        if (it != out.end())
            it->second += rate;
        else
            out.emplace_back(std::move(theta), rate);
    }
    return out;
}

const std::vector<std::uint64_t>& JumpPath::at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return states.front();
    return states[static_cast<std::size_t>(it - times.begin()) - 1];
}

JumpPath ssa_simulate(const Ccrn& net, const Multiset& init, std::span<const double> alpha, double horizon,
                      std::uint64_t seed, const SsaOptions& opt) {
    if (alpha.size() != net.num_reactions()) throw StructuralError("one rate per reaction expected");
    for (std::size_t r = 0; r < alpha.size(); ++r)
        if (!net.reaction(r).rate.contains(alpha[r]))
            throw StructuralError("rate of reaction " + std::to_string(r) + " lies outside its interval");
    if (opt.cutoff && !opt.scale) throw StructuralError("a cutoff needs a population scale");
    const double N = opt.scale ? static_cast<double>(*opt.scale) : 1.0;
    if (N < 1.0) throw StructuralError("scale must be at least 1");

    struct Term {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> reactant;
        std::vector<std::pair<std::uint32_t, std::int64_t>> change;
        double rate;
    };
    std::vector<Term> terms;
    for (const auto& r : net.reactions()) {
        if (r.is_noop()) continue;
        Term t;
        t.reactant = r.reactant.entries();
        auto dense_r = r.reactant.to_dense(net.num_species());
        auto dense_p = r.product.to_dense(net.num_species());
        for (std::size_t s = 0; s < dense_r.size(); ++s)
            if (dense_r[s] != dense_p[s])
                t.change.emplace_back(static_cast<std::uint32_t>(s),
                                      static_cast<std::int64_t>(dense_p[s]) - static_cast<std::int64_t>(dense_r[s]));
        t.rate = alpha[r.id] / std::pow(N, static_cast<double>(r.reactant.size()) - 1.0);
        terms.push_back(std::move(t));
    }

    std::vector<std::uint64_t> x(net.num_species(), 0);
    for (const auto& [idx, cnt] : init.entries()) {
        if (idx >= x.size()) throw StructuralError("initial state mentions an unknown species");
        x[idx] = cnt;
    }
    std::uint64_t total = 0;
    for (auto c : x) total += c;

    JumpPath path;
    path.times.push_back(0.0);
    path.states.push_back(x);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> prop(terms.size());
    double t = 0.0;
    for (std::size_t ev = 0;; ++ev) {
        if (ev >= opt.max_events) {
            path.event_limit_hit = true;
            break;
        }
        double g = 1.0;
        if (opt.cutoff)
            g = std::max(0.0, std::min(1.0, 2.0 - static_cast<double>(total) / (N * *opt.cutoff)));
        double a0 = 0.0;
        for (std::size_t k = 0; k < terms.size(); ++k) {
            double a = g * terms[k].rate;
            for (const auto& [idx, cnt] : terms[k].reactant) {
                const auto have = x[idx];
                if (have < cnt) {
                    a = 0.0;
                    break;
                }
                double fb = 1.0;
                for (std::uint32_t j = 0; j < cnt; ++j) fb *= static_cast<double>(have - j) / (j + 1.0);
                a *= fb;
            }
            prop[k] = a;
            a0 += a;
        }
        if (!std::isfinite(a0)) throw PropensityOverflowError(t, x);
        if (a0 <= 0.0) break;
        t += -std::log1p(-unif(rng)) / a0;
        if (t > horizon) break;
        double u = unif(rng) * a0;
        std::size_t k = 0;
        for (; k + 1 < terms.size(); ++k) {
            if (u < prop[k]) break;
            u -= prop[k];
        }
        // guard against rounding landing on a zero-propensity tail entry
        while (prop[k] == 0.0 && k > 0) --k;
        for (const auto& [idx, d] : terms[k].change) {
            if (d > 0 && x[idx] > std::numeric_limits<std::uint64_t>::max() - static_cast<std::uint64_t>(d))
                throw PropensityOverflowError(t, x);
            x[idx] = static_cast<std::uint64_t>(static_cast<std::int64_t>(x[idx]) + d);
            total = static_cast<std::uint64_t>(static_cast<std::int64_t>(total) + d);
        }
        path.times.push_back(t);
        path.states.push_back(x);
    }
    return path;
}

std::string jump_path_csv(const JumpPath& path, const std::vector<std::string>& names) {
    std::string out = "t";
    for (const auto& n : names) out += "," + n;
    out += '\n';
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        out += format_double(path.times[k]);
        for (auto c : path.states[k]) out += "," + std::to_string(c);
        out += '\n';
    }
    return out;
}

std::string distribution_csv(const StateSpace& space, std::span<const double> p, const Ccrn& net) {
    std::string out = "state,probability\n";
    for (std::size_t i = 0; i < space.size(); ++i)
        out += "\"" + to_string(space.states[i], net) + "\"," + format_double(p[i]) + '\n';
    return out;
}

}  // namespace ccrn
