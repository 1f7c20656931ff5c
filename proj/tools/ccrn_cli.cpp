// ccrn: reduce, simulate, reconstruct and check controlled reaction networks,
// and generate the bundled case-study families.
//
// Exit codes: 0 success, 1 unreadable or malformed input, 2 internal error,
// 3 check failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccrn/ctmc.hpp"
#include "ccrn/generators.hpp"
#include "ccrn/lumping.hpp"
#include "ccrn/ode.hpp"
#include "ccrn/parser.hpp"
#include "ccrn/reconstruct.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ccrn;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kInternalError = 2;
constexpr int kCheckFailed = 3;

class Stopwatch {
public:
    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

json sizes(const Ccrn& net) { return {{"species", net.num_species()}, {"reactions", net.num_reactions()}}; }

void emit_report(const json& report, const std::string& path) {
    if (path.empty()) {
        std::cerr << report.dump() << '\n';
        return;
    }
    write_file(path, report.dump(2) + '\n');
}

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-")
        std::cout << content;
    else
        write_file(path, content);
}

std::size_t thread_count() {
    if (const char* env = std::getenv("CCRN_THREADS")) {
        try {
            const auto n = std::stoul(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1U, std::thread::hardware_concurrency());
}

Partition load_partition(const ModelDocument& doc, const std::string& path) {
    if (path.empty()) return doc.partition_or_trivial();
    return parse_partition(read_file(path), doc.ccrn);
}

// Runs body, mapping exceptions onto exit codes with a diagnostic.
template <class F>
int guarded(const std::string& what, json& report, F&& body) {
    auto fail = [&](const std::exception& e, int code) {
        std::cerr << what << ": " << e.what() << '\n';
        report["error"] = e.what();
        return code;
    };
    try {
        return body();
    } catch (const ParseError& e) {
        return fail(e, kInputError);
    } catch (const StructuralError& e) {
        return fail(e, kInputError);
    } catch (const IoError& e) {
        return fail(e, kInputError);
    } catch (const InvalidPartitionError& e) {
        return fail(e, kInputError);
    } catch (const std::exception& e) {
        return fail(e, kInternalError);
    }
}

struct ReduceArgs {
    std::string input;
    std::string output;
    std::string map;
    std::string partition_file;
    double tolerance = 0.0;
    bool joint = false;
    std::string batch;
    std::string out_dir;
};

int reduce_one(const ReduceArgs& a, const std::string& input, const std::string& output, const std::string& map_path,
               json& report) {
    return guarded(input, report, [&] {
        Stopwatch sw;
        auto doc = load_model(input);
        report["input"] = sizes(doc.ccrn);
        report["input"]["path"] = input;
        const auto initial = load_partition(doc, a.partition_file);
        report["timings_ms"]["parse"] = sw.lap_ms();

        RefineOptions opt{a.tolerance};
        RefinementStats stats;
        const auto part = a.joint ? coarsest_equivalence_joint(doc.ccrn, initial, opt, &stats)
                                  : coarsest_equivalence(doc.ccrn, initial, opt, &stats);
        report["timings_ms"]["reduce"] = sw.lap_ms();
        auto lumped = quotient(doc.ccrn, part, a.tolerance);
        report["timings_ms"]["quotient"] = sw.lap_ms();

        ModelDocument out;
        out.ccrn = std::move(lumped.lumped);
        write_or_print(output, serialize_model(out));
        if (!map_path.empty()) write_file(map_path, block_map_json(doc.ccrn, part, lumped.map) + '\n');
        report["timings_ms"]["write"] = sw.lap_ms();

        report["output"] = sizes(out.ccrn);
        report["blocks"] = part.num_blocks();
        report["initial_blocks"] = initial.num_blocks();
        report["rounds"] = stats.rounds;
        report["split_passes"] = stats.split_passes;
        report["flags"] = {{"truncated", false}, {"tolerance_used", a.tolerance != 0.0}, {"tolerance", a.tolerance}};
        return kOk;
    });
}

int cmd_reduce(const ReduceArgs& a, json& report) {
    report["command"] = "reduce";
    if (a.batch.empty()) {
        if (a.input.empty()) {
            std::cerr << "reduce: --input or --batch is required\n";
            return kInputError;
        }
        return reduce_one(a, a.input, a.output, a.map, report);
    }

    std::vector<fs::path> files;
    try {
        for (const auto& e : fs::directory_iterator(a.batch))
            if (e.is_regular_file() && e.path().extension() == ".crn") files.push_back(e.path());
    } catch (const std::exception& e) {
        std::cerr << "reduce: " << e.what() << '\n';
        return kInputError;
    }
    std::sort(files.begin(), files.end());
    const fs::path out_dir = a.out_dir.empty() ? fs::path(a.batch) / "reduced" : fs::path(a.out_dir);
    try {
        fs::create_directories(out_dir);
    } catch (const std::exception& e) {
        std::cerr << "reduce: " << e.what() << '\n';
        return kInternalError;
    }

    std::vector<json> reports(files.size(), json::object());
    std::vector<int> codes(files.size(), kOk);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            const auto stem = files[i].stem().string();
            codes[i] = reduce_one(a, files[i].string(), (out_dir / (stem + ".red.crn")).string(),
                                  (out_dir / (stem + ".map.json")).string(), reports[i]);
        }
    };
    const auto nthreads = std::min(thread_count(), std::max<std::size_t>(1, files.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    report["files"] = reports;
    report["threads"] = nthreads;
    return codes.empty() ? kOk : *std::max_element(codes.begin(), codes.end());
}

struct SimulateArgs {
    std::string model;
    std::string schedule;
    std::string extremal = "mid";
    double t_end = 10.0;
    double step = 1e-3;
    std::string output;
    bool ssa = false;
    std::uint64_t seed = 1;
    std::uint64_t scale = 0;
    double cutoff = 0.0;
};

std::vector<double> constant_rates(const Ccrn& net, const std::string& which) {
    std::vector<double> a;
    for (const auto& r : net.reactions()) {
        if (which == "lower")
            a.push_back(r.rate.lo);
        else if (which == "upper")
            a.push_back(r.rate.hi);
        else
            a.push_back(r.rate.midpoint());
    }
    return a;
}

int cmd_simulate(const SimulateArgs& a, json& report) {
    report["command"] = "simulate";
    return guarded("simulate", report, [&] {
        Stopwatch sw;
        auto doc = load_model(a.model);
        const auto& net = doc.ccrn;
        report["input"] = sizes(net);
        report["timings_ms"]["parse"] = sw.lap_ms();
        std::vector<double> v0 = net.initial;
        if (v0.empty()) v0.assign(net.num_species(), 0.0);

        if (a.ssa) {
            Multiset init;
            const double N = a.scale ? static_cast<double>(a.scale) : 1.0;
            for (std::size_t s = 0; s < v0.size(); ++s)
                init.add(static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(std::llround(v0[s] * N)));
            SsaOptions opt;
            if (a.scale) opt.scale = a.scale;
            if (a.cutoff > 0.0) opt.cutoff = a.cutoff;
            auto path = ssa_simulate(net, init, constant_rates(net, a.extremal), a.t_end, a.seed, opt);
            report["timings_ms"]["simulate"] = sw.lap_ms();
            write_or_print(a.output, jump_path_csv(path, species_names(net)));
            report["events"] = path.times.size() - 1;
            report["flags"] = {{"truncated", false}, {"event_limit_hit", path.event_limit_hit}};
            return kOk;
        }

        ControlSchedule sched = a.schedule.empty() ? ControlSchedule::constant(constant_rates(net, a.extremal))
                                                   : parse_schedule_csv(read_file(a.schedule), net);
        auto traj = simulate(net, v0, sched, a.t_end, SimulateOptions{a.step});
        report["timings_ms"]["simulate"] = sw.lap_ms();
        write_or_print(a.output, trajectory_csv(traj, species_names(net)));
        report["timings_ms"]["write"] = sw.lap_ms();
        report["grid_points"] = traj.size();
        report["flags"] = {{"truncated", false}};
        return kOk;
    });
}

struct ReconstructArgs {
    std::string model;
    std::string partition_file;
    std::string lumped_schedule;
    double t_end = 10.0;
    double step = 1e-3;
    std::string output;
    std::string schedule_out;
    std::string residuals_out;
};

int cmd_reconstruct(const ReconstructArgs& a, json& report) {
    report["command"] = "reconstruct";
    return guarded("reconstruct", report, [&] {
        Stopwatch sw;
        auto doc = load_model(a.model);
        const auto& net = doc.ccrn;
        report["input"] = sizes(net);
        const auto initial = load_partition(doc, a.partition_file);
        const auto part = coarsest_equivalence(net, initial);
        auto lumped = quotient(net, part);
        report["output"] = sizes(lumped.lumped);
        report["timings_ms"]["reduce"] = sw.lap_ms();

        std::vector<double> v0 = net.initial;
        if (v0.empty()) v0.assign(net.num_species(), 0.0);
        const auto vh0 = block_sums(v0, part);
        const auto sched = a.lumped_schedule.empty() ? ControlSchedule::at_midpoint(lumped.lumped)
                                                     : parse_schedule_csv(read_file(a.lumped_schedule), lumped.lumped);
        auto lt = simulate(lumped.lumped, vh0, sched, a.t_end, SimulateOptions{a.step});
        report["timings_ms"]["lumped_simulate"] = sw.lap_ms();
        auto rec = reconstruct_trajectory(net, part, lumped.lumped, lt, sched, v0);
        report["timings_ms"]["reconstruct"] = sw.lap_ms();

        write_or_print(a.output, trajectory_csv(rec.trajectory, species_names(net)));
        if (!a.schedule_out.empty()) write_file(a.schedule_out, schedule_csv(rec.schedule, net));
        if (!a.residuals_out.empty()) {
            std::string csv = "t_start,residual\n";
            for (std::size_t k = 0; k < rec.step_residuals.size(); ++k)
                csv += format_double(rec.schedule.starts[k]) + "," + format_double(rec.step_residuals[k]) + '\n';
            write_file(a.residuals_out, csv);
        }
        report["max_residual"] = rec.max_residual;
        report["max_tracking_error"] = rec.max_tracking_error;
        report["blocks"] = part.num_blocks();
        report["flags"] = {{"truncated", false}};
        return kOk;
    });
}

struct CheckArgs {
    std::string model;
    std::string partition_file;
    bool oracle = false;
    std::uint64_t pop_bound = 3;
    double tolerance = 0.0;
};

int cmd_check(const CheckArgs& a, json& report) {
    report["command"] = "check";
    return guarded("check", report, [&] {
        Stopwatch sw;
        auto doc = load_model(a.model);
        const auto& net = doc.ccrn;
        report["input"] = sizes(net);
        const auto part = load_partition(doc, a.partition_file);
        const bool eq = check_equivalence(net, part, a.tolerance);
        report["equivalence"] = eq;
        report["timings_ms"]["check"] = sw.lap_ms();
        std::cout << "species equivalence: " << (eq ? "yes" : "no") << '\n';
        report["flags"] = {{"truncated", false}, {"tolerance_used", a.tolerance != 0.0}};
        if (!a.oracle) return eq ? kOk : kCheckFailed;

        const auto space = all_multisets(net, a.pop_bound);
        report["states"] = space.size();
        report["flags"]["truncated"] = space.truncated;
        bool lumpable = true;
        for (auto e : {Extremal::lower, Extremal::upper}) {
            const auto gen = build_generator(space, net, e);
            const auto res = check_ordinary_lumpability(gen, space, part);
            if (!res.lumpable) {
                lumpable = false;
                const auto cex = counterexample_json(*res.counterexample, space, net, part, e);
                std::cout << "counterexample: " << cex << '\n';
                report["counterexample"] = json::parse(cex);
                break;
            }
        }
        report["timings_ms"]["oracle"] = sw.lap_ms();
        report["lumpable"] = lumpable;
        std::cout << "ordinary lumpability (" << space.size() << " states): " << (lumpable ? "yes" : "no") << '\n';
        if (lumpable != eq) std::cout << "warning: oracle and species-level check disagree\n";
        return lumpable && eq ? kOk : kCheckFailed;
    });
}

struct GenerateArgs {
    std::size_t n = 2;
    double beta = 0.0, gamma = 0.0, eta = 0.0;
    double vac_lo = 0.0, vac_hi = 1.0;
    std::string edges;
    bool undirected = false;
    double halfwidth = -1.0;
    double assoc_lo = 9.95, assoc_hi = 10.05, dissoc_lo = 0.05, dissoc_hi = 0.15;
    std::size_t max_sites = kMaxMultisiteSites;
    std::string output;
};

int cmd_generate(const std::string& kind, const GenerateArgs& a, json& report) {
    report["command"] = "generate " + kind;
    return guarded("generate", report, [&] {
        Stopwatch sw;
        ModelDocument doc;
        SirParams p{a.beta, a.gamma, a.eta, RateInterval(a.vac_lo, a.vac_hi)};
        if (kind == "sir-star") {
            doc = gen_sir_star(a.n, p);
        } else if (kind == "sir-net") {
            const auto g = parse_edge_list(read_file(a.edges), a.undirected);
            doc = gen_sir_network(g, p, a.halfwidth >= 0.0 ? std::optional<double>(a.halfwidth) : std::nullopt);
        } else {
            doc = gen_multisite(a.n, RateInterval(a.assoc_lo, a.assoc_hi), RateInterval(a.dissoc_lo, a.dissoc_hi),
                                a.max_sites);
        }
        report["timings_ms"]["generate"] = sw.lap_ms();
        write_or_print(a.output, serialize_model(doc));
        report["timings_ms"]["write"] = sw.lap_ms();
        report["output"] = sizes(doc.ccrn);
        report["flags"] = {{"truncated", false}};
        return kOk;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lumping, simulation and control reconstruction for controlled reaction networks"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string report_path;
    app.add_option("--report", report_path, "Write the run report JSON here instead of standard error");

    ReduceArgs ra;
    auto* reduce = app.add_subcommand("reduce", "Coarsest species equivalence and lumped network");
    reduce->add_option("-i,--input", ra.input, "Model file");
    reduce->add_option("-o,--output", ra.output, "Reduced model file (standard output if omitted)");
    reduce->add_option("--map", ra.map, "Block map JSON");
    reduce->add_option("--partition-file", ra.partition_file, "Initial partition (overrides the model's)");
    reduce->add_option("--tolerance", ra.tolerance, "Absolute slack when comparing rates")->check(CLI::NonNegativeNumber);
    reduce->add_flag("--joint", ra.joint, "Split on both extremals in one pass");
    reduce->add_option("--batch", ra.batch, "Reduce every .crn file in a directory");
    reduce->add_option("--out-dir", ra.out_dir, "Output directory for --batch");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Integrate the mass-action ODE or run SSA");
    sim->add_option("model", sa.model, "Model file")->required();
    sim->add_option("--schedule", sa.schedule, "Control schedule CSV");
    sim->add_option("--rates", sa.extremal, "Constant rates when no schedule is given")
        ->check(CLI::IsMember({"lower", "upper", "mid"}));
    sim->add_option("--t-end", sa.t_end, "Horizon")->check(CLI::NonNegativeNumber);
    sim->add_option("--step", sa.step, "RK4 step")->check(CLI::PositiveNumber);
    sim->add_option("-o,--output", sa.output, "Trajectory CSV (standard output if omitted)");
    sim->add_flag("--ssa", sa.ssa, "Stochastic simulation instead of the ODE");
    sim->add_option("--seed", sa.seed, "SSA seed");
    sim->add_option("--scale", sa.scale, "SSA population scale N");
    sim->add_option("--cutoff", sa.cutoff, "SSA cutoff density c (needs --scale)");

    ReconstructArgs rc;
    auto* rec = app.add_subcommand("reconstruct", "Recover original controls from a lumped trajectory");
    rec->add_option("model", rc.model, "Original model file")->required();
    rec->add_option("--partition-file", rc.partition_file, "Initial partition (overrides the model's)");
    rec->add_option("--lumped-schedule", rc.lumped_schedule, "Lumped control schedule CSV (midpoints if omitted)");
    rec->add_option("--t-end", rc.t_end, "Horizon")->check(CLI::NonNegativeNumber);
    rec->add_option("--step", rc.step, "RK4 step")->check(CLI::PositiveNumber);
    rec->add_option("-o,--output", rc.output, "Reconstructed trajectory CSV");
    rec->add_option("--schedule-out", rc.schedule_out, "Reconstructed control schedule CSV");
    rec->add_option("--residuals", rc.residuals_out, "Per-step residual CSV");

    CheckArgs ca;
    auto* check = app.add_subcommand("check", "Check a partition for species equivalence");
    check->add_option("model", ca.model, "Model file")->required();
    check->add_option("--partition-file", ca.partition_file, "Partition (the model's if omitted)");
    check->add_flag("--oracle", ca.oracle, "Also check ordinary lumpability on the enumerated CTMC");
    check->add_option("--pop-bound", ca.pop_bound, "Population bound of the enumerated states");
    check->add_option("--tolerance", ca.tolerance, "Absolute slack when comparing rates")->check(CLI::NonNegativeNumber);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Write a case-study model");
    gen->require_subcommand(1);
    auto sir_options = [&](CLI::App* c) {
        c->add_option("--beta", ga.beta, "Infection scaling")->required();
        c->add_option("--gamma", ga.gamma, "Recovery rate")->required();
        c->add_option("--eta", ga.eta, "Immunity loss rate")->required();
        c->add_option("--vac-lo", ga.vac_lo, "Vaccination lower bound");
        c->add_option("--vac-hi", ga.vac_hi, "Vaccination upper bound");
        c->add_option("-o,--output", ga.output, "Model file (standard output if omitted)");
    };
    auto* star = gen->add_subcommand("sir-star", "SIR with vaccination on a star");
    star->add_option("--n", ga.n, "Locations")->required();
    sir_options(star);
    auto* snet = gen->add_subcommand("sir-net", "SIR with vaccination on a weighted edge list");
    snet->add_option("--edges", ga.edges, "Edge list 'src dst weight'")->required();
    snet->add_flag("--undirected", ga.undirected, "Add both directions for every edge");
    snet->add_option("--halfwidth", ga.halfwidth, "Interval halfwidth around each weight");
    sir_options(snet);
    auto* ms = gen->add_subcommand("multisite", "Multisite binding");
    ms->add_option("--n", ga.n, "Binding sites")->required();
    ms->add_option("--assoc-lo", ga.assoc_lo);
    ms->add_option("--assoc-hi", ga.assoc_hi);
    ms->add_option("--dissoc-lo", ga.dissoc_lo);
    ms->add_option("--dissoc-hi", ga.dissoc_hi);
    ms->add_option("--max-sites", ga.max_sites, "Refuse larger n");
    ms->add_option("-o,--output", ga.output, "Model file (standard output if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    json report = json::object();
    Stopwatch total;
    int code = kInternalError;
    if (*reduce)
        code = cmd_reduce(ra, report);
    else if (*sim)
        code = cmd_simulate(sa, report);
    else if (*rec)
        code = cmd_reconstruct(rc, report);
    else if (*check)
        code = cmd_check(ca, report);
    else if (*gen)
        code = cmd_generate(*star ? "sir-star" : *snet ? "sir-net" : "multisite", ga, report);
    report["exit_code"] = code;
    report["timings_ms"]["total"] = total.lap_ms();
    try {
        emit_report(report, report_path);
    } catch (const std::exception& e) {
        std::cerr << "report: " << e.what() << '\n';
        if (code == kOk) code = kInternalError;
    }
    return code;
}
