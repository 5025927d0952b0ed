#include "setmpc/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "setmpc/bundle.hpp"
#include "setmpc/simulate.hpp"
#include "setmpc/svg_plot.hpp"

namespace setmpc {

namespace {

// initial obstacle snapshot: leads detected from the start pose
std::vector<ObstacleBox> initial_snapshot(const Scenario& scn) {
    std::vector<double> world_x;
    for (const auto& m : scn.obstacles) world_x.push_back(m.x0);
    auto all = scn.obstacle_boxes_at(0.0, scn.goal_reference, world_x);
    std::vector<ObstacleBox> out;
    for (size_t k = 0; k < all.size(); ++k) {
        if (std::abs(scn.obstacles[k].x0) <= scn.detection_range) out.push_back(all[k]);
    }
    return out;
}

struct TraceColumns {
    std::vector<double> t, x5, x6, u1, u2, ifield;
};

// minimal reader for our own trace format (plot-only mode)
TraceColumns read_trace_columns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ConfigError("empty trace file");
    std::vector<std::string> names;
    {
        std::stringstream ss(header);
        std::string cell;
        while (std::getline(ss, cell, ',')) names.push_back(cell);
    }
    auto col = [&](const std::string& name) {
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return static_cast<int>(i);
        }
        throw ConfigError("trace file missing column " + name);
    };
    const int ct = col("t"), c5 = col("x5"), c6 = col("x6"), cu1 = col("u1"), cu2 = col("u2"),
              ci = col("i");
    TraceColumns out;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.empty()) continue;
        out.t.push_back(std::stod(cells.at(ct)));
        out.x5.push_back(std::stod(cells.at(c5)));
        out.x6.push_back(std::stod(cells.at(c6)));
        out.u1.push_back(std::stod(cells.at(cu1)));
        out.u2.push_back(std::stod(cells.at(cu2)));
        out.ifield.push_back(std::stod(cells.at(ci)));
    }
    return out;
}

void emit_plots(const std::string& out_dir, const TraceColumns& c) {
    write_svg_plot(out_dir + "/x5.svg", "Lateral position", "t [s]", "x5 [m]",
                   {{"x5", c.t, c.x5}});
    write_svg_plot(out_dir + "/x6.svg", "Relative longitudinal distance", "t [s]", "x6 [m]",
                   {{"x6", c.t, c.x6}});
    write_svg_plot(out_dir + "/inputs.svg", "Command inputs", "t [s]", "u",
                   {{"u1 [rad]", c.t, c.u1}, {"u2 [m/s^2]", c.t, c.u2}});
    write_svg_plot(out_dir + "/index.svg", "Set-membership index", "t [s]", "i",
                   {{"i", c.t, c.ifield}});
}

}  // namespace

int cmd_synthesize(const std::string& scenario_path, const std::string& bundle_path) {
    Scenario scn;
    try {
        scn = load_scenario_file(scenario_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "scenario error: %s\n", e.what());
        return kExitUsage;
    }
    try {
        auto boxes = initial_snapshot(scn);
        PlannerConfig cfg = scn.planner_config();
        FullPath fp = full_path(scn.initial_waypoints, cfg, boxes);
        save_bundle(fp, scenario_hash(scn), bundle_path);
        std::printf("synthesized %zu families over %zu waypoints\n", fp.families.size(),
                    fp.waypoints.size());
        std::printf("%-4s %-9s %-7s %-8s %-24s %s\n", "s", "rings", "dlevel", "rho", "x_eq(x5,x6)",
                    "envelope(g1,g2)");
        for (const auto& f : fp.families) {
            std::printf("%-4d %-9zu %-7.2f %-8.3f (%7.2f,%8.2f)      (%.3f, %.3f)\n", f.index,
                        f.rings.size(), f.d_level, f.rho_scalar, f.x_eq[4], f.x_eq[5],
                        f.envelope.g1, f.envelope.g2);
        }
        return kExitOk;
    } catch (const PlannerStallError& e) {
        std::fprintf(stderr, "infeasible segment %d: %s\n", e.segment_index, e.what());
        return kExitInfeasible;
    } catch (const InfeasibleSynthesisError& e) {
        std::fprintf(stderr, "infeasible synthesis (vertex %d, row %d): %s\n", e.vertex_index,
                     e.constraint_row, e.what());
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "synthesize failed: %s\n", e.what());
        return kExitUsage;
    }
}

int cmd_run(const std::string& scenario_path, const std::string& bundle_path,
            const std::string& out_dir, const RunFlags& flags) {
    try {
        std::filesystem::create_directories(out_dir);
        if (flags.plot_only) {
            emit_plots(out_dir, read_trace_columns(out_dir + "/trace.csv"));
            return kExitOk;
        }
        Scenario scn = load_scenario_file(scenario_path);
        std::string hash;
        FullPath fp = load_bundle(bundle_path, &hash);
        if (hash != scenario_hash(scn)) {
            std::fprintf(stderr, "bundle/scenario hash mismatch (%s vs %s)\n", hash.c_str(),
                         scenario_hash(scn).c_str());
            return kExitHashMismatch;
        }
        RunOptions opts;
        opts.seed = flags.seed;
        opts.noise = flags.noise;
        opts.use_noise_flag = true;
        auto result = run_scenario(scn, std::make_shared<FullPath>(std::move(fp)), opts);
        write_trace_csv(result.trace, out_dir + "/trace.csv");
        write_summary_json(result.summary, out_dir + "/summary.json");
        if (flags.plots) emit_plots(out_dir, read_trace_columns(out_dir + "/trace.csv"));
        if (!result.summary.completed || result.summary.constraint_violation) {
            std::fprintf(stderr, "run aborted: %s\n", result.summary.first_violation.c_str());
            return kExitViolation;
        }
        std::printf("run complete: %zu steps, min gated |x_rel| = %.2f m, replans = %d\n",
                    result.trace.size(), result.summary.min_gated_separation,
                    result.summary.replan_count);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return kExitViolation;
    }
}

int cmd_verify(const std::string& bundle_path, int samples, uint64_t seed) {
    if (samples <= 0) {
        std::fprintf(stderr, "verify: samples must be positive\n");
        return kExitUsage;
    }
    FullPath fp;
    try {
        fp = load_bundle(bundle_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bundle error: %s\n", e.what());
        return kExitUsage;
    }
    std::mt19937_64 rng(seed);
    std::printf("%-4s %-5s %-8s %-10s %-10s %-10s %s\n", "s", "i", "nesting", "rows", "invar",
                "feasible", "worst_margin");
    for (size_t s = 0; s < fp.families.size(); ++s) {
        const auto& fam = fp.families[s];
        // terminal invariance + input certificate
        bool invar_ok = true;
        {
            Ellipsoid e0(Vec::Zero(6), fam.rings[0].shape());
            Ellipsoid tgt(Vec::Zero(6), fam.targets[0]);
            for (const auto& phi : fam.model.phi) {
                Mat acl = phi + fam.model.g * fam.gains[0];
                invar_ok = invar_ok && affine_image_contained(acl, e0, tgt, 1e-8);
            }
            for (int r = 0; r < 2; ++r) {
                const double reach = std::sqrt(
                    (fam.gains[0].row(r) * fam.rings[0].shape() *
                     fam.gains[0].row(r).transpose())(0, 0));
                const double lim = std::min(fam.u_eq[r] - fp.input_box.lower[r],
                                            fp.input_box.upper[r] - fam.u_eq[r]);
                invar_ok = invar_ok && reach <= lim * (1.0 + 1e-8);
            }
        }
        for (size_t i = 0; i < fam.rings.size(); ++i) {
            bool nest_ok = true;
            if (i > 0) nest_ok = concentric_contains(fam.rings[i - 1], fam.rings[i], 1e-8);
            bool rows_ok = true;
            for (const auto& h : fam.rows) {
                rows_ok = rows_ok && h.normal.dot(fam.rings[i].shape() * h.normal) <=
                                         h.offset * h.offset + 1e-8;
            }
            OneStepReport rep;
            bool feas_ok = true;
            if (i > 0) {
                BoxSet ubox(fp.input_box.lower - Vec(fam.u_eq), fp.input_box.upper - Vec(fam.u_eq));
                rep = verify_one_step(Ellipsoid(Vec::Zero(6), fam.rings[i].shape()),
                                      fam.targets[i], fam.model, ubox, samples, rng);
                feas_ok = rep.fraction_feasible == 1.0;
            }
            const bool ok = nest_ok && rows_ok && feas_ok && (i > 0 || invar_ok);
            std::printf("%-4zu %-5zu %-8s %-10s %-10s %-10s %.3e\n", s, i,
                        nest_ok ? "ok" : "FAIL", rows_ok ? "ok" : "FAIL",
                        (i > 0 ? "-" : (invar_ok ? "ok" : "FAIL")),
                        (i > 0 ? (feas_ok ? "ok" : "FAIL") : "-"),
                        i > 0 ? rep.worst_margin : 0.0);
            if (!ok) {
                std::fprintf(stderr, "verification failed at family %zu ring %zu\n", s, i);
                return kExitVerifyFail;
            }
        }
    }
    std::printf("all certificates verified\n");
    return kExitOk;
}

int cmd_emit_scenario(int id, const std::string& out_path) {
    Scenario s;
    if (id == 1) s = build_scenario_1();
    else if (id == 2) s = build_scenario_2();
    else {
        std::fprintf(stderr, "unknown scenario id %d\n", id);
        return kExitUsage;
    }
    std::ofstream out(out_path);
    if (!out) {
        std::fprintf(stderr, "cannot write %s\n", out_path.c_str());
        return kExitUsage;
    }
    out << scenario_to_json(s) << "\n";
    return kExitOk;
}

}  // namespace setmpc
