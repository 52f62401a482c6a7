#include "mpl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mpl/io.hpp"
#include "mpl/law.hpp"
#include "mpl/quad.hpp"
#include "mpl/sched_opt.hpp"
#include "mpl/schedule.hpp"

namespace fs = std::filesystem;

namespace mpl {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(fmt::format("{} must be an object", where));
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw std::invalid_argument(fmt::format("unknown key '{}' in {}", key, where));
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<std::int64_t> every_steps(std::int64_t T, std::int64_t every) {
    if (every < 1) throw std::invalid_argument("--every must be at least 1");
    std::vector<std::int64_t> steps;
    for (std::int64_t t = every; t <= T; t += every) steps.push_back(t);
    if (steps.empty() || steps.back() != T) steps.push_back(T);
    return steps;
}

struct Globals {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
};

fs::path out_dir(const Globals& g) {
    fs::path dir(g.out);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json require_config(const Globals& g) {
    if (g.config.empty()) throw std::invalid_argument("--config is required for this command");
    return read_json(g.config);
}

fs::path config_dir(const Globals& g) {
    const fs::path p = fs::absolute(g.config).parent_path();
    return p.empty() ? fs::current_path() : p;
}

FitConfig fit_config_of(const nlohmann::json& cfg, const Globals& g) {
    FitConfig fc = cfg.contains("fit") ? fit_config_from_json(cfg.at("fit")) : FitConfig{};
    if (g.seed) fc.seed = *g.seed;
    return fc;
}

void check_dataset_config(const nlohmann::json& cfg) {
    check_keys(cfg, {"variant", "variants", "peak_lr", "W", "curves", "test_curves", "fit"}, "dataset config");
}

// ---- subcommands -------------------------------------------------------

void cmd_gen_schedule(const Globals& g, const std::string& kind, std::int64_t T, std::int64_t W, double peak) {
    nlohmann::json spec_json = g.config.empty() ? nlohmann::json::object() : read_json(g.config);
    if (!kind.empty()) spec_json["kind"] = kind;
    if (!spec_json.contains("kind")) throw std::invalid_argument("schedule kind is required (--kind or config)");
    check_keys(spec_json, {"kind", "W", "peak_lr", "params"}, "schedule config");
    if (T > 0) spec_json["params"]["T"] = T;
    if (W >= 0) spec_json["W"] = W;
    if (peak > 0.0) spec_json["peak_lr"] = peak;
    ScheduleSpec spec = spec_from_json(spec_json);
    if (g.seed) spec.seed = *g.seed;
    const Schedule s = make_schedule(spec);
    const fs::path dir = out_dir(g);
    write_json(dir / "schedule.json", schedule_to_json(s, spec_to_json(spec)["params"]));
    std::cout << fmt::format("wrote {} ({} steps, kind {})\n", (dir / "schedule.json").string(), s.length(),
                             s.kind_tag());
}

void cmd_predict(const Globals& g, const std::string& params_path, const std::string& schedule_path,
                 std::int64_t every) {
    LawVariant v;
    const MplParams p = params_from_json(read_json(params_path), &v);
    const Schedule s = schedule_from_json(read_json(schedule_path));
    const auto steps = every_steps(s.length(), every);
    const auto pred = predict(v, p, LawInput::exact(s, steps));
    std::vector<double> lrs;
    for (auto t : steps) lrs.push_back(s.lr(t));
    const fs::path dir = out_dir(g);
    write_curve(dir / "prediction.csv", steps, lrs, pred);
    std::cout << fmt::format("final predicted loss at step {}: {}\n", steps.back(), format_double(pred.back()));
}

void cmd_eval(const Globals& g, const std::string& pred_path, const std::string& gt_path) {
    const CurveFile pred = ingest_curve(pred_path);
    const CurveFile gt = ingest_curve(gt_path);
    if (pred.steps != gt.steps) throw std::invalid_argument("prediction and ground truth must cover identical steps");
    const Metrics m = evaluate_metrics(pred.curve.losses, gt.curve.losses);
    const fs::path dir = out_dir(g);
    write_json(dir / "metrics.json", metrics_to_json(m));
    std::cout << metrics_to_json(m).dump() << '\n';
}

void cmd_fit(const Globals& g) {
    const nlohmann::json cfg = require_config(g);
    check_dataset_config(cfg);
    const auto train = load_dataset(cfg, "curves", config_dir(g));
    const FitConfig fc = fit_config_of(cfg, g);
    LawVariant v;
    v.tag = variant_tag_from_string(cfg.value("variant", std::string("MPL")));
    FitReport rep = fit_law(v, train, fc);
    nlohmann::json out = fit_report_to_json(rep);
    if (cfg.contains("test_curves")) {
        const auto test = load_dataset(cfg, "test_curves", config_dir(g));
        std::vector<std::pair<std::string, Metrics>> per;
        Metrics pooled;
        score_curves(rep.variant, rep.params, test, per, pooled);
        nlohmann::json tm = nlohmann::json::object();
        for (const auto& [name, m] : per) tm[name] = metrics_to_json(m);
        out["test_metrics"] = tm;
        out["test_pooled_metrics"] = metrics_to_json(pooled);
    }
    const fs::path dir = out_dir(g);
    write_json(dir / "fit_report.json", out);
    std::vector<double> it, obj;
    for (const auto& [i, f] : rep.trace) {
        it.push_back(static_cast<double>(i));
        obj.push_back(f);
    }
    write_table(dir / "trace.csv", "iteration", "objective", it, obj);
    std::cout << fmt::format("{} objective {}\n", to_string(rep.variant.tag), format_double(rep.objective));
}

void cmd_optimize(const Globals& g, const std::string& params_path) {
    LawVariant v;
    const MplParams p = params_from_json(read_json(params_path), &v);
    OptConfig oc = g.config.empty() ? OptConfig{} : opt_config_from_json(read_json(g.config));
    if (g.seed) oc.seed = *g.seed;
    const OptResult r = optimize_schedule_grid(v, p, oc);
    const PhaseReport ph = detect_phases(r.schedule);
    const fs::path dir = out_dir(g);
    write_json(dir / "optimized_schedule.json", schedule_to_json(r.schedule));
    nlohmann::json summary = phase_report_to_json(ph);
    summary["final_loss"] = r.final_loss;
    summary["step_size"] = r.step_size;
    write_json(dir / "phases.json", summary);
    std::cout << fmt::format("optimized final loss {} (step size {})\n", format_double(r.final_loss), r.step_size);
}

void cmd_simulate(const Globals& g) {
    const nlohmann::json cfg = require_config(g);
    check_keys(cfg, {"quad", "schedule", "trials", "eta0"}, "simulate config");
    const QuadSpec q = quad_spec_from_json(cfg.at("quad"));
    const Schedule s = schedule_from_json(cfg.at("schedule"));
    const std::uint64_t seed = g.seed.value_or(0);
    const std::int64_t trials = cfg.value("trials", std::int64_t{0});
    const double eta0 = cfg.value("eta0", s.peak_lr());
    const SpectrumInstance inst = sample_spectra(q, seed);
    const auto exact = exact_expected_loss(inst, s);
    const fs::path dir = out_dir(g);
    write_json(dir / "spectrum.json", spectrum_to_json(inst));
    std::vector<double> steps(exact.size());
    for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = static_cast<double>(t);
    write_table(dir / "exact.csv", "step", "loss", steps, exact);
    const auto theory = theory_curve(q, s, eta0);
    write_table(dir / "theory.csv", "step", "loss", std::span<const double>(steps).subspan(1), theory);
    if (trials > 0) {
        const McCurve mc = sgd_monte_carlo(inst, s, trials, seed);
        std::ofstream out(dir / "mc.csv");
        out << "step,mean,stderr\n";
        for (std::size_t t = 0; t < mc.mean.size(); ++t)
            out << t << ',' << format_double(mc.mean[t]) << ',' << format_double(mc.stderr_[t]) << '\n';
    }
    const MEstimate m = m_estimate(inst, s, eta0);
    write_json(dir / "m_estimate.json",
               {{"exact_final", exact.back()}, {"m_estimate", m.value}, {"bound", m.bound},
                {"abs_error", std::abs(exact.back() - m.value)}});
    std::cout << fmt::format("exact final {} M {} bound {}\n", format_double(exact.back()), format_double(m.value),
                             format_double(m.bound));
}

void cmd_compare_g(const Globals& g, double beta, double r, double Lambda, int points) {
    if (points < 2) throw std::invalid_argument("--points must be at least 2");
    const double C = matched_g_coefficient(beta, r, Lambda);
    const fs::path dir = out_dir(g);
    std::ofstream out(dir / "g_compare.csv");
    out << "x,G,G_hat,abs_diff\n";
    for (int i = 0; i < points; ++i) {
        const double x = std::pow(10.0, -2.0 + 6.0 * i / (points - 1));
        const double a = g_saturation(x, C, beta);
        const double b = g_hat(x, beta, r, Lambda);
        out << format_double(x) << ',' << format_double(a) << ',' << format_double(b) << ','
            << format_double(std::abs(a - b)) << '\n';
    }
    std::cout << fmt::format("wrote {}\n", (dir / "g_compare.csv").string());
}

void cmd_ablate(const Globals& g) {
    const nlohmann::json cfg = require_config(g);
    check_dataset_config(cfg);
    const auto train = load_dataset(cfg, "curves", config_dir(g));
    const auto test = cfg.contains("test_curves") ? load_dataset(cfg, "test_curves", config_dir(g))
                                                  : std::vector<FitCurve>{};
    std::vector<VariantTag> variants;
    if (cfg.contains("variants")) {
        for (const auto& name : cfg.at("variants")) variants.push_back(variant_tag_from_string(name.get<std::string>()));
    } else {
        variants = {VariantTag::mpl, VariantTag::opl,  VariantTag::lldl, VariantTag::no_gamma,
                    VariantTag::spl, VariantTag::mel, VariantTag::mtl,  VariantTag::cdsl};
    }
    const auto rows = run_ablation(variants, train, test, fit_config_of(cfg, g));
    const nlohmann::json summary = ablation_to_json(rows);
    const fs::path dir = out_dir(g);
    write_json(dir / "ablation.json", summary);
    std::ofstream csv(dir / "ablation.csv");
    csv << "variant,objective,r2,mae,rmse,prede,worste\n";
    for (const auto& row : rows) {
        csv << to_string(row.variant.tag) << ',' << format_double(row.report.objective) << ','
            << (row.test.r2_defined ? format_double(row.test.r2) : std::string("nan")) << ','
            << format_double(row.test.mae) << ',' << format_double(row.test.rmse) << ','
            << format_double(row.test.prede) << ',' << format_double(row.test.worste) << '\n';
    }
    for (const auto& row : rows)
        std::cout << fmt::format("{:8s} objective {:.6e} R2 {:.6f}\n", to_string(row.variant.tag),
                                 row.report.objective, row.test.r2);
}

}  // namespace

std::vector<FitCurve> load_dataset(const nlohmann::json& cfg, const std::string& key, const fs::path& base_dir) {
    if (!cfg.contains(key)) throw std::invalid_argument(fmt::format("dataset config has no '{}'", key));
    const double peak = cfg.value("peak_lr", 3e-4);
    const std::int64_t W = cfg.value("W", std::int64_t{0});
    std::vector<FitCurve> out;
    for (const auto& entry : cfg.at(key)) {
        check_keys(entry, {"name", "file", "schedule"}, fmt::format("'{}' entry", key));
        const CurveFile cf = ingest_curve(resolve(base_dir, entry.at("file").get<std::string>()));
        const std::string name = entry.value("name", entry.at("file").get<std::string>());
        if (entry.contains("schedule")) {
            const Schedule s = schedule_from_json(entry.at("schedule"));
            out.push_back(make_fit_curve(name, s, cf.curve, InputMode::compressed));
        } else {
            const Schedule s = polyline_schedule(peak, W, cf.steps, cf.lrs);
            out.push_back(make_fit_curve(name, s, cf.curve, InputMode::compressed));
        }
    }
    if (out.empty()) throw std::invalid_argument(fmt::format("'{}' lists no curves", key));
    return out;
}

std::vector<AblationRow> run_ablation(const std::vector<VariantTag>& variants, const std::vector<FitCurve>& train,
                                      const std::vector<FitCurve>& test, const FitConfig& cfg) {
    std::vector<AblationRow> rows;
    for (VariantTag tag : variants) {
        AblationRow row;
        row.variant.tag = tag;
        row.report = fit_law(row.variant, train, cfg);
        row.variant = row.report.variant;
        std::vector<std::pair<std::string, Metrics>> per;
        score_curves(row.variant, row.report.params, test.empty() ? train : test, per, row.test);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const AblationRow& a, const AblationRow& b) { return a.report.objective < b.report.objective; });
    return rows;
}

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::json j = fit_report_to_json(rows[i].report);
        j["rank"] = i + 1;
        j["test_metrics"] = metrics_to_json(rows[i].test);
        arr.push_back(j);
    }
    return arr;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Multi-power-law loss-curve toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--seed", g.seed, "64-bit seed");

    std::string kind;
    std::int64_t T = 0, W = -1;
    double peak = 0.0;
    auto* gen = app.add_subcommand("gen-schedule", "emit a schedule file");
    gen->add_option("--kind", kind);
    gen->add_option("--T", T);
    gen->add_option("--W", W);
    gen->add_option("--peak", peak);

    std::string params_path, schedule_path;
    std::int64_t every = 100;
    auto* pred = app.add_subcommand("predict", "predict a loss curve from params and a schedule");
    pred->add_option("--params", params_path)->required();
    pred->add_option("--schedule", schedule_path)->required();
    pred->add_option("--every", every);

    std::string pred_path, gt_path;
    auto* ev = app.add_subcommand("eval", "score a predicted curve against ground truth");
    ev->add_option("--pred", pred_path)->required();
    ev->add_option("--gt", gt_path)->required();

    auto* fit = app.add_subcommand("fit", "fit a law to a dataset");
    auto* opt = app.add_subcommand("optimize", "optimize a schedule under fitted params");
    opt->add_option("--params", params_path)->required();
    auto* sim = app.add_subcommand("simulate", "noisy-quadratic SGD simulation and theory curves");

    double beta = 0.2, r = 2.0, Lambda = 1.0;
    int points = 25;
    auto* cmp = app.add_subcommand("compare-g", "tabulate G against G_hat");
    cmp->add_option("--beta", beta);
    cmp->add_option("--r", r);
    cmp->add_option("--Lambda", Lambda);
    cmp->add_option("--points", points);

    auto* abl = app.add_subcommand("ablate", "fit every variant and rank them");

    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config", g.config, "JSON config file");
        sub->add_option("--out", g.out, "output directory");
        sub->add_option("--seed", g.seed, "64-bit seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) cmd_gen_schedule(g, kind, T, W, peak);
        else if (pred->parsed()) cmd_predict(g, params_path, schedule_path, every);
        else if (ev->parsed()) cmd_eval(g, pred_path, gt_path);
        else if (fit->parsed()) cmd_fit(g);
        else if (opt->parsed()) cmd_optimize(g, params_path);
        else if (sim->parsed()) cmd_simulate(g);
        else if (cmp->parsed()) cmd_compare_g(g, beta, r, Lambda, points);
        else if (abl->parsed()) cmd_ablate(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("mplctl");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mpl
