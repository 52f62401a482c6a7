#include "mpl/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "mpl/adam.hpp"
#include "mpl/rng.hpp"

namespace mpl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

ParamVec to_z(const MplParams& p) {
    ParamVec theta = p.to_array(), z{};
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (is_exponent(i)) {
            const double t = std::clamp(theta[i], 1e-9, 1.0 - 1e-9);
            z[i] = logit(t);
        } else {
            z[i] = std::log(std::max(theta[i], 1e-300));
        }
    }
    return z;
}

ParamVec from_z(const ParamVec& z) {
    ParamVec theta{};
    for (std::size_t i = 0; i < kNumParams; ++i) theta[i] = is_exponent(i) ? sigmoid(z[i]) : std::exp(z[i]);
    return theta;
}

/// CDSL sees only the final point of each curve.
std::vector<FitCurve> final_points_only(std::span<const FitCurve> data) {
    std::vector<FitCurve> out;
    for (const auto& fc : data) {
        FitCurve r;
        r.name = fc.name;
        r.curve.steps = {fc.curve.steps.back()};
        r.curve.losses = {fc.curve.losses.back()};
        r.input.peak_lr = fc.input.peak_lr;
        r.input.warmup_sum = fc.input.warmup_sum;
        r.input.evals = {fc.input.evals.back()};
        r.input.n_changes = {0};
        out.push_back(std::move(r));
    }
    return out;
}

class Objective {
public:
    Objective(LawVariant v, std::span<const FitCurve> data, double delta)
        : v_(v), data_(data), delta_(delta), active_(active_params(v.tag)) {}

    /// Objective and gradient with respect to z; returns +inf outside the domain.
    double operator()(const ParamVec& z, ParamVec* grad_z) const {
        const ParamVec theta = from_z(z);
        const MplParams p = MplParams::from_array(theta);
        ParamVec g_theta{};
        double total = 0.0;
        for (const auto& fc : data_) {
            try {
                predict_with_gradient(v_, p, fc.input, pred_, grad_);
            } catch (const std::domain_error&) {
                return kInf;
            }
            for (std::size_t i = 0; i < pred_.size(); ++i) {
                if (!(pred_[i] > 0.0) || !std::isfinite(pred_[i])) return kInf;
                const double r = std::log(pred_[i]) - std::log(fc.curve.losses[i]);
                total += huber(r, delta_);
                if (grad_z) {
                    const double w = huber_derivative(r, delta_) / pred_[i];
                    for (std::size_t j = 0; j < kNumParams; ++j) g_theta[j] += w * grad_[i][j];
                }
            }
        }
        if (grad_z) {
            for (std::size_t j = 0; j < kNumParams; ++j) {
                const double dtheta = is_exponent(j) ? theta[j] * (1.0 - theta[j]) : theta[j];
                (*grad_z)[j] = active_[j] ? g_theta[j] * dtheta : 0.0;
            }
        }
        return std::isfinite(total) ? total : kInf;
    }

    const std::array<bool, kNumParams>& active() const { return active_; }

private:
    LawVariant v_;
    std::span<const FitCurve> data_;
    double delta_;
    std::array<bool, kNumParams> active_;
    mutable std::vector<double> pred_;
    mutable std::vector<ParamVec> grad_;
};

struct RunResult {
    ParamVec z{};
    double objective = kInf;
    std::vector<std::pair<std::int64_t, double>> trace;
    std::vector<double> phase_best;
};

RunResult run_adam(const Objective& obj, ParamVec z0, const FitConfig& cfg) {
    RunResult res;
    res.z = z0;
    res.objective = obj(z0, nullptr);
    if (!std::isfinite(res.objective))
        throw std::runtime_error("fit objective is not finite at the initial parameters");

    std::array<double, kNumParams> lr{};
    std::int64_t global = 0;
    for (int phase = 0; phase < cfg.phases; ++phase) {
        double scale = std::pow(cfg.phase_lr_scale, phase);
        ParamVec z = res.z;
        Adam adam(kNumParams);
        int failures = 0;
        auto set_lr = [&] {
            for (std::size_t j = 0; j < kNumParams; ++j)
                lr[j] = obj.active()[j] ? scale * (is_exponent(j) ? cfg.lr_index : cfg.lr_coeff) : 0.0;
        };
        set_lr();
        ParamVec g{};
        for (std::int64_t it = 0; it <= cfg.steps_per_phase; ++it, ++global) {
            const double f = obj(z, &g);
            bool finite = std::isfinite(f);
            for (double gi : g) finite = finite && std::isfinite(gi);
            if (!finite) {
                // Step left the domain: restart from the best point with smaller steps.
                if (++failures > 60)
                    throw std::runtime_error(
                        fmt::format("fit diverged: objective non-finite after {} restarts in phase {}", failures, phase));
                z = res.z;
                adam.reset();
                scale *= 0.5;
                set_lr();
                continue;
            }
            if (f < res.objective) {
                res.objective = f;
                res.z = z;
            }
            if (cfg.trace_every > 0 && global % cfg.trace_every == 0) res.trace.emplace_back(global, f);
            if (it == cfg.steps_per_phase) break;
            adam.step(z, g, lr);
        }
        res.phase_best.push_back(res.objective);
    }
    return res;
}

double min_loss(std::span<const FitCurve> data) {
    double m = kInf;
    for (const auto& fc : data)
        for (double l : fc.curve.losses) m = std::min(m, l);
    return m;
}

/// L0 below the smallest loss, A through the earliest point, B by 1-D least squares.
MplParams default_init(const LawVariant& v, std::span<const FitCurve> data, MplParams seed) {
    const double lmin = min_loss(data);
    seed.L0 = lmin > 0.2 ? lmin - 0.1 : 0.5 * lmin;
    seed.alpha = 0.5;
    double best_u = kInf, best_loss = 0.0;
    for (const auto& fc : data) {
        for (std::size_t i = 0; i < fc.input.evals.size(); ++i) {
            const auto& ev = fc.input.evals[i];
            const double u = v.tag == VariantTag::cdsl ? static_cast<double>(ev.step) : ev.s1 + fc.input.warmup_sum;
            if (u < best_u) {
                best_u = u;
                best_loss = fc.curve.losses[i];
            }
        }
    }
    seed.A = std::max((best_loss - seed.L0) * std::pow(best_u, seed.alpha), 1e-6);

    if (active_params(v.tag)[kB]) {
        MplParams p0 = seed, p1 = seed;
        p0.B = 0.0;
        p1.B = 1.0;
        double num = 0.0, den = 0.0;
        for (const auto& fc : data) {
            const auto a = predict(v, p0, fc.input);
            const auto b = predict(v, p1, fc.input);
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double ld = a[i] - b[i];
                num += (a[i] - fc.curve.losses[i]) * ld;
                den += ld * ld;
            }
        }
        seed.B = den > 0.0 && num > 0.0 ? num / den : 1.0;
    } else {
        seed.B = 1.0;
    }
    return seed;
}

MplParams grid_init(const LawVariant& v, std::span<const FitCurve> data, const Objective& obj) {
    static const double c_grid[] = {1e-2, 1e-1, 1.0, 10.0};
    static const double e_grid[] = {0.2, 0.4, 0.6, 0.8};
    const auto active = active_params(v.tag);
    const std::vector<double> cs = active[kC] ? std::vector<double>(std::begin(c_grid), std::end(c_grid))
                                              : std::vector<double>{1.0};
    const std::vector<double> bs = active[kBeta] ? std::vector<double>(std::begin(e_grid), std::end(e_grid))
                                                 : std::vector<double>{0.5};
    const std::vector<double> gs = active[kGamma] ? std::vector<double>(std::begin(e_grid), std::end(e_grid))
                                                  : std::vector<double>{0.5};
    MplParams best;
    double best_f = kInf;
    for (double c : cs)
        for (double b : bs)
            for (double g : gs) {
                MplParams p;
                p.C = c;
                p.beta = b;
                p.gamma = g;
                p = default_init(v, data, p);
                const double f = obj(to_z(p), nullptr);
                if (f < best_f) {
                    best_f = f;
                    best = p;
                }
            }
    if (!std::isfinite(best_f)) throw std::runtime_error("no grid initialization gives a finite objective");
    return best;
}

FitReport fit_single(const LawVariant& v, std::span<const FitCurve> data, const FitConfig& cfg) {
    Objective obj(v, data, cfg.delta);
    std::vector<ParamVec> starts;
    MplParams init;
    switch (cfg.init_mode) {
        case InitMode::explicit_init: init = cfg.init; break;
        case InitMode::grid: init = grid_init(v, data, obj); break;
        case InitMode::default_init: init = default_init(v, data, MplParams{}); break;
    }
    starts.push_back(to_z(init));
    const bool multi = v.tag == VariantTag::mtl || v.tag == VariantTag::cdsl;
    if (multi) {
        for (int s = 1; s < cfg.multi_start; ++s) {
            CounterRng rng(cfg.seed, static_cast<std::uint64_t>(s));
            ParamVec z = starts.front();
            for (std::size_t j = 0; j < kNumParams; ++j) z[j] += 0.5 * rng.gaussian();
            starts.push_back(z);
        }
    }
    RunResult best;
    for (const auto& z0 : starts) {
        if (!std::isfinite(obj(z0, nullptr))) continue;
        RunResult r = run_adam(obj, z0, cfg);
        if (r.objective < best.objective) best = std::move(r);
    }
    if (!std::isfinite(best.objective)) throw std::runtime_error("every start gave a non-finite objective");
    FitReport rep;
    rep.variant = v;
    rep.params = MplParams::from_array(from_z(best.z));
    rep.objective = best.objective;
    rep.trace = std::move(best.trace);
    rep.phase_best = std::move(best.phase_best);
    return rep;
}

}  // namespace

void FitConfig::validate() const {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (!(lr_index > 0.0) || !(lr_coeff > 0.0)) throw std::invalid_argument("step sizes must be positive");
    if (phases < 1) throw std::invalid_argument("phases must be at least 1");
    if (steps_per_phase < 0) throw std::invalid_argument("steps_per_phase must be nonnegative");
    if (!(phase_lr_scale > 0.0)) throw std::invalid_argument("phase_lr_scale must be positive");
    if (multi_start < 1) throw std::invalid_argument("multi_start must be at least 1");
    for (double l : mtl_lambdas)
        if (!(l > 0.0 && l < 1.0)) throw std::invalid_argument("MTL lambdas must lie in (0, 1)");
}

FitCurve make_fit_curve(std::string name, const Schedule& s, LossCurve curve, InputMode mode) {
    curve.validate();
    FitCurve fc;
    fc.name = std::move(name);
    fc.input = mode == InputMode::exact ? LawInput::exact(s, curve.steps) : LawInput::compressed(s, curve.steps);
    fc.curve = std::move(curve);
    return fc;
}

double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) { return std::clamp(r, -delta, delta); }

double fit_objective(const LawVariant& v, const MplParams& p, std::span<const FitCurve> data, double delta) {
    double total = 0.0;
    for (const auto& fc : data) {
        const auto pred = predict(v, p, fc.input);
        if (pred.size() != fc.curve.losses.size()) throw std::invalid_argument("curve and law input lengths differ");
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!(pred[i] > 0.0) || !(fc.curve.losses[i] > 0.0))
                throw std::domain_error(fmt::format("non-positive loss or prediction in curve '{}' at step {}",
                                                    fc.name, fc.curve.steps[i]));
            total += huber(std::log(pred[i]) - std::log(fc.curve.losses[i]), delta);
        }
    }
    return total;
}

FitReport fit_law(const LawVariant& v, std::span<const FitCurve> data, const FitConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("cannot fit an empty dataset");
    for (const auto& fc : data) fc.curve.validate();

    std::vector<FitCurve> reduced;
    std::span<const FitCurve> used = data;
    if (v.tag == VariantTag::cdsl) {
        reduced = final_points_only(data);
        used = reduced;
    }

    FitReport rep;
    if (v.tag == VariantTag::mtl) {
        rep.objective = kInf;
        for (double lambda : cfg.mtl_lambdas) {
            FitReport r = fit_single(LawVariant::mtl(lambda), used, cfg);
            if (r.objective < rep.objective) rep = std::move(r);
        }
    } else {
        rep = fit_single(v, used, cfg);
    }
    score_curves(rep.variant, rep.params, data, rep.curve_metrics, rep.pooled);
    return rep;
}

TwoStageFit fit_two_stage_reduction(std::span<const double> x, std::span<const double> ld, double delta,
                                    std::optional<double> beta_fixed, std::int64_t steps) {
    if (x.size() != ld.size() || x.empty()) throw std::invalid_argument("x and LD samples must be nonempty and equal length");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= 1.0)) throw std::invalid_argument(fmt::format("x must be at least 1, got {}", x[i]));
        if (ld[i] > 0.0) {
            xs.push_back(x[i]);
            ys.push_back(ld[i]);
        }
    }
    if (ys.empty()) throw std::invalid_argument("LD samples are all zero or negative");
    if (beta_fixed && !(*beta_fixed > 0.0 && *beta_fixed < 1.0)) throw std::invalid_argument("fixed beta must lie in (0, 1)");

    // Asymptote from the largest sample, C from the slope through the origin at the first sample.
    const double b0 = 1.05 * *std::max_element(ys.begin(), ys.end());
    const double beta0 = beta_fixed.value_or(0.4);
    const double c0 = std::max(ys.front() / xs.front() / (b0 * beta0), 1e-8);
    std::array<double, 3> z{std::log(b0), std::log(c0), logit(beta0)};

    auto eval = [&](const std::array<double, 3>& zz, std::array<double, 3>* g) {
        const double B = std::exp(zz[0]), C = std::exp(zz[1]), beta = sigmoid(zz[2]);
        double f = 0.0;
        std::array<double, 3> acc{};
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double lu = std::log1p(C * xs[i]);
            const double q = std::exp(-beta * lu);
            const double G = -std::expm1(-beta * lu);
            if (!(G > 0.0)) return kInf;
            const double r = std::log(B * G) - std::log(ys[i]);
            f += huber(r, delta);
            if (g) {
                const double w = huber_derivative(r, delta);
                acc[0] += w;                                               // d log(BG) / d log B
                acc[1] += w * beta * q * C * xs[i] / (1.0 + C * xs[i]) / G;  // d / d log C
                acc[2] += w * lu * q / G * beta * (1.0 - beta);              // d / d logit beta
            }
        }
        if (g) {
            *g = acc;
            if (beta_fixed) (*g)[2] = 0.0;
        }
        return f;
    };

    std::array<double, 3> best = z;
    double best_f = eval(z, nullptr);
    const double rates[] = {5e-2, 5e-3, 5e-4};
    for (double rate : rates) {
        Adam adam(3);
        z = best;
        const std::array<double, 1> lr{rate};
        std::array<double, 3> g{};
        for (std::int64_t it = 0; it <= steps; ++it) {
            const double f = eval(z, &g);
            if (!std::isfinite(f)) {
                z = best;
                adam.reset();
                continue;
            }
            if (f < best_f) {
                best_f = f;
                best = z;
            }
            adam.step(z, g, lr);
        }
    }
    return {std::exp(best[0]), std::exp(best[1]), beta_fixed.value_or(sigmoid(best[2])), best_f};
}

Metrics evaluate_metrics(std::span<const double> pred, std::span<const double> gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw std::invalid_argument("metrics need equal, nonzero lengths");
    const auto n = static_cast<double>(gt.size());
    const double mean = std::accumulate(gt.begin(), gt.end(), 0.0) / n;
    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, rel_sum = 0.0, rel_max = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i] > 0.0)) throw std::domain_error(fmt::format("ground truth must be positive (index {})", i));
        const double d = pred[i] - gt[i];
        ss_res += d * d;
        ss_tot += (gt[i] - mean) * (gt[i] - mean);
        abs_sum += std::abs(d);
        rel_sum += std::abs(d) / gt[i];
        rel_max = std::max(rel_max, std::abs(d) / gt[i]);
    }
    Metrics m;
    m.mae = abs_sum / n;
    m.rmse = std::sqrt(ss_res / n);
    m.prede = rel_sum / n;
    m.worste = rel_max;
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - ss_res / ss_tot;
    } else {
        m.r2 = std::numeric_limits<double>::quiet_NaN();
        m.r2_defined = false;
    }
    return m;
}

void score_curves(const LawVariant& v, const MplParams& p, std::span<const FitCurve> data,
                  std::vector<std::pair<std::string, Metrics>>& per_curve, Metrics& pooled) {
    per_curve.clear();
    std::vector<double> all_pred, all_gt;
    for (const auto& fc : data) {
        const auto pred = predict(v, p, fc.input);
        per_curve.emplace_back(fc.name, evaluate_metrics(pred, fc.curve.losses));
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_gt.insert(all_gt.end(), fc.curve.losses.begin(), fc.curve.losses.end());
    }
    pooled = all_gt.empty() ? Metrics{} : evaluate_metrics(all_pred, all_gt);
}

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["r2"] = m.r2_defined ? nlohmann::json(m.r2) : nlohmann::json(nullptr);
    j["mae"] = m.mae;
    j["rmse"] = m.rmse;
    j["prede"] = m.prede;
    j["worste"] = m.worste;
    return j;
}

nlohmann::json fit_report_to_json(const FitReport& r) {
    nlohmann::json j = params_to_json(r.variant, r.params);
    j["objective"] = r.objective;
    j["phase_best"] = r.phase_best;
    nlohmann::json curves = nlohmann::json::object();
    for (const auto& [name, m] : r.curve_metrics) curves[name] = metrics_to_json(m);
    j["curve_metrics"] = curves;
    j["pooled_metrics"] = metrics_to_json(r.pooled);
    return j;
}

namespace {

std::string to_string(InitMode m) {
    switch (m) {
        case InitMode::default_init: return "default";
        case InitMode::grid: return "grid";
        case InitMode::explicit_init: return "explicit";
    }
    return "grid";
}

InitMode init_mode_from_string(const std::string& s) {
    if (s == "default") return InitMode::default_init;
    if (s == "grid") return InitMode::grid;
    if (s == "explicit") return InitMode::explicit_init;
    throw std::invalid_argument(fmt::format("unknown init_mode '{}'", s));
}

}  // namespace

nlohmann::json fit_config_to_json(const FitConfig& c) {
    nlohmann::json j;
    j["delta"] = c.delta;
    j["lr_index"] = c.lr_index;
    j["lr_coeff"] = c.lr_coeff;
    j["steps_per_phase"] = c.steps_per_phase;
    j["phases"] = c.phases;
    j["phase_lr_scale"] = c.phase_lr_scale;
    j["seed"] = c.seed;
    j["init_mode"] = to_string(c.init_mode);
    j["multi_start"] = c.multi_start;
    j["mtl_lambdas"] = c.mtl_lambdas;
    j["trace_every"] = c.trace_every;
    if (c.init_mode == InitMode::explicit_init) j["init"] = params_to_json(LawVariant::mpl(), c.init)["params"];
    return j;
}

FitConfig fit_config_from_json(const nlohmann::json& j) {
    FitConfig c;
    if (!j.is_object()) throw std::invalid_argument("fit config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "delta") c.delta = value.get<double>();
        else if (key == "lr_index") c.lr_index = value.get<double>();
        else if (key == "lr_coeff") c.lr_coeff = value.get<double>();
        else if (key == "steps_per_phase") c.steps_per_phase = value.get<std::int64_t>();
        else if (key == "phases") c.phases = value.get<int>();
        else if (key == "phase_lr_scale") c.phase_lr_scale = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "init_mode") c.init_mode = init_mode_from_string(value.get<std::string>());
        else if (key == "multi_start") c.multi_start = value.get<int>();
        else if (key == "mtl_lambdas") c.mtl_lambdas = value.get<std::vector<double>>();
        else if (key == "trace_every") c.trace_every = value.get<std::int64_t>();
        else if (key == "init") c.init = params_from_json(nlohmann::json{{"params", value}});
        else throw std::invalid_argument(fmt::format("unknown fit config key '{}'", key));
    }
    c.validate();
    return c;
}

}  // namespace mpl
