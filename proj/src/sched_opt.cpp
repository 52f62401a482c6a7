#include "mpl/sched_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "mpl/adam.hpp"

namespace mpl {

namespace {

void require_supported(const LawVariant& v) {
    switch (v.tag) {
        case VariantTag::mpl:
        case VariantTag::no_gamma:
        case VariantTag::opl:
        case VariantTag::mtl: return;
        default:
            throw std::invalid_argument(fmt::format("schedule optimization does not support variant {}", to_string(v.tag)));
    }
}

/// Clip into [0, eta0]; from the first step with eta <= eps the LR is zero.
void project(std::vector<double>& delta, double eta0, double eps) {
    double eta = eta0;
    std::size_t i = 0;
    for (; i < delta.size(); ++i) {
        delta[i] = std::clamp(delta[i], 0.0, eta0);
        const double next = eta - delta[i];
        if (next <= eps) {
            delta[i] = eta;
            ++i;
            break;
        }
        eta = next;
    }
    std::fill(delta.begin() + static_cast<std::ptrdiff_t>(i), delta.end(), 0.0);
}

Schedule schedule_from_delta(std::span<const double> delta, double eta0, std::int64_t W) {
    std::vector<double> lrs(delta.size());
    double eta = eta0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        eta -= delta[i];
        lrs[i] = std::max(eta, 0.0);
    }
    return Schedule(W, eta0, std::move(lrs), "optimized");
}

}  // namespace

void OptConfig::validate() const {
    if (T < 2) throw std::invalid_argument("optimization horizon must be at least 2");
    if (warmup_steps < 0) throw std::invalid_argument("warmup steps must be nonnegative");
    if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
    if (!(eps_clamp > 0.0)) throw std::invalid_argument("eps_clamp must be positive");
    if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
    if (iters < 0) throw std::invalid_argument("iters must be nonnegative");
    for (double s : step_size_grid)
        if (!(s > 0.0)) throw std::invalid_argument("step-size grid entries must be positive");
}

double final_loss_and_gradient(const LawVariant& v, const MplParams& p, double eta0, double warmup_sum,
                               std::span<const double> delta, std::vector<double>* grad) {
    require_supported(v);
    const std::size_t T = delta.size();
    std::vector<double> eta(T), suffix(T);
    double e = eta0;
    for (std::size_t i = 0; i < T; ++i) {
        e -= delta[i];
        eta[i] = e;
    }
    double acc = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        acc += eta[i];
        suffix[i] = acc;
    }
    const double u = suffix[0] + warmup_sum;
    if (!(u > 0.0)) throw std::domain_error("total LR sum is zero");
    const double power = std::pow(u, -p.alpha);
    const double pw = -p.alpha * p.A * power / u;  // dL/d eta_t from the power term
    double loss = p.L0 + p.A * power;

    if (grad) grad->assign(T, 0.0);

    if (v.tag == VariantTag::opl) {
        if (grad)
            for (std::size_t j = 0; j < T; ++j) (*grad)[j] = -pw * static_cast<double>(T - j);
        return loss;
    }
    if (v.tag == VariantTag::mtl) {
        const double log_lambda = std::log(v.lambda);
        double ld = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
            const auto n = static_cast<double>(T - j);
            const double w = -std::expm1(n * log_lambda) / (1.0 - v.lambda);
            ld += delta[j] * w;
            if (grad) (*grad)[j] = -p.B * w - pw * n;
        }
        return loss - p.B * ld;
    }

    const double gamma = v.tag == VariantTag::mpl ? p.gamma : 0.0;
    std::vector<double> G(T, 0.0), g(T, 0.0);
    double ld = 0.0, P = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
        double gk = pw;
        if (eta[k] > 0.0) {
            // Zero-LR steps sit at x = 0 in the limit and contribute nothing.
            const double ep = gamma == 0.0 ? 1.0 : std::exp(-gamma * std::log(eta[k]));
            const double x = ep * suffix[k];
            const double cx1 = 1.0 + p.C * x;
            const double q = std::exp(-p.beta * std::log(cx1));
            G[k] = 1.0 - q;
            ld += delta[k] * G[k];
            if (grad) {
                const double gp = p.beta * p.C * q / cx1;
                P += delta[k] * gp * ep;
                gk += p.B * gamma * delta[k] * gp * ep / eta[k] * suffix[k];
            }
        }
        g[k] = gk - p.B * P;
    }
    if (grad) {
        double tail = 0.0;
        for (std::size_t j = T; j-- > 0;) {
            tail += g[j];
            (*grad)[j] = -p.B * G[j] - tail;
        }
    }
    return loss - p.B * ld;
}

OptResult optimize_schedule(const LawVariant& v, const MplParams& p, const OptConfig& cfg) {
    cfg.validate();
    require_supported(v);
    validate_params(v, p);
    const auto T = static_cast<std::size_t>(cfg.T);
    const double sw = 0.5 * cfg.eta0 * static_cast<double>(cfg.warmup_steps);
    std::vector<double> delta(T, 0.0), grad, best_delta = delta;
    double best = std::numeric_limits<double>::infinity();
    Adam adam(T);
    const std::array<double, 1> lr{cfg.step_size};
    OptResult res;
    res.step_size = cfg.step_size;
    for (std::int64_t it = 0; it <= cfg.iters; ++it) {
        const double loss = final_loss_and_gradient(v, p, cfg.eta0, sw, delta, &grad);
        if (!std::isfinite(loss)) throw std::runtime_error(fmt::format("surrogate loss is not finite at iteration {}", it));
        if (loss < best) {
            best = loss;
            best_delta = delta;
        }
        if (cfg.trace_every > 0 && it % cfg.trace_every == 0) res.trace.emplace_back(it, best);
        if (it == cfg.iters) break;
        adam.step(delta, grad, lr);
        project(delta, cfg.eta0, cfg.eps_clamp);
    }
    res.schedule = schedule_from_delta(best_delta, cfg.eta0, cfg.warmup_steps);
    res.final_loss = best;
    return res;
}

OptResult optimize_schedule_grid(const LawVariant& v, const MplParams& p, const OptConfig& cfg) {
    if (cfg.step_size_grid.empty()) return optimize_schedule(v, p, cfg);
    OptResult best;
    best.final_loss = std::numeric_limits<double>::infinity();
    for (double s : cfg.step_size_grid) {
        OptConfig c = cfg;
        c.step_size = s;
        OptResult r = optimize_schedule(v, p, c);
        if (r.final_loss < best.final_loss) best = std::move(r);
    }
    return best;
}

double predicted_final_loss(const LawVariant& v, const MplParams& p, const Schedule& s) {
    const std::int64_t T = s.length();
    return predict(v, p, s, std::span<const std::int64_t>(&T, 1)).front();
}

PhaseReport detect_phases(const Schedule& s, double tol, double floor_frac) {
    if (!(tol >= 0.0 && tol < 1.0)) throw std::invalid_argument("tol must lie in [0, 1)");
    if (!s.is_monotone()) throw std::invalid_argument("phase detection needs a monotone schedule");
    const std::int64_t T = s.length();
    const double eta0 = s.peak_lr();
    PhaseReport r;
    r.final_lr_ratio = s.lr(T) / eta0;
    r.decay_exponent = std::numeric_limits<double>::quiet_NaN();
    std::int64_t ts = 0;
    while (ts < T && s.lr(ts + 1) >= (1.0 - tol) * eta0) ++ts;
    r.T_stable = ts;
    r.decay_start = ts;
    if (ts == T) return r;
    r.has_decay = true;

    // Regression through the origin over the usable decay points for a given start.
    auto fit = [&](std::int64_t start, double& p_out) {
        const auto span = static_cast<double>(T - start);
        const std::int64_t stride = std::max<std::int64_t>(1, (T - start) / 2000);
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::int64_t t = start + 1; t < T; t += stride) {
            const double ratio = s.lr(t) / eta0;
            if (ratio <= 0.0 || ratio < floor_frac) continue;
            const double x = std::log1p(-static_cast<double>(t - start) / span);
            const double y = std::log(ratio);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        if (sxx == 0.0) return std::numeric_limits<double>::infinity();
        p_out = sxy / sxx;
        return syy - sxy * sxy / sxx;
    };

    const std::int64_t lo = std::max<std::int64_t>(0, ts - (T - ts));
    double best_res = std::numeric_limits<double>::infinity();
    for (std::int64_t start = ts; start >= lo; --start) {
        double p = 0.0;
        const double res = fit(start, p);
        if (res < best_res) {
            best_res = res;
            r.decay_start = start;
            r.decay_exponent = p;
        }
    }
    return r;
}

nlohmann::json phase_report_to_json(const PhaseReport& r) {
    nlohmann::json j;
    j["T_stable"] = r.T_stable;
    j["decay_start"] = r.decay_start;
    j["has_decay"] = r.has_decay;
    j["decay_exponent"] = r.has_decay && std::isfinite(r.decay_exponent) ? nlohmann::json(r.decay_exponent)
                                                                         : nlohmann::json(nullptr);
    j["final_lr_ratio"] = r.final_lr_ratio;
    return j;
}

OptConfig opt_config_from_json(const nlohmann::json& j) {
    OptConfig c;
    if (!j.is_object()) throw std::invalid_argument("optimization config must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "T") c.T = value.get<std::int64_t>();
        else if (key == "W") c.warmup_steps = value.get<std::int64_t>();
        else if (key == "eta0") c.eta0 = value.get<double>();
        else if (key == "step_size") c.step_size = value.get<double>();
        else if (key == "iters") c.iters = value.get<std::int64_t>();
        else if (key == "eps_clamp") c.eps_clamp = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "trace_every") c.trace_every = value.get<std::int64_t>();
        else if (key == "step_size_grid") c.step_size_grid = value.get<std::vector<double>>();
        else throw std::invalid_argument(fmt::format("unknown optimization config key '{}'", key));
    }
    c.validate();
    return c;
}

}  // namespace mpl
