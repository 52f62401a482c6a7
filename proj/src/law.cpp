#include "mpl/law.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace mpl {

namespace {

constexpr const char* kParamNames[kNumParams] = {"L0", "A", "B", "C", "alpha", "beta", "gamma"};

void check_steps(const Schedule& s, std::span<const std::int64_t> steps) {
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] < 1 || steps[i] > s.length())
            throw std::out_of_range(fmt::format("step {} outside [1, {}]", steps[i], s.length()));
        if (steps[i] <= prev)
            throw std::invalid_argument(fmt::format("evaluation steps must be strictly increasing (index {})", i));
        prev = steps[i];
    }
}

LawInput base_input(const Schedule& s, std::span<const std::int64_t> steps) {
    check_steps(s, steps);
    LawInput in;
    in.peak_lr = s.peak_lr();
    in.warmup_sum = s.warmup_sum();
    in.evals.reserve(steps.size());
    for (auto t : steps) in.evals.push_back({t, s.lr(t), s.cumulative_sum(t)});
    return in;
}

void push_change(LawInput& in, const Schedule& s, std::int64_t k, double drop) {
    in.changes.push_back({k, drop, s.lr(k), s.cumulative_sum(k - 1)});
}

}  // namespace

const char* param_name(std::size_t index) { return kParamNames[index]; }

std::string to_string(VariantTag tag) {
    switch (tag) {
        case VariantTag::mpl: return "MPL";
        case VariantTag::opl: return "OPL";
        case VariantTag::lldl: return "LLDL";
        case VariantTag::no_gamma: return "NoGamma";
        case VariantTag::spl: return "SPL";
        case VariantTag::mel: return "MEL";
        case VariantTag::mtl: return "MTL";
        case VariantTag::cdsl: return "CDSL";
    }
    return "unknown";
}

VariantTag variant_tag_from_string(const std::string& name) {
    for (auto tag : {VariantTag::mpl, VariantTag::opl, VariantTag::lldl, VariantTag::no_gamma, VariantTag::spl,
                     VariantTag::mel, VariantTag::mtl, VariantTag::cdsl}) {
        if (name == to_string(tag)) return tag;
    }
    throw std::invalid_argument(fmt::format("unknown law variant '{}'", name));
}

std::array<bool, kNumParams> active_params(VariantTag tag) {
    //                 L0    A     B      C      alpha beta   gamma
    switch (tag) {
        case VariantTag::mpl: return {true, true, true, true, true, true, true};
        case VariantTag::opl: return {true, true, false, false, true, false, false};
        case VariantTag::lldl: return {true, true, true, false, true, false, false};
        case VariantTag::no_gamma: return {true, true, true, true, true, true, false};
        case VariantTag::spl: return {true, true, true, true, true, true, false};
        case VariantTag::mel: return {true, true, true, true, true, false, false};
        case VariantTag::mtl: return {true, true, true, false, true, false, false};
        case VariantTag::cdsl: return {true, true, false, false, true, false, false};
    }
    return {};
}

bool is_exponent(std::size_t index) { return index >= kAlpha; }

void LossCurve::validate() const {
    if (steps.size() != losses.size())
        throw std::invalid_argument(
            fmt::format("loss curve has {} steps but {} losses", steps.size(), losses.size()));
    if (steps.empty()) throw std::invalid_argument("loss curve is empty");
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] <= prev)
            throw std::invalid_argument(fmt::format("loss curve steps must be positive and strictly increasing (index {})", i));
        if (!(losses[i] > 0.0) || !std::isfinite(losses[i]))
            throw std::invalid_argument(fmt::format("non-positive loss at index {}", i));
        prev = steps[i];
    }
}

LawInput LawInput::exact(const Schedule& s, std::span<const std::int64_t> steps) {
    LawInput in = base_input(s, steps);
    const std::int64_t last = steps.empty() ? 0 : steps.back();
    std::size_t e = 0;
    for (std::int64_t k = 1; k <= last; ++k) {
        const double drop = s.lr(k - 1) - s.lr(k);
        if (drop != 0.0) push_change(in, s, k, drop);
        while (e < in.evals.size() && in.evals[e].step == k) {
            in.n_changes.push_back(in.changes.size());
            ++e;
        }
    }
    return in;
}

LawInput LawInput::compressed(const Schedule& s, std::span<const std::int64_t> steps) {
    LawInput in = base_input(s, steps);
    std::int64_t prev = 0;
    for (const auto& ev : in.evals) {
        double total = 0.0, moment = 0.0;
        bool has_pos = false, has_neg = false;
        for (std::int64_t k = prev + 1; k <= ev.step; ++k) {
            const double drop = s.lr(k - 1) - s.lr(k);
            has_pos |= drop > 0.0;
            has_neg |= drop < 0.0;
            total += drop;
            moment += drop * static_cast<double>(k);
        }
        if (has_pos && has_neg) {
            for (std::int64_t k = prev + 1; k <= ev.step; ++k) {
                const double drop = s.lr(k - 1) - s.lr(k);
                if (drop != 0.0) push_change(in, s, k, drop);
            }
        } else if (total != 0.0) {
            auto k = static_cast<std::int64_t>(std::llround(moment / total));
            k = std::clamp(k, prev + 1, ev.step);
            push_change(in, s, k, total);
        }
        in.n_changes.push_back(in.changes.size());
        prev = ev.step;
    }
    return in;
}

double g_saturation(double x, double C, double beta) {
    if (!(x >= 0.0)) throw std::domain_error(fmt::format("G needs x >= 0, got {}", x));
    return -std::expm1(-beta * std::log1p(C * x));
}

double loss_reduction(const MplParams& p, const Schedule& s, std::int64_t t) {
    if (t < 1 || t > s.length())
        throw std::out_of_range(fmt::format("step {} outside [1, {}]", t, s.length()));
    double sum = 0.0;
    for (std::int64_t k = 1; k <= t; ++k) {
        const double drop = s.lr(k - 1) - s.lr(k);
        if (drop == 0.0) continue;
        const double eta = s.lr(k);
        const double S = s.prefix_sum(k, t);
        if (eta == 0.0) {
            if (S == 0.0) continue;  // limit of eta^(1-gamma) (t-k+1) as eta -> 0
            throw std::domain_error(fmt::format("LR is zero at step {} but S_k(t) > 0", k));
        }
        sum += drop * g_saturation(std::pow(eta, -p.gamma) * S, p.C, p.beta);
    }
    return p.B * sum;
}

void validate_params(const LawVariant& v, const MplParams& p) {
    const auto active = active_params(v.tag);
    const auto arr = p.to_array();
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (!active[i]) continue;
        if (!std::isfinite(arr[i]) || arr[i] < 0.0)
            throw std::invalid_argument(fmt::format("parameter {} must be finite and nonnegative, got {}", kParamNames[i], arr[i]));
    }
    if (v.tag == VariantTag::mtl && !(v.lambda > 0.0 && v.lambda < 1.0))
        throw std::invalid_argument(fmt::format("MTL lambda must lie in (0, 1), got {}", v.lambda));
}

void predict_with_gradient(const LawVariant& v, const MplParams& p, const LawInput& in,
                           std::vector<double>& pred, std::vector<ParamVec>& grad) {
    validate_params(v, p);
    const std::size_t n = in.evals.size();
    if (in.n_changes.size() != n) throw std::invalid_argument("law input is inconsistent");
    pred.assign(n, 0.0);
    grad.assign(n, ParamVec{});

    const bool uses_ld = v.tag == VariantTag::mpl || v.tag == VariantTag::no_gamma || v.tag == VariantTag::spl ||
                         v.tag == VariantTag::mel || v.tag == VariantTag::mtl;
    const double log_lambda = v.tag == VariantTag::mtl ? std::log(v.lambda) : 0.0;

    // eta_k^-gamma and log(eta_k) per change point; zero LR is flagged by log = -inf.
    std::vector<double> eta_pow, log_eta;
    if (v.tag == VariantTag::mpl) {
        eta_pow.resize(in.changes.size());
        log_eta.resize(in.changes.size());
        for (std::size_t c = 0; c < in.changes.size(); ++c) {
            const double eta = in.changes[c].eta;
            log_eta[c] = eta > 0.0 ? std::log(eta) : -INFINITY;
            eta_pow[c] = eta > 0.0 ? std::exp(-p.gamma * log_eta[c]) : 0.0;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& ev = in.evals[i];
        auto& g = grad[i];
        const double base = v.tag == VariantTag::cdsl ? static_cast<double>(ev.step) : ev.s1 + in.warmup_sum;
        if (!(base > 0.0))
            throw std::domain_error(fmt::format("power-law argument is zero at step {}", ev.step));
        const double log_base = std::log(base);
        const double power = std::exp(-p.alpha * log_base);
        double value = p.L0 + p.A * power;
        g[kL0] = 1.0;
        g[kA] = power;
        g[kAlpha] = -p.A * log_base * power;

        if (v.tag == VariantTag::lldl) {
            const double red = in.peak_lr - ev.eta;
            value -= p.B * red;
            g[kB] = -red;
        } else if (uses_ld) {
            double sum_g = 0.0, sum_dc = 0.0, sum_db = 0.0, sum_dgamma = 0.0;
            for (std::size_t c = 0; c < in.n_changes[i]; ++c) {
                const auto& ch = in.changes[c];
                const double S = ev.s1 - ch.s1_before;
                switch (v.tag) {
                    case VariantTag::mtl: {
                        const auto m = static_cast<double>(ev.step - ch.step + 1);
                        sum_g += ch.drop * (-std::expm1(m * log_lambda) / (1.0 - v.lambda));
                        break;
                    }
                    case VariantTag::mel: {
                        const double e = std::exp(-p.C * S);
                        sum_g += ch.drop * (1.0 - e);
                        sum_dc += ch.drop * S * e;
                        break;
                    }
                    default: {
                        double x = 0.0;
                        if (v.tag == VariantTag::spl) {
                            x = static_cast<double>(ev.step - ch.step + 1);
                        } else if (v.tag == VariantTag::no_gamma) {
                            x = S;
                        } else if (ch.eta > 0.0) {
                            x = eta_pow[c] * S;
                        } else if (S == 0.0) {
                            continue;
                        } else {
                            throw std::domain_error(fmt::format("LR is zero at step {} but S_k(t) > 0", ch.step));
                        }
                        const double log_u = std::log1p(p.C * x);
                        const double q = std::exp(-p.beta * log_u);  // (Cx+1)^-beta
                        const double q_over_u = q / (1.0 + p.C * x);
                        sum_g += ch.drop * (1.0 - q);
                        sum_dc += ch.drop * p.beta * x * q_over_u;
                        sum_db += ch.drop * log_u * q;
                        if (v.tag == VariantTag::mpl)
                            sum_dgamma += ch.drop * p.beta * p.C * q_over_u * (-log_eta[c] * x);
                        break;
                    }
                }
            }
            value -= p.B * sum_g;
            g[kB] = -sum_g;
            g[kC] = -p.B * sum_dc;
            g[kBeta] = -p.B * sum_db;
            g[kGamma] = -p.B * sum_dgamma;
        }
        const auto active = active_params(v.tag);
        for (std::size_t j = 0; j < kNumParams; ++j)
            if (!active[j]) g[j] = 0.0;
        pred[i] = value;
    }
}

std::vector<double> predict(const LawVariant& v, const MplParams& p, const LawInput& in) {
    std::vector<double> pred;
    std::vector<ParamVec> grad;
    predict_with_gradient(v, p, in, pred, grad);
    return pred;
}

std::vector<double> predict(const LawVariant& v, const MplParams& p, const Schedule& s,
                            std::span<const std::int64_t> steps) {
    return predict(v, p, LawInput::exact(s, steps));
}

std::vector<ParamVec> predict_gradient(const MplParams& p, const Schedule& s, std::span<const std::int64_t> steps) {
    std::vector<double> pred;
    std::vector<ParamVec> grad;
    predict_with_gradient(LawVariant::mpl(), p, LawInput::exact(s, steps), pred, grad);
    return grad;
}

double mtl_double_sum(double lambda, const Schedule& s, std::int64_t t) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw std::invalid_argument(fmt::format("lambda must lie in (0, 1), got {}", lambda));
    if (t < 1 || t > s.length()) throw std::out_of_range(fmt::format("step {} outside [1, {}]", t, s.length()));
    double total = 0.0;
    for (std::int64_t i = 1; i <= t; ++i) {
        double inner = 0.0;
        for (std::int64_t k = 1; k <= i; ++k)
            inner += (s.lr(k - 1) - s.lr(k)) * std::pow(lambda, static_cast<double>(i - k));
        total += inner;
    }
    return total;
}

double mtl_closed_form(double lambda, const Schedule& s, std::int64_t t) {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw std::invalid_argument(fmt::format("lambda must lie in (0, 1), got {}", lambda));
    if (t < 1 || t > s.length()) throw std::out_of_range(fmt::format("step {} outside [1, {}]", t, s.length()));
    const double log_lambda = std::log(lambda);
    double total = 0.0;
    for (std::int64_t k = 1; k <= t; ++k) {
        const double drop = s.lr(k - 1) - s.lr(k);
        if (drop == 0.0) continue;
        total += drop * (-std::expm1(static_cast<double>(t - k + 1) * log_lambda) / (1.0 - lambda));
    }
    return total;
}

nlohmann::json params_to_json(const LawVariant& v, const MplParams& p) {
    nlohmann::json j;
    j["variant"] = to_string(v.tag);
    if (v.tag == VariantTag::mtl) j["lambda"] = v.lambda;
    const auto arr = p.to_array();
    const auto active = active_params(v.tag);
    nlohmann::json params = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumParams; ++i)
        if (active[i]) params[kParamNames[i]] = arr[i];
    j["params"] = params;
    return j;
}

MplParams params_from_json(const nlohmann::json& j, LawVariant* variant) {
    LawVariant v;
    v.tag = variant_tag_from_string(j.value("variant", std::string("MPL")));
    if (j.contains("lambda")) v.lambda = j.at("lambda").get<double>();
    const auto& params = j.contains("params") ? j.at("params") : j;
    ParamVec arr = MplParams{}.to_array();
    for (const auto& [key, value] : params.items()) {
        if (&params == &j && (key == "variant" || key == "lambda")) continue;
        const auto* it = std::find_if(std::begin(kParamNames), std::end(kParamNames),
                                      [&](const char* n) { return key == n; });
        if (it == std::end(kParamNames)) throw std::invalid_argument(fmt::format("unknown parameter '{}'", key));
        arr[static_cast<std::size_t>(it - std::begin(kParamNames))] = value.get<double>();
    }
    if (variant) *variant = v;
    return MplParams::from_array(arr);
}

}  // namespace mpl
