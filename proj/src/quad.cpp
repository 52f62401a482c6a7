#include "mpl/quad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mpl/rng.hpp"
#include "mpl/special.hpp"

namespace mpl {

namespace {

void step_moments(std::vector<double>& m, const SpectrumInstance& inst, double eta) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double a = 1.0 - eta * inst.lambdas[i];
        m[i] = a * a * m[i] + eta * eta * inst.sigmas[i];
    }
}

double loss_of(const std::vector<double>& m, const SpectrumInstance& inst) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) sum += inst.lambdas[i] * m[i];
    return 0.5 * sum;
}

std::vector<double> initial_moments(const SpectrumInstance& inst) {
    std::vector<double> m(inst.deltas.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = inst.deltas[i] * inst.deltas[i];
    return m;
}

}  // namespace

void QuadSpec::validate() const {
    if (d < 1) throw std::invalid_argument("d must be at least 1");
    if (!(nu >= 0.0 && nu < 1.0)) throw std::invalid_argument(fmt::format("nu must lie in [0, 1), got {}", nu));
    if (!(Lambda > 0.0)) throw std::invalid_argument("Lambda must be positive");
    if (!(rho < 1.0 - nu)) throw std::invalid_argument(fmt::format("rho must be below 1 - nu, got {}", rho));
    if (!(r > 0.0)) throw std::invalid_argument("r must be positive");
    if (!(kappa >= 0.0 && kappa < 2.0 - nu)) throw std::invalid_argument(fmt::format("kappa must lie in [0, 2 - nu), got {}", kappa));
    if (!(D > 0.0)) throw std::invalid_argument("D must be positive");
    if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
    if (!(mu >= 0.0)) throw std::invalid_argument("mu must be nonnegative");
}

TheoryConstants theory_constants(const QuadSpec& spec, double eta0) {
    spec.validate();
    TheoryConstants c{};
    const auto d = static_cast<double>(spec.d);
    c.alpha = 2.0 - spec.nu - spec.kappa;
    c.beta = 1.0 - spec.nu - spec.rho;
    c.C = 2.0 / spec.r;
    c.Z = std::pow(spec.Lambda, 1.0 - spec.nu) / (1.0 - spec.nu);
    c.F = c.Z * std::pow(spec.r, c.beta) / lower_incomplete_gamma(c.beta, spec.r * spec.Lambda);
    c.L0 = 0.25 * d * eta0 * spec.mu;
    c.A = d * std::tgamma(c.alpha) * spec.D * spec.D / (std::pow(2.0, c.alpha + 1.0) * c.Z);
    c.B = 0.25 * d * spec.mu;
    return c;
}

void SpectrumInstance::validate() const {
    if (lambdas.size() != sigmas.size() || lambdas.size() != deltas.size() || lambdas.empty())
        throw std::invalid_argument("spectrum arrays must be nonempty and equal length");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > 0.0)) throw std::invalid_argument(fmt::format("lambda {} must be positive", i));
        if (!(sigmas[i] >= 0.0)) throw std::invalid_argument(fmt::format("sigma {} must be nonnegative", i));
        if (!std::isfinite(deltas[i])) throw std::invalid_argument(fmt::format("delta {} is not finite", i));
    }
}

SpectrumInstance sample_spectra(const QuadSpec& spec, std::uint64_t seed) {
    const TheoryConstants c = theory_constants(spec, spec.eta0);
    CounterRng rng(seed);
    SpectrumInstance inst;
    const auto d = static_cast<std::size_t>(spec.d);
    inst.lambdas.resize(d);
    inst.sigmas.resize(d);
    inst.deltas.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double lam = spec.Lambda * std::pow(rng.uniform(), 1.0 / (1.0 - spec.nu));
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        inst.lambdas[i] = lam;
        inst.sigmas[i] = c.F * spec.mu * std::pow(lam, -spec.rho) * std::exp(-spec.r * lam);
        inst.deltas[i] = sign * spec.D * std::pow(lam, -0.5 * spec.kappa);
    }
    return inst;
}

std::vector<double> exact_expected_loss(const SpectrumInstance& inst, const Schedule& s) {
    inst.validate();
    std::vector<double> m = initial_moments(inst);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(s.length()) + 1);
    out.push_back(loss_of(m, inst));
    for (double eta : s.lrs()) {
        step_moments(m, inst, eta);
        out.push_back(loss_of(m, inst));
    }
    return out;
}

McCurve sgd_monte_carlo(const SpectrumInstance& inst, const Schedule& s, std::int64_t trials, std::uint64_t seed) {
    inst.validate();
    if (trials < 1) throw std::invalid_argument("trials must be at least 1");
    const std::size_t d = inst.lambdas.size();
    const auto T = static_cast<std::size_t>(s.length());
    std::vector<double> sum(T + 1, 0.0), sum_sq(T + 1, 0.0), theta(d), noise_sd(d);
    for (std::size_t i = 0; i < d; ++i) noise_sd[i] = std::sqrt(inst.sigmas[i]);
    const auto lrs = s.lrs();
    for (std::int64_t trial = 0; trial < trials; ++trial) {
        CounterRng rng(seed, static_cast<std::uint64_t>(trial));
        theta.assign(inst.deltas.begin(), inst.deltas.end());
        for (std::size_t t = 0; t <= T; ++t) {
            if (t > 0) {
                const double eta = lrs[t - 1];
                for (std::size_t i = 0; i < d; ++i) {
                    const double g = inst.lambdas[i] * theta[i] + noise_sd[i] * rng.gaussian();
                    theta[i] -= eta * g;
                }
            }
            double loss = 0.0;
            for (std::size_t i = 0; i < d; ++i) loss += inst.lambdas[i] * theta[i] * theta[i];
            loss *= 0.5;
            sum[t] += loss;
            sum_sq[t] += loss * loss;
        }
    }
    McCurve out;
    out.mean.resize(T + 1);
    out.stderr_.resize(T + 1);
    const auto n = static_cast<double>(trials);
    for (std::size_t t = 0; t <= T; ++t) {
        const double mean = sum[t] / n;
        const double var = trials > 1 ? std::max(0.0, (sum_sq[t] - n * mean * mean) / (n - 1.0)) : 0.0;
        out.mean[t] = mean;
        out.stderr_[t] = std::sqrt(var / n);
    }
    return out;
}

MEstimate m_estimate(const SpectrumInstance& inst, const Schedule& s, double eta0) {
    inst.validate();
    if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
    const std::int64_t T = s.length();
    const double S1 = s.cumulative_sum(T);
    double eta_max = eta0;
    for (double e : s.lrs()) eta_max = std::max(eta_max, e);

    double head = 0.0, bound_init = 0.0, bound_noise = 0.0;
    for (std::size_t i = 0; i < inst.lambdas.size(); ++i) {
        const double lam = inst.lambdas[i], sig = inst.sigmas[i], th2 = inst.deltas[i] * inst.deltas[i];
        const double decay = std::exp(-2.0 * lam * S1);
        head += th2 * lam * decay + eta0 * sig * (-std::expm1(-2.0 * lam * S1)) / 2.0;
        bound_init += lam * lam * lam * S1 * decay * th2;
        bound_noise += sig * lam;
    }
    double tail = 0.0;
    for (std::int64_t k = 1; k <= T; ++k) {
        const double drop = s.lr(k - 1) - s.lr(k);
        if (drop == 0.0) continue;
        const double Sk = s.prefix_sum(k, T);
        double inner = 0.0;
        for (std::size_t i = 0; i < inst.lambdas.size(); ++i)
            inner += inst.sigmas[i] * (-std::expm1(-2.0 * inst.lambdas[i] * Sk)) / 2.0;
        tail += drop * inner;
    }
    return {0.5 * head - 0.5 * tail, 5.0 * eta_max * bound_init + 7.5 * eta_max * eta_max * bound_noise};
}

double g_hat(double x, double beta, double r, double Lambda) {
    if (!(x >= 0.0)) throw std::domain_error(fmt::format("G_hat needs x >= 0, got {}", x));
    const double C = 2.0 / r;
    const double ratio = lower_incomplete_gamma(beta, (2.0 * x + r) * Lambda) / lower_incomplete_gamma(beta, r * Lambda);
    return 1.0 - ratio * std::pow(C * x + 1.0, -beta);
}

double matched_g_coefficient(double beta, double r, double Lambda) {
    return std::pow(std::tgamma(beta) / lower_incomplete_gamma(beta, r * Lambda), -1.0 / beta) * 2.0 / r;
}

std::vector<double> theory_curve(const QuadSpec& spec, const Schedule& s, double eta0) {
    const TheoryConstants c = theory_constants(spec, eta0);
    const std::int64_t T = s.length();
    std::vector<std::int64_t> drops;
    for (std::int64_t k = 1; k <= T; ++k)
        if (s.lr(k - 1) != s.lr(k)) drops.push_back(k);
    // eta_0 here is the theory's reference LR; the schedule's own step 0 is its peak.
    std::vector<double> out(static_cast<std::size_t>(T));
    for (std::int64_t t = 1; t <= T; ++t) {
        const double S1 = s.cumulative_sum(t);
        if (!(S1 > 0.0)) throw std::domain_error(fmt::format("S_1({}) is zero", t));
        double ld = 0.0;
        for (std::int64_t k : drops) {
            if (k > t) break;
            ld += (s.lr(k - 1) - s.lr(k)) * g_hat(s.prefix_sum(k, t), c.beta, spec.r, spec.Lambda);
        }
        out[static_cast<std::size_t>(t - 1)] = c.L0 + c.A * std::pow(S1, -c.alpha) - c.B * ld;
    }
    return out;
}

double auxiliary_loss(const SpectrumInstance& inst, const Schedule& s, std::int64_t k, std::int64_t t) {
    inst.validate();
    if (t < 1 || t > s.length()) throw std::out_of_range(fmt::format("step {} outside [1, {}]", t, s.length()));
    if (k < 0 || k > t) throw std::out_of_range(fmt::format("auxiliary index {} outside [0, {}]", k, t));
    const double eta_k = s.lr(k);
    if (!(eta_k > 0.0)) throw std::domain_error(fmt::format("auxiliary process {} continues at zero LR", k));

    std::vector<double> m = initial_moments(inst);
    for (std::int64_t j = 1; j <= k; ++j) step_moments(m, inst, s.lr(j));

    // Equal-LR-sum step: k - 1 + S_k(t) / eta_k, or S_1(t) / eta_0 for k = 0.
    const double tk = k == 0 ? s.cumulative_sum(t) / eta_k : static_cast<double>(k - 1) + s.prefix_sum(k, t) / eta_k;
    const double remaining = std::max(tk - static_cast<double>(k), 0.0);
    const auto whole = static_cast<std::int64_t>(std::floor(remaining + 1e-9));
    const double frac = std::max(remaining - static_cast<double>(whole), 0.0);
    for (std::int64_t j = 0; j < whole; ++j) step_moments(m, inst, eta_k);
    const double lo = loss_of(m, inst);
    if (frac <= 1e-9) return lo;
    step_moments(m, inst, eta_k);
    return lo + frac * (loss_of(m, inst) - lo);
}

double auxiliary_ld(const SpectrumInstance& inst, const Schedule& s, std::int64_t k, std::int64_t t) {
    if (k < 0 || k >= t) throw std::out_of_range(fmt::format("auxiliary index {} outside [0, {})", k, t));
    return auxiliary_loss(inst, s, k, t) - auxiliary_loss(inst, s, k + 1, t);
}

nlohmann::json quad_spec_to_json(const QuadSpec& q) {
    return {{"d", q.d},         {"nu", q.nu}, {"Lambda", q.Lambda}, {"rho", q.rho}, {"r", q.r},
            {"kappa", q.kappa}, {"D", q.D},   {"eta0", q.eta0},     {"mu", q.mu}};
}

QuadSpec quad_spec_from_json(const nlohmann::json& j) {
    QuadSpec q;
    if (!j.is_object()) throw std::invalid_argument("quadratic spec must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "d") q.d = value.get<std::int64_t>();
        else if (key == "nu") q.nu = value.get<double>();
        else if (key == "Lambda") q.Lambda = value.get<double>();
        else if (key == "rho") q.rho = value.get<double>();
        else if (key == "r") q.r = value.get<double>();
        else if (key == "kappa") q.kappa = value.get<double>();
        else if (key == "D") q.D = value.get<double>();
        else if (key == "eta0") q.eta0 = value.get<double>();
        else if (key == "mu") q.mu = value.get<double>();
        else throw std::invalid_argument(fmt::format("unknown quadratic spec key '{}'", key));
    }
    q.validate();
    return q;
}

nlohmann::json spectrum_to_json(const SpectrumInstance& inst) {
    return {{"lambdas", inst.lambdas}, {"sigmas", inst.sigmas}, {"deltas", inst.deltas}};
}

SpectrumInstance spectrum_from_json(const nlohmann::json& j) {
    SpectrumInstance inst;
    inst.lambdas = j.at("lambdas").get<std::vector<double>>();
    inst.sigmas = j.at("sigmas").get<std::vector<double>>();
    inst.deltas = j.at("deltas").get<std::vector<double>>();
    inst.validate();
    return inst;
}

}  // namespace mpl
