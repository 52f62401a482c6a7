#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mpl/schedule.hpp"

namespace mpl {

/// Power-law spectrum hyperparameters of the noisy quadratic model.
struct QuadSpec {
    std::int64_t d = 1024;
    double nu = 0.3;      // eigenvalue density p(lambda) ~ lambda^-nu on (0, Lambda]
    double Lambda = 1.0;
    double rho = 0.2;     // noise E[Sigma | lambda] ~ lambda^-rho exp(-r lambda)
    double r = 2.0;
    double kappa = 0.5;   // init E[Delta^2 | lambda] = D^2 lambda^-kappa
    double D = 1.0;
    double eta0 = 0.1;
    double mu = 1.0;      // E[Sigma]

    void validate() const;
};

/// Closed-form constants of the large-d theory.
struct TheoryConstants {
    double L0, A, alpha, B, beta, C, Z, F;
};

TheoryConstants theory_constants(const QuadSpec& spec, double eta0);

struct SpectrumInstance {
    std::vector<double> lambdas;
    std::vector<double> sigmas;
    std::vector<double> deltas;  // initial offsets theta_0

    void validate() const;
};

SpectrumInstance sample_spectra(const QuadSpec& spec, std::uint64_t seed);

/// Expected loss 0.5 sum_i lambda_i E[theta_i^2] at t = 0..T (size T + 1).
std::vector<double> exact_expected_loss(const SpectrumInstance& inst, const Schedule& s);

struct McCurve {
    std::vector<double> mean;    // t = 0..T
    std::vector<double> stderr_;
};

/// Monte-Carlo SGD with gradient noise N(H theta, Sigma); trial i uses stream i of the seed.
McCurve sgd_monte_carlo(const SpectrumInstance& inst, const Schedule& s, std::int64_t trials, std::uint64_t seed);

struct MEstimate {
    double value;
    double bound;
};

/// Final-step estimate M(theta_0, E) and its error bound. eta_max in the bound
/// is the larger of eta0 and every scheduled LR.
MEstimate m_estimate(const SpectrumInstance& inst, const Schedule& s, double eta0);

/// G_hat(x) = 1 - gamma(beta, (2x + r) Lambda) / gamma(beta, r Lambda) (Cx + 1)^-beta, with C = 2 / r.
double g_hat(double x, double beta, double r, double Lambda);

/// Coefficient C of the empirical G(x) = 1 - (Cx + 1)^-beta whose large-x
/// tail matches G_hat: (Gamma(beta) / gamma(beta, r Lambda))^(-1/beta) * 2 / r.
double matched_g_coefficient(double beta, double r, double Lambda);

/// Theory prediction at t = 1..T (size T); no warmup term.
std::vector<double> theory_curve(const QuadSpec& spec, const Schedule& s, double eta0);

/// L_k(t_k) - L_{k+1}(t_{k+1}) for auxiliary processes k and k + 1, where
/// process k follows the schedule for k steps then holds eta_k (process 0 holds
/// eta_0 throughout) and t_k is its equal-LR-sum step. Fractional t_k are
/// linearly interpolated.
double auxiliary_ld(const SpectrumInstance& inst, const Schedule& s, std::int64_t k, std::int64_t t);

/// Expected loss of auxiliary process k at its equal-LR-sum step for t.
double auxiliary_loss(const SpectrumInstance& inst, const Schedule& s, std::int64_t k, std::int64_t t);

nlohmann::json quad_spec_to_json(const QuadSpec& q);
QuadSpec quad_spec_from_json(const nlohmann::json& j);
nlohmann::json spectrum_to_json(const SpectrumInstance& inst);
SpectrumInstance spectrum_from_json(const nlohmann::json& j);

}  // namespace mpl
