#pragma once

#include <cstddef>

namespace geoqhd {

/// Parameters of the large-p densities of the correlation summary statistics.
/// The hub degree is fixed at 1 (nearest-neighbour statistic).
struct DensityParams {
    int n = 10;      ///< samples per window, >= 5
    int p = 2;       ///< variable count, >= 2
    double J = 1.0;  ///< dispersion parameter, J = 1 under the diagonal null

    void validate() const;
};

/// Which member of the exponential family: the per-variable statistic V_k has
/// Poisson rate (p - 1), the global statistic V has the pair count p(p-1)/2.
enum class StatisticScope { Local, Global };

double poisson_rate(int p, StatisticScope scope);

/// Null probability that a sample correlation magnitude from n samples exceeds
/// rho. Holds the Beta normaliser for one n so repeated evaluation only pays
/// for the quadrature.
class NullExceedance {
public:
    explicit NullExceedance(int n);

    [[nodiscard]] int n() const noexcept { return n_; }

    /// 2 * int_rho^1 (1-u^2)^{(n-4)/2} du / B(1/2, (n-2)/2), rho in [0, 1].
    [[nodiscard]] double operator()(double rho) const;

    /// The complementary integral over [0, rho]; p0 + complement == 1.
    [[nodiscard]] double complement(double rho) const;

    /// 2 (1-rho^2)^{(n-4)/2} / B((n-2)/2, 1/2) = -dP0/drho.
    [[nodiscard]] double kernel(double rho) const;

    /// Quadrature without the n >= 5 gate; n >= 4. Exposed for tests of the
    /// integrator against closed forms.
    static double integrate_unchecked(double rho, int n);

private:
    int n_;
    double exponent_;
    double inv_beta_;
};

/// P_0(rho) for window length n (n >= 5).
double p0(double rho, int n);

/// f_V(rho; J) of the per-variable statistic, rho in (0, 1].
double local_density(double rho, const DensityParams& params);
/// P(V_k <= rho) = exp(-(p-1) J P_0(rho)).
double local_cdf(double rho, const DensityParams& params);

/// Density of the global statistic: the local family with (p-1) replaced by
/// the pair count p(p-1)/2.
double global_density(double rho, const DensityParams& params);
double global_cdf(double rho, const DensityParams& params);

/// Natural log of the density; -inf where the density is zero.
double log_density(double rho, const DensityParams& params, StatisticScope scope);
double log_density(double rho, const DensityParams& params, const NullExceedance& null, StatisticScope scope);

/// log f(rho; J) - log f(rho; 1) = log J - rate (J - 1) P_0(rho).
double log_density_ratio(double rho, double J, const DensityParams& params,
                         StatisticScope scope = StatisticScope::Local);

}  // namespace geoqhd
