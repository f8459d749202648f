#include "geoqhd/rmt_density.hpp"

#include "geoqhd/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace geoqhd {

namespace {

constexpr unsigned kMaxDepth = 15;
constexpr double kRelTolerance = 1e-13;

double beta_half(int n) {
    const double a = 0.5 * (n - 2);
    return std::exp(std::lgamma(a) + std::lgamma(0.5) - std::lgamma(a + 0.5));
}

// int_rho^1 (1-u^2)^e du with u = 1 - delta v^2, delta = 1 - rho:
//   delta^{e+1} int_0^1 2 v^{2e+1} (2 - delta v^2)^e dv.
// The integrand is smooth and O(1) for every n >= 4, including half-integer e
// and rho -> 1 where the original form loses all relative precision.
double tail_integral(double rho, double exponent) {
    const double delta = 1.0 - rho;
    if (delta <= 0.0) {
        return 0.0;
    }
    const double odd_power = 2.0 * exponent + 1.0;
    auto f = [delta, exponent, odd_power](double v) {
        return 2.0 * std::pow(v, odd_power) * std::pow(2.0 - delta * v * v, exponent);
    };
    const double inner =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, kMaxDepth, kRelTolerance);
    return std::pow(delta, exponent + 1.0) * inner;
}

// int_0^rho (1-u^2)^e du for rho <= 1/2, where the integrand is smooth.
double head_integral(double rho, double exponent) {
    if (rho <= 0.0) {
        return 0.0;
    }
    auto f = [exponent](double u) { return std::pow((1.0 - u) * (1.0 + u), exponent); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, rho, kMaxDepth, kRelTolerance);
}

void check_rho(double rho, const char* where) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw DomainError(std::string(where) + ": rho=" + std::to_string(rho) + " outside [0, 1]");
    }
}

}  // namespace

void DensityParams::validate() const {
    if (n < 5) {
        throw ConfigError("density: n=" + std::to_string(n) + " below the supported minimum of 5");
    }
    if (p < 2) {
        throw ConfigError("density: p=" + std::to_string(p) + " must be >= 2");
    }
    if (!(J > 0.0) || !std::isfinite(J)) {
        throw ConfigError("density: J=" + std::to_string(J) + " must be positive and finite");
    }
}

double poisson_rate(int p, StatisticScope scope) {
    const double pp = static_cast<double>(p);
    return scope == StatisticScope::Local ? pp - 1.0 : 0.5 * pp * (pp - 1.0);
}

NullExceedance::NullExceedance(int n) : n_(n), exponent_(0.5 * (n - 4)), inv_beta_(0.0) {
    if (n < 5) {
        throw ConfigError("P0: n=" + std::to_string(n) + " below the supported minimum of 5");
    }
    inv_beta_ = 1.0 / beta_half(n);
}

double NullExceedance::operator()(double rho) const {
    check_rho(rho, "P0");
    if (rho == 0.0) return 1.0;
    if (rho == 1.0) return 0.0;
    return 2.0 * inv_beta_ * tail_integral(rho, exponent_);
}

double NullExceedance::complement(double rho) const {
    check_rho(rho, "P0 complement");
    if (rho > 0.5) {
        return 1.0 - (*this)(rho);
    }
    return 2.0 * inv_beta_ * head_integral(rho, exponent_);
}

double NullExceedance::kernel(double rho) const {
    const double base = 1.0 - rho * rho;
    if (base <= 0.0) return 0.0;
    return 2.0 * inv_beta_ * std::pow(base, exponent_);
}

double NullExceedance::integrate_unchecked(double rho, int n) {
    if (n < 4) {
        throw ConfigError("P0 quadrature: n must be >= 4");
    }
    check_rho(rho, "P0");
    return 2.0 * tail_integral(rho, 0.5 * (n - 4)) / beta_half(n);
}

double p0(double rho, int n) {
    return NullExceedance(n)(rho);
}

namespace {

double density(double rho, const DensityParams& params, StatisticScope scope) {
    params.validate();
    check_rho(rho, "density");
    const NullExceedance null(params.n);
    const double rate = poisson_rate(params.p, scope);
    return rate * params.J * null.kernel(rho) * std::exp(-rate * params.J * null(rho));
}

double cdf(double rho, const DensityParams& params, StatisticScope scope) {
    params.validate();
    check_rho(rho, "cdf");
    const double rate = poisson_rate(params.p, scope);
    return std::exp(-rate * params.J * p0(rho, params.n));
}

}  // namespace

double local_density(double rho, const DensityParams& params) {
    return density(rho, params, StatisticScope::Local);
}

double local_cdf(double rho, const DensityParams& params) {
    return cdf(rho, params, StatisticScope::Local);
}

double global_density(double rho, const DensityParams& params) {
    return density(rho, params, StatisticScope::Global);
}

double global_cdf(double rho, const DensityParams& params) {
    return cdf(rho, params, StatisticScope::Global);
}

double log_density(double rho, const DensityParams& params, const NullExceedance& null, StatisticScope scope) {
    check_rho(rho, "log_density");
    const double rate = poisson_rate(params.p, scope);
    const double k = null.kernel(rho);
    if (k <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return std::log(rate) + std::log(params.J) + std::log(k) - rate * params.J * null(rho);
}

double log_density(double rho, const DensityParams& params, StatisticScope scope) {
    params.validate();
    return log_density(rho, params, NullExceedance(params.n), scope);
}

double log_density_ratio(double rho, double J, const DensityParams& params, StatisticScope scope) {
    params.validate();
    check_rho(rho, "log_density_ratio");
    if (!(J > 0.0)) {
        throw DomainError("log_density_ratio: J must be positive");
    }
    return std::log(J) - poisson_rate(params.p, scope) * (J - 1.0) * p0(rho, params.n);
}

}  // namespace geoqhd
