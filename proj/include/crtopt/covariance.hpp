#pragma once

#include <string>
#include <string_view>

namespace crtopt {

// Covariance function families over (|t - t'|, |k - k'|).
//   EXC1: cluster exchangeable        g = tau2                          (dk = 0)
//   EXC2: nested exchangeable         g = tau2 + omega2 (dt = 0), tau2  (dk = 0)
//   AR1:  exponential decay           g = tau2 * lambda^dt              (dk = 0)
// Observations in different clusters are uncorrelated under all three.
enum class CovKind { exc1, exc2, ar1 };

std::string_view to_string(CovKind kind);
CovKind parse_cov_kind(std::string_view name);

struct CovarianceSpec {
  CovKind kind = CovKind::exc1;
  double tau2 = 0.0;
  double omega2 = 0.0;   // EXC2 only
  double lambda = 1.0;   // AR1 only
  double sigma2 = 1.0;   // gaussian observation-level variance

  static CovarianceSpec exc1(double tau2, double sigma2 = 1.0);
  static CovarianceSpec exc2(double tau2, double omega2, double sigma2 = 1.0);
  static CovarianceSpec ar1(double tau2, double lambda, double sigma2 = 1.0);

  // ICC-based parameterisations with sigma2 held fixed.
  static CovarianceSpec exc1_from_icc(double icc, double sigma2 = 1.0);
  static CovarianceSpec exc2_from_icc_cac(double icc, double cac, double sigma2 = 1.0);
  static CovarianceSpec ar1_from_icc(double icc, double lambda, double sigma2 = 1.0);

  // Throws InvalidInput when a parameter is out of its domain.
  void validate() const;

  // rho = tau2/(tau2+sigma2) for EXC1/AR1; (tau2+omega2)/(tau2+omega2+sigma2) for EXC2.
  double icc() const;
  // tau2/(tau2+omega2); EXC2 only.
  double cac() const;

  // Variance of the summed random effects seen by one observation, g(0, 0).
  double random_effect_variance() const { return entry(0, 0); }

  // g(dt, dk).
  double entry(int delta_t, int delta_k) const;
};

inline double covariance_entry(const CovarianceSpec& cov, int delta_t, int delta_k) {
  return cov.entry(delta_t, delta_k);
}

}  // namespace crtopt
