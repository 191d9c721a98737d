#include "crtopt/covariance.hpp"

#include <cmath>

#include "crtopt/errors.hpp"

namespace crtopt {

std::string_view to_string(CovKind kind) {
  switch (kind) {
    case CovKind::exc1: return "EXC1";
    case CovKind::exc2: return "EXC2";
    case CovKind::ar1: return "AR1";
  }
  return "?";
}

CovKind parse_cov_kind(std::string_view name) {
  if (name == "EXC1" || name == "exc1") return CovKind::exc1;
  if (name == "EXC2" || name == "exc2") return CovKind::exc2;
  if (name == "AR1" || name == "ar1") return CovKind::ar1;
  throw InvalidInput("unknown covariance kind '" + std::string(name) + "'");
}

CovarianceSpec CovarianceSpec::exc1(double tau2, double sigma2) {
  CovarianceSpec c;
  c.kind = CovKind::exc1;
  c.tau2 = tau2;
  c.sigma2 = sigma2;
  c.validate();
  return c;
}

CovarianceSpec CovarianceSpec::exc2(double tau2, double omega2, double sigma2) {
  CovarianceSpec c;
  c.kind = CovKind::exc2;
  c.tau2 = tau2;
  c.omega2 = omega2;
  c.sigma2 = sigma2;
  c.validate();
  return c;
}

CovarianceSpec CovarianceSpec::ar1(double tau2, double lambda, double sigma2) {
  CovarianceSpec c;
  c.kind = CovKind::ar1;
  c.tau2 = tau2;
  c.lambda = lambda;
  c.sigma2 = sigma2;
  c.validate();
  return c;
}

namespace {
void check_icc(double icc) {
  if (!(icc >= 0.0 && icc < 1.0)) throw InvalidInput("icc must lie in [0, 1)");
}
}  // namespace

CovarianceSpec CovarianceSpec::exc1_from_icc(double icc, double sigma2) {
  check_icc(icc);
  return exc1(icc * sigma2 / (1.0 - icc), sigma2);
}

CovarianceSpec CovarianceSpec::exc2_from_icc_cac(double icc, double cac, double sigma2) {
  check_icc(icc);
  if (!(cac >= 0.0 && cac <= 1.0)) throw InvalidInput("cac must lie in [0, 1]");
  const double total = icc * sigma2 / (1.0 - icc);
  return exc2(cac * total, (1.0 - cac) * total, sigma2);
}

CovarianceSpec CovarianceSpec::ar1_from_icc(double icc, double lambda, double sigma2) {
  check_icc(icc);
  return ar1(icc * sigma2 / (1.0 - icc), lambda, sigma2);
}

void CovarianceSpec::validate() const {
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw InvalidInput("tau2 must be finite and >= 0");
  if (kind == CovKind::exc2 && (!(omega2 >= 0.0) || !std::isfinite(omega2)))
    throw InvalidInput("omega2 must be finite and >= 0");
  if (kind == CovKind::ar1 && !(lambda > 0.0 && lambda <= 1.0))
    throw InvalidInput("lambda must lie in (0, 1]");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidInput("sigma2 must be finite and > 0");
}

double CovarianceSpec::icc() const {
  if (kind == CovKind::exc2) return (tau2 + omega2) / (tau2 + omega2 + sigma2);
  return tau2 / (tau2 + sigma2);
}

double CovarianceSpec::cac() const {
  if (kind != CovKind::exc2) throw InvalidInput("cac is defined only for EXC2");
  const double between = tau2 + omega2;
  if (between == 0.0) throw InvalidInput("cac undefined when tau2 + omega2 = 0");
  return tau2 / between;
}

double CovarianceSpec::entry(int delta_t, int delta_k) const {
  if (delta_k != 0) return 0.0;
  switch (kind) {
    case CovKind::exc1: return tau2;
    case CovKind::exc2: return delta_t == 0 ? tau2 + omega2 : tau2;
    case CovKind::ar1: return tau2 * std::pow(lambda, delta_t);
  }
  return 0.0;
}

}  // namespace crtopt
