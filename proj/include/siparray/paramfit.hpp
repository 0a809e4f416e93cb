#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "siparray/sitemodel.hpp"

namespace siparray {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FitQuantity { t, beta, lambda, lambda_i, lambda_o };
enum class FitForm { exponential, rational };

inline std::string fit_form_name(FitForm f) {
  return f == FitForm::exponential ? "exponential" : "rational";
}
inline std::string fit_quantity_name(FitQuantity q) {
  switch (q) {
    case FitQuantity::t: return "t";
    case FitQuantity::beta: return "beta";
    case FitQuantity::lambda: return "lambda";
    case FitQuantity::lambda_i: return "lambda_i";
    case FitQuantity::lambda_o: return "lambda_o";
  }
  return "?";
}

struct DistanceSeries {
  std::vector<std::pair<double, double>> points;  // (d in a0, value in eV)
  std::string class_label;
  FitQuantity quantity = FitQuantity::t;
};

struct FitResult {
  FitForm form = FitForm::exponential;
  double amplitude = 0;  // y0 (eV), sign of the series carried here
  double length = 0;     // decay length (a0), > 0
  double rms_residual = 0;
  std::vector<double> residuals;  // fit - data, per point
  bool converged = true;

  double evaluate(double d) const {
    const double mag = form == FitForm::exponential
                           ? amplitude * std::exp(-d / length)
                           : amplitude / (1.0 + d / length);
    return mag;
  }
};

namespace detail {

inline int series_sign(const DistanceSeries& s) {
  if (s.points.size() < 3)
    throw FitError("fit: need at least 3 points for a 2-parameter form");
  double prev_d = -1e300;
  int sign = 0;
  for (const auto& [d, y] : s.points) {
    if (d <= prev_d) throw FitError("fit: d values must be strictly increasing");
    prev_d = d;
    if (y == 0) throw FitError("fit: zero value, form inapplicable");
    const int sg = y > 0 ? 1 : -1;
    if (sign == 0) sign = sg;
    if (sg != sign) throw FitError("fit: sign change in series, form inapplicable");
  }
  return sign;
}

// Damped Gauss-Newton on (amplitude, length) in linear space; the model
// magnitude and its Jacobian come from the callbacks.
template <typename ModelF, typename JacF>
FitResult gauss_newton(const DistanceSeries& s, int sign, double a0, double l0,
                       FitForm form, ModelF model, JacF jac) {
  const int n = static_cast<int>(s.points.size());
  Eigen::VectorXd y(n), d(n);
  for (int i = 0; i < n; ++i) {
    d(i) = s.points[i].first;
    y(i) = sign * s.points[i].second;  // fit on |y|
  }
  auto rss = [&](double a, double l) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double r = model(a, l, d(i)) - y(i);
      acc += r * r;
    }
    return acc;
  };
  double a = a0, l = l0;
  double best = rss(a, l);
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    Eigen::MatrixXd j(n, 2);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      r(i) = model(a, l, d(i)) - y(i);
      const auto [ja, jl] = jac(a, l, d(i));
      j(i, 0) = ja;
      j(i, 1) = jl;
    }
    const Eigen::Vector2d step =
        j.colPivHouseholderQr().solve(-r);
    double damp = 1.0;
    double na = a, nl = l, nv = best;
    for (int half = 0; half < 30; ++half) {
      const double ta = a + damp * step(0);
      const double tl = l + damp * step(1);
      if (tl > 0 && ta > 0) {
        const double tv = rss(ta, tl);
        if (tv <= best) {
          na = ta;
          nl = tl;
          nv = tv;
          break;
        }
      }
      damp *= 0.5;
    }
    const double rel_step =
        std::abs(na - a) / std::max(1e-300, std::abs(a)) +
        std::abs(nl - l) / std::max(1e-300, std::abs(l));
    a = na;
    l = nl;
    best = nv;
    if (rel_step < 1e-10) {
      converged = true;
      break;
    }
  }
  FitResult out;
  out.form = form;
  out.amplitude = sign * a;
  out.length = l;
  out.converged = converged;
  out.residuals.resize(n);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const double r = sign * (model(a, l, d(i)) - y(i));
    out.residuals[i] = r;
    acc += r * r;
  }
  out.rms_residual = std::sqrt(acc / n);
  return out;
}

}  // namespace detail

// y(d) = y0 * exp(-d / l), least squares in linear space, log-linear init
inline FitResult fit_exponential(const DistanceSeries& s) {
  const int sign = detail::series_sign(s);
  const int n = static_cast<int>(s.points.size());
  // linear regression of log|y| on d
  double sd = 0, sl = 0, sdd = 0, sdl = 0;
  for (const auto& [d, y] : s.points) {
    const double ly = std::log(std::abs(y));
    sd += d;
    sl += ly;
    sdd += d * d;
    sdl += d * ly;
  }
  const double denom = n * sdd - sd * sd;
  const double slope = (n * sdl - sd * sl) / denom;
  if (slope >= -1e-14)
    throw FitError("fit_exponential: series does not decay (length diverges)");
  const double l0 = -1.0 / slope;
  const double a0 = std::exp((sl - slope * sd) / n);
  return detail::gauss_newton(
      s, sign, a0, l0, FitForm::exponential,
      [](double a, double l, double d) { return a * std::exp(-d / l); },
      [](double a, double l, double d) {
        const double e = std::exp(-d / l);
        return std::pair{e, a * e * d / (l * l)};
      });
}

// y(d) = y0 / (1 + d / l), two-point initialization from first/last points
inline FitResult fit_rational(const DistanceSeries& s) {
  const int sign = detail::series_sign(s);
  const auto [d1, y1r] = s.points.front();
  const auto [d2, y2r] = s.points.back();
  const double y1 = sign * y1r, y2 = sign * y2r;
  double l0 = (y2 * d2 - y1 * d1) / (y1 - y2);
  double a0 = l0 > 0 ? y1 * (1 + d1 / l0) : 0;
  if (!(l0 > 0) || !(a0 > 0)) {
    l0 = d2;  // fallback when the two-point solve is degenerate
    a0 = y1 * (1 + d1 / l0);
  }
  if (!(a0 > 0))
    throw FitError("fit_rational: series does not decay (length diverges)");
  return detail::gauss_newton(
      s, sign, a0, l0, FitForm::rational,
      [](double a, double l, double d) { return a / (1 + d / l); },
      [](double a, double l, double d) {
        const double u = 1 + d / l;
        return std::pair{1 / u, a * d / (l * l * u * u)};
      });
}

// Fits both forms and keeps the lower rms; within a 1% tie the exponential
// form wins as the simpler default. Both results are returned.
struct FormSelection {
  FitResult selected;
  FitResult exponential;
  FitResult rational;
};

inline FormSelection select_form(const DistanceSeries& s) {
  FormSelection out;
  out.exponential = fit_exponential(s);
  out.rational = fit_rational(s);
  out.selected = out.rational.rms_residual <
                         0.99 * out.exponential.rms_residual
                     ? out.rational
                     : out.exponential;
  return out;
}

// Site-model level curves evaluated on fitted parameter laws.
struct SpectrumCurves {
  std::vector<double> d;                 // a0
  std::vector<Eigen::VectorXd> levels;   // per d, ascending energies (eV)
};

inline SpectrumCurves reconstruct_dimer(const FitResult& t_fit,
                                        const FitResult& lambda_fit,
                                        double eps_P,
                                        const std::vector<double>& d_grid) {
  SpectrumCurves c;
  c.d = d_grid;
  for (double d : d_grid) {
    DimerParams p{eps_P, std::abs(t_fit.evaluate(d)), lambda_fit.evaluate(d)};
    c.levels.push_back(dimer_eigen(p).values);
  }
  return c;
}

inline SpectrumCurves reconstruct_trimer(const FitResult& t_fit,
                                         const FitResult& lambda_i_fit,
                                         const FitResult& lambda_o_fit,
                                         double eps_P,
                                         const std::vector<double>& d_grid) {
  SpectrumCurves c;
  c.d = d_grid;
  for (double d : d_grid) {
    TrimerParams p{eps_P, std::abs(t_fit.evaluate(d)),
                   lambda_i_fit.evaluate(d), lambda_o_fit.evaluate(d)};
    c.levels.push_back(trimer_eigen(p).values);
  }
  return c;
}

inline SpectrumCurves reconstruct_square(const FitResult& t_fit,
                                         const FitResult& beta_fit,
                                         const FitResult& lambda_fit,
                                         double eps_P,
                                         const std::vector<double>& d_grid) {
  SpectrumCurves c;
  c.d = d_grid;
  for (double d : d_grid) {
    SquareParams p{eps_P, std::abs(t_fit.evaluate(d)), beta_fit.evaluate(d),
                   lambda_fit.evaluate(d)};
    c.levels.push_back(square_eigen(p).values);
  }
  return c;
}

}  // namespace siparray
