#ifndef BBVI_CONDITIONER_HPP
#define BBVI_CONDITIONER_HPP

#include <bbvi/errors.hpp>
#include <cmath>
#include <string>
#include <string_view>

namespace bbvi {

enum class ConditionerKind { identity, softplus, exp };

inline std::string to_string(ConditionerKind k) {
  switch (k) {
    case ConditionerKind::identity: return "identity";
    case ConditionerKind::softplus: return "softplus";
    case ConditionerKind::exp: return "exp";
  }
  return "?";
}

inline ConditionerKind parse_conditioner(std::string_view name) {
  if (name == "identity" || name == "linear") return ConditionerKind::identity;
  if (name == "softplus") return ConditionerKind::softplus;
  if (name == "exp") return ConditionerKind::exp;
  throw contract_violation("unknown conditioner '" + std::string(name) + "'");
}

/**
 * Diagonal conditioner phi mapping the unconstrained diagonal pre-parameter
 * s_i to the scale diagonal C_ii = phi(s_i), with its first two derivatives
 * and those of log phi.
 *
 * Softplus uses the split x + log1p(exp(-x)) for x > 0 so that phi and its
 * derivatives stay accurate for |x| up to ~700.
 */
class Conditioner {
 public:
  constexpr explicit Conditioner(ConditionerKind kind = ConditionerKind::identity)
      : kind_(kind) {}

  constexpr ConditionerKind kind() const { return kind_; }
  constexpr bool is_linear() const { return kind_ == ConditionerKind::identity; }

  // Whether phi maps all of R into (0, inf).
  constexpr bool positive_codomain() const { return !is_linear(); }

  double value(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return x;
      case ConditionerKind::softplus:
        return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      case ConditionerKind::exp: return std::exp(x);
    }
    return x;
  }

  double d1(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return 1.0;
      case ConditionerKind::softplus: return sigmoid(x);
      case ConditionerKind::exp: return std::exp(x);
    }
    return 1.0;
  }

  double d2(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return 0.0;
      case ConditionerKind::softplus: {
        const double s = sigmoid(x);
        return s * (1.0 - s);
      }
      case ConditionerKind::exp: return std::exp(x);
    }
    return 0.0;
  }

  double inverse(double y) const {
    switch (kind_) {
      case ConditionerKind::identity: return y;
      case ConditionerKind::softplus:
        if (!(y > 0)) throw domain_violation("softplus inverse needs y > 0");
        return y > 30 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
      case ConditionerKind::exp:
        if (!(y > 0)) throw domain_violation("exp inverse needs y > 0");
        return std::log(y);
    }
    return y;
  }

  double log_value(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return std::log(x);
      case ConditionerKind::softplus:
        // log(log1p(e^x)) = x - e^x / 2 + O(e^{2x})
        return x < -30 ? x - 0.5 * std::exp(x) : std::log(value(x));
      case ConditionerKind::exp: return x;
    }
    return std::log(x);
  }

  // phi'(x) / phi(x)
  double dlog(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return 1.0 / x;
      case ConditionerKind::softplus:
        return x < -30 ? 1.0 - 0.5 * std::exp(x) : sigmoid(x) / value(x);
      case ConditionerKind::exp: return 1.0;
    }
    return 1.0 / x;
  }

  // (log phi)''(x)
  double d2log(double x) const {
    switch (kind_) {
      case ConditionerKind::identity: return -1.0 / (x * x);
      case ConditionerKind::softplus: {
        if (x < -30) return -0.5 * std::exp(x);
        const double v = value(x);
        const double r = d1(x) / v;
        return d2(x) / v - r * r;
      }
      case ConditionerKind::exp: return 0.0;
    }
    return 0.0;
  }

 private:
  static double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  ConditionerKind kind_;
};

}  // namespace bbvi

#endif
