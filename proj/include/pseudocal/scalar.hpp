#pragma once

#include <gmpxx.h>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pseudocal {

using Rational = mpq_class;

enum class ErrorKind {
  invalid_arity,
  invalid_density,
  invalid_input,
  invalid_index,
  invalid_restriction,
  invalid_config,
  invalid_factorization,
  resource_limit,
  singular_basis,
  out_of_regime,
  degree_underflow,
  undefined_conditional,
  mode_mismatch,
  parse_error,
  internal_error,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Element a + b*sqrt(d) of the quadratic field Q(sqrt(d)).
// Values with b == 0 carry d == 0 and combine with any field. Construction
// reduces d to a squarefree integer, so equality is componentwise.
class Surd {
 public:
  Surd() : a_(0), b_(0), d_(0) {}
  Surd(long v) : a_(v), b_(0), d_(0) {}  // NOLINT
  Surd(const Rational& v) : a_(v), b_(0), d_(0) { a_.canonicalize(); }  // NOLINT
  Surd(Rational a, Rational b, Rational d);

  static Surd sqrt_of(const Rational& d);

  const Rational& rational_part() const { return a_; }
  const Rational& radical_part() const { return b_; }
  const Rational& radicand() const { return d_; }

  bool is_zero() const { return sgn(a_) == 0 && sgn(b_) == 0; }
  bool is_rational() const { return sgn(b_) == 0; }
  int sign() const;

  Surd operator-() const;
  Surd& operator+=(const Surd& o);
  Surd& operator-=(const Surd& o);
  Surd& operator*=(const Surd& o);
  Surd& operator/=(const Surd& o);

  friend Surd operator+(Surd x, const Surd& y) { return x += y; }
  friend Surd operator-(Surd x, const Surd& y) { return x -= y; }
  friend Surd operator*(Surd x, const Surd& y) { return x *= y; }
  friend Surd operator/(Surd x, const Surd& y) { return x /= y; }

  friend bool operator==(const Surd& x, const Surd& y);
  friend std::strong_ordering operator<=>(const Surd& x, const Surd& y);

  Surd abs() const { return sign() < 0 ? -*this : *this; }
  Surd square() const { return *this * *this; }
  Surd pow(unsigned e) const;
  double to_double() const;
  std::string str() const;
  static Surd parse(const std::string& s);

 private:
  void normalize();
  static Rational merge_radicand(const Surd& x, const Surd& y);

  Rational a_, b_, d_;
};

bool is_rational_square(const Rational& q, Rational* root = nullptr);
Rational rational_pow(const Rational& base, long e);
Rational parse_rational(const std::string& s);
std::string rational_str(const Rational& q);
double rational_to_double(const Rational& q);
Rational rational_from_double(double v);

// Uniform interface used by templated code over the exact and float modes.
template <class S>
struct ScalarTraits;

template <>
struct ScalarTraits<Surd> {
  static constexpr const char* mode = "exact";
  static Surd from_rational(const Rational& q) { return Surd(q); }
  static Surd sqrt_rational(const Rational& q) { return Surd::sqrt_of(q); }
  static bool is_zero(const Surd& v) { return v.is_zero(); }
  static double to_double(const Surd& v) { return v.to_double(); }
};

template <>
struct ScalarTraits<double> {
  static constexpr const char* mode = "float64";
  static double from_rational(const Rational& q) { return rational_to_double(q); }
  static double sqrt_rational(const Rational& q);
  static bool is_zero(double v) { return v == 0.0; }
  static double to_double(double v) { return v; }
};

}  // namespace pseudocal
