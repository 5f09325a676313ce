#include "pseudocal/scalar.hpp"

#include <cmath>
#include <map>

namespace pseudocal {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_arity: return "invalid-arity";
    case ErrorKind::invalid_density: return "invalid-density";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_index: return "invalid-index";
    case ErrorKind::invalid_restriction: return "invalid-restriction";
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::invalid_factorization: return "invalid-factorization";
    case ErrorKind::resource_limit: return "resource-limit";
    case ErrorKind::singular_basis: return "singular-basis";
    case ErrorKind::out_of_regime: return "out-of-regime";
    case ErrorKind::degree_underflow: return "degree-underflow";
    case ErrorKind::undefined_conditional: return "undefined-conditional";
    case ErrorKind::mode_mismatch: return "mode-mismatch";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::internal_error: return "internal-error";
  }
  return "error";
}

bool is_rational_square(const Rational& q, Rational* root) {
  if (sgn(q) < 0) return false;
  mpz_class num = q.get_num(), den = q.get_den();
  if (!mpz_perfect_square_p(num.get_mpz_t()) || !mpz_perfect_square_p(den.get_mpz_t())) return false;
  if (root) {
    mpz_class rn, rd;
    mpz_sqrt(rn.get_mpz_t(), num.get_mpz_t());
    mpz_sqrt(rd.get_mpz_t(), den.get_mpz_t());
    *root = Rational(rn, rd);
    root->canonicalize();
  }
  return true;
}

Rational rational_pow(const Rational& base, long e) {
  if (e < 0) {
    if (sgn(base) == 0) throw Error(ErrorKind::invalid_input, "zero to a negative power");
    return rational_pow(Rational(1) / base, -e);
  }
  mpz_class n, d;
  mpz_pow_ui(n.get_mpz_t(), base.get_num().get_mpz_t(), static_cast<unsigned long>(e));
  mpz_pow_ui(d.get_mpz_t(), base.get_den().get_mpz_t(), static_cast<unsigned long>(e));
  Rational r(n, d);
  r.canonicalize();
  return r;
}

Rational parse_rational(const std::string& s) {
  Rational r;
  std::string t;
  for (char c : s)
    if (c != ' ' && c != '+') t.push_back(c);
  auto dot = t.find('.');
  if (dot != std::string::npos && t.find('/') == std::string::npos) {
    // plain decimal: digits after the point become a power-of-ten denominator
    std::string digits = t.substr(0, dot) + t.substr(dot + 1);
    std::string den = "1" + std::string(t.size() - dot - 1, '0');
    if (digits.empty() || digits == "-") throw Error(ErrorKind::parse_error, "bad rational '" + s + "'");
    t = digits + "/" + den;
  }
  if (t.empty() || r.set_str(t, 10) != 0) throw Error(ErrorKind::parse_error, "bad rational '" + s + "'");
  if (sgn(r.get_den()) == 0) throw Error(ErrorKind::parse_error, "zero denominator in '" + s + "'");
  r.canonicalize();
  return r;
}

std::string rational_str(const Rational& q) { return q.get_str(); }

double rational_to_double(const Rational& q) { return q.get_d(); }

Rational rational_from_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::invalid_input, "non-finite value");
  Rational r(v);
  r.canonicalize();
  return r;
}

namespace {

struct SquarefreeForm {
  mpz_class radicand;  // squarefree when every square factor is below kTrialLimit
  Rational scale;      // sqrt(d) = scale * sqrt(radicand)
};

constexpr unsigned long kTrialLimit = 1'000'000;

SquarefreeForm squarefree_form(const Rational& d) {
  thread_local std::map<Rational, SquarefreeForm> cache;
  auto it = cache.find(d);
  if (it != cache.end()) return it->second;
  // sqrt(a/b) = sqrt(ab)/b, then pull square factors out of ab
  mpz_class n = d.get_num() * d.get_den();
  Rational scale(1, 1);
  scale /= d.get_den();
  mpz_class out = 1;
  for (unsigned long f = 2; f <= kTrialLimit && mpz_class(f) * f <= n; ++f) {
    mpz_class sq = mpz_class(f) * f;
    while (n % sq == 0) {
      n /= sq;
      out *= f;
    }
  }
  mpz_class root;
  if (mpz_perfect_square_p(n.get_mpz_t())) {
    mpz_sqrt(root.get_mpz_t(), n.get_mpz_t());
    out *= root;
    n = 1;
  }
  scale *= Rational(out);
  scale.canonicalize();
  SquarefreeForm f{n, scale};
  if (cache.size() < 4096) cache.emplace(d, f);
  return f;
}

}  // namespace

Surd::Surd(Rational a, Rational b, Rational d) : a_(std::move(a)), b_(std::move(b)), d_(std::move(d)) {
  a_.canonicalize();
  b_.canonicalize();
  d_.canonicalize();
  if (sgn(b_) != 0) {
    if (sgn(d_) < 0) throw Error(ErrorKind::invalid_input, "negative radicand");
    if (sgn(d_) == 0) {
      b_ = 0;
    } else {
      auto form = squarefree_form(d_);
      b_ *= form.scale;
      d_ = Rational(form.radicand);
      if (form.radicand == 1) {
        a_ += b_;
        b_ = 0;
      }
    }
  }
  normalize();
}

Surd Surd::sqrt_of(const Rational& d) { return Surd(Rational(0), Rational(1), d); }

void Surd::normalize() {
  a_.canonicalize();
  b_.canonicalize();
  if (sgn(b_) == 0) d_ = 0;
}

Rational Surd::merge_radicand(const Surd& x, const Surd& y) {
  if (x.is_rational()) return y.d_;
  if (y.is_rational()) return x.d_;
  if (x.d_ != y.d_)
    throw Error(ErrorKind::mode_mismatch, "radicands " + x.d_.get_str() + " and " + y.d_.get_str() + " differ");
  return x.d_;
}

int Surd::sign() const {
  int sa = sgn(a_), sb = sgn(b_);
  if (sb == 0) return sa;
  if (sa == 0 || sa == sb) return sb;
  Rational lhs = a_ * a_, rhs = b_ * b_ * d_;
  return lhs > rhs ? sa : sb;
}

Surd Surd::operator-() const {
  Surd r = *this;
  r.a_ = -r.a_;
  r.b_ = -r.b_;
  return r;
}

Surd& Surd::operator+=(const Surd& o) {
  d_ = merge_radicand(*this, o);
  a_ += o.a_;
  b_ += o.b_;
  normalize();
  return *this;
}

Surd& Surd::operator-=(const Surd& o) {
  d_ = merge_radicand(*this, o);
  a_ -= o.a_;
  b_ -= o.b_;
  normalize();
  return *this;
}

Surd& Surd::operator*=(const Surd& o) {
  Rational d = merge_radicand(*this, o);
  Rational a = a_ * o.a_ + b_ * o.b_ * d;
  Rational b = a_ * o.b_ + b_ * o.a_;
  a_ = std::move(a);
  b_ = std::move(b);
  d_ = std::move(d);
  normalize();
  return *this;
}

Surd& Surd::operator/=(const Surd& o) {
  if (o.is_zero()) throw Error(ErrorKind::invalid_input, "division by zero");
  Rational d = merge_radicand(*this, o);
  Rational norm = o.a_ * o.a_ - o.b_ * o.b_ * d;
  Surd conj(o.a_ / norm, -o.b_ / norm, d);
  return *this *= conj;
}

bool operator==(const Surd& x, const Surd& y) {
  if (x.a_ != y.a_ || x.b_ != y.b_) return false;
  return x.is_rational() || x.d_ == y.d_;
}

std::strong_ordering operator<=>(const Surd& x, const Surd& y) {
  int s = (x - y).sign();
  if (s < 0) return std::strong_ordering::less;
  if (s > 0) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

Surd Surd::pow(unsigned e) const {
  Surd result(1), base = *this;
  while (e) {
    if (e & 1u) result *= base;
    base *= base;
    e >>= 1;
  }
  return result;
}

double Surd::to_double() const {
  if (is_rational()) return a_.get_d();
  return a_.get_d() + b_.get_d() * std::sqrt(d_.get_d());
}

std::string Surd::str() const {
  if (is_rational()) return a_.get_str();
  std::string r;
  if (sgn(a_) != 0) r = a_.get_str() + (sgn(b_) > 0 ? "+" : "");
  return r + b_.get_str() + "*sqrt(" + d_.get_str() + ")";
}

Surd Surd::parse(const std::string& s) {
  auto pos = s.find("*sqrt(");
  if (pos == std::string::npos) return Surd(parse_rational(s));
  auto close = s.find(')', pos);
  if (close == std::string::npos) throw Error(ErrorKind::parse_error, "bad surd '" + s + "'");
  Rational d = parse_rational(s.substr(pos + 6, close - pos - 6));
  std::string head = s.substr(0, pos);
  // split head into rational part and radical coefficient at the last sign
  std::size_t split = std::string::npos;
  for (std::size_t i = head.size(); i-- > 1;) {
    if ((head[i] == '+' || head[i] == '-') && head[i - 1] != '/') {
      split = i;
      break;
    }
  }
  Rational a(0), b;
  if (split == std::string::npos) {
    b = parse_rational(head);
  } else {
    a = parse_rational(head.substr(0, split));
    b = parse_rational(head.substr(split));
  }
  return Surd(a, b, d);
}

double ScalarTraits<double>::sqrt_rational(const Rational& q) { return std::sqrt(q.get_d()); }

}  // namespace pseudocal
