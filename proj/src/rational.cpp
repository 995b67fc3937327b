#include "headkd/rational.hpp"

#include <numeric>

#include "headkd/error.hpp"

namespace headkd {

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw NumericError("rational overflow in multiplication");
  return r;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw NumericError("rational overflow in addition");
  return r;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw EvaluationError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::decimal_str() const {
  if (den_ == 1) return std::to_string(num_);
  std::int64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) d /= 2, ++twos;
  while (d % 5 == 0) d /= 5, ++fives;
  if (d != 1) throw EvaluationError("rational " + str() + " has no finite decimal form");
  const int digits = std::max(twos, fives);
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale = checked_mul(scale, 10);
  const std::int64_t scaled = checked_mul(num_, scale / den_);
  const std::int64_t mag = scaled < 0 ? -scaled : scaled;
  std::string frac = std::to_string(mag % scale);
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  return (scaled < 0 ? "-" : "") + std::to_string(mag / scale) + "." + frac;
}

Rational operator+(const Rational& a, const Rational& b) {
  const std::int64_t g = std::gcd(a.den_, b.den_);
  const std::int64_t l = checked_mul(a.den_ / g, b.den_);
  return {checked_add(checked_mul(a.num_, l / a.den_), checked_mul(b.num_, l / b.den_)), l};
}

Rational operator-(const Rational& a, const Rational& b) { return a + Rational(-b.num_, b.den_); }

Rational operator*(const Rational& a, const Rational& b) {
  const std::int64_t g1 = std::gcd(a.num_, b.den_);
  const std::int64_t g2 = std::gcd(b.num_, a.den_);
  const std::int64_t n1 = g1 ? a.num_ / g1 : a.num_;
  const std::int64_t d2 = g1 ? b.den_ / g1 : b.den_;
  const std::int64_t n2 = g2 ? b.num_ / g2 : b.num_;
  const std::int64_t d1 = g2 ? a.den_ / g2 : a.den_;
  return {checked_mul(n1, n2), checked_mul(d1, d2)};
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw EvaluationError("division by zero");
  return a * Rational(b.den_, b.num_);
}

}  // namespace headkd
