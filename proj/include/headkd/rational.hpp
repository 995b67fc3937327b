#pragma once

#include <cstdint>
#include <string>

namespace headkd {

// Exact rational with a positive denominator, always in lowest terms.
// Arithmetic throws NumericError on int64 overflow.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t value) : num_(value) {}  // NOLINT(google-explicit-constructor)
  Rational(std::int64_t num, std::int64_t den);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_zero() const { return num_ == 0; }
  bool is_integer() const { return den_ == 1; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  // "7", "-3/4"
  std::string str() const;
  // Finite decimal rendering ("2.5"); throws EvaluationError when the
  // denominator has prime factors other than 2 and 5.
  std::string decimal_str() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  // Throws EvaluationError on division by zero.
  friend Rational operator/(const Rational& a, const Rational& b);
  friend bool operator==(const Rational& a, const Rational& b) = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace headkd
