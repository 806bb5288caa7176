#ifndef BBVI_ERRORS_HPP
#define BBVI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bbvi {

// Caller broke a precondition, e.g. a dimension mismatch.
class contract_violation : public std::invalid_argument {
 public:
  explicit contract_violation(const std::string& what)
      : std::invalid_argument(what) {}
};

// Parameters fell outside the variational domain (s_i <= 0 with the
// identity conditioner).
class domain_violation : public std::domain_error {
 public:
  explicit domain_violation(const std::string& what)
      : std::domain_error(what) {}
};

// A valid request the chosen family/optimizer combination cannot serve.
class unsupported_configuration : public std::invalid_argument {
 public:
  explicit unsupported_configuration(const std::string& what)
      : std::invalid_argument(what) {}
};

class numeric_failure : public std::runtime_error {
 public:
  explicit numeric_failure(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw contract_violation(msg);
}

inline void require_dim(long got, long want, const char* what) {
  if (got != want)
    throw contract_violation(std::string(what) + ": dimension mismatch (got "
                             + std::to_string(got) + ", expected "
                             + std::to_string(want) + ")");
}

}  // namespace detail
}  // namespace bbvi

#endif
