#pragma once

#include <stdexcept>
#include <string>

namespace psi {

// Exit-code contract: config/usage errors -> 2, capability errors -> 3,
// internal invariant breaches -> 4.
enum class ErrorKind { config, data, capability, invariant };

class PsiError : public std::runtime_error {
public:
  PsiError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::config: return 2;
      case ErrorKind::data: return 2;
      case ErrorKind::capability: return 3;
      case ErrorKind::invariant: return 4;
    }
    return 4;
  }

private:
  ErrorKind kind_;
};

#define PSI_DEFINE_ERROR(Name, Kind)                        \
  struct Name : PsiError {                                  \
    explicit Name(const std::string& w)                     \
        : PsiError(ErrorKind::Kind, w) {}                   \
  }

PSI_DEFINE_ERROR(ConfigError, config);
PSI_DEFINE_ERROR(OrderingError, data);
PSI_DEFINE_ERROR(MalformedSequenceError, data);
PSI_DEFINE_ERROR(VocabularyError, data);
PSI_DEFINE_ERROR(ShapeError, data);
PSI_DEFINE_ERROR(FittingError, data);
PSI_DEFINE_ERROR(ZeroSupportError, data);
PSI_DEFINE_ERROR(ProbeDegenerateError, data);
PSI_DEFINE_ERROR(ProbeFailureError, data);
PSI_DEFINE_ERROR(IoError, data);
PSI_DEFINE_ERROR(CapExceededError, capability);
PSI_DEFINE_ERROR(CapabilityError, capability);
PSI_DEFINE_ERROR(PhaseError, capability);
PSI_DEFINE_ERROR(ContextOverflowError, capability);
PSI_DEFINE_ERROR(DivergenceError, invariant);
PSI_DEFINE_ERROR(InvariantError, invariant);

#undef PSI_DEFINE_ERROR

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw PsiError(kind, msg);
}

}  // namespace psi
