#pragma once

#include <stdexcept>
#include <string>

namespace nbody {

// Failures are split into two families so the CLI can map them to exit codes:
// invalid input (exit 2) and numerical breakdown (exit 3).
enum class ErrorFamily { Validation, Numerical };

class Error : public std::runtime_error {
public:
    Error(std::string kind, ErrorFamily family, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)), family_(family) {}

    const std::string& kind() const noexcept { return kind_; }
    ErrorFamily family() const noexcept { return family_; }

private:
    std::string kind_;
    ErrorFamily family_;
};

#define NBODY_DEFINE_ERROR(Name, Family)                                   \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what)                             \
            : Error(#Name, ErrorFamily::Family, what) {}                   \
    }

// Input contract violations.
NBODY_DEFINE_ERROR(ValidationError, Validation);
NBODY_DEFINE_ERROR(InfeasibleSpectrum, Validation);
NBODY_DEFINE_ERROR(InvalidStructure, Validation);
NBODY_DEFINE_ERROR(NotCentral, Validation);
NBODY_DEFINE_ERROR(NotBalanced, Validation);
NBODY_DEFINE_ERROR(NotAttractive, Validation);
NBODY_DEFINE_ERROR(NotEmbeddable, Validation);
NBODY_DEFINE_ERROR(NegativeSquaredDistance, Validation);

// Numerical failures.
NBODY_DEFINE_ERROR(CollisionError, Numerical);
NBODY_DEFINE_ERROR(CollisionAtNode, Numerical);
NBODY_DEFINE_ERROR(CollisionApproach, Numerical);
NBODY_DEFINE_ERROR(StepFailure, Numerical);
NBODY_DEFINE_ERROR(NoConvergence, Numerical);
NBODY_DEFINE_ERROR(DegenerateConfiguration, Numerical);

#undef NBODY_DEFINE_ERROR

}  // namespace nbody
