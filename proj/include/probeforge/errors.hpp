#pragma once

#include <stdexcept>
#include <string>

namespace probeforge {

/// Failure class used by the command-line front end to pick an exit code.
enum class ErrorKind { config, data };

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what, ErrorKind kind = ErrorKind::data)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

#define PROBEFORGE_DATA_ERROR(Name)                                                                \
    struct Name : Error {                                                                          \
        explicit Name(const std::string& what) : Error(what, ErrorKind::data) {}                   \
    }

PROBEFORGE_DATA_ERROR(MalformedRecord);
PROBEFORGE_DATA_ERROR(FormatError);
PROBEFORGE_DATA_ERROR(IntegrityError);
PROBEFORGE_DATA_ERROR(EmptyData);
PROBEFORGE_DATA_ERROR(SingleClass);
PROBEFORGE_DATA_ERROR(DimensionMismatch);
PROBEFORGE_DATA_ERROR(NonFiniteLoss);
PROBEFORGE_DATA_ERROR(ZeroVariance);
PROBEFORGE_DATA_ERROR(DegenerateGroups);
PROBEFORGE_DATA_ERROR(EmptyList);
PROBEFORGE_DATA_ERROR(NotRealizable);

#undef PROBEFORGE_DATA_ERROR

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what, ErrorKind::config) {}
};

} // namespace probeforge
