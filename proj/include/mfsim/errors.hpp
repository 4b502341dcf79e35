#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: unknown names, violated cross-field constraints,
/// inadmissible step sizes, incompatible noise grids.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A state became non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t particle)
        : Error(what), particle_(particle) {}

    [[nodiscard]] std::size_t particle() const noexcept { return particle_; }

private:
    std::size_t particle_;
};

/// Rate fit requested on too few usable rows.
class FitError : public Error {
public:
    using Error::Error;
};

}  // namespace mfsim
