#pragma once

#include <stdexcept>
#include <string>

namespace qauth {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Measuring a photon that has already been detected.
class AlreadyConsumed : public Error {
public:
    AlreadyConsumed() : Error("photon already consumed by a measurement") {}
};

class InsufficientPhotons : public Error {
public:
    using Error::Error;
};

// A classical message that does not decode to a well-formed tamper spec,
// typically because it was decrypted with the wrong key.
class SpecParseError : public Error {
public:
    using Error::Error;
};

class MissingSpec : public Error {
public:
    MissingSpec() : Error("oracle-locations adversary requires the tamper spec") {}
};

class DomainError : public Error {
public:
    using Error::Error;
};

// Exhaustive enumeration requested beyond its supported size.
class TooLarge : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnknownParameter : public ConfigError {
public:
    explicit UnknownParameter(const std::string& name)
        : ConfigError("vary", "parameter '" + name + "' is not sweepable") {}
};

}  // namespace qauth
