#ifndef SEGCERT_ERRORS_HPP
#define SEGCERT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segcert {

// Base of every error thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor dimensions or channel counts do not line up.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Invalid configuration value (non-positive Lipschitz constant, p outside
// [1, inf), negative epsilon, gamma outside (0, 1], ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// A labelled metric was requested without ground-truth labels.
class MissingLabelsError : public ConfigError {
public:
    explicit MissingLabelsError(const std::string& what) : ConfigError(what) {}
};

// The requested metric is undefined on this input (no positive pixels for
// FNR, empty class set for IoU, empty evaluation set).
class UndefinedMetricError : public Error {
public:
    explicit UndefinedMetricError(const std::string& what) : Error(what) {}
};

// Input values must be finite.
class NonFiniteError : public Error {
public:
    explicit NonFiniteError(const std::string& what) : Error(what) {}
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

}  // namespace segcert

#endif
