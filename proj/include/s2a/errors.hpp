#pragma once

#include <stdexcept>
#include <string>

namespace s2a {

// Shape or dimension disagreement between tensors.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid value passed to an operation (bad range, all -inf row, ...).
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misconfiguration (even kernel width, k out of range, bad ratios, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (gradient check on non-scalar output, ...).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// File/container parse or write failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Benchmark could not produce a trustworthy measurement (timer too coarse).
class BenchError : public std::runtime_error {
public:
    explicit BenchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace s2a
