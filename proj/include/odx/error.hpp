#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace odx {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: bad tree description, mismatched dimensions, bad JSON.
class InputError : public Error {
public:
    using Error::Error;
};

// A node of the model admits a riskless gain; there is no strictly positive
// martingale measure there.
class ArbitrageError : public Error {
public:
    ArbitrageError(std::size_t node, const std::string& what) : Error(what), node_(node) {}
    std::size_t node() const { return node_; }

private:
    std::size_t node_;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Invariant violated inside an algorithm; indicates a bug or a numerically
// hopeless input rather than a user error.
class InternalError : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    SimulationError(std::size_t path, std::size_t step, const std::string& what)
        : Error(what), path_(path), step_(step) {}
    std::size_t path() const { return path_; }
    std::size_t step() const { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

} // namespace odx

#define ODX_THROW(ExceptionType, message)                                                          \
    do {                                                                                           \
        std::ostringstream odx_msg_stream_;                                                        \
        odx_msg_stream_ << message;                                                                \
        throw ExceptionType(odx_msg_stream_.str());                                                \
    } while (false)

#define ODX_REQUIRE(condition, message)                                                            \
    do {                                                                                           \
        if (!(condition))                                                                          \
            ODX_THROW(::odx::InputError, message);                                                 \
    } while (false)

#define ODX_ENSURE(condition, message)                                                             \
    do {                                                                                           \
        if (!(condition))                                                                          \
            ODX_THROW(::odx::InternalError, message);                                              \
    } while (false)
