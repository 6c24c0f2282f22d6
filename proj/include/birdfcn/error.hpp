#pragma once

#include <stdexcept>
#include <string>

namespace birdfcn {

/// Base class for every error raised by the toolkit. Each subclass carries a
/// stable process exit code so the CLI can map failures without string checks.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual int exit_code() const noexcept { return 1; }
};

#define BIRDFCN_DEFINE_ERROR(Name, Code)                                  \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(what) {}           \
        int exit_code() const noexcept override { return Code; }          \
    }

BIRDFCN_DEFINE_ERROR(IoError, 3);
BIRDFCN_DEFINE_ERROR(FormatError, 4);
BIRDFCN_DEFINE_ERROR(ParameterError, 5);
BIRDFCN_DEFINE_ERROR(ConfigError, 5);
BIRDFCN_DEFINE_ERROR(ShapeError, 6);
BIRDFCN_DEFINE_ERROR(DegenerateInputError, 6);
BIRDFCN_DEFINE_ERROR(IndexError, 6);
BIRDFCN_DEFINE_ERROR(EmptyResultError, 6);
BIRDFCN_DEFINE_ERROR(ValidationError, 7);
BIRDFCN_DEFINE_ERROR(FetchError, 8);
BIRDFCN_DEFINE_ERROR(ParseError, 8);
BIRDFCN_DEFINE_ERROR(NumericError, 9);
BIRDFCN_DEFINE_ERROR(DivergenceError, 9);
BIRDFCN_DEFINE_ERROR(CorruptionError, 10);
BIRDFCN_DEFINE_ERROR(GraphError, 12);
BIRDFCN_DEFINE_ERROR(OrderingError, 13);

#undef BIRDFCN_DEFINE_ERROR

}  // namespace birdfcn
