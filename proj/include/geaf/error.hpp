#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geaf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent BNF grammar text.
struct GrammarError : Error {
    GrammarError(const std::string& msg, std::size_t line_no)
        : Error("grammar line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
    std::size_t line;
};

/// A genotype whose derivation exceeded the wrap or depth limit.
struct MappingOverflow : Error {
    using Error::Error;
};

/// Expression text that does not follow the infix syntax; `position` is a byte offset.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t pos)
        : Error("parse error at position " + std::to_string(pos) + ": " + msg), position(pos) {}
    std::size_t position;
};

struct DatasetError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace geaf
