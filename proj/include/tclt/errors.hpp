#ifndef TCLT_ERRORS_HPP
#define TCLT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tclt
{

/// Base class of every error raised by the library.
class error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes do not agree.
class dimension_error : public error
{
public:
    using error::error;
};

/// Requested index set is empty (principal tensors with p > n).
class empty_space_error : public error
{
public:
    using error::error;
};

/// Operation is not defined for the given measure family.
class unsupported_error : public error
{
public:
    using error::error;
};

/// A Toeplitz symbol does not produce a positive definite matrix.
class spectrum_error : public error
{
public:
    using error::error;
};

class degenerate_error : public error
{
public:
    using error::error;
};

/// Transport derivative hits a zero of the target density.
class derivative_singularity_error : public error
{
public:
    using error::error;
};

class whitening_error : public error
{
public:
    using error::error;
};

class config_error : public error
{
public:
    config_error(const std::string &what, int line = 0, int column = 0)
        : error(line > 0 ? what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"
                         : what),
          line_(line), column_(column)
    {
    }

    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

} // namespace tclt

#endif
