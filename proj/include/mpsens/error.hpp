#ifndef MPSENS_ERROR_HPP
#define MPSENS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mpsens {

/// Base of every error raised by the toolkit.
class error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant or precondition of a value type.
class validation_error : public error
{
public:
    using error::error;
};

/// A word or pattern span exceeds the configured exact-computation limit.
class span_error : public error
{
public:
    using error::error;
};

/// Operation applied to a system or partition kind that does not support it.
class kind_error : public error
{
public:
    using error::error;
};

/// A point handle cannot be extended far enough along its orbit.
class horizon_error : public error
{
public:
    using error::error;
};

/// Rejection sampling ran out of attempts.
class sampling_error : public error
{
public:
    using error::error;
};

/// Operation-level precondition (as opposed to a malformed value).
class precondition_error : public error
{
public:
    using error::error;
};

} // namespace mpsens

#endif // MPSENS_ERROR_HPP
