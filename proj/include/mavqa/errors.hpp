#pragma once

#include <stdexcept>
#include <string>

namespace mavqa {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated a documented precondition (empty input, bad range, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Input data breaks a structural invariant (bad record, bad option count, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// A file could not be read, parsed, or written.
class IoError : public Error {
public:
    using Error::Error;
};

// Configuration is inconsistent (unknown backend, missing accuracy, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Two inputs that must agree do not (unknown question id, category mismatch).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// A request needs a capability the backend does not offer (e.g. images).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Transient transport failure; eligible for retry.
class TransportError : public Error {
public:
    using Error::Error;
};

// Well-formed error reply from a backend (auth, content policy); never retried.
class PermanentBackendError : public Error {
public:
    using Error::Error;
};

// No caption track is available for a video.
class MissingCaptionsError : public Error {
public:
    using Error::Error;
};

// No frames are available for a video.
class MissingFramesError : public Error {
public:
    using Error::Error;
};

} // namespace mavqa
