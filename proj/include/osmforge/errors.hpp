#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace osmforge {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed JSON. `offset()` is the byte position reported by the parser.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what), m_offset(offset) {}
    std::size_t offset() const noexcept { return m_offset; }

private:
    std::size_t m_offset;
};

/// Structurally valid JSON that violates the expected schema.
/// `index()` is the position of the offending element in the input array.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::size_t index)
        : Error(what), m_index(index) {}
    std::size_t index() const noexcept { return m_index; }

private:
    std::size_t m_index;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class MissingNodeError : public GeometryError {
public:
    explicit MissingNodeError(std::int64_t node_id)
        : GeometryError("missing node " + std::to_string(node_id)), m_id(node_id) {}
    std::int64_t node_id() const noexcept { return m_id; }

private:
    std::int64_t m_id;
};

/// An edit script op could not be applied. `op_index()` names the op.
class EditError : public Error {
public:
    EditError(const std::string& what, std::size_t op_index)
        : Error("edit op " + std::to_string(op_index) + ": " + what), m_op(op_index) {}
    std::size_t op_index() const noexcept { return m_op; }

private:
    std::size_t m_op;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ScheduleError : public Error {
public:
    using Error::Error;
};

class PolicyError : public Error {
public:
    using Error::Error;
};

class DateError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class WeightsError : public Error {
public:
    using Error::Error;
};

class FetchError : public Error {
public:
    using Error::Error;
};

class FixtureMissError : public FetchError {
public:
    using FetchError::FetchError;
};

class HttpError : public FetchError {
public:
    HttpError(int status, const std::string& url)
        : FetchError("HTTP " + std::to_string(status) + " from " + url), m_status(status) {}
    int status() const noexcept { return m_status; }

private:
    int m_status;
};

} // namespace osmforge
