#pragma once

#include <stdexcept>
#include <string>

namespace causalbench {

// Error classes map onto CLI exit codes: config 2, data 3, network 4,
// internal 5.
enum class ErrorClass : int {
    config = 2,
    data = 3,
    network = 4,
    internal = 5,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }
    int exit_code() const noexcept { return static_cast<int>(cls_); }

  private:
    ErrorClass cls_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorClass::data, what) {}
};

struct NetworkError : Error {
    explicit NetworkError(const std::string& what) : Error(ErrorClass::network, what) {}
};

struct InternalError : Error {
    explicit InternalError(const std::string& what) : Error(ErrorClass::internal, what) {}
};

// Data-shaped failures with distinct identities so tests and callers can
// react to the specific contract violation.
struct SchemaError : DataError {
    using DataError::DataError;
};
struct LabelError : DataError {
    using DataError::DataError;
};
struct ShapeError : DataError {
    using DataError::DataError;
};
struct EmptyControlError : DataError {
    using DataError::DataError;
};
struct DegenerateGeneError : DataError {
    using DataError::DataError;
};
struct UnsupportedSizeError : DataError {
    using DataError::DataError;
};
struct MappingError : DataError {
    using DataError::DataError;
};
struct CorpusMissError : DataError {
    using DataError::DataError;
};
struct CacheIntegrityError : DataError {
    using DataError::DataError;
};
struct PanelError : DataError {
    using DataError::DataError;
};
struct UndefinedAurocError : DataError {
    using DataError::DataError;
};

struct TransportError : NetworkError {
    using NetworkError::NetworkError;
};
struct EndpointError : NetworkError {
    using NetworkError::NetworkError;
};
struct TimeoutError : NetworkError {
    using NetworkError::NetworkError;
};
struct RetrievalError : NetworkError {
    using NetworkError::NetworkError;
};

}  // namespace causalbench
