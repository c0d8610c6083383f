#pragma once

#include <stdexcept>
#include <string>

namespace splitseg {

// Shape/axis violations in tensor math. Messages name the offending axis.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// File and filesystem failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed bitstreams, containers, or entropy-coder payloads.
class CodecError : public std::runtime_error {
public:
    explicit CodecError(const std::string& what) : std::runtime_error(what) {}
};

// Wire-protocol violations (framing, unexpected message types, transport).
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// A verification step (e.g. roundtrip equality) that did not hold.
class VerifyError : public std::runtime_error {
public:
    explicit VerifyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace splitseg
