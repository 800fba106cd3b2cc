// Error types shared by all adagemm modules. Every failure the toolkit reports is an exception
// deriving from adagemm::Error; the CLI maps the categories onto process exit codes.
#pragma once

#include <stdexcept>
#include <string>

namespace adagemm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions inconsistent with the problem shape.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Kernel configuration violating the legality rules of the device.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; the message carries the file and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// A configuration was looked up in a tuning table that does not contain it.
class LookupError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class MeasurementError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Output file or directory that cannot be created or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace adagemm
