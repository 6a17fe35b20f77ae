#pragma once

#include <stdexcept>
#include <string>

namespace hypergan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions that violate an operation's shape contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ChannelCountError : public Error {
 public:
  using Error::Error;
};

// A file that exists in a listing but cannot be decoded.
class IngestionError : public Error {
 public:
  IngestionError(const std::string& path, const std::string& what)
      : Error("cannot ingest '" + path + "': " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Missing external assets (pretrained weights, extractors).
class SetupError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace hypergan
