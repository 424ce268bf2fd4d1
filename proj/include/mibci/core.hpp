#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mibci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One trial as stored on disk: channel x sample, float32.
using TrialMatrix = Eigen::MatrixXf;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad experiment configuration or invalid parameters.  CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.  CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not produce a valid result.  CLI exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mibci
