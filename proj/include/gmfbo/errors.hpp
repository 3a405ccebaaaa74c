// Copyright 2026 The gmfbo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gmfbo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidHyperparameter : public Error {
 public:
  using Error::Error;
};

/// Thrown when a covariance matrix cannot be factorized even at the largest
/// jitter. Carries the hyperparameter vector that produced the matrix.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::vector<double> params)
      : Error(what), params_(std::move(params)) {}

  const std::vector<double>& params() const noexcept { return params_; }

 private:
  std::vector<double> params_;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class FidelityNotInitialized : public Error {
 public:
  using Error::Error;
};

/// Configuration problem; `key()` names the offending entry (dotted path).
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmfbo
