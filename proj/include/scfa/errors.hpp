// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace scfa {

// Invalid configuration or dimension mismatch; `field` carries the config
// path (e.g. "training.rounds") when the error originates in a config file.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, std::string field = "")
      : std::runtime_error(field.empty() ? msg : field + ": " + msg),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Bounded search failed to reach its target (violation injection).
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scfa
