// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace compact_attn {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, shapes, or configurations. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unreadable, unwritable, or malformed files. The CLI maps these to exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

#define COMPACT_ATTN_DEFINE_ERROR(Name, Base) \
  class Name : public Base {                  \
   public:                                    \
    using Base::Base;                         \
  }

COMPACT_ATTN_DEFINE_ERROR(NonDivisibleTile, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(OutOfRange, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(ShapeMismatch, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(EmptyQueryRow, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(GroupBoundaryMismatch, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(IncompatibleGrid, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(MissingDump, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(ExtentTooLarge, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(SingleFrame, ValidationError);
COMPACT_ATTN_DEFINE_ERROR(InvariantViolation, ValidationError);

COMPACT_ATTN_DEFINE_ERROR(BadMagic, IoError);
COMPACT_ATTN_DEFINE_ERROR(UnsupportedVersion, IoError);
COMPACT_ATTN_DEFINE_ERROR(UnsupportedDtype, IoError);
COMPACT_ATTN_DEFINE_ERROR(TruncatedPayload, IoError);
COMPACT_ATTN_DEFINE_ERROR(TrailingData, IoError);

#undef COMPACT_ATTN_DEFINE_ERROR

// A JSON document does not match the config schema. `field_path()` names the
// offending field, e.g. "groups[1].w1.omega".
class SchemaViolation : public ValidationError {
 public:
  SchemaViolation(std::string field_path, const std::string& what)
      : ValidationError(field_path + ": " + what),
        field_path_(std::move(field_path)) {}

  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

}  // namespace compact_attn
