/* Copyright 2026 The BCPNet Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef BCPNET_ERRORS_HPP_
#define BCPNET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace bcpnet {

// All engine errors derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BCPNET_DEFINE_ERROR(Name)       \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

BCPNET_DEFINE_ERROR(InvalidShapeError);
BCPNET_DEFINE_ERROR(ShapeError);
BCPNET_DEFINE_ERROR(GeometryError);
BCPNET_DEFINE_ERROR(LabelError);
BCPNET_DEFINE_ERROR(ConfigError);
BCPNET_DEFINE_ERROR(WeightStoreError);
BCPNET_DEFINE_ERROR(StateError);
BCPNET_DEFINE_ERROR(NumericError);
BCPNET_DEFINE_ERROR(ScheduleError);
BCPNET_DEFINE_ERROR(TrainingError);
BCPNET_DEFINE_ERROR(IoError);
BCPNET_DEFINE_ERROR(UnsupportedFormatError);

#undef BCPNET_DEFINE_ERROR

// Weights-file parse failure; carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace bcpnet

#endif  // BCPNET_ERRORS_HPP_
