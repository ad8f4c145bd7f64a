// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pmu {

/// Base of every error raised by the library. `kind()` is a short stable tag
/// ("schema", "parse", ...) that the CLI prints in its one-line error record.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PMU_DEFINE_ERROR(Name, tag)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(tag, message) {}   \
  };

PMU_DEFINE_ERROR(SchemaError, "schema")
PMU_DEFINE_ERROR(ParseError, "parse")
PMU_DEFINE_ERROR(IntegrityError, "integrity")
PMU_DEFINE_ERROR(ParameterError, "parameter")
PMU_DEFINE_ERROR(ShapeError, "shape")
PMU_DEFINE_ERROR(PlacementError, "placement")
PMU_DEFINE_ERROR(AlignmentError, "alignment")
PMU_DEFINE_ERROR(DependencyError, "dependency")
PMU_DEFINE_ERROR(TrainingError, "training")

#undef PMU_DEFINE_ERROR

}  // namespace pmu
