// Copyright 2026 The ptx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef PTX_COMMON_HPP_
#define PTX_COMMON_HPP_

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

#include <Eigen/Dense>

namespace ptx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kRankDeficient,
  kNoComplement,
  kInvalidDims,
  kInvalidK,
  kInvalidGamma,
  kInvalidOrder,
  kEmptyCurve,
  kUnachievable,
  kEmptyData,
  kEmptyPrivate,
  kKTooSmall,
  kInvalidRho,
  kMalformedCsv,
  kEmptyInput,
  kConfig,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kNoComplement: return "NoComplement";
    case ErrorCode::kInvalidDims: return "InvalidDims";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kInvalidGamma: return "InvalidGamma";
    case ErrorCode::kInvalidOrder: return "InvalidOrder";
    case ErrorCode::kEmptyCurve: return "EmptyCurve";
    case ErrorCode::kUnachievable: return "Unachievable";
    case ErrorCode::kEmptyData: return "EmptyData";
    case ErrorCode::kEmptyPrivate: return "EmptyPrivate";
    case ErrorCode::kKTooSmall: return "KTooSmall";
    case ErrorCode::kInvalidRho: return "InvalidRho";
    case ErrorCode::kMalformedCsv: return "MalformedCsv";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

/// Error raised by every ptx operation. `code()` identifies the failed
/// contract; `what()` carries a human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical tolerances shared across modules.
struct Tolerances {
  static constexpr double kOrthonormality = 1e-10;
  static constexpr double kProjector = 1e-10;
  static constexpr double kRankRatio = 1e-12;
  static constexpr double kDegenerateGap = 1e-12;
  static constexpr double kPriorNorm = 1e-12;
  static constexpr double kEpsilonCalibration = 1e-4;
  static constexpr double kMaxNoiseMultiplier = 1e6;
  static constexpr double kMinNoiseMultiplier = 0.05;
};

/// Shortest decimal string that parses back to exactly `value`.
inline std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("FormatDouble failed");
  return std::string(buf, end);
}

/// Parses a full field as a double; returns false on any trailing garbage.
inline bool ParseDouble(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
    field.remove_prefix(1);
  }
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' ||
                            field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return false;
  if (field == "nan") { out = std::nan(""); return true; }
  if (field == "inf") { out = INFINITY; return true; }
  if (field == "-inf") { out = -INFINITY; return true; }
  if (field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double Value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace ptx

#endif  // PTX_COMMON_HPP_
