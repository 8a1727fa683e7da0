#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace netemu {

// Sentinel for "no bandwidth limit" (empty paths, unbounded demand).
inline constexpr std::int64_t kUnboundedBps = std::numeric_limits<std::int64_t>::max();

class UnitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Accepts "10Mbps", "128Kbps", "1Gbps" (decimal multiples) or a bare
// integer meaning bits per second. Fractional values are allowed as long
// as the result is an exact integer ("2.5Mbps" is fine, "1.5bps" is not).
inline std::int64_t parse_bandwidth(const std::string& text) {
  if (text.empty())
    throw UnitError("empty bandwidth value");
  std::size_t pos = 0;
  while (pos < text.size() &&
         (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'))
    ++pos;
  if (pos == 0)
    throw UnitError("malformed bandwidth value '" + text + "'");
  const std::string num = text.substr(0, pos);
  std::string suffix = text.substr(pos);
  double multiplier = 1.0;
  if (suffix == "Kbps" || suffix == "kbps")
    multiplier = 1e3;
  else if (suffix == "Mbps")
    multiplier = 1e6;
  else if (suffix == "Gbps")
    multiplier = 1e9;
  else if (suffix == "bps" || suffix.empty())
    multiplier = 1.0;
  else
    throw UnitError("unknown bandwidth suffix '" + suffix + "' in '" + text + "'");
  double value = 0.0;
  try {
    std::size_t consumed = 0;
    value = std::stod(num, &consumed);
    if (consumed != num.size())
      throw std::invalid_argument(num);
  } catch (const std::exception&) {
    throw UnitError("malformed bandwidth value '" + text + "'");
  }
  const double bps = value * multiplier;
  if (bps < 0 || bps > 9.2e18)
    throw UnitError("bandwidth out of range '" + text + "'");
  const double rounded = std::round(bps);
  if (std::abs(bps - rounded) > 1e-6)
    throw UnitError("bandwidth '" + text + "' is not a whole number of bits per second");
  return static_cast<std::int64_t>(rounded);
}

// Emits the shortest exact suffix form; falls back to bare bps.
inline std::string format_bandwidth(std::int64_t bps) {
  if (bps % 1000000000 == 0 && bps != 0)
    return std::to_string(bps / 1000000000) + "Gbps";
  if (bps % 1000000 == 0 && bps != 0)
    return std::to_string(bps / 1000000) + "Mbps";
  if (bps % 1000 == 0 && bps != 0)
    return std::to_string(bps / 1000) + "Kbps";
  return std::to_string(bps);
}

}  // namespace netemu
