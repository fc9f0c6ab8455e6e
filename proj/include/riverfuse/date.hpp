#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace riverfuse {

/// Calendar date at day resolution, stored as days since 1970-01-01.
/// All file formats carry dates as ISO-8601 `YYYY-MM-DD`.
class Date {
 public:
  Date() = default;
  constexpr explicit Date(std::int32_t serial_days) : serial_(serial_days) {}

  Date(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year},
                                          std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) {
      throw std::invalid_argument("invalid calendar date " + std::to_string(year) + "-" +
                                  std::to_string(month) + "-" + std::to_string(day));
    }
    serial_ = static_cast<std::int32_t>(
        std::chrono::sys_days{ymd}.time_since_epoch().count());
  }

  static Date parse(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
      throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(iso) + "'");
    }
    const auto field = [&](std::size_t pos, std::size_t len) {
      int value = 0;
      const char* first = iso.data() + pos;
      const auto [ptr, ec] = std::from_chars(first, first + len, value);
      if (ec != std::errc{} || ptr != first + len) {
        throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(iso) + "'");
      }
      return value;
    };
    return Date(field(0, 4), static_cast<unsigned>(field(5, 2)),
                static_cast<unsigned>(field(8, 2)));
  }

  std::string to_string() const {
    const auto ymd = to_ymd();
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return std::string(buf);
  }

  constexpr std::int32_t serial() const { return serial_; }

  int year() const { return static_cast<int>(to_ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(to_ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(to_ymd().day()); }

  /// 1-based ordinal day within the calendar year.
  int day_of_year() const { return serial_ - Date(year(), 1, 1).serial_ + 1; }

  Date operator+(int days) const { return Date(serial_ + days); }
  Date operator-(int days) const { return Date(serial_ - days); }
  int operator-(Date other) const { return serial_ - other.serial_; }
  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::year_month_day to_ymd() const {
    return std::chrono::year_month_day{
        std::chrono::sys_days{std::chrono::days{serial_}}};
  }

  std::int32_t serial_ = 0;
};

}  // namespace riverfuse
