#pragma once

// Dates are ints in YYYYMMDD form throughout; helpers bridge to day counts
// for calendar arithmetic and weekday generation.

#include <chrono>
#include <stdexcept>
#include <vector>

namespace geo {

inline std::chrono::year_month_day ymd_from_int(int date) {
    using namespace std::chrono;
    int y = date / 10000, m = (date / 100) % 100, d = date % 100;
    year_month_day ymd{year{y}, month{unsigned(m)}, day{unsigned(d)}};
    if (!ymd.ok()) throw std::invalid_argument("bad date: " + std::to_string(date));
    return ymd;
}

inline int int_from_ymd(std::chrono::year_month_day ymd) {
    return int(ymd.year()) * 10000 + int(unsigned(ymd.month())) * 100 +
           int(unsigned(ymd.day()));
}

inline bool is_weekday(int date) {
    using namespace std::chrono;
    weekday wd{sys_days(ymd_from_int(date))};
    return wd != Saturday && wd != Sunday;
}

// n weekdays starting at `start` (start itself shifted forward to a weekday).
inline std::vector<int> weekday_calendar(int start, int n) {
    using namespace std::chrono;
    std::vector<int> out;
    out.reserve(std::size_t(n));
    sys_days d{ymd_from_int(start)};
    while (int(out.size()) < n) {
        weekday wd{d};
        if (wd != Saturday && wd != Sunday) out.push_back(int_from_ymd(year_month_day{d}));
        d += days{1};
    }
    return out;
}

inline bool date_in_range(int date, int lo, int hi) { return date >= lo && date <= hi; }

inline bool ranges_overlap(int lo1, int hi1, int lo2, int hi2) {
    return lo1 <= hi2 && lo2 <= hi1;
}

}  // namespace geo
