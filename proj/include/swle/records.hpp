#pragma once

#include "swle/numerics.hpp"

#include <vector>

namespace swle {

// Truncation region, exactly-observed region and the censoring intervals that
// partition the rest of the truncation region.
struct CensoringScheme {
    Interval truncation{-kInf, kInf};
    Interval uncensored{-kInf, kInf};
    std::vector<Interval> censor_intervals;

    // Complete observation over the given support.
    static CensoringScheme complete(const Interval& support) { return {support, support, {}}; }
    // Throws DomainError if the pieces do not partition the truncation region.
    void validate() const;
};

struct ObservationRecord {
    Vec x;
    CensoringScheme scheme;
    bool exact = true;
    double y = 0.0;         // when exact
    int censored_index = -1; // when censored
};

}  // namespace swle
