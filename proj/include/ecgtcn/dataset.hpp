#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ecgtcn/errors.hpp"

namespace ecgtcn {

inline constexpr int kInputLen = 140;
inline constexpr int kNumClasses = 5;

/// ECG5000 class labels, index 0 = class 1.
const std::array<std::string, kNumClasses>& class_names();

struct Beat {
    std::vector<float> samples;  // normalized amplitude, length = input length
    int label = 0;               // 1-based class id
};

struct Dataset {
    std::vector<Beat> beats;
    int class_count = kNumClasses;

    std::size_t size() const { return beats.size(); }
    bool empty() const { return beats.empty(); }
};

/// Parses a UCR-style file: one beat per line, first field the (possibly
/// float-formatted) label, then expected_len values. Accepts comma, tab,
/// or whitespace delimiters. Throws DataError naming the offending line.
Dataset load_ucr(const std::string& path, int expected_len = kInputLen);

/// Splits per class: the second partition receives ~fraction of each class,
/// at least one member when the class has two or more. Deterministic in seed.
std::pair<Dataset, Dataset> stratified_holdout(const Dataset& ds, double fraction,
                                               std::uint64_t seed);

/// Per-class sizes, index 0 = class 1.
std::vector<std::size_t> class_histogram(const Dataset& ds);

}  // namespace ecgtcn
