#include "ecgtcn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "ecgtcn/rng.hpp"

namespace ecgtcn {

const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names = {
        "Normal (N)",
        "R-on-T PVC",
        "PVC",
        "SP or EB",
        "UB",
    };
    return names;
}

namespace {

// Splits a record on commas, tabs, or runs of spaces. UCR releases differ
// in delimiter, some mix leading spaces with comma separation.
std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    const auto is_sep = [](char c) { return c == ',' || c == '\t' || c == ' '; };
    while (i < line.size()) {
        while (i < line.size() && is_sep(line[i])) ++i;
        std::size_t start = i;
        while (i < line.size() && !is_sep(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

Dataset load_ucr(const std::string& path, int expected_len) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto toks = tokenize(line);
        if (toks.empty()) continue;  // blank line
        if (toks.size() != static_cast<std::size_t>(expected_len) + 1) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(expected_len + 1) + " fields, got " +
                            std::to_string(toks.size()));
        }
        double label_val = 0.0;
        if (!parse_double(toks[0], label_val)) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad label '" +
                            std::string(toks[0]) + "'");
        }
        int label = static_cast<int>(std::lround(label_val));
        if (label < 1 || label > kNumClasses) {
            throw DataError(path + ":" + std::to_string(lineno) + ": label " +
                            std::to_string(label) + " outside 1.." +
                            std::to_string(kNumClasses));
        }
        Beat beat;
        beat.label = label;
        beat.samples.resize(expected_len);
        for (int j = 0; j < expected_len; ++j) {
            double v = 0.0;
            if (!parse_double(toks[j + 1], v)) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad value '" +
                                std::string(toks[j + 1]) + "' in field " +
                                std::to_string(j + 2));
            }
            beat.samples[j] = static_cast<float>(v);
        }
        ds.beats.push_back(std::move(beat));
    }
    return ds;
}

std::vector<std::size_t> class_histogram(const Dataset& ds) {
    std::vector<std::size_t> hist(static_cast<std::size_t>(ds.class_count), 0);
    for (const auto& b : ds.beats) hist[static_cast<std::size_t>(b.label - 1)]++;
    return hist;
}

std::pair<Dataset, Dataset> stratified_holdout(const Dataset& ds, double fraction,
                                               std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw UsageError("holdout fraction must lie in (0,1)");
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
    for (std::size_t i = 0; i < ds.beats.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.beats[i].label - 1)].push_back(i);
    }

    Rng rng(seed);
    std::vector<char> in_second(ds.beats.size(), 0);
    for (auto& idx : by_class) {
        if (idx.size() < 2) continue;  // singleton classes stay in the first part
        rng.shuffle(idx);
        auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        std::size_t take = std::min(idx.size() - 1, std::max<std::size_t>(1, want));
        for (std::size_t j = 0; j < take; ++j) in_second[idx[j]] = 1;
    }

    Dataset first, second;
    first.class_count = second.class_count = ds.class_count;
    for (std::size_t i = 0; i < ds.beats.size(); ++i) {
        (in_second[i] ? second : first).beats.push_back(ds.beats[i]);
    }
    return {std::move(first), std::move(second)};
}

}  // namespace ecgtcn
