#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xlstm/numeric.hpp"

namespace xlstm {

// Rank-3 block of series data, batch x time x channels, row-major with the
// channel index fastest.
struct SeriesBatch {
    std::size_t batch = 0;
    std::size_t time = 0;
    std::size_t channels = 0;
    std::vector<double> values;
    std::vector<std::string> channel_names;  // optional, may be empty

    SeriesBatch() = default;
    SeriesBatch(std::size_t b, std::size_t t, std::size_t c, double fill = 0.0)
        : batch(b), time(t), channels(c), values(b * t * c, fill) {}

    double& at(std::size_t b, std::size_t t, std::size_t c) {
        return values[(b * time + t) * channels + c];
    }
    double at(std::size_t b, std::size_t t, std::size_t c) const {
        return values[(b * time + t) * channels + c];
    }

    bool same_shape(const SeriesBatch& o) const {
        return batch == o.batch && time == o.time && channels == o.channels;
    }

    std::string shape_str() const {
        return std::to_string(batch) + "x" + std::to_string(time) + "x" +
               std::to_string(channels);
    }
};

}  // namespace xlstm
