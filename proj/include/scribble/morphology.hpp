#pragma once

#include "scribble/core.hpp"

#include <cstdint>
#include <vector>

namespace scribble {

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, bool fill = false);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);
    /// Pixels of `labels` equal to `label`.
    static BinaryMask of_class(const LabelMap& labels, Label label);

    Shape shape() const noexcept { return {height_, width_}; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return bits_.size(); }

    bool at(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
    bool get(long row, long col) const
    {
        return shape().contains(row, col) && bits_[static_cast<std::size_t>(row) * width_ + col] != 0;
    }
    void set(std::size_t row, std::size_t col, bool v) { bits_[row * width_ + col] = v ? 1 : 0; }
    bool operator[](std::size_t index) const { return bits_[index] != 0; }
    void set(std::size_t index, bool v) { bits_[index] = v ? 1 : 0; }

    std::size_t popcount() const;
    bool subset_of(const BinaryMask& other) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

enum class Connectivity { Four = 4, Eight = 8 };

struct Components {
    static constexpr std::int32_t kNone = -1;

    /// Component id per pixel, kNone for false pixels. Ids are dense from 0
    /// and numbered in raster order of each component's first pixel.
    std::vector<std::int32_t> ids;
    std::vector<std::size_t> sizes;

    std::size_t count() const noexcept { return sizes.size(); }
};

Components connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::Four);

/// Largest component; ties go to the component whose first raster pixel is earliest.
BinaryMask largest_component(const BinaryMask& mask, Connectivity connectivity = Connectivity::Four);

/// Two-subcycle parallel thinning with the Zhang-Suen rule set, followed in
/// each subcycle by a raster-order re-check of the flagged pixels.
///
/// Neighbours are named clockwise from north:
///
///     P9 P2 P3
///     P8 P1 P4
///     P7 P6 P5
///
/// B(P1) = number of set neighbours, A(P1) = number of 0->1 transitions in the
/// cyclic sequence P2..P9,P2. A pixel is flagged when
///   2 <= B <= 6, A == 1, and
///   subcycle 1: P2*P4*P6 == 0 and P4*P6*P8 == 0
///   subcycle 2: P2*P4*P8 == 0 and P2*P6*P8 == 0
/// Flags are computed on the image as it stood at the start of the subcycle.
/// Flagged pixels are then removed one at a time in raster order, each only if
/// 2 <= B <= 6 and A == 1 still hold on the partially thinned image. The
/// re-check keeps 2x2 blocks and two-pixel-wide diagonals from vanishing,
/// which plain Zhang-Suen deletes outright. Iterates until a full cycle
/// removes nothing. Pixels outside the image count as 0.
BinaryMask skeletonize(const BinaryMask& mask);

}  // namespace scribble
