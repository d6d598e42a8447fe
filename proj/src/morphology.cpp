#include "scribble/morphology.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace scribble {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0)
{
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits))
{
    if (bits_.size() != height_ * width_) {
        throw Error(ErrorCode::ShapeMismatch, "mask data length does not match dimensions");
    }
    for (auto& b : bits_) {
        b = b ? 1 : 0;
    }
}

BinaryMask BinaryMask::of_class(const LabelMap& labels, Label label)
{
    BinaryMask mask(labels.height(), labels.width());
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
        mask.bits_[i] = labels[i] == label ? 1 : 0;
    }
    return mask;
}

std::size_t BinaryMask::popcount() const
{
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const
{
    require_same_shape(shape(), other.shape(), "subset_of");
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i] && !other.bits_[i]) {
            return false;
        }
    }
    return true;
}

namespace {

class DisjointSet {
public:
    std::size_t make()
    {
        parent_.push_back(parent_.size());
        return parent_.size() - 1;
    }
    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent_[std::max(a, b)] = std::min(a, b);
        }
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

Components connected_components(const BinaryMask& mask, Connectivity connectivity)
{
    const long h = static_cast<long>(mask.height());
    const long w = static_cast<long>(mask.width());
    // Already-visited neighbours in a raster scan.
    static constexpr std::array<std::array<long, 2>, 4> kPrior{{{0, -1}, {-1, 0}, {-1, -1}, {-1, 1}}};
    const std::size_t prior_count = connectivity == Connectivity::Four ? 2 : 4;

    std::vector<std::size_t> provisional(mask.pixels(), 0);
    DisjointSet sets;
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r * w + c);
            if (!mask[i]) {
                continue;
            }
            bool assigned = false;
            for (std::size_t n = 0; n < prior_count; ++n) {
                const long rr = r + kPrior[n][0];
                const long cc = c + kPrior[n][1];
                if (!mask.get(rr, cc)) {
                    continue;
                }
                const std::size_t label = provisional[static_cast<std::size_t>(rr * w + cc)];
                if (!assigned) {
                    provisional[i] = label;
                    assigned = true;
                } else {
                    sets.unite(provisional[i], label);
                }
            }
            if (!assigned) {
                provisional[i] = sets.make();
            }
        }
    }

    Components out;
    out.ids.assign(mask.pixels(), Components::kNone);
    std::vector<std::int32_t> dense;
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        if (!mask[i]) {
            continue;
        }
        const std::size_t root = sets.find(provisional[i]);
        if (root >= dense.size()) {
            dense.resize(root + 1, Components::kNone);
        }
        if (dense[root] == Components::kNone) {
            dense[root] = static_cast<std::int32_t>(out.sizes.size());
            out.sizes.push_back(0);
        }
        out.ids[i] = dense[root];
        ++out.sizes[static_cast<std::size_t>(dense[root])];
    }
    return out;
}

BinaryMask largest_component(const BinaryMask& mask, Connectivity connectivity)
{
    BinaryMask out(mask.height(), mask.width());
    const Components cc = connected_components(mask, connectivity);
    if (cc.count() == 0) {
        return out;
    }
    // max_element returns the first maximum, i.e. the smallest id.
    const auto best = static_cast<std::int32_t>(std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin());
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        if (cc.ids[i] == best) {
            out.set(i, true);
        }
    }
    return out;
}

namespace {

// P2..P9 offsets (row, col), clockwise from north.
constexpr std::array<std::array<long, 2>, 8> kRing{{{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

struct Neighbourhood {
    std::array<int, 8> p{};  // p[0] = P2 ... p[7] = P9
    int set_count = 0;
    int transitions = 0;
};

Neighbourhood neighbourhood(const BinaryMask& mask, long r, long c)
{
    Neighbourhood n;
    for (std::size_t k = 0; k < 8; ++k) {
        n.p[k] = mask.get(r + kRing[k][0], c + kRing[k][1]) ? 1 : 0;
        n.set_count += n.p[k];
    }
    for (std::size_t k = 0; k < 8; ++k) {
        if (n.p[k] == 0 && n.p[(k + 1) % 8] == 1) {
            ++n.transitions;
        }
    }
    return n;
}

bool deletable(const Neighbourhood& n) { return n.set_count >= 2 && n.set_count <= 6 && n.transitions == 1; }

bool flagged(const Neighbourhood& n, int subcycle)
{
    if (!deletable(n)) {
        return false;
    }
    const int p2 = n.p[0], p4 = n.p[2], p6 = n.p[4], p8 = n.p[6];
    if (subcycle == 0) {
        return p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0;
    }
    return p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0;
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& mask)
{
    BinaryMask img = mask;
    const long h = static_cast<long>(img.height());
    const long w = static_cast<long>(img.width());
    std::vector<std::size_t> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int subcycle = 0; subcycle < 2; ++subcycle) {
            marked.clear();
            for (long r = 0; r < h; ++r) {
                for (long c = 0; c < w; ++c) {
                    if (img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) &&
                        flagged(neighbourhood(img, r, c), subcycle)) {
                        marked.push_back(static_cast<std::size_t>(r * w + c));
                    }
                }
            }
            for (std::size_t i : marked) {
                const long r = static_cast<long>(i) / w;
                const long c = static_cast<long>(i) % w;
                if (deletable(neighbourhood(img, r, c))) {
                    img.set(i, false);
                    changed = true;
                }
            }
        }
    }
    return img;
}

}  // namespace scribble
