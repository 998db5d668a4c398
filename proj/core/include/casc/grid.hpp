#pragma once
// Dense 2-D / 3-D real-valued grids used throughout the toolkit.
//
// Pixel addressing is row-major everywhere: flat index = y * width + x.
// All arithmetic runs in double; 8-bit data only appears at the image I/O
// boundary.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace casc {

using Index = std::int64_t;

// 2-D scalar field over a width x height patch.
class PixelGrid {
public:
    PixelGrid() = default;
    PixelGrid(Index width, Index height, double fill = 0.0)
        : w_(width), h_(height), v_(static_cast<std::size_t>(width * height), fill) {
        if (width < 1 || height < 1)
            throw std::invalid_argument("PixelGrid: width and height must be >= 1");
    }

    Index width() const { return w_; }
    Index height() const { return h_; }
    Index size() const { return w_ * h_; }

    double& at(Index x, Index y) { return v_[static_cast<std::size_t>(y * w_ + x)]; }
    double at(Index x, Index y) const { return v_[static_cast<std::size_t>(y * w_ + x)]; }
    double& operator[](Index flat) { return v_[static_cast<std::size_t>(flat)]; }
    double operator[](Index flat) const { return v_[static_cast<std::size_t>(flat)]; }

    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    bool same_shape(const PixelGrid& o) const { return w_ == o.w_ && h_ == o.h_; }

private:
    Index w_ = 0;
    Index h_ = 0;
    std::vector<double> v_;
};

// PixelGrid constrained to {0, 1}.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(Index width, Index height, int fill = 0)
        : w_(width), h_(height), v_(static_cast<std::size_t>(width * height),
                                    static_cast<std::uint8_t>(fill ? 1 : 0)) {
        if (width < 1 || height < 1)
            throw std::invalid_argument("BinaryMask: width and height must be >= 1");
    }

    Index width() const { return w_; }
    Index height() const { return h_; }
    Index size() const { return w_ * h_; }

    void set(Index x, Index y, bool on) {
        v_[static_cast<std::size_t>(y * w_ + x)] = on ? 1 : 0;
    }
    bool at(Index x, Index y) const { return v_[static_cast<std::size_t>(y * w_ + x)] != 0; }
    std::uint8_t operator[](Index flat) const { return v_[static_cast<std::size_t>(flat)]; }
    std::uint8_t& operator[](Index flat) { return v_[static_cast<std::size_t>(flat)]; }

    Index count() const {
        Index n = 0;
        for (auto b : v_) n += b;
        return n;
    }

    bool same_shape(const BinaryMask& o) const { return w_ == o.w_ && h_ == o.h_; }
    bool same_shape(const PixelGrid& o) const { return w_ == o.width() && h_ == o.height(); }

    bool operator==(const BinaryMask& o) const {
        return w_ == o.w_ && h_ == o.h_ && v_ == o.v_;
    }

private:
    Index w_ = 0;
    Index h_ = 0;
    std::vector<std::uint8_t> v_;
};

// Ch x W x H real field, channel-major: value(ch, x, y) = data[ch*W*H + y*W + x].
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(Index channels, Index width, Index height, double fill = 0.0)
        : ch_(channels), w_(width), h_(height),
          v_(static_cast<std::size_t>(channels * width * height), fill) {
        if (channels < 1 || width < 1 || height < 1)
            throw std::invalid_argument("FeatureMap: all dimensions must be >= 1");
    }

    Index channels() const { return ch_; }
    Index width() const { return w_; }
    Index height() const { return h_; }
    Index plane() const { return w_ * h_; }
    Index size() const { return ch_ * w_ * h_; }

    double& at(Index ch, Index x, Index y) {
        return v_[static_cast<std::size_t>(ch * w_ * h_ + y * w_ + x)];
    }
    double at(Index ch, Index x, Index y) const {
        return v_[static_cast<std::size_t>(ch * w_ * h_ + y * w_ + x)];
    }
    // Flattened pixel access within one channel plane.
    double at_flat(Index ch, Index flat) const {
        return v_[static_cast<std::size_t>(ch * w_ * h_ + flat)];
    }
    double& at_flat(Index ch, Index flat) {
        return v_[static_cast<std::size_t>(ch * w_ * h_ + flat)];
    }

    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

private:
    Index ch_ = 0;
    Index w_ = 0;
    Index h_ = 0;
    std::vector<double> v_;
};

// Ch-dimensional distilled feature.
using FeatureVector = std::vector<double>;

// 2 x W x H prediction field; channel 0 is background, channel 1 foreground.
class Logits {
public:
    Logits() = default;
    Logits(Index width, Index height, double fill = 0.0) : m_(2, width, height, fill) {}

    Index width() const { return m_.width(); }
    Index height() const { return m_.height(); }

    double& bg(Index x, Index y) { return m_.at(0, x, y); }
    double bg(Index x, Index y) const { return m_.at(0, x, y); }
    double& fg(Index x, Index y) { return m_.at(1, x, y); }
    double fg(Index x, Index y) const { return m_.at(1, x, y); }

    FeatureMap& map() { return m_; }
    const FeatureMap& map() const { return m_; }

private:
    FeatureMap m_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace casc
