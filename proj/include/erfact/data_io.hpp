// Dataset ingestion: the big-endian IDX container (plain or gzip), two
// synthetic classification generators for download-free testing, and
// deterministic shuffled batching.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "erfact/rng.hpp"
#include "erfact/tensor.hpp"

namespace erfact {

// File-level problems (missing, unreadable, unwritable).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Structural problems inside the data.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : DataError {  // wrong magic / malformed header
    using DataError::DataError;
};
struct LengthError : DataError {  // truncated or oversized payload
    using DataError::DataError;
};
struct ConsistencyError : DataError {  // image/label count mismatch
    using DataError::DataError;
};

// Images as [N, C, H, W] doubles plus integer class labels. load_idx
// produces pixels in [0,1]; standardize() maps them to zero mean / unit
// variance per channel.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }

    std::vector<double> channel_mean() const {
        const std::size_t c = images.extent(1);
        const std::size_t per = images.numel() / c;
        std::vector<double> mean(c, 0.0);
        const std::size_t chw = images.numel() / images.extent(0);
        const std::size_t hw = chw / c;
        for (std::size_t i = 0; i < images.numel(); ++i) {
            mean[(i % chw) / hw] += images[i];
        }
        for (double& m : mean) m /= static_cast<double>(per);
        return mean;
    }

    std::vector<double> channel_std() const {
        const auto mean = channel_mean();
        const std::size_t c = images.extent(1);
        const std::size_t per = images.numel() / c;
        std::vector<double> var(c, 0.0);
        const std::size_t chw = images.numel() / images.extent(0);
        const std::size_t hw = chw / c;
        for (std::size_t i = 0; i < images.numel(); ++i) {
            const double d = images[i] - mean[(i % chw) / hw];
            var[(i % chw) / hw] += d * d;
        }
        std::vector<double> sd(c);
        for (std::size_t j = 0; j < c; ++j)
            sd[j] = std::sqrt(var[j] / static_cast<double>(per));
        return sd;
    }

    void standardize(const std::vector<double>& mean,
                     const std::vector<double>& sd) {
        const std::size_t c = images.extent(1);
        if (mean.size() != c || sd.size() != c) {
            throw std::invalid_argument("standardize: stats/channel mismatch");
        }
        const std::size_t chw = images.numel() / images.extent(0);
        const std::size_t hw = chw / c;
        for (std::size_t i = 0; i < images.numel(); ++i) {
            const std::size_t ch = (i % chw) / hw;
            images[i] = (images[i] - mean[ch]) / sd[ch];
        }
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.images == b.images && a.labels == b.labels &&
               a.class_count == b.class_count;
    }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure on " + path);
    return bytes;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                        const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
        throw IoError("zlib init failure");
    }
    std::vector<std::uint8_t> out;
    out.resize(std::max<std::size_t>(in.size() * 4, 1 << 16));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("corrupt gzip stream in " + path);
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

// Reads a file, transparently inflating it when the 0x1f8b gzip magic is
// present.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        return gunzip(bytes, path);
    }
    return bytes;
}

inline std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // ubyte, 3 dims
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // ubyte, 1 dim

// Parses an IDX image/label pair (MNIST-style). Pixel bytes are scaled by
// 1/255; the image and label counts are cross-checked.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
    const auto img = detail::read_maybe_gzip(images_path);
    const auto lab = detail::read_maybe_gzip(labels_path);

    if (img.size() < 4) throw LengthError(images_path + ": header truncated");
    if (detail::be32(img.data()) != kIdxImageMagic) {
        throw FormatError(images_path + ": bad image magic");
    }
    if (img.size() < 16) throw LengthError(images_path + ": header truncated");
    const std::size_t n = detail::be32(img.data() + 4);
    const std::size_t h = detail::be32(img.data() + 8);
    const std::size_t w = detail::be32(img.data() + 12);
    if (img.size() != 16 + n * h * w) {
        throw LengthError(images_path + ": payload size mismatch");
    }

    if (lab.size() < 4) throw LengthError(labels_path + ": header truncated");
    if (detail::be32(lab.data()) != kIdxLabelMagic) {
        throw FormatError(labels_path + ": bad label magic");
    }
    if (lab.size() < 8) throw LengthError(labels_path + ": header truncated");
    const std::size_t ln = detail::be32(lab.data() + 4);
    if (lab.size() != 8 + ln) {
        throw LengthError(labels_path + ": payload size mismatch");
    }
    if (n != ln) {
        throw ConsistencyError(images_path + ": " + std::to_string(n) +
                               " images vs " + std::to_string(ln) + " labels");
    }
    if (n == 0) throw LengthError(images_path + ": empty dataset");

    Dataset ds;
    ds.images = Tensor({n, 1, h, w});
    const std::uint8_t* px = img.data() + 16;
    double* out = ds.images.data();
    for (std::size_t i = 0; i < n * h * w; ++i) {
        out[i] = static_cast<double>(px[i]) / 255.0;
    }
    ds.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    return ds;
}

// Inverse of load_idx up to quantization: pixels are written as
// round(255 * clamp(x, 0, 1)).
inline void write_idx(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
    if (ds.images.rank() != 4 || ds.images.extent(1) != 1) {
        throw std::invalid_argument("write_idx expects [N,1,H,W] images");
    }
    std::vector<std::uint8_t> img;
    img.reserve(16 + ds.images.numel());
    detail::put_be32(img, kIdxImageMagic);
    detail::put_be32(img, static_cast<std::uint32_t>(ds.images.extent(0)));
    detail::put_be32(img, static_cast<std::uint32_t>(ds.images.extent(2)));
    detail::put_be32(img, static_cast<std::uint32_t>(ds.images.extent(3)));
    for (std::size_t i = 0; i < ds.images.numel(); ++i) {
        const double v = std::clamp(ds.images[i], 0.0, 1.0);
        img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    std::vector<std::uint8_t> lab;
    lab.reserve(8 + ds.labels.size());
    detail::put_be32(lab, kIdxLabelMagic);
    detail::put_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
    for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));

    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw IoError("cannot write " + images_path);
    fi.write(reinterpret_cast<const char*>(img.data()),
             static_cast<std::streamsize>(img.size()));
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw IoError("cannot write " + labels_path);
    fl.write(reinterpret_cast<const char*>(lab.data()),
             static_cast<std::streamsize>(lab.size()));
}

enum class SynthKind { TwoGaussians, Spirals };

// Deterministic 2-D two-class toy sets shaped [n,1,1,2] so a Flatten
// layer feeds them straight into dense networks. Classes alternate by
// index, keeping them balanced to within one sample.
inline Dataset synth_classification(SynthKind kind, std::size_t n,
                                    double noise, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("synth_classification: n must be >= 2");
    if (noise < 0.0) {
        throw std::invalid_argument("synth_classification: noise must be >= 0");
    }
    Dataset ds;
    ds.images = Tensor({n, 1, 1, 2});
    ds.labels.resize(n);
    ds.class_count = 2;
    detail::Rng rng(seed);
    const std::size_t per_class = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        double x = 0.0, y = 0.0;
        if (kind == SynthKind::TwoGaussians) {
            const double c = cls == 0 ? -1.5 : 1.5;
            x = c + noise * rng.normal();
            y = c + noise * rng.normal();
        } else {
            const std::size_t j = i / 2;
            const double t = per_class > 1
                                 ? static_cast<double>(j) /
                                       static_cast<double>(per_class - 1)
                                 : 0.0;
            const double r = 0.25 + 0.75 * t;
            const double th = 4.0 * 3.141592653589793 * t +
                              3.141592653589793 * cls;
            x = r * std::cos(th) + noise * rng.normal();
            y = r * std::sin(th) + noise * rng.normal();
        }
        ds.images[2 * i] = x;
        ds.images[2 * i + 1] = y;
        ds.labels[i] = cls;
    }
    return ds;
}

// Deterministic shuffled minibatches; the final partial batch is
// included. Each epoch reshuffles with a seed derived from (seed, epoch).
class BatchStream {
public:
    struct Batch {
        Tensor images;
        std::vector<int> labels;
    };

    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
        : ds_(&ds), batch_(batch_size), seed_(seed), order_(ds.size()) {
        if (batch_size == 0) {
            throw std::invalid_argument("batch_size must be >= 1");
        }
        std::iota(order_.begin(), order_.end(), std::size_t{0});
    }

    std::size_t batches_per_epoch() const {
        return (ds_->size() + batch_ - 1) / batch_;
    }

    void begin_epoch(std::size_t epoch) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        detail::Rng rng(detail::mix_seed(seed_, epoch));
        for (std::size_t i = order_.size(); i > 1; --i) {
            std::swap(order_[i - 1], order_[rng.index(i)]);
        }
    }

    const std::vector<std::size_t>& order() const { return order_; }

    Batch batch(std::size_t b) const {
        const std::size_t lo = b * batch_;
        const std::size_t hi = std::min(lo + batch_, ds_->size());
        if (lo >= hi) throw std::out_of_range("batch index out of range");
        const std::size_t chw = ds_->images.numel() / ds_->images.extent(0);
        std::vector<std::size_t> shape = ds_->images.shape();
        shape[0] = hi - lo;
        Batch out{Tensor(std::move(shape)), {}};
        out.labels.resize(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t src = order_[i];
            const double* s = ds_->images.data() + src * chw;
            double* d = out.images.data() + (i - lo) * chw;
            std::copy(s, s + chw, d);
            out.labels[i - lo] = ds_->labels[src];
        }
        return out;
    }

private:
    const Dataset* ds_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
};

}  // namespace erfact
