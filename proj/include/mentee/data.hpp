#pragma once
// IDX dataset ingestion (gzip handled transparently), preprocessing
// (normalize + mean subtraction), class-balanced redaction, and deterministic
// mini-batch iteration.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "mentee/errors.hpp"
#include "mentee/rng.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

struct Dataset {
    Tensor<float> images; // [N,1,H,W] raw pixels from IDX, or preprocessed floats
    std::optional<std::vector<int>> labels;
    int class_count = 10;
    std::string name;

    std::size_t size() const { return images.empty() ? 0 : images.extent(0); }

    void validate() const {
        if (labels) {
            if (labels->size() != size())
                throw DimensionMismatch("dataset '" + name + "': " + std::to_string(labels->size()) +
                                        " labels for " + std::to_string(size()) + " images");
            for (int l : *labels)
                if (l < 0 || l >= class_count)
                    throw DataError("dataset '" + name + "': label " + std::to_string(l) +
                                    " outside [0," + std::to_string(class_count) + ")");
        }
    }
};

namespace detail {

class GzReader {
public:
    explicit GzReader(const std::filesystem::path& path) {
        f_ = gzopen(path.string().c_str(), "rb");
        if (!f_) throw DataError("cannot open " + path.string());
        path_ = path.string();
    }
    ~GzReader() {
        if (f_) gzclose(f_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* dst, std::size_t n) {
        std::size_t got = 0;
        auto* p = static_cast<unsigned char*>(dst);
        while (got < n) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 20));
            const int r = gzread(f_, p + got, chunk);
            if (r <= 0) throw Truncated(path_ + ": expected " + std::to_string(n) + " bytes");
            got += static_cast<std::size_t>(r);
        }
    }

    std::uint32_t read_u32_be() {
        unsigned char b[4];
        read_exact(b, 4);
        return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
               (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
    }

private:
    gzFile f_ = nullptr;
    std::string path_;
};

inline void write_u32_be(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Load an IDX image file (and optionally its label file) into a Dataset of
// raw [0,255] pixel values. Gzip-compressed files are read transparently.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                        int class_count = 10) {
    Dataset ds;
    ds.class_count = class_count;
    ds.name = images_path.filename().string();
    {
        detail::GzReader r(images_path);
        const std::uint32_t magic = r.read_u32_be();
        if (magic != kIdxImagesMagic)
            throw BadMagic(images_path.string() + ": magic " + std::to_string(magic));
        const std::uint32_t n = r.read_u32_be();
        const std::uint32_t rows = r.read_u32_be();
        const std::uint32_t cols = r.read_u32_be();
        std::vector<unsigned char> raw(static_cast<std::size_t>(n) * rows * cols);
        r.read_exact(raw.data(), raw.size());
        ds.images = Tensor<float>({n, 1, rows, cols});
        for (std::size_t i = 0; i < raw.size(); ++i) ds.images[i] = static_cast<float>(raw[i]);
    }
    if (labels_path) {
        detail::GzReader r(*labels_path);
        const std::uint32_t magic = r.read_u32_be();
        if (magic != kIdxLabelsMagic)
            throw BadMagic(labels_path->string() + ": magic " + std::to_string(magic));
        const std::uint32_t n = r.read_u32_be();
        if (n != ds.size())
            throw DimensionMismatch(labels_path->string() + ": " + std::to_string(n) + " labels for " +
                                    std::to_string(ds.size()) + " images");
        std::vector<unsigned char> raw(n);
        r.read_exact(raw.data(), raw.size());
        ds.labels = std::vector<int>(raw.begin(), raw.end());
    }
    ds.validate();
    return ds;
}

// Write a raw-pixel dataset back to IDX (uncompressed). Only valid for
// datasets whose pixels are still integral [0,255] values.
inline void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
                     const std::optional<std::filesystem::path>& labels_path = std::nullopt) {
    if (ds.images.rank() != 4) throw DataError("save_idx: expected [N,1,H,W] images");
    std::ofstream f(images_path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + images_path.string());
    detail::write_u32_be(f, kIdxImagesMagic);
    detail::write_u32_be(f, static_cast<std::uint32_t>(ds.size()));
    detail::write_u32_be(f, static_cast<std::uint32_t>(ds.images.extent(2)));
    detail::write_u32_be(f, static_cast<std::uint32_t>(ds.images.extent(3)));
    std::vector<unsigned char> raw(ds.images.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<unsigned char>(ds.images[i] + 0.5f);
    f.write(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (labels_path) {
        if (!ds.labels) throw UnlabeledDataset("save_idx: no labels to write");
        std::ofstream lf(*labels_path, std::ios::binary | std::ios::trunc);
        if (!lf) throw DataError("cannot write " + labels_path->string());
        detail::write_u32_be(lf, kIdxLabelsMagic);
        detail::write_u32_be(lf, static_cast<std::uint32_t>(ds.labels->size()));
        std::vector<unsigned char> raw_l(ds.labels->begin(), ds.labels->end());
        lf.write(reinterpret_cast<char*>(raw_l.data()), static_cast<std::streamsize>(raw_l.size()));
    }
}

enum class MeanMode { per_pixel, global };

struct PreprocessStats {
    MeanMode mode = MeanMode::per_pixel;
    Tensor<float> pixel_mean; // per-pixel mean of the scaled training images
    float global_mean = 0.0f;
};

// Fit normalization on the training split: pixels scaled to [0,1], then the
// training mean is recorded for subtraction.
inline PreprocessStats fit_preprocess(const Dataset& train, MeanMode mode = MeanMode::per_pixel) {
    if (train.size() == 0) throw EmptyDataset("fit_preprocess: empty training set");
    PreprocessStats st;
    st.mode = mode;
    const std::size_t n = train.size();
    const std::size_t d = train.images.size() / n;
    if (mode == MeanMode::per_pixel) {
        std::vector<double> acc(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k)
                acc[k] += static_cast<double>(train.images[i * d + k]) / 255.0;
        Shape mshape(train.images.shape().begin() + 1, train.images.shape().end());
        st.pixel_mean = Tensor<float>(mshape);
        for (std::size_t k = 0; k < d; ++k)
            st.pixel_mean[k] = static_cast<float>(acc[k] / static_cast<double>(n));
    } else {
        double acc = 0;
        for (std::size_t i = 0; i < train.images.size(); ++i)
            acc += static_cast<double>(train.images[i]) / 255.0;
        st.global_mean = static_cast<float>(acc / static_cast<double>(train.images.size()));
    }
    return st;
}

// Apply the stored (training-split) statistics: x/255 - mean. The same stats
// must be applied to every split of a run.
inline Dataset apply_preprocess(const Dataset& ds, const PreprocessStats& st) {
    Dataset out = ds;
    const std::size_t n = ds.size();
    if (n == 0) return out;
    const std::size_t d = ds.images.size() / n;
    if (st.mode == MeanMode::per_pixel) {
        if (st.pixel_mean.size() != d) throw ShapeMismatch("preprocess: mean size mismatch");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k)
                out.images[i * d + k] = ds.images[i * d + k] / 255.0f - st.pixel_mean[k];
    } else {
        for (std::size_t i = 0; i < ds.images.size(); ++i)
            out.images[i] = ds.images[i] / 255.0f - st.global_mean;
    }
    return out;
}

struct RedactionSpec {
    std::size_t p = 0; // samples per class
    std::uint64_t seed = 0;
};

// Keep min(p, available) samples per class, chosen by a seeded shuffle within
// each class bucket, then re-shuffled globally.
inline Dataset redact(const Dataset& ds, const RedactionSpec& spec) {
    if (!ds.labels) throw UnlabeledDataset("redact: dataset '" + ds.name + "' has no labels");
    if (spec.p < 1) throw DataError("redact: p must be >= 1");
    std::vector<std::vector<std::size_t>> buckets(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) buckets[(*ds.labels)[i]].push_back(i);
    SeededRng base(spec.seed);
    std::vector<std::size_t> chosen;
    for (int c = 0; c < ds.class_count; ++c) {
        SeededRng rng = base.derive(0x7edac7 + static_cast<std::uint64_t>(c));
        shuffle(buckets[c], rng);
        const std::size_t take = std::min(spec.p, buckets[c].size());
        chosen.insert(chosen.end(), buckets[c].begin(), buckets[c].begin() + take);
    }
    SeededRng grng = base.derive(0x91055);
    shuffle(chosen, grng);

    Dataset out;
    out.class_count = ds.class_count;
    out.name = ds.name + "[p=" + std::to_string(spec.p) + "]";
    const std::size_t d = ds.images.size() / ds.size();
    Shape shape = ds.images.shape();
    shape[0] = chosen.size();
    out.images = Tensor<float>(shape);
    out.labels = std::vector<int>(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::copy(ds.images.data() + chosen[i] * d, ds.images.data() + (chosen[i] + 1) * d,
                  out.images.data() + i * d);
        (*out.labels)[i] = (*ds.labels)[chosen[i]];
    }
    return out;
}

struct BatchPlan {
    std::size_t batch_size = 500;
    std::uint64_t seed = 0;
    bool drop_last = false;
};

// Seeded per-epoch shuffle split into mini-batches. A dataset no larger than
// the batch size yields a single full batch (batch descent).
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, const BatchPlan& plan,
                                                           std::uint64_t epoch) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    SeededRng rng(detail::mix64(plan.seed ^ detail::mix64(0xba7c4 ^ (epoch * 0x9e3779b97f4a7c15ULL))));
    shuffle(idx, rng);
    std::vector<std::vector<std::size_t>> out;
    if (n == 0) return out;
    if (n <= plan.batch_size) {
        out.push_back(std::move(idx));
        return out;
    }
    for (std::size_t start = 0; start < n; start += plan.batch_size) {
        const std::size_t end = std::min(n, start + plan.batch_size);
        if (plan.drop_last && end - start < plan.batch_size) break;
        out.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return out;
}

// Gather a batch of images (reshaped to the network's per-sample input shape)
// and labels.
inline Tensor<float> gather_images(const Dataset& ds, const std::vector<std::size_t>& idx,
                                   const Shape& sample_shape) {
    const std::size_t d = ds.images.size() / ds.size();
    if (shape_numel(sample_shape) != d)
        throw ShapeMismatch("gather: sample shape " + shape_str(sample_shape) + " vs " +
                            std::to_string(d) + " values");
    Shape shape = sample_shape;
    shape.insert(shape.begin(), idx.size());
    Tensor<float> out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(ds.images.data() + idx[i] * d, ds.images.data() + (idx[i] + 1) * d,
                  out.data() + i * d);
    return out;
}

inline std::vector<int> gather_labels(const Dataset& ds, const std::vector<std::size_t>& idx) {
    if (!ds.labels) throw UnlabeledDataset("gather_labels: dataset '" + ds.name + "' has no labels");
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = (*ds.labels)[idx[i]];
    return out;
}

} // namespace mentee
