#include "tnd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tnd/rng.hpp"

namespace tnd {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("truncated file while reading " + what);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::vector<unsigned char> read_all(std::istream& in, std::size_t n, const std::string& what) {
    std::vector<unsigned char> buf(n);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n))) {
        throw std::runtime_error("truncated file while reading " + what);
    }
    return buf;
}

}  // namespace

Dataset Dataset::head(std::size_t n) const {
    n = std::min(n, size());
    Dataset out;
    out.split = split;
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    const std::size_t d = dim();
    DenseTensor f({n, d});
    std::copy(features.data(), features.data() + n * d, f.data());
    out.features = std::move(f);
    return out;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::string& split) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("cannot open " + images_path);
    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("cannot open " + labels_path);

    const std::uint32_t magic_i = read_be32(fi, "image magic");
    if (magic_i != 0x00000803u) {
        throw std::runtime_error("bad IDX image magic in " + images_path);
    }
    const std::uint32_t n = read_be32(fi, "image count");
    const std::uint32_t rows = read_be32(fi, "rows");
    const std::uint32_t cols = read_be32(fi, "cols");

    const std::uint32_t magic_l = read_be32(fl, "label magic");
    if (magic_l != 0x00000801u) {
        throw std::runtime_error("bad IDX label magic in " + labels_path);
    }
    const std::uint32_t nl = read_be32(fl, "label count");
    if (n != nl) {
        throw std::runtime_error("image/label counts differ: " + std::to_string(n) + " vs " +
                                 std::to_string(nl));
    }

    const std::size_t d = std::size_t{rows} * cols;
    const auto pixels = read_all(fi, std::size_t{n} * d, "pixels");
    const auto lab = read_all(fl, n, "labels");

    Dataset ds;
    ds.split = split;
    ds.features = DenseTensor({n, d});
    for (std::size_t i = 0; i < std::size_t{n} * d; ++i) {
        ds.features[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    ds.labels.assign(lab.begin(), lab.end());
    return ds;
}

void write_mnist_idx(const Dataset& ds, std::size_t side, const std::string& images_path,
                     const std::string& labels_path) {
    if (ds.dim() != side * side) throw std::invalid_argument("write_mnist_idx: side mismatch");
    std::ofstream fi(images_path, std::ios::binary);
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fi || !fl) throw std::runtime_error("cannot open output files for IDX write");

    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(ds.size()));
    write_be32(fi, static_cast<std::uint32_t>(side));
    write_be32(fi, static_cast<std::uint32_t>(side));
    std::vector<unsigned char> buf(ds.features.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<unsigned char>(std::lround(ds.features[i] * 255.0));
    }
    fi.write(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));

    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(ds.size()));
    std::vector<unsigned char> lab(ds.labels.begin(), ds.labels.end());
    fl.write(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
}

Dataset load_cifar10_bin(const std::vector<std::string>& paths, const std::string& split) {
    constexpr std::size_t kRecord = 3073;
    std::vector<unsigned char> all;
    for (const auto& p : paths) {
        std::ifstream f(p, std::ios::binary | std::ios::ate);
        if (!f) throw std::runtime_error("cannot open " + p);
        const auto sz = static_cast<std::size_t>(f.tellg());
        if (sz % kRecord != 0) {
            throw std::runtime_error("file size of " + p + " is not a multiple of 3073");
        }
        f.seekg(0);
        auto buf = read_all(f, sz, p);
        all.insert(all.end(), buf.begin(), buf.end());
    }
    const std::size_t n = all.size() / kRecord;
    Dataset ds;
    ds.split = split;
    ds.features = DenseTensor({n, 3072});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        ds.labels[i] = rec[0];
        for (std::size_t j = 0; j < 3072; ++j) {
            ds.features[i * 3072 + j] = static_cast<double>(rec[1 + j]) / 255.0;
        }
    }
    return ds;
}

void write_cifar10_bin(const Dataset& ds, const std::string& path) {
    if (ds.dim() != 3072) throw std::invalid_argument("write_cifar10_bin: 3072 features required");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const unsigned char lab = static_cast<unsigned char>(ds.labels[i]);
        f.write(reinterpret_cast<const char*>(&lab), 1);
        std::vector<unsigned char> row(3072);
        for (std::size_t j = 0; j < 3072; ++j) {
            row[j] = static_cast<unsigned char>(std::lround(ds.features[i * 3072 + j] * 255.0));
        }
        f.write(reinterpret_cast<char*>(row.data()), 3072);
    }
}

Dataset downscale(const Dataset& ds, std::size_t side) {
    const std::size_t d = ds.dim();
    const auto src_side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
    if (src_side * src_side != d) {
        throw std::invalid_argument("downscale: features are not square images");
    }
    const double scale = static_cast<double>(src_side) / static_cast<double>(side);

    // Precompute fractional box weights per output row/column.
    struct Band {
        std::size_t first;
        std::vector<double> w;
    };
    std::vector<Band> bands(side);
    for (std::size_t i = 0; i < side; ++i) {
        const double lo = i * scale, hi = (i + 1) * scale;
        const auto first = static_cast<std::size_t>(std::floor(lo));
        const auto last = std::min(src_side - 1, static_cast<std::size_t>(std::ceil(hi)) - 1);
        Band b;
        b.first = first;
        for (std::size_t s = first; s <= last; ++s) {
            const double cover = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
            b.w.push_back(std::max(0.0, cover));
        }
        bands[i] = std::move(b);
    }

    Dataset out;
    out.split = ds.split;
    out.labels = ds.labels;
    out.features = DenseTensor({ds.size(), side * side});
    const double area = scale * scale;
    for (std::size_t img = 0; img < ds.size(); ++img) {
        const double* src = ds.features.data() + img * d;
        double* dst = out.features.data() + img * side * side;
        for (std::size_t i = 0; i < side; ++i) {
            for (std::size_t j = 0; j < side; ++j) {
                double acc = 0;
                for (std::size_t a = 0; a < bands[i].w.size(); ++a) {
                    for (std::size_t b = 0; b < bands[j].w.size(); ++b) {
                        acc += bands[i].w[a] * bands[j].w[b] *
                               src[(bands[i].first + a) * src_side + (bands[j].first + b)];
                    }
                }
                dst[i * side + j] = acc / area;
            }
        }
    }
    return out;
}

BatchStream::BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

std::vector<std::vector<std::size_t>> BatchStream::epoch(std::size_t epoch_index) const {
    const std::size_t n = ds_->size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    // Fisher-Yates with a stream derived from (seed, epoch).
    Rng rng(seed_ ^ (0x1234abcdULL + epoch_index * 0x9e3779b97f4a7c15ULL));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size_) {
        const std::size_t end = std::min(n, start + batch_size_);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::pair<DenseTensor, std::vector<int>> gather(const Dataset& ds,
                                                const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.dim();
    DenseTensor x({indices.size(), d});
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        std::copy(ds.features.data() + src * d, ds.features.data() + (src + 1) * d,
                  x.data() + i * d);
        labels[i] = ds.labels[src];
    }
    return {std::move(x), std::move(labels)};
}

}  // namespace tnd
