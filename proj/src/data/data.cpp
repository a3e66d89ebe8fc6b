#include "xfer/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "xfer/rng.hpp"

namespace xfer {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) throw DataError("truncated IDX header in " + path.string());
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

}  // namespace

ag::Tensor Dataset::images_at(std::span<const std::size_t> indices) const {
    const std::size_t width = sample_numel();
    std::vector<double> out(indices.size() * width);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw std::out_of_range("dataset index out of range");
        std::copy_n(images.data() + indices[i] * width, width, out.data() + i * width);
    }
    ag::Shape shape{indices.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    return ag::Tensor(std::move(shape), std::move(out));
}

std::vector<int> Dataset::labels_at(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(i));
    return out;
}

ag::Tensor Dataset::all_images() const {
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), 0);
    return images_at(idx);
}

void Dataset::validate() const {
    if (images.size() != size() * sample_numel())
        throw DataError(name + ": image buffer does not match label count");
    for (double v : images)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError(name + ": pixel outside [0,1]");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DataError(name + ": label out of range");
}

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::string split) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    if (read_be32(img, 0, images_path) != kImageMagic)
        throw DataError("bad IDX image magic in " + images_path.string());
    if (read_be32(lab, 0, labels_path) != kLabelMagic)
        throw DataError("bad IDX label magic in " + labels_path.string());

    const std::uint32_t count = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);
    const std::uint32_t label_count = read_be32(lab, 4, labels_path);
    if (count != label_count)
        throw DataError("image count " + std::to_string(count) + " != label count " +
                        std::to_string(label_count));

    const std::size_t pixels = std::size_t{rows} * cols;
    if (img.size() < 16 + std::size_t{count} * pixels) throw DataError("truncated image data in " + images_path.string());
    if (lab.size() < 8 + std::size_t{count}) throw DataError("truncated label data in " + labels_path.string());

    Dataset ds;
    ds.name = "mnist";
    ds.split = std::move(split);
    ds.sample_shape = {1, rows, cols};
    ds.classes = 10;
    ds.images.resize(std::size_t{count} * pixels);
    for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = img[16 + i] / 255.0;
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.labels[i] = lab[8 + i];
        if (ds.labels[i] > 9) throw DataError("label byte above 9 in " + labels_path.string());
    }
    return ds;
}

Dataset load_mnist_dir(const std::filesystem::path& dir, const std::string& split) {
    const std::string prefix = split == "test" ? "t10k" : "train";
    return load_mnist_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), split);
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != std::size_t{count} * rows * cols) throw DataError("pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    put_be32(out, kImageMagic);
    put_be32(out, count);
    put_be32(out, rows);
    put_be32(out, cols);
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    put_be32(out, kLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset synth_blobs(std::size_t n_per_class, std::size_t classes, std::size_t dim, std::uint64_t seed,
                    double spread) {
    if (classes < 2) throw std::invalid_argument("synth_blobs: need at least two classes");
    Rng rng(seed);
    std::vector<double> centres(classes * dim);
    for (auto& c : centres) c = rng.uniform(0.2, 0.8);

    Dataset ds;
    ds.name = "blobs";
    ds.split = "train";
    ds.sample_shape = {dim};
    ds.classes = classes;
    ds.images.reserve(n_per_class * classes * dim);
    // Interleave classes so any prefix is roughly balanced.
    for (std::size_t i = 0; i < n_per_class; ++i)
        for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t d = 0; d < dim; ++d)
                ds.images.push_back(std::clamp(centres[c * dim + d] + spread * rng.normal(), 0.0, 1.0));
            ds.labels.push_back(static_cast<int>(c));
        }
    return ds;
}

std::pair<Dataset, Dataset> synth_blobs_split(std::size_t train_per_class, std::size_t test_per_class,
                                              std::size_t classes, std::size_t dim, std::uint64_t seed,
                                              double spread) {
    // Samples are interleaved per class, so a longer draw repeats the shorter one as its prefix.
    Dataset test = synth_blobs(train_per_class + test_per_class, classes, dim, seed, spread);
    Dataset train = head(test, train_per_class * classes);
    const std::size_t cut = train.size();
    test.images.erase(test.images.begin(), test.images.begin() + static_cast<std::ptrdiff_t>(cut * dim));
    test.labels.erase(test.labels.begin(), test.labels.begin() + static_cast<std::ptrdiff_t>(cut));
    test.split = "test";
    return {std::move(train), std::move(test)};
}

Dataset subset(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k > ds.size())
        throw std::invalid_argument("subset: k=" + std::to_string(k) + " exceeds N=" + std::to_string(ds.size()));
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first k slots end up a uniform draw without replacement.
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(ds.size() - i)]);
    idx.resize(k);

    Dataset out;
    out.name = ds.name;
    out.split = ds.split;
    out.sample_shape = ds.sample_shape;
    out.classes = ds.classes;
    const std::size_t width = ds.sample_numel();
    out.images.resize(k * width);
    for (std::size_t i = 0; i < k; ++i) {
        std::copy_n(ds.images.data() + idx[i] * width, width, out.images.data() + i * width);
        out.labels.push_back(ds.labels[idx[i]]);
    }
    return out;
}

Dataset head(const Dataset& ds, std::size_t k) {
    if (k > ds.size()) throw std::invalid_argument("head: k exceeds dataset size");
    Dataset out = ds;
    out.images.resize(k * ds.sample_numel());
    out.labels.resize(k);
    return out;
}

BatchPlan BatchPlan::sequential(std::size_t n, std::size_t batch_size, std::size_t epochs) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.epochs = epochs;
    plan.order.resize(n);
    std::iota(plan.order.begin(), plan.order.end(), 0);
    return plan;
}

std::size_t BatchPlan::batch_count() const { return (order.size() + batch_size - 1) / batch_size; }

std::span<const std::size_t> BatchPlan::batch(std::size_t b) const {
    const std::size_t begin = b * batch_size;
    if (begin >= order.size()) throw std::out_of_range("batch index out of range");
    const std::size_t len = std::min(batch_size, order.size() - begin);
    return {order.data() + begin, len};
}

}  // namespace xfer
