#include "ssgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ssgan/rng.hpp"
#include "ssgan/schedule.hpp"

namespace ssgan::data {

namespace {

constexpr std::size_t kRecordBytes = 3073;  // 1 label byte + 3*32*32 pixels

double byte_to_unit(unsigned char b) { return static_cast<double>(b) / 127.5 - 1.0; }

// mirror an index into [0, n) without repeating the edge sample
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= sn) {
        if (i < 0) i = -i;
        if (i >= sn) i = 2 * sn - 2 - i;
    }
    return static_cast<std::size_t>(i);
}

}  // namespace

Shape Dataset::sample_shape() const {
    Shape s(inputs.shape().begin() + 1, inputs.shape().end());
    return s;
}

void Dataset::validate() const {
    if (inputs.shape().empty() || inputs.shape()[0] != labels.size())
        throw DataError("dataset " + name + ": " + std::to_string(labels.size()) +
                        " labels for inputs " + shape_to_string(inputs.shape()));
    if (num_classes < 2) throw DataError("dataset " + name + ": needs at least 2 classes");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw DataError("dataset " + name + ": label " + std::to_string(y) +
                            " outside [0," + std::to_string(num_classes) + ")");
    for (double v : inputs.data())
        if (!std::isfinite(v) || v < -1.0 || v > 1.0)
            throw DataError("dataset " + name + ": input value " + std::to_string(v) +
                            " outside [-1,1]");
}

// ---- record files ----

Dataset load_record_file(const std::string& path, const std::string& name) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + path);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    if (bytes == 0 || bytes % kRecordBytes != 0)
        throw DataError(path + ": truncated record file: " + std::to_string(bytes) +
                        " bytes is not a multiple of " + std::to_string(kRecordBytes) +
                        " (offset of partial record: " +
                        std::to_string(bytes - bytes % kRecordBytes) + ")");
    const std::size_t n = bytes / kRecordBytes;
    in.seekg(0);

    Dataset ds;
    ds.name = name;
    ds.num_classes = 10;
    ds.labels.resize(n);
    std::vector<double> values(n * 3072);
    std::vector<unsigned char> record(kRecordBytes);
    for (std::size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(record.data()), kRecordBytes);
        if (!in)
            throw DataError(path + ": short read at record " + std::to_string(i) + " (offset " +
                            std::to_string(i * kRecordBytes) + ")");
        if (record[0] > 9)
            throw DataError(path + ": bad label byte " + std::to_string(record[0]) +
                            " at record " + std::to_string(i));
        ds.labels[i] = record[0];
        for (std::size_t j = 0; j < 3072; ++j) values[i * 3072 + j] = byte_to_unit(record[j + 1]);
    }
    ds.inputs = Tensor::from_vector(std::move(values), {n, 3, 32, 32});
    return ds;
}

namespace {

Dataset load_record_files(const std::vector<std::string>& paths, const std::string& name) {
    Dataset all;
    std::vector<double> values;
    for (const auto& p : paths) {
        Dataset part = load_record_file(p, name);
        if (all.labels.empty()) {
            all = std::move(part);
            values.assign(all.inputs.data().begin(), all.inputs.data().end());
        } else {
            all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
            values.insert(values.end(), part.inputs.data().begin(), part.inputs.data().end());
        }
    }
    all.inputs =
        Tensor::from_vector(std::move(values), {all.labels.size(), 3, 32, 32});
    return all;
}

}  // namespace

Dataset load_cifar10(const std::string& dir, const std::string& split) {
    std::vector<std::string> paths;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i)
            paths.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
    } else if (split == "test") {
        paths.push_back(dir + "/test_batch.bin");
    } else {
        throw DataError("load_cifar10: unknown split " + split);
    }
    Dataset ds = load_record_files(paths, "cifar10");
    return ds;
}

Dataset load_svhn(const std::string& dir, const std::string& split) {
    if (split != "train" && split != "test")
        throw DataError("load_svhn: unknown split " + split);
    Dataset ds = load_record_file(dir + "/svhn_" + split + ".bin", "svhn");
    return ds;
}

// ---- synthetic ----

Dataset make_synthetic(const std::string& kind, std::size_t n, double noise,
                       std::uint64_t seed) {
    if (n == 0) throw DataError("make_synthetic: n must be positive");
    Dataset ds;
    ds.name = kind;
    ds.noise = noise;
    if (kind == "two_moons") {
        ds.num_classes = 2;
        std::vector<double> values(n * 2);
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rng::Rng r(rng::mix(seed, rng::stream::kSample, i));
            const int cls = static_cast<int>(i % 2);
            const double t = r.uniform(0.0, std::numbers::pi);
            double px, py;
            if (cls == 0) {
                px = std::cos(t);
                py = std::sin(t);
            } else {
                px = 1.0 - std::cos(t);
                py = 0.5 - std::sin(t);
            }
            px += noise * r.normal();
            py += noise * r.normal();
            values[i * 2] = std::clamp((px - 0.5) / 1.7, -1.0, 1.0);
            values[i * 2 + 1] = std::clamp((py - 0.25) / 1.7, -1.0, 1.0);
            ds.labels[i] = cls;
        }
        ds.inputs = Tensor::from_vector(std::move(values), {n, 2});
    } else if (kind == "blobs") {
        ds.num_classes = 3;
        static constexpr double centers[3][2] = {{-0.6, -0.6}, {0.6, -0.6}, {0.0, 0.7}};
        std::vector<double> values(n * 2);
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rng::Rng r(rng::mix(seed, rng::stream::kSample, i));
            const int cls = static_cast<int>(i % 3);
            values[i * 2] = std::clamp(centers[cls][0] + noise * r.normal(), -1.0, 1.0);
            values[i * 2 + 1] = std::clamp(centers[cls][1] + noise * r.normal(), -1.0, 1.0);
            ds.labels[i] = cls;
        }
        ds.inputs = Tensor::from_vector(std::move(values), {n, 2});
    } else if (kind == "bars") {
        ds.num_classes = 2;
        std::vector<double> values(n * 64, -1.0);
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rng::Rng r(rng::mix(seed, rng::stream::kSample, i));
            const int cls = static_cast<int>(i % 2);
            const std::size_t pos = static_cast<std::size_t>(r.uniform_int(0, 7));
            for (std::size_t j = 0; j < 8; ++j) {
                const std::size_t px = cls == 0 ? pos * 8 + j : j * 8 + pos;
                values[i * 64 + px] = 1.0;
            }
            if (noise > 0.0)
                for (std::size_t j = 0; j < 64; ++j)
                    values[i * 64 + j] =
                        std::clamp(values[i * 64 + j] + noise * r.normal(), -1.0, 1.0);
            ds.labels[i] = cls;
        }
        ds.inputs = Tensor::from_vector(std::move(values), {n, 1, 8, 8});
    } else {
        throw DataError("make_synthetic: unknown kind " + kind);
    }
    return ds;
}

Dataset load_dataset(const std::string& name, const std::string& dir, const std::string& split,
                     std::size_t n, double noise, std::uint64_t seed) {
    if (name == "cifar10") return load_cifar10(dir, split);
    if (name == "svhn") return load_svhn(dir, split);
    // synthetic: the test split draws from a shifted seed so it is disjoint
    // from the training sample
    const std::uint64_t s = split == "test" ? rng::mix(seed, rng::stream::kEval) : seed;
    return make_synthetic(name, n, noise, s);
}

// ---- split ----

Split make_split(const Dataset& ds, const SplitSpec& spec) {
    const std::size_t n = ds.size();
    if (spec.n_labeled == 0 || spec.n_labeled > n)
        throw DataError("split: n_labeled " + std::to_string(spec.n_labeled) +
                        " outside [1," + std::to_string(n) + "]");
    Split split;
    split.unlabeled.resize(n);
    for (std::size_t i = 0; i < n; ++i) split.unlabeled[i] = i;

    if (spec.stratified) {
        const std::size_t k = static_cast<std::size_t>(ds.num_classes);
        if (spec.n_labeled % k != 0)
            throw DataError("split: n_labeled " + std::to_string(spec.n_labeled) +
                            " not divisible by " + std::to_string(k) + " classes");
        const std::size_t per_class = spec.n_labeled / k;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < n; ++i)
                if (ds.labels[i] == static_cast<int>(c)) pool.push_back(i);
            if (pool.size() < per_class)
                throw DataError("split: class " + std::to_string(c) + " has only " +
                                std::to_string(pool.size()) + " samples, need " +
                                std::to_string(per_class));
            rng::Rng r(rng::mix(spec.seed, rng::stream::kLabeledShuffle, c));
            r.shuffle(pool);
            split.labeled.insert(split.labeled.end(), pool.begin(), pool.begin() + per_class);
        }
    } else {
        std::vector<std::size_t> pool = split.unlabeled;
        rng::Rng r(rng::mix(spec.seed, rng::stream::kLabeledShuffle));
        r.shuffle(pool);
        split.labeled.assign(pool.begin(), pool.begin() + spec.n_labeled);
    }
    return split;
}

// ---- augmentation ----

namespace {

void augment_image(const double* in, double* out, std::size_t channels, std::size_t height,
                   std::size_t width, const AugmentationSpec& spec, rng::Rng& r) {
    const int m = spec.max_translate_px;
    const std::ptrdiff_t dx = m > 0 ? r.uniform_int(-m, m) : 0;
    const std::ptrdiff_t dy = m > 0 ? r.uniform_int(-m, m) : 0;
    const bool flip = spec.horizontal_flip && r.bernoulli(0.5);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) - dx;
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) - dy;
                double v;
                if (spec.pad_mode == AugmentationSpec::Pad::zero) {
                    const bool outside = sx < 0 || sy < 0 ||
                                         sx >= static_cast<std::ptrdiff_t>(width) ||
                                         sy >= static_cast<std::ptrdiff_t>(height);
                    if (outside) {
                        v = 0.0;
                    } else {
                        std::size_t rx = static_cast<std::size_t>(sx);
                        if (flip) rx = width - 1 - rx;
                        v = in[(c * height + static_cast<std::size_t>(sy)) * width + rx];
                    }
                } else {
                    std::size_t rx = reflect_index(sx, width);
                    const std::size_t ry = reflect_index(sy, height);
                    if (flip) rx = width - 1 - rx;
                    v = in[(c * height + ry) * width + rx];
                }
                out[(c * height + y) * width + x] = v;
            }
        }
    }
}

}  // namespace

Tensor augment(const Tensor& x, const AugmentationSpec& spec, std::uint64_t seed) {
    if (spec.max_translate_px < 0) throw ValueError("augment: max_translate_px must be >= 0");
    const Shape& s = x.shape();
    std::vector<double> out(x.numel());
    const double* in = x.data().data();

    if (s.size() == 4) {
        const std::size_t batch = s[0], per = s[1] * s[2] * s[3];
        for (std::size_t i = 0; i < batch; ++i) {
            rng::Rng r(rng::mix(seed, rng::stream::kSample, i));
            augment_image(in + i * per, out.data() + i * per, s[1], s[2], s[3], spec, r);
        }
    } else if (s.size() == 2) {
        const std::size_t batch = s[0], dim = s[1];
        if (spec.vector_jitter_sigma == 0.0) {
            std::copy(x.data().begin(), x.data().end(), out.begin());
        } else {
            for (std::size_t i = 0; i < batch; ++i) {
                rng::Rng r(rng::mix(seed, rng::stream::kSample, i));
                for (std::size_t d = 0; d < dim; ++d)
                    out[i * dim + d] = std::clamp(
                        in[i * dim + d] + spec.vector_jitter_sigma * r.normal(), -1.0, 1.0);
            }
        }
    } else {
        throw ShapeError("augment: expects (B,C,H,W) or (B,D), got " + shape_to_string(s));
    }
    return Tensor::from_vector(std::move(out), s);
}

losses::AugmentFn make_augment_fn(const AugmentationSpec& spec) {
    return [spec](const Tensor& x, std::uint64_t seed) { return augment(x, spec, seed); };
}

// ---- batches ----

BatchStream::BatchStream(const Dataset& ds, const Split& split, const BatchConfig& cfg,
                         std::uint64_t epoch_seed)
    : ds_(ds), cfg_(cfg), epoch_seed_(epoch_seed) {
    if (split.labeled.empty()) throw DataError("batches: empty labeled pool");
    if (split.unlabeled.empty()) throw DataError("batches: empty unlabeled pool");
    if (cfg.batch_unlabeled == 0 || cfg.batch_labeled == 0)
        throw DataError("batches: batch sizes must be positive");
    if (cfg.batch_unlabeled > split.unlabeled.size())
        throw DataError("batches: unlabeled batch " + std::to_string(cfg.batch_unlabeled) +
                        " exceeds pool of " + std::to_string(split.unlabeled.size()));

    num_batches_ = split.unlabeled.size() / cfg.batch_unlabeled;  // drop last partial

    unlabeled_order_ = split.unlabeled;
    rng::Rng ru(rng::mix(epoch_seed_, rng::stream::kUnlabeledShuffle));
    ru.shuffle(unlabeled_order_);

    // enough labeled draws for the whole epoch, reshuffling per cycle
    const std::size_t needed = num_batches_ * cfg.batch_labeled;
    std::size_t cycle = 0;
    while (labeled_order_.size() < needed) {
        std::vector<std::size_t> pool = split.labeled;
        rng::Rng rl(rng::mix(epoch_seed_, rng::stream::kLabeledShuffle, cycle++));
        rl.shuffle(pool);
        labeled_order_.insert(labeled_order_.end(), pool.begin(), pool.end());
    }
}

PairedBatch BatchStream::batch(std::size_t i) const {
    if (i >= num_batches_)
        throw DataError("batches: index " + std::to_string(i) + " beyond " +
                        std::to_string(num_batches_));
    PairedBatch b;
    std::vector<std::size_t> lab(labeled_order_.begin() + i * cfg_.batch_labeled,
                                 labeled_order_.begin() + (i + 1) * cfg_.batch_labeled);
    std::vector<std::size_t> unlab(unlabeled_order_.begin() + i * cfg_.batch_unlabeled,
                                   unlabeled_order_.begin() + (i + 1) * cfg_.batch_unlabeled);
    b.x_labeled = index_rows(ds_.inputs, lab).detach();
    b.y_labeled.reserve(lab.size());
    for (auto idx : lab) b.y_labeled.push_back(ds_.labels[idx]);
    b.x_unlabeled = index_rows(ds_.inputs, unlab).detach();

    b.xi = rng::mix(epoch_seed_, rng::stream::kXi, i);
    b.xi_prime = rng::mix(epoch_seed_, rng::stream::kXiPrime, i);

    const std::size_t pool =
        cfg_.batch_unlabeled + (cfg_.consistency_on_labeled ? cfg_.batch_labeled : 0);
    rng::Rng rp(rng::mix(epoch_seed_, rng::stream::kPermutation, i));
    b.mix.perm = rp.permutation(pool);
    b.mix.lambda =
        schedule::sample_lambda(cfg_.alpha, rng::mix(epoch_seed_, rng::stream::kLambda, i));
    return b;
}

}  // namespace ssgan::data
