#pragma once

// Synthetic identity-cluster datasets, open-set splits with identity-disjoint
// train/test sides, and the on-disk dataset/split formats.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hvs/checkpoint.hpp"
#include "hvs/tensor.hpp"

namespace hvs {

struct LabeledDataset {
    Tensor2 features;                 // n x d, unit rows
    std::vector<std::uint32_t> labels;
    std::uint32_t class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }

    void validate() const {
        if (features.rows != labels.size())
            throw ArgumentError("dataset: feature/label count mismatch");
        std::vector<std::size_t> counts(class_count, 0);
        for (std::uint32_t y : labels) {
            if (y >= class_count) throw ArgumentError("dataset: label out of range");
            ++counts[y];
        }
        for (std::size_t c = 0; c < class_count; ++c)
            if (counts[c] == 0)
                throw ArgumentError("dataset: class " + std::to_string(c) + " has no samples");
    }
};

struct OpenSetSplit {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test_gallery;
    LabeledDataset test_probe_mated;
    LabeledDataset test_probe_nonmated;
};

// Each identity gets a unit-sphere prototype; each sample is the re-normalized
// prototype plus isotropic gaussian noise.
inline LabeledDataset generate_synthetic(std::size_t num_identities,
                                         std::size_t samples_per_identity,
                                         std::size_t input_dim, double noise_sigma,
                                         std::uint64_t seed) {
    if (num_identities < 2) throw ArgumentError("generate_synthetic: need >= 2 identities");
    if (samples_per_identity < 1) throw ArgumentError("generate_synthetic: need >= 1 sample per identity");
    if (input_dim < 2) throw ArgumentError("generate_synthetic: input_dim must be >= 2");
    if (noise_sigma < 0.0) throw ArgumentError("generate_synthetic: noise_sigma must be >= 0");

    Rng rng(seed);
    Tensor2 prototypes(num_identities, input_dim);
    for (std::size_t c = 0; c < num_identities; ++c) {
        for (std::size_t k = 0; k < input_dim; ++k)
            prototypes.at(c, k) = static_cast<float>(rng.normal());
        l2_normalize(prototypes.row(c), input_dim);
    }

    LabeledDataset out;
    out.class_count = static_cast<std::uint32_t>(num_identities);
    out.features = Tensor2(num_identities * samples_per_identity, input_dim);
    out.labels.resize(out.features.rows);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_identities; ++c) {
        for (std::size_t s = 0; s < samples_per_identity; ++s, ++row) {
            float* dst = out.features.row(row);
            for (std::size_t k = 0; k < input_dim; ++k)
                dst[k] = prototypes.at(c, k) +
                         static_cast<float>(noise_sigma * rng.normal());
            l2_normalize(dst, input_dim);
            out.labels[row] = static_cast<std::uint32_t>(c);
        }
    }
    return out;
}

namespace detail {

inline LabeledDataset gather(const LabeledDataset& src, const std::vector<std::size_t>& rows,
                             std::uint32_t class_count) {
    LabeledDataset out;
    out.class_count = class_count;
    out.features = Tensor2(rows.size(), src.dim());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* srow = src.features.row(rows[i]);
        std::copy(srow, srow + src.dim(), out.features.row(i));
        out.labels[i] = src.labels[rows[i]];
    }
    return out;
}

}  // namespace detail

// Identity-disjoint open-set split. train_frac is the fraction of identities
// assigned to the train side; val_frac is the per-identity fraction of
// train-side samples held out for validation. On the test side,
// nonmated_id_frac of identities are withheld from the gallery entirely and
// contribute non-mated probes; for the remaining identities the first
// gallery_per_id samples enroll in the gallery and the rest are mated probes.
inline OpenSetSplit make_open_set_split(const LabeledDataset& dataset, double train_frac,
                                        double val_frac, std::size_t gallery_per_id,
                                        double nonmated_id_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || train_frac >= 1.0)
        throw ArgumentError("make_open_set_split: train_frac must be in (0,1)");
    if (val_frac <= 0.0 || val_frac >= 1.0)
        throw ArgumentError("make_open_set_split: val_frac must be in (0,1)");
    if (nonmated_id_frac < 0.0 || nonmated_id_frac > 1.0)
        throw ArgumentError("make_open_set_split: nonmated_id_frac must be in [0,1]");
    if (gallery_per_id < 1)
        throw ArgumentError("make_open_set_split: gallery_per_id must be >= 1");
    dataset.validate();

    const std::size_t num_ids = dataset.class_count;
    std::vector<std::size_t> ids(num_ids);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    for (std::size_t i = num_ids; i-- > 1;)
        std::swap(ids[i], ids[rng.index(i + 1)]);

    const std::size_t num_train_ids =
        static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(num_ids)));
    if (num_train_ids < 2 || num_train_ids >= num_ids)
        throw ConfigError("make_open_set_split: too few identities for the fractions");
    const std::size_t num_test_ids = num_ids - num_train_ids;
    const std::size_t num_nonmated_ids = static_cast<std::size_t>(
        std::llround(nonmated_id_frac * static_cast<double>(num_test_ids)));
    if (num_test_ids - num_nonmated_ids < 1 && nonmated_id_frac < 1.0)
        throw ConfigError("make_open_set_split: no mated test identities left");

    enum class Side { Train, TestMated, TestNonmated };
    std::vector<Side> side(num_ids, Side::Train);
    std::vector<std::uint32_t> remap(num_ids, 0);  // compact ids within each side
    std::uint32_t next_train = 0, next_test = 0;
    for (std::size_t i = 0; i < num_ids; ++i) {
        if (i < num_train_ids) {
            side[ids[i]] = Side::Train;
            remap[ids[i]] = next_train++;
        } else if (i < num_train_ids + num_nonmated_ids) {
            side[ids[i]] = Side::TestNonmated;
            remap[ids[i]] = next_test++;
        } else {
            side[ids[i]] = Side::TestMated;
            remap[ids[i]] = next_test++;
        }
    }

    // Per-identity sample rows in dataset order.
    std::vector<std::vector<std::size_t>> by_id(num_ids);
    for (std::size_t r = 0; r < dataset.size(); ++r)
        by_id[dataset.labels[r]].push_back(r);

    std::vector<std::size_t> train_rows, val_rows, gallery_rows, mated_rows, nonmated_rows;
    for (std::size_t c = 0; c < num_ids; ++c) {
        const auto& rows = by_id[c];
        if (side[c] == Side::Train) {
            std::size_t n_val =
                static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(rows.size())));
            n_val = std::min(n_val, rows.size() - 1);  // keep >= 1 train sample
            for (std::size_t i = 0; i < rows.size(); ++i)
                (i < rows.size() - n_val ? train_rows : val_rows).push_back(rows[i]);
        } else if (side[c] == Side::TestNonmated) {
            for (std::size_t r : rows) nonmated_rows.push_back(r);
        } else {
            for (std::size_t i = 0; i < rows.size(); ++i)
                (i < gallery_per_id ? gallery_rows : mated_rows).push_back(rows[i]);
        }
    }

    LabeledDataset relabeled = dataset;  // labels remapped to side-local compact ids
    for (std::size_t r = 0; r < relabeled.size(); ++r)
        relabeled.labels[r] = remap[dataset.labels[r]];

    OpenSetSplit split;
    split.train = detail::gather(relabeled, train_rows, next_train);
    split.val = detail::gather(relabeled, val_rows, next_train);
    split.test_gallery = detail::gather(relabeled, gallery_rows, next_test);
    split.test_probe_mated = detail::gather(relabeled, mated_rows, next_test);
    split.test_probe_nonmated = detail::gather(relabeled, nonmated_rows, next_test);
    split.train.validate();
    return split;
}

// ---------------------------------------------------------------------------
// Dataset file format: magic "HVSD", version u32, n u32, dim u32,
// class_count u32, f32 features, u32 labels; all little-endian.

constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

// Split members legitimately have classes with no local samples, so this
// writer skips the per-class occupancy check done by the public save.
inline void write_dataset_raw(const LabeledDataset& dataset, std::ostream& out) {
    out.write("HVSD", 4);
    write_le(out, kDatasetVersion);
    write_le(out, static_cast<std::uint32_t>(dataset.size()));
    write_le(out, static_cast<std::uint32_t>(dataset.dim()));
    write_le(out, dataset.class_count);
    for (float v : dataset.features.data) write_f32(out, v);
    for (std::uint32_t y : dataset.labels) write_le(out, y);
}

}  // namespace detail

inline void save_dataset(const LabeledDataset& dataset, std::ostream& out) {
    dataset.validate();
    detail::write_dataset_raw(dataset, out);
}

inline LabeledDataset load_dataset(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HVSD", 4) != 0) throw FormatError("dataset: bad magic");
    std::uint32_t version = detail::read_le<std::uint32_t>(in);
    if (version != kDatasetVersion) throw FormatError("dataset: unsupported version");
    std::uint32_t n = detail::read_le<std::uint32_t>(in);
    std::uint32_t dim = detail::read_le<std::uint32_t>(in);
    LabeledDataset dataset;
    dataset.class_count = detail::read_le<std::uint32_t>(in);
    dataset.features = Tensor2(n, dim);
    for (float& v : dataset.features.data) v = detail::read_f32(in);
    dataset.labels.resize(n);
    for (std::uint32_t& y : dataset.labels) y = detail::read_le<std::uint32_t>(in);
    if (!in) throw FormatError("dataset: truncated file");
    return dataset;
}

inline void save_dataset(const LabeledDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("dataset: cannot open for writing: " + path);
    save_dataset(dataset, out);
    if (!out) throw FormatError("dataset: write failed: " + path);
}

inline LabeledDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("dataset: cannot open: " + path);
    return load_dataset(in);
}

// Split file: magic "HVSS", version u32, then the five datasets in order
// train, val, test_gallery, test_probe_mated, test_probe_nonmated.

constexpr std::uint32_t kSplitVersion = 1;

inline void save_split(const OpenSetSplit& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("split: cannot open for writing: " + path);
    out.write("HVSS", 4);
    detail::write_le(out, kSplitVersion);
    split.train.validate();
    for (const LabeledDataset* part : {&split.train, &split.val, &split.test_gallery,
                                       &split.test_probe_mated, &split.test_probe_nonmated})
        detail::write_dataset_raw(*part, out);
    if (!out) throw FormatError("split: write failed: " + path);
}

inline OpenSetSplit load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("split: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HVSS", 4) != 0) throw FormatError("split: bad magic");
    std::uint32_t version = detail::read_le<std::uint32_t>(in);
    if (version != kSplitVersion) throw FormatError("split: unsupported version");
    OpenSetSplit split;
    split.train = load_dataset(in);
    split.val = load_dataset(in);
    split.test_gallery = load_dataset(in);
    split.test_probe_mated = load_dataset(in);
    split.test_probe_nonmated = load_dataset(in);
    return split;
}

}  // namespace hvs
