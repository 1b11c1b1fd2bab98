#include "fedfa/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedfa {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr int kDirichletRetries = 64;

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& path) {
    if (offset + 4 > bytes.size())
        throw ParseError(path + ": truncated at byte offset " + std::to_string(offset));
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void validate_dataset(const Dataset& ds, const std::string& origin) {
    if (ds.size() == 0) throw ParseError(origin + ": empty dataset");
    if (ds.X.rows() != ds.y.size()) throw ParseError(origin + ": row/label count mismatch");
    for (std::size_t j = 0; j < ds.y.size(); ++j) {
        if (ds.y[j] < 0 || ds.y[j] >= ds.class_count)
            throw ParseError(origin + ": label out of range at sample " + std::to_string(j));
    }
}

/// Largest-remainder rounding of n into integer parts proportional to p.
std::vector<std::size_t> largest_remainder(const std::vector<double>& p, std::size_t n) {
    const std::size_t k = p.size();
    std::vector<std::size_t> base(k);
    std::vector<std::pair<double, std::size_t>> fracs(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double quota = p[i] * static_cast<double>(n);
        base[i] = static_cast<std::size_t>(std::floor(quota));
        fracs[i] = {quota - std::floor(quota), i};
        assigned += base[i];
    }
    // Ties broken by lowest index for determinism.
    std::stable_sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) base[fracs[r % k].second] += 1;
    return base;
}

std::vector<std::vector<std::size_t>> class_pools(const Dataset& dataset) {
    std::vector<std::vector<std::size_t>> pools(dataset.class_count);
    for (std::size_t j = 0; j < dataset.size(); ++j)
        pools[static_cast<std::size_t>(dataset.y[j])].push_back(j);
    return pools;
}

ClientPartition make_partition(int client_id, std::vector<std::size_t> indices,
                               const Dataset& dataset) {
    ClientPartition p;
    p.client_id = client_id;
    p.sample_indices = std::move(indices);
    p.per_class_counts = count_per_class(dataset, p.sample_indices);
    return p;
}

}  // namespace

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (int label : y) counts[static_cast<std::size_t>(label)] += 1;
    return counts;
}

std::vector<std::size_t> count_per_class(const Dataset& dataset,
                                         const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> counts(dataset.class_count, 0);
    for (std::size_t idx : indices) counts[static_cast<std::size_t>(dataset.y[idx])] += 1;
    return counts;
}

Matrix FeatureSkewTransform::apply(const Matrix& X) const {
    if (scale.size() != X.cols() || shift.size() != X.cols())
        throw ShapeError("feature skew transform dim mismatch");
    Matrix out = X;
    if (rotation_seed) {
        // Deterministic rotation composed of seeded Givens rotations.
        Rng rot(*rotation_seed);
        std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> givens;
        for (std::size_t a = 0; a + 1 < X.cols(); ++a) {
            const std::size_t b = a + 1 + rot.below(X.cols() - a - 1);
            givens.push_back({{a, b}, rot.uniform(0.0, 2.0 * 3.14159265358979323846)});
        }
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto row = out.row(i);
            for (const auto& [ab, theta] : givens) {
                const double c = std::cos(theta), s = std::sin(theta);
                const double xa = row[ab.first], xb = row[ab.second];
                row[ab.first] = c * xa - s * xb;
                row[ab.second] = s * xa + c * xb;
            }
        }
    }
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = scale[k] * row[k] + shift[k];
    }
    return out;
}

Dataset generate_synthetic(int class_count, std::size_t per_class_n, std::size_t d_in,
                           double cluster_separation, double within_std, Rng& rng) {
    if (class_count < 2) throw ConfigError("generate_synthetic: need at least 2 classes");
    if (per_class_n == 0) throw ConfigError("generate_synthetic: per_class_n must be positive");
    if (d_in < static_cast<std::size_t>(class_count))
        throw ConfigError("generate_synthetic: d_in must be >= class count");
    if (within_std < 0.0) throw ConfigError("generate_synthetic: within_std must be >= 0");

    const std::size_t n = per_class_n * static_cast<std::size_t>(class_count);
    Dataset ds;
    ds.class_count = class_count;
    ds.X = Matrix(n, d_in);
    ds.y.resize(n);
    std::size_t j = 0;
    for (int c = 0; c < class_count; ++c) {
        for (std::size_t s = 0; s < per_class_n; ++s, ++j) {
            ds.y[j] = c;
            auto row = ds.X.row(j);
            for (std::size_t k = 0; k < d_in; ++k) {
                const double mean = (k == static_cast<std::size_t>(c)) ? cluster_separation : 0.0;
                row[k] = rng.normal(mean, within_std);
            }
        }
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file_bytes(images_path);
    const auto lbl = read_file_bytes(labels_path);
    if (img.empty()) throw ParseError(images_path + ": empty file");
    if (lbl.empty()) throw ParseError(labels_path + ": empty file");

    if (read_be32(img, 0, images_path) != kIdxImagesMagic)
        throw ParseError(images_path + ": bad magic at byte offset 0");
    if (read_be32(lbl, 0, labels_path) != kIdxLabelsMagic)
        throw ParseError(labels_path + ": bad magic at byte offset 0");

    const std::size_t n = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t n_labels = read_be32(lbl, 4, labels_path);
    if (n != n_labels)
        throw ParseError(images_path + ": image count " + std::to_string(n) +
                         " != label count " + std::to_string(n_labels));
    const std::size_t d = rows * cols;
    if (img.size() != 16 + n * d)
        throw ParseError(images_path + ": expected " + std::to_string(16 + n * d) +
                         " bytes, found " + std::to_string(img.size()));
    if (lbl.size() != 8 + n)
        throw ParseError(labels_path + ": expected " + std::to_string(8 + n) + " bytes, found " +
                         std::to_string(lbl.size()));

    Dataset ds;
    ds.X = Matrix(n, d);
    ds.y.resize(n);
    int max_label = 0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < d; ++k)
            ds.X(j, k) = static_cast<double>(img[16 + j * d + k]) / 255.0;
        ds.y[j] = static_cast<int>(lbl[8 + j]);
        max_label = std::max(max_label, ds.y[j]);
    }
    ds.class_count = max_label + 1;
    validate_dataset(ds, images_path);
    return ds;
}

Dataset load_csv(const std::string& path, int expected_classes) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");

    Dataset ds;
    std::vector<double> values;
    std::size_t d = 0;
    std::string line;
    std::size_t line_no = 0;
    int max_label = 0;
    double max_feature = 0.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                    ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (line_no == 1) continue;  // header row
            throw ParseError(path + ": non-numeric cell at line " + std::to_string(line_no));
        }
        if (row.size() < 2)
            throw ParseError(path + ": need label plus at least one feature at line " +
                             std::to_string(line_no));
        if (d == 0) {
            d = row.size() - 1;
        } else if (row.size() - 1 != d) {
            throw ParseError(path + ": ragged row at line " + std::to_string(line_no));
        }
        const double label = row[0];
        if (label < 0 || label != std::floor(label))
            throw ParseError(path + ": bad label at line " + std::to_string(line_no));
        ds.y.push_back(static_cast<int>(label));
        max_label = std::max(max_label, ds.y.back());
        for (std::size_t k = 1; k < row.size(); ++k) {
            values.push_back(row[k]);
            max_feature = std::max(max_feature, std::abs(row[k]));
        }
    }
    if (ds.y.empty()) throw ParseError(path + ": empty file");

    ds.X = Matrix(ds.y.size(), d);
    // Values above 1 are pixel bytes; scale into [0, 1].
    const double scale = max_feature > 1.0 ? 1.0 / 255.0 : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) ds.X.data()[i] = values[i] * scale;
    ds.class_count = expected_classes > 0 ? expected_classes : max_label + 1;
    validate_dataset(ds, path);
    return ds;
}

std::vector<ClientPartition> partition_shards(const Dataset& dataset, int client_count,
                                              int classes_per_client, Rng& rng) {
    const int C = dataset.class_count;
    if (client_count < 1) throw ConfigError("partition_shards: need at least one client");
    if (classes_per_client < 1 || classes_per_client > C)
        throw ConfigError("partition_shards: classes_per_client outside [1, C]");
    const long slots = static_cast<long>(client_count) * classes_per_client;
    if (slots % C != 0)
        throw ConfigError("partition_shards: N * classes_per_client must be divisible by C");
    const std::size_t holders = static_cast<std::size_t>(slots / C);
    if (holders == 0) throw ConfigError("partition_shards: some class would have no holder");

    // Slot construction: class c owns `holders` consecutive slots; slot i goes
    // to client perm[(i mod N)]. Slots of one client are >= N apart, so a
    // client never receives the same class twice (holders <= N).
    std::vector<int> client_perm(client_count);
    std::iota(client_perm.begin(), client_perm.end(), 0);
    rng.shuffle(client_perm);
    std::vector<int> class_perm(C);
    std::iota(class_perm.begin(), class_perm.end(), 0);
    rng.shuffle(class_perm);

    auto pools = class_pools(dataset);
    for (auto& pool : pools) rng.shuffle(pool);

    std::vector<std::vector<std::size_t>> assigned(client_count);
    for (int ci = 0; ci < C; ++ci) {
        const int c = class_perm[static_cast<std::size_t>(ci)];
        const auto& pool = pools[static_cast<std::size_t>(c)];
        // Even contiguous chunks; the first (n_c mod holders) get one extra.
        const std::size_t n_c = pool.size();
        std::size_t offset = 0;
        for (std::size_t h = 0; h < holders; ++h) {
            const std::size_t slot = static_cast<std::size_t>(ci) * holders + h;
            const int client = client_perm[slot % static_cast<std::size_t>(client_count)];
            std::size_t take = n_c / holders + (h < n_c % holders ? 1 : 0);
            for (std::size_t s = 0; s < take; ++s)
                assigned[static_cast<std::size_t>(client)].push_back(pool[offset + s]);
            offset += take;
        }
    }

    std::vector<ClientPartition> out;
    out.reserve(client_count);
    for (int i = 0; i < client_count; ++i)
        out.push_back(make_partition(i, std::move(assigned[static_cast<std::size_t>(i)]), dataset));
    return out;
}

std::vector<ClientPartition> partition_dirichlet(const Dataset& dataset, int client_count,
                                                 double alpha, Rng& rng) {
    if (client_count < 1) throw ConfigError("partition_dirichlet: need at least one client");
    if (alpha <= 0.0) throw ConfigError("partition_dirichlet: alpha must be positive");

    auto pools = class_pools(dataset);
    for (int attempt = 0; attempt < kDirichletRetries; ++attempt) {
        std::vector<std::vector<std::size_t>> assigned(client_count);
        for (auto& pool : pools) {
            rng.shuffle(pool);
            const auto shares = rng.dirichlet(alpha, static_cast<std::size_t>(client_count));
            const auto counts = largest_remainder(shares, pool.size());
            std::size_t offset = 0;
            for (int i = 0; i < client_count; ++i) {
                const std::size_t take = counts[static_cast<std::size_t>(i)];
                for (std::size_t s = 0; s < take; ++s)
                    assigned[static_cast<std::size_t>(i)].push_back(pool[offset + s]);
                offset += take;
            }
        }
        const bool any_empty = std::any_of(assigned.begin(), assigned.end(),
                                           [](const auto& v) { return v.empty(); });
        if (any_empty) continue;
        std::vector<ClientPartition> out;
        out.reserve(client_count);
        for (int i = 0; i < client_count; ++i)
            out.push_back(
                make_partition(i, std::move(assigned[static_cast<std::size_t>(i)]), dataset));
        return out;
    }
    throw ConfigError("partition_dirichlet: could not produce non-empty clients after " +
                      std::to_string(kDirichletRetries) + " redraws (alpha=" +
                      std::to_string(alpha) + ", N=" + std::to_string(client_count) + ")");
}

void attach_feature_skew(std::vector<ClientPartition>& partitions, int group_count,
                         double transform_strength, std::size_t input_dim, Rng& rng) {
    if (group_count < 1) throw ConfigError("attach_feature_skew: need at least one group");
    if (group_count > static_cast<int>(partitions.size()))
        throw ConfigError("attach_feature_skew: more groups than clients");
    if (transform_strength < 0.0 || transform_strength >= 1.0)
        throw ConfigError("attach_feature_skew: strength must lie in [0, 1)");

    std::vector<FeatureSkewTransform> transforms(group_count);
    for (auto& t : transforms) {
        t.scale.resize(input_dim);
        t.shift.resize(input_dim);
        for (std::size_t k = 0; k < input_dim; ++k)
            t.scale[k] = 1.0 + rng.uniform(-transform_strength, transform_strength);
        for (std::size_t k = 0; k < input_dim; ++k)
            t.shift[k] = rng.uniform(-transform_strength, transform_strength);
    }
    for (std::size_t i = 0; i < partitions.size(); ++i)
        partitions[i].transform = transforms[i % static_cast<std::size_t>(group_count)];
}

Batch gather(const Dataset& dataset, const std::vector<std::size_t>& indices,
             const std::optional<FeatureSkewTransform>& transform) {
    Batch b;
    b.X = Matrix(indices.size(), dataset.X.cols());
    b.y.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = dataset.X.row(indices[i]);
        auto dst = b.X.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        b.y[i] = dataset.y[indices[i]];
    }
    if (transform) b.X = transform->apply(b.X);
    return b;
}

std::vector<Batch> batch_iter(const ClientPartition& partition, const Dataset& dataset,
                              std::size_t batch_size, std::size_t epoch_index,
                              std::uint64_t rng_seed) {
    if (batch_size == 0) throw ConfigError("batch_iter: batch_size must be positive");
    std::vector<std::size_t> order = partition.sample_indices;
    Rng rng(derive_seed(rng_seed, {epoch_index}, StreamTag::BatchShuffle));
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, order.size());
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        batches.push_back(gather(dataset, idx, partition.transform));
    }
    return batches;
}

}  // namespace fedfa
