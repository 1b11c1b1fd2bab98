#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedfa/matrix.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

/// Thrown on malformed input files; message carries the byte offset or line.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown on infeasible partition / experiment configurations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Matrix X;            // n x d_in
    std::vector<int> y;  // labels in [0, class_count)
    int class_count = 0;

    std::size_t size() const { return y.size(); }
    std::vector<std::size_t> class_counts() const;
};

/// Per-client-group affine input transform realizing feature skew; labels are
/// never touched. Applied as x' = scale .* (R x) + shift, with the rotation R
/// present only when rotation_seed is set.
struct FeatureSkewTransform {
    std::vector<double> scale;
    std::vector<double> shift;
    std::optional<std::uint64_t> rotation_seed;

    Matrix apply(const Matrix& X) const;
};

/// Index-based view of a dataset assigned to one client.
struct ClientPartition {
    int client_id = 0;
    std::vector<std::size_t> sample_indices;
    std::vector<std::size_t> per_class_counts;
    std::optional<FeatureSkewTransform> transform;

    std::size_t size() const { return sample_indices.size(); }
};

/// Gaussian class clusters with means at separation * e_c; balanced classes.
Dataset generate_synthetic(int class_count, std::size_t per_class_n, std::size_t d_in,
                           double cluster_separation, double within_std, Rng& rng);

/// IDX pair reader (big-endian magic 0x00000803 for images, 0x00000801 for
/// labels). Pixels scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Label-first-column CSV; a non-numeric header row is skipped. Feature
/// values above 1 are treated as pixel bytes and scaled by 1/255.
/// expected_classes == 0 infers the class count from the labels.
Dataset load_csv(const std::string& path, int expected_classes = 0);

/// Label-shard scheme: each client holds exactly classes_per_client distinct
/// labels; each class pool is split evenly among its holders.
std::vector<ClientPartition> partition_shards(const Dataset& dataset, int client_count,
                                              int classes_per_client, Rng& rng);

/// Per class, split the sample pool by proportions drawn from Dir(alpha*1_N)
/// (largest-remainder rounding). Assignments leaving a client empty are
/// redrawn up to a bounded retry count.
std::vector<ClientPartition> partition_dirichlet(const Dataset& dataset, int client_count,
                                                 double alpha, Rng& rng);

/// Round-robin group assignment; each group receives a fixed affine transform
/// with per-dim scale in [1-s, 1+s] and shift in [-s, s].
void attach_feature_skew(std::vector<ClientPartition>& partitions, int group_count,
                         double transform_strength, std::size_t input_dim, Rng& rng);

struct Batch {
    Matrix X;
    std::vector<int> y;
};

/// Deterministic per-(epoch, seed) shuffle; the final short batch is kept;
/// the partition transform, if any, is applied to the returned features.
std::vector<Batch> batch_iter(const ClientPartition& partition, const Dataset& dataset,
                              std::size_t batch_size, std::size_t epoch_index,
                              std::uint64_t rng_seed);

/// Rows of `dataset` selected by `indices`, with optional transform.
Batch gather(const Dataset& dataset, const std::vector<std::size_t>& indices,
             const std::optional<FeatureSkewTransform>& transform);

std::vector<std::size_t> count_per_class(const Dataset& dataset,
                                         const std::vector<std::size_t>& indices);

}  // namespace fedfa
