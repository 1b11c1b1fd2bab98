#include "fedfa/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fedfa {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'F', 'A', 'C', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw ParseError(path + ": truncated checkpoint");
    return value;
}

void write_doubles(std::ofstream& out, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::span<double> values, const std::string& path) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double))))
        throw ParseError(path + ": truncated checkpoint");
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json vector_json(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(x);
    return arr;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& model, const AnchorSet& anchors,
                     int round) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(round));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.extractor.layers.size()));
    for (const auto& layer : model.extractor.layers) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weight.rows()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weight.cols()));
        write_doubles(out, layer.weight.data());
        write_doubles(out, layer.bias);
    }
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.classifier.proxies.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.classifier.proxies.cols()));
    write_doubles(out, model.classifier.proxies.data());
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(anchors.anchors.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(anchors.anchors.cols()));
    write_doubles(out, anchors.anchors.data());
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(anchors.round_index));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError(path + ": bad checkpoint magic at byte offset 0");
    Checkpoint cp;
    cp.round = static_cast<int>(read_pod<std::uint32_t>(in, path));
    const auto layer_count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const auto rows = read_pod<std::uint32_t>(in, path);
        const auto cols = read_pod<std::uint32_t>(in, path);
        DenseLayer layer;
        layer.weight = Matrix(rows, cols);
        read_doubles(in, layer.weight.data(), path);
        layer.bias.resize(rows);
        read_doubles(in, layer.bias, path);
        cp.model.extractor.layers.push_back(std::move(layer));
    }
    {
        const auto rows = read_pod<std::uint32_t>(in, path);
        const auto cols = read_pod<std::uint32_t>(in, path);
        cp.model.classifier.proxies = Matrix(rows, cols);
        read_doubles(in, cp.model.classifier.proxies.data(), path);
    }
    {
        const auto rows = read_pod<std::uint32_t>(in, path);
        const auto cols = read_pod<std::uint32_t>(in, path);
        cp.anchors.anchors = Matrix(rows, cols);
        read_doubles(in, cp.anchors.anchors.data(), path);
        cp.anchors.round_index = static_cast<int>(read_pod<std::uint32_t>(in, path));
    }
    return cp;
}

json round_record_json(const RoundRecord& r) {
    json d;
    d["round"] = r.round;
    d["accuracy"] = r.test_accuracy ? json(*r.test_accuracy) : json(nullptr);
    d["cls_update_cosine"] =
        r.classifier_update_cosine ? json(*r.classifier_update_cosine) : json(nullptr);
    d["per_class_feat_dist"] = vector_json(r.per_class_feature_distance);
    d["mean_feat_dist"] = r.mean_feature_distance;
    d["grad_sq_norm"] = r.classifier_grad_sq_norm;
    d["per_class_grad_sq_norm"] = vector_json(r.per_class_grad_sq_norm);
    d["client_loss_means"] = vector_json(r.client_loss_means);
    d["mean_local_loss"] = r.mean_local_loss;
    return d;
}

std::string metrics_csv_header() {
    return "round,accuracy,cls_update_cosine,mean_feat_dist,grad_sq_norm,mean_local_loss";
}

std::string round_record_csv(const RoundRecord& r) {
    std::string line = std::to_string(r.round);
    line += ",";
    if (r.test_accuracy) line += format_double(*r.test_accuracy);
    line += ",";
    if (r.classifier_update_cosine) line += format_double(*r.classifier_update_cosine);
    line += ",";
    if (std::isfinite(r.mean_feature_distance)) line += format_double(r.mean_feature_distance);
    line += ",";
    line += format_double(r.classifier_grad_sq_norm);
    line += ",";
    line += format_double(r.mean_local_loss);
    return line;
}

json partition_report_json(const std::vector<ClientPartition>& partitions) {
    json clients = json::array();
    for (const auto& p : partitions) {
        json entry;
        entry["client_id"] = p.client_id;
        entry["sample_count"] = p.size();
        json counts = json::array();
        for (std::size_t c : p.per_class_counts) counts.push_back(c);
        entry["per_class_counts"] = counts;
        clients.push_back(entry);
    }
    json out;
    out["clients"] = clients;
    return out;
}

struct FileRunSink::Impl {
    std::string out_dir;
    std::ofstream jsonl;
    std::ofstream csv;
    std::ofstream anchors;
};

FileRunSink::FileRunSink(const std::string& out_dir) : impl_(new Impl) {
    impl_->out_dir = out_dir;
    std::filesystem::create_directories(out_dir);
    impl_->jsonl.open(out_dir + "/metrics.jsonl", std::ios::trunc);
    impl_->csv.open(out_dir + "/metrics.csv", std::ios::trunc);
    impl_->anchors.open(out_dir + "/anchors.jsonl", std::ios::trunc);
    if (!impl_->jsonl || !impl_->csv || !impl_->anchors)
        throw std::runtime_error("cannot open output files under " + out_dir);
    impl_->csv << metrics_csv_header() << "\n";
}

FileRunSink::~FileRunSink() = default;

void FileRunSink::on_record(const RoundRecord& record) {
    impl_->jsonl << round_record_json(record).dump() << "\n";
    impl_->csv << round_record_csv(record) << "\n";
}

void FileRunSink::on_anchors(int round, const Matrix& anchors) {
    for (std::size_t c = 0; c < anchors.rows(); ++c) {
        json row;
        row["round"] = round;
        row["class"] = c;
        json vec = json::array();
        for (double v : anchors.row(c)) vec.push_back(v);
        row["vector"] = vec;
        impl_->anchors << row.dump() << "\n";
    }
}

void FileRunSink::on_finish(const ModelParams& model, const AnchorSet& anchors, int round) {
    save_checkpoint(impl_->out_dir + "/checkpoint.bin", model, anchors, round);
    impl_->jsonl.flush();
    impl_->csv.flush();
    impl_->anchors.flush();
}

}  // namespace fedfa
