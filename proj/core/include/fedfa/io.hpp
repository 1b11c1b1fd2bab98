#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedfa/anchors.hpp"
#include "fedfa/data.hpp"
#include "fedfa/metrics.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

/// Little-endian binary checkpoint holding layer dims, flat weight arrays,
/// anchors and the round counter; round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& model, const AnchorSet& anchors,
                     int round);

struct Checkpoint {
    ModelParams model;
    AnchorSet anchors;
    int round = 0;
};

Checkpoint load_checkpoint(const std::string& path);

nlohmann::json round_record_json(const RoundRecord& record);

/// Fixed CSV column order:
/// round, accuracy, cls_update_cosine, mean_feat_dist, grad_sq_norm, mean_local_loss
std::string metrics_csv_header();
std::string round_record_csv(const RoundRecord& record);

/// client id -> per-class counts.
nlohmann::json partition_report_json(const std::vector<ClientPartition>& partitions);

/// Streams per-round experiment outputs. The file-backed implementation
/// writes metrics.jsonl, metrics.csv and anchors.jsonl under a run directory.
class RunSink {
public:
    virtual ~RunSink() = default;
    virtual void on_record(const RoundRecord& record) = 0;
    virtual void on_anchors(int round, const Matrix& anchors) = 0;
    virtual void on_finish(const ModelParams& model, const AnchorSet& anchors, int round) = 0;
};

class MemorySink : public RunSink {
public:
    void on_record(const RoundRecord& record) override { records.push_back(record); }
    void on_anchors(int round, const Matrix& anchors) override {
        anchor_rounds.emplace_back(round, anchors);
    }
    void on_finish(const ModelParams& model, const AnchorSet& anchors, int round) override {
        final_model = model;
        final_anchors = anchors;
        final_round = round;
    }

    std::vector<RoundRecord> records;
    std::vector<std::pair<int, Matrix>> anchor_rounds;
    ModelParams final_model;
    AnchorSet final_anchors;
    int final_round = 0;
};

class FileRunSink : public RunSink {
public:
    explicit FileRunSink(const std::string& out_dir);
    ~FileRunSink() override;

    void on_record(const RoundRecord& record) override;
    void on_anchors(int round, const Matrix& anchors) override;
    void on_finish(const ModelParams& model, const AnchorSet& anchors, int round) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace fedfa
