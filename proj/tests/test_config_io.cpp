#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedfa/config.hpp"
#include "fedfa/io.hpp"
#include "fedfa/runner.hpp"

using namespace fedfa;
using nlohmann::json;

namespace {

std::string temp_dir(const std::string& name) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
    return path.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg = preset_config("desk-synthetic-shards");
    cfg.dataset.synthetic.per_class = 40;
    cfg.dataset.synthetic.test_per_class = 20;
    cfg.rounds = 3;
    cfg.clients = 4;
    cfg.hyper.local_epochs = 1;
    cfg.workers = 1;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("preset paper-fmnist-shards materializes the published setup") {
    const ExperimentConfig cfg = preset_config("paper-fmnist-shards");
    CHECK(cfg.clients == 100);
    CHECK(cfg.sample_rate == 0.1);
    CHECK(cfg.hyper.batch_size == 64);
    CHECK(cfg.hyper.local_epochs == 5);
    CHECK(cfg.rounds == 200);
    CHECK(cfg.hyper.lr == 0.01);
    CHECK(cfg.hyper.weight_decay == 0.001);
    CHECK(cfg.strategy.fedfa.mu == 0.1);
    CHECK(cfg.strategy.fedfa.lambda == 0.5);
    CHECK(cfg.partition.classes_per_client == 2);
}

TEST_CASE("all presets validate except those needing data files") {
    for (const auto& name : preset_names()) {
        const ExperimentConfig cfg = preset_config(name);
        const auto problems = validate_config(cfg);
        if (cfg.dataset.kind == DatasetKind::Synthetic) {
            CHECK(problems.empty());
        } else {
            // file-backed presets must fail with the missing path named
            REQUIRE_FALSE(problems.empty());
            CHECK(problems.front().find("not found") != std::string::npos);
        }
    }
}

TEST_CASE("config snapshot round-trips through parse_config") {
    const ExperimentConfig cfg = preset_config("desk-synthetic-combined");
    const json snapshot = resolved_config(cfg);
    const ExperimentConfig back = parse_config(snapshot);
    CHECK(resolved_config(back) == snapshot);
}

TEST_CASE("parse_config rejects unknown keys") {
    json doc;
    doc["rounds"] = 5;
    doc["typo_field"] = 1;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("config file with comments loads") {
    const std::string dir = temp_dir("fedfa_cfg");
    const std::string path = dir + "/config.jsonc";
    {
        std::ofstream out(path);
        out << "{\n  // desk run\n  \"rounds\": 2,\n  \"seed\": 9\n}\n";
    }
    const ExperimentConfig cfg = load_config_file(path);
    CHECK(cfg.rounds == 2);
    CHECK(cfg.seed == 9);
}

TEST_CASE("validation lists every problem at once") {
    ExperimentConfig cfg = preset_config("desk-synthetic-shards");
    cfg.sample_rate = 0.0;
    cfg.rounds = -1;
    cfg.hyper.lr = -0.5;
    const auto problems = validate_config(cfg);
    CHECK(problems.size() >= 3);
}

TEST_CASE("missing dataset file is reported with its path") {
    ExperimentConfig cfg = preset_config("paper-fmnist-shards");
    const auto problems = validate_config(cfg);
    REQUIRE_FALSE(problems.empty());
    bool mentions_path = false;
    for (const auto& p : problems)
        mentions_path |= p.find("data/fmnist/train-images-idx3-ubyte") != std::string::npos;
    CHECK(mentions_path);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(1);
    ModelParams model = init_model({6, 5, 4}, 4, rng);
    AnchorSet anchors = init_orthogonal(4, 4);
    anchors.anchors(1, 2) = -0.12345678901234567;
    anchors.round_index = 17;
    const std::string dir = temp_dir("fedfa_ckpt");
    const std::string path = dir + "/checkpoint.bin";
    save_checkpoint(path, model, anchors, 42);
    const Checkpoint cp = load_checkpoint(path);
    CHECK(cp.round == 42);
    CHECK(bit_identical(cp.model, model));
    CHECK(cp.anchors.anchors == anchors.anchors);
    CHECK(cp.anchors.round_index == 17);
}

TEST_CASE("checkpoint loader rejects bad magic") {
    const std::string dir = temp_dir("fedfa_ckpt_bad");
    const std::string path = dir + "/junk.bin";
    std::ofstream(path) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
}

TEST_CASE("metrics csv column order is fixed") {
    CHECK(metrics_csv_header() ==
          "round,accuracy,cls_update_cosine,mean_feat_dist,grad_sq_norm,mean_local_loss");
    RoundRecord r;
    r.round = 7;
    r.test_accuracy = 0.5;
    r.mean_feature_distance = 0.25;
    const std::string line = round_record_csv(r);
    CHECK(line.substr(0, 2) == "7,");
    CHECK(line.find("0.5,") != std::string::npos);
}

TEST_CASE("partition report json counts per client") {
    Rng gen(2);
    Dataset ds = generate_synthetic(4, 20, 8, 2.0, 1.0, gen);
    Rng prng(3);
    const auto parts = partition_shards(ds, 4, 2, prng);
    const json report = partition_report_json(parts);
    REQUIRE(report.at("clients").size() == 4);
    for (const auto& entry : report.at("clients")) {
        int nonzero = 0;
        std::size_t total = 0;
        for (const auto& c : entry.at("per_class_counts")) {
            if (c.get<std::size_t>() > 0) ++nonzero;
            total += c.get<std::size_t>();
        }
        CHECK(nonzero == 2);
        CHECK(total == entry.at("sample_count").get<std::size_t>());
    }
}

TEST_CASE("run_experiment writes a record per round plus round zero") {
    const std::string dir = temp_dir("fedfa_run");
    ExperimentConfig cfg = tiny_config(dir);
    MemorySink sink;
    run_experiment(cfg, sink);
    REQUIRE(sink.records.size() == 4);  // rounds 0..3
    CHECK(sink.records.front().round == 0);
    CHECK(sink.records.back().round == 3);
    CHECK(sink.final_round == 3);
    // fedfa run: anchors exported for round 0 and each round
    CHECK(sink.anchor_rounds.size() == 4);
}

TEST_CASE("run_experiment with zero rounds evaluates the initial model only") {
    const std::string dir = temp_dir("fedfa_run0");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.rounds = 0;
    MemorySink sink;
    run_experiment(cfg, sink);
    REQUIRE(sink.records.size() == 1);
    CHECK(sink.records[0].round == 0);
    REQUIRE(sink.records[0].test_accuracy.has_value());
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    const std::string dir1 = temp_dir("fedfa_det1");
    const std::string dir2 = temp_dir("fedfa_det2");
    CliOverrides o1, o2;
    o1.out_dir = dir1;
    o2.out_dir = dir2;
    std::ostringstream out, err;
    ExperimentConfig cfg = tiny_config(dir1);
    const std::string cfg_path = dir1 + "-config.json";
    {
        std::ofstream f(cfg_path);
        f << resolved_config(cfg).dump(2);
    }
    REQUIRE(cmd_run(cfg_path, o1, out, err) == 0);
    REQUIRE(cmd_run(cfg_path, o2, out, err) == 0);
    CHECK(read_file(dir1 + "/metrics.jsonl") == read_file(dir2 + "/metrics.jsonl"));
    CHECK(read_file(dir1 + "/metrics.csv") == read_file(dir2 + "/metrics.csv"));
    CHECK(read_file(dir1 + "/anchors.jsonl") == read_file(dir2 + "/anchors.jsonl"));
    CHECK(read_file(dir1 + "/checkpoint.bin") == read_file(dir2 + "/checkpoint.bin"));
}

TEST_CASE("seed override changes the run, worker count does not") {
    const std::string base = temp_dir("fedfa_ovr_base");
    const std::string seeded = temp_dir("fedfa_ovr_seed");
    const std::string threaded = temp_dir("fedfa_ovr_threads");
    ExperimentConfig cfg = tiny_config(base);
    const std::string cfg_path = base + "-config.json";
    {
        std::ofstream f(cfg_path);
        f << resolved_config(cfg).dump(2);
    }
    std::ostringstream out, err;
    CliOverrides o_base;
    o_base.out_dir = base;
    REQUIRE(cmd_run(cfg_path, o_base, out, err) == 0);

    CliOverrides o_seed;
    o_seed.out_dir = seeded;
    o_seed.seed = 777;
    REQUIRE(cmd_run(cfg_path, o_seed, out, err) == 0);
    CHECK(read_file(base + "/metrics.jsonl") != read_file(seeded + "/metrics.jsonl"));

    CliOverrides o_threads;
    o_threads.out_dir = threaded;
    o_threads.workers = 3;
    REQUIRE(cmd_run(cfg_path, o_threads, out, err) == 0);
    CHECK(read_file(base + "/metrics.jsonl") == read_file(threaded + "/metrics.jsonl"));
}

TEST_CASE("cmd_run exit code 2 on missing config and on invalid config") {
    std::ostringstream out, err;
    CHECK(cmd_run("/does/not/exist.json", {}, out, err) == 2);
    CHECK(err.str().find("/does/not/exist.json") != std::string::npos);

    const std::string dir = temp_dir("fedfa_badcfg");
    const std::string path = dir + "/bad.json";
    std::ofstream(path) << "{\"sample_rate\": 2.0}";
    std::ostringstream out2, err2;
    CHECK(cmd_run(path, {}, out2, err2) == 2);
    CHECK(err2.str().find("sample_rate") != std::string::npos);
}

TEST_CASE("cmd_partition_report emits valid json with shard structure") {
    const std::string dir = temp_dir("fedfa_report");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.clients = 10;
    cfg.dataset.synthetic.per_class = 50;
    const std::string path = dir + "/cfg.json";
    {
        std::ofstream f(path);
        f << resolved_config(cfg).dump(2);
    }
    std::ostringstream out, err;
    REQUIRE(cmd_partition_report(path, {}, out, err) == 0);
    const json report = json::parse(out.str());
    REQUIRE(report.at("clients").size() == 10);
    for (const auto& entry : report.at("clients")) {
        int nonzero = 0;
        for (const auto& c : entry.at("per_class_counts"))
            if (c.get<std::size_t>() > 0) ++nonzero;
        CHECK(nonzero == 2);
    }
}

TEST_CASE("resolved config snapshot reproduces the identical run") {
    const std::string dir1 = temp_dir("fedfa_snap1");
    const std::string dir2 = temp_dir("fedfa_snap2");
    ExperimentConfig cfg = tiny_config(dir1);
    const std::string path = dir1 + "-cfg.json";
    {
        std::ofstream f(path);
        f << resolved_config(cfg).dump(2);
    }
    std::ostringstream out, err;
    CliOverrides o1;
    o1.out_dir = dir1;
    REQUIRE(cmd_run(path, o1, out, err) == 0);
    // re-ingest the snapshot written by the first run
    CliOverrides o2;
    o2.out_dir = dir2;
    REQUIRE(cmd_run(dir1 + "/config.resolved", o2, out, err) == 0);
    CHECK(read_file(dir1 + "/metrics.jsonl") == read_file(dir2 + "/metrics.jsonl"));
}

TEST_CASE("feature-skew and combined schemes run end to end") {
    for (const char* name : {"desk-synthetic-combined", "desk-synthetic-dirichlet"}) {
        const std::string dir = temp_dir(std::string("fedfa_scheme_") + name);
        ExperimentConfig cfg = preset_config(name);
        cfg.dataset.synthetic.per_class = 40;
        cfg.dataset.synthetic.test_per_class = 20;
        cfg.rounds = 2;
        cfg.hyper.local_epochs = 1;
        cfg.workers = 1;
        cfg.out_dir = dir;
        MemorySink sink;
        run_experiment(cfg, sink);
        CHECK(sink.records.size() == 3);
    }
}

TEST_CASE("verify command reports all suites passing") {
    std::ostringstream out;
    CHECK(cmd_verify(out) == 0);
    CHECK(out.str().find("[FAIL]") == std::string::npos);
    CHECK(out.str().find("finite-difference") != std::string::npos);
    CHECK(out.str().find("classifier-update deviation") != std::string::npos);
    CHECK(out.str().find("degeneration") != std::string::npos);
}
