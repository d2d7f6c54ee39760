#include <cstdint>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "purelab/checkpoint.hpp"
#include "purelab/config.hpp"
#include "purelab/csv.hpp"
#include "purelab/pipeline.hpp"

using namespace purelab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::current_path() / "harness_tmp" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string tiny_config(const fs::path& out_dir) {
  return "task.d = 32\n"
         "task.k = 4\n"
         "task.sigma_x = 0.25\n"
         "net.m = 48\n"
         "sched.t_f = 6\n"
         "sched.t_g = 4\n"
         "sched.eval_every = 3\n"
         "sched.n_train = 64\n"
         "sched.metrics_samples = 32\n"
         "sched.metrics_attacks = fgm:l2:0.25;dense:l2:1\n"
         "adv.attack = fgm:l2:0.25\n"
         "eval.n_samples = 64\n"
         "eval.attacks = fgm:l2:0.25;dense:l2:1\n"
         "diag.recon_inputs = 4\n"
         "run.out = " + out_dir.string() + "\n";
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  REQUIRE(ec == std::errc());
  REQUIRE(p == s.data() + s.size());
  return v;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("empty config resolves to the documented defaults") {
    auto cfg = parse_config_text("");
    CHECK(cfg.d == 128);
    CHECK(cfg.k == 8);
    CHECK(cfg.m == 512);
    CHECK(cfg.sigma_x == 0.5);
    CHECK(cfg.eta == 0.5);
    CHECK(cfg.seed == 0);
    CHECK(cfg.p_max == 1.0 / 128);
    CHECK(cfg.p_nz == 8.0 / 128);
    CHECK(cfg.v_small == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-15));
    CHECK(cfg.sigma0 == doctest::Approx(std::pow(128.0, -1.01)).epsilon(1e-15));
    CHECK(cfg.lambda == doctest::Approx(0.1 / 128.0).epsilon(1e-15));
    CHECK(cfg.bias_rate == doctest::Approx(0.04 / 128.0).epsilon(1e-15));
    CHECK(cfg.b_cap == doctest::Approx(std::pow(8.0, -0.5001)).epsilon(1e-15));
    CHECK(cfg.beta == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-15));
    CHECK(!cfg.adv_attack.empty());
    CHECK(!cfg.eval_attacks.empty());
    CHECK(!cfg.metrics_attacks.empty());
    // The adversarial budget defaults to half the decisive dense budget.
    auto adv = AttackSpec::parse(cfg.adv_attack);
    CHECK(adv.budget.tau == doctest::Approx(0.5 / std::sqrt(8.0)).epsilon(1e-12));
  }

  TEST_CASE("canonical emission is a parse fixpoint") {
    auto cfg = parse_config_text("task.d = 48\ntask.k = 6\nrun.seed = 9\n");
    std::string text = emit_config(cfg);
    auto again = parse_config_text(text);
    CHECK(emit_config(again) == text);
    CHECK(config_hash(again) == config_hash(cfg));
  }

  TEST_CASE("config errors name the line and key") {
    CHECK_THROWS_WITH_AS(parse_config_text("task.d = twelve\n"),
                         doctest::Contains("task.d"), config_error);
    CHECK_THROWS_WITH_AS(parse_config_text("\n\nbogus.key = 1\n"),
                         doctest::Contains("line 3"), config_error);
    CHECK_THROWS_WITH_AS(parse_config_text("task.d\n"),
                         doctest::Contains("line 1"), config_error);
    CHECK_THROWS_AS(parse_config_text("task.d = 1\n"), config_error);
    CHECK_THROWS_AS(parse_config_text("task.k = 200\n"), config_error);
    CHECK_THROWS_AS(parse_config_text("eval.attacks = fgm:l9:0.1\n"),
                    config_error);
    CHECK_THROWS_AS(load_config("/nonexistent/purelab.cfg"), config_error);
    // Comments and blank lines are fine anywhere.
    CHECK_NOTHROW(parse_config_text("# comment\n\ntask.d = 64 # trailing\n"));
  }

  TEST_CASE("hash ignores operational keys but tracks the science") {
    auto base = parse_config_text("");
    auto moved = parse_config_text("run.out = elsewhere\nrun.threads = 8\n"
                                   "run.retain = all\n");
    CHECK(config_hash(moved) == config_hash(base));
    auto reseeded = parse_config_text("run.seed = 1\n");
    CHECK(config_hash(reseeded) != config_hash(base));
    auto rescaled = parse_config_text("task.d = 64\n");
    CHECK(config_hash(rescaled) != config_hash(base));
    CHECK(config_hash(base).size() == 16);
  }

  TEST_CASE("factories derive dependent quantities from the config") {
    auto cfg = parse_config_text("task.d = 32\ntask.k = 4\ntask.dict = identity\n"
                                 "task.w_star = ones\n");
    auto task = make_task(cfg);
    CHECK(task.dict.is_identity());
    CHECK(task.w_star == Vec::Ones(32));
    CHECK(task.law.k == 4);
    CHECK(task.noise.sigma_x == cfg.sigma_x);

    auto signs = parse_config_text("task.d = 32\ntask.k = 4\n");
    auto stask = make_task(signs);
    CHECK_FALSE(stask.dict.is_identity());
    for (int i = 0; i < 32; ++i)
      CHECK(std::fabs(stask.w_star[i]) == 1.0);
    // Same seed, same dictionary and target.
    auto stask2 = make_task(signs);
    CHECK(stask.dict.M == stask2.dict.M);
    CHECK(stask.w_star == stask2.w_star);

    auto sched = make_schedule(cfg);
    CHECK(sched.b0 == initial_bias(cfg));
    CHECK(initial_bias(cfg) ==
          doctest::Approx(cfg.sigma0 * std::sqrt(cfg.c1 * std::log(32.0)))
              .epsilon(1e-15));
    auto params = make_neuron_params(cfg, 0.2);
    CHECK(params.sigma_w ==
          doctest::Approx(0.2 / std::sqrt(cfg.c1 * std::log(32.0)))
              .epsilon(1e-15));
    CHECK(params.k == 4);

    auto list = parse_attack_list("fgm:l2:0.1; dense:linf:0.2 ;;");
    REQUIRE(list.size() == 2);
    CHECK(list[0].kind == AttackKind::fgm);
    CHECK(list[1].kind == AttackKind::dense);
    CHECK(parse_attack_list("").empty());
  }

  TEST_CASE("doubles print losslessly and locale-free") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02e23, -1.5, 0.0,
                     1.7976931348623157e308, 4.9406564584124654e-324}) {
      std::string s = fmt_double(v);
      CHECK(parse_double(s) == v);
      CHECK(s.find(',') == std::string::npos);
    }
    CHECK(fmt_double(1.0) == "1");
    CHECK(fmt_int(-42) == "-42");
    CHECK(fmt_int(0) == "0");
  }

  TEST_CASE("csv files round-trip rows, header, and hash") {
    auto dir = fresh_dir("csv");
    auto path = (dir / "t.csv").string();
    {
      CsvWriter w(path, "deadbeefdeadbeef", {"t", "value", "label"});
      w.write_row({"0", fmt_double(0.5), "clean"});
      w.write_row({"1", fmt_double(-0.25), "adv"});
      CHECK_THROWS_AS(w.write_row({"only", "two"}), contract_violation);
    }
    auto table = read_csv(path);
    CHECK(table.config_hash == "deadbeefdeadbeef");
    REQUIRE(table.columns == std::vector<std::string>{"t", "value", "label"});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.number(0, table.column("value")) == 0.5);
    CHECK(table.number(1, table.column("value")) == -0.25);
    CHECK(table.rows[1][2] == "adv");
    CHECK(table.column("missing") == -1);

    // First two physical lines are the hash comment and the header.
    std::string raw = read_file(path);
    CHECK(raw.rfind("# config=deadbeefdeadbeef\nt,value,label\n", 0) == 0);

    CHECK_THROWS_AS(read_csv((dir / "absent.csv").string()), config_error);
    write_file(dir / "ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(read_csv((dir / "ragged.csv").string()),
                         doctest::Contains("ragged.csv:3"), config_error);
  }

  TEST_CASE("long-form reshape is a lossless bijection over kept columns") {
    auto dir = fresh_dir("long");
    auto src_path = (dir / "wide.csv").string();
    {
      CsvWriter w(src_path, "cafecafecafecafe", {"t", "stage", "a", "b"});
      w.write_row({"0", "clean", "1.5", "-2"});
      w.write_row({"5", "clean", "2.5", "-3"});
      w.write_row({"10", "adv", "3.5", "-4"});
    }
    auto out_path = (dir / "long.csv").string();
    emit_long_form(read_csv(src_path), "t", {"stage"}, out_path);
    auto longt = read_csv(out_path);
    REQUIRE(longt.columns == std::vector<std::string>{"series", "x", "y"});
    REQUIRE(longt.rows.size() == 6);  // 3 rows x 2 kept columns
    CHECK(longt.config_hash == "cafecafecafecafe");
    // Reconstruct the wide values from the long rows.
    auto find_y = [&](const std::string& series, const std::string& x) {
      for (const auto& row : longt.rows)
        if (row[0] == series && row[1] == x) return row[2];
      return std::string("missing");
    };
    CHECK(find_y("a", "0") == "1.5");
    CHECK(find_y("a", "5") == "2.5");
    CHECK(find_y("a", "10") == "3.5");
    CHECK(find_y("b", "10") == "-4");
    CHECK(find_y("stage", "0") == "missing");
  }

  TEST_CASE("net checkpoints survive a round trip and reject corruption") {
    auto dir = fresh_dir("ckpt");
    SymmetricNet net;
    net.W.resize(5, 7);
    Rng rng(123);
    rng.fill_normal(net.W, 0.3);
    net.b = 0.25;
    net.sigma_rho = 0.125;
    CheckpointMeta meta;
    meta.schema = "net1";
    meta.d = 7;
    meta.k = 2;
    meta.m = 5;
    meta.b = net.b;
    meta.sigma_rho = net.sigma_rho;
    meta.lambda = 0.01;
    meta.iteration = 42;
    meta.seed = 9;
    auto path = (dir / "net.bin").string();
    save_net_checkpoint(path, net, meta);

    CheckpointMeta back;
    SymmetricNet loaded = load_net_checkpoint(path, &back);
    CHECK(loaded.W == net.W);
    CHECK(loaded.b == net.b);
    CHECK(loaded.sigma_rho == net.sigma_rho);
    CHECK(back.iteration == 42);
    CHECK(back.seed == 9);
    CHECK(back.k == 2);
    CHECK(back.schema == "net1");

    std::string bytes = read_file(path);
    write_file(dir / "trunc.bin", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_net_checkpoint((dir / "trunc.bin").string()),
                    config_error);
    write_file(dir / "extra.bin", bytes + "junk");
    CHECK_THROWS_AS(load_net_checkpoint((dir / "extra.bin").string()),
                    config_error);
    write_file(dir / "magic.bin", "bogus" + bytes.substr(5));
    CHECK_THROWS_AS(load_net_checkpoint((dir / "magic.bin").string()),
                    config_error);
    CHECK_THROWS_AS(load_net_checkpoint((dir / "absent.bin").string()),
                    config_error);
  }

  TEST_CASE("feature-model checkpoints carry both output layers") {
    auto dir = fresh_dir("ckpt_ntk");
    NtkConfig cfg;
    cfg.m = 6;
    Rng rng(5);
    NtkModel model = init_ntk(4, cfg, rng);
    Rng vr(6);
    vr.fill_normal(model.Vp, 0.2);
    vr.fill_normal(model.Vm, 0.2);
    model.single_v = false;
    CheckpointMeta meta;
    meta.schema = "ntk1";
    meta.d = 4;
    meta.m = 6;
    meta.sigma_rho = 1.0;
    auto path = (dir / "ntk.bin").string();
    save_ntk_checkpoint(path, model, meta);
    CheckpointMeta back;
    NtkModel loaded = load_ntk_checkpoint(path, &back);
    CHECK(loaded.W == model.W);
    CHECK(loaded.Vp == model.Vp);
    CHECK(loaded.Vm == model.Vm);
    CHECK(loaded.b_vec == model.b_vec);
    CHECK(loaded.sigma_vec == model.sigma_vec);
    CHECK(back.schema == "ntk1");
    // A net1 loader must refuse an ntk1 file and vice versa.
    CHECK_THROWS_AS(load_net_checkpoint(path), config_error);
  }

  TEST_CASE("pipeline outputs are identical across directories and threads") {
    auto dir_a = fresh_dir("pipe_a");
    auto dir_b = fresh_dir("pipe_b");
    auto cfg_a = parse_config_text(tiny_config(dir_a / "run"));
    cfg_a.reconstruct = true;
    auto cfg_b = parse_config_text(tiny_config(dir_b / "run"));
    cfg_b.reconstruct = true;
    cfg_b.threads = 4;
    auto man_a = run_pipeline(cfg_a);
    auto man_b = run_pipeline(cfg_b);
    CHECK(man_a.status == "ok");
    CHECK(man_b.status == "ok");
    CHECK(man_a.config_hash == man_b.config_hash);
    for (const char* name :
         {"metrics.csv", "eval.csv", "lottery.csv", "purity.csv",
          "purity_summary.csv", "sure_pairs.csv", "margins.csv",
          "neuron_sets_clean.csv", "neuron_sets_adv.csv", "diag_summary.csv",
          "dense_projection.csv", "recon_summary.csv", "ckpt_init.bin",
          "ckpt_clean.bin", "ckpt_adv.bin", "plots/metrics_long.csv",
          "plots/accuracy_vs_iteration.csv"}) {
      CAPTURE(name);
      CHECK(read_file(dir_a / "run" / name) == read_file(dir_b / "run" / name));
    }
    // Manifest carries the artifact version, status, and per-stage records.
    std::string manifest = read_file(dir_a / "run" / "manifest.txt");
    CHECK(manifest.find("version = 1.0") != std::string::npos);
    CHECK(manifest.find("status = ok") != std::string::npos);
    CHECK(manifest.find("config_hash = " + man_a.config_hash) !=
          std::string::npos);
    CHECK(manifest.find("stage.clean-train = ok") != std::string::npos);
    CHECK(manifest.find("stage.adv-train = ok") != std::string::npos);
    // The effective config echoes its own hash for provenance.
    std::string eff = read_file(dir_a / "run" / "effective.cfg");
    CHECK(eff.rfind("# config=" + man_a.config_hash, 0) == 0);
  }

  TEST_CASE("adversarial resume from the stored clean net is exact") {
    auto dir_a = fresh_dir("resume_a");
    auto dir_b = fresh_dir("resume_b");
    auto cfg_a = parse_config_text(tiny_config(dir_a / "run"));
    run_pipeline(cfg_a);
    auto cfg_b = parse_config_text(tiny_config(dir_b / "run"));
    run_train_adv(cfg_b, (dir_a / "run" / "ckpt_clean.bin").string());
    CHECK(read_file(dir_a / "run" / "ckpt_adv.bin") ==
          read_file(dir_b / "run" / "ckpt_adv.bin"));
  }

  TEST_CASE("stored snapshots reproduce the recorded lottery trace") {
    auto dir = fresh_dir("lottery");
    SparseCodingTask task;
    Rng drng(3);
    task.dict = make_dictionary(12, DictKind::identity, drng);
    task.w_star = Vec::Ones(12);
    task.law = HiddenCodeLaw::standard(12, 3);
    task.noise = NoiseModel::standard(12, 3, 0.25);
    Rng data_rng = Rng::substream(17, stream::kData);
    Dataset data = sample_dataset(task, 32, data_rng);
    TrainSchedule s;
    s.eta = 0.05;
    s.lambda = 0.05;
    s.m = 8;
    s.sigma0 = 0.01;
    s.b0 = 0.05;
    s.bias_rate = 0.2;
    s.b_cap = 0.3;
    s.t_f = 6;
    s.eval_every = 2;
    MetricsOptions opts;
    opts.n_samples = 8;
    opts.sparsity_samples = 0;
    std::vector<std::string> paths;
    opts.snapshot = [&](const SymmetricNet& net, std::int64_t t) {
      CheckpointMeta meta;
      meta.schema = "net1";
      meta.d = 12;
      meta.k = 3;
      meta.m = 8;
      meta.b = net.b;
      meta.sigma_rho = net.sigma_rho;
      meta.iteration = t;
      auto p = (dir / ("snap_" + std::to_string(t) + ".bin")).string();
      save_net_checkpoint(p, net, meta);
      paths.push_back(p);
    };
    SureClassifier classify = [](const Mat&) {
      return std::vector<SurePair>{{1, 4, 1.0}, {5, 0, -1.0}};
    };
    auto res = clean_train(task, data, s, 17, opts, classify);
    auto replay = lottery_from_checkpoints(paths, task.dict, res.sure_pairs);
    REQUIRE(replay.size() == res.lottery.size());
    for (std::size_t i = 0; i < replay.size(); ++i) {
      CHECK(replay[i].t == res.lottery[i].t);
      REQUIRE(replay[i].proj.size() == res.lottery[i].proj.size());
      for (std::size_t j = 0; j < replay[i].proj.size(); ++j)
        CHECK(replay[i].proj[j] == res.lottery[i].proj[j]);
    }
  }
}
