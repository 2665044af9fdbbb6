#include <cstdlib>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "helpers.hpp"
#include "impz/cli.hpp"
#include "impz/data.hpp"
#include "impz/forward_model.hpp"
#include "impz/metrics.hpp"
#include "impz/param_store.hpp"

using namespace impz;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTinyModel = {
    "--gru-hidden", "2",      "--lpa-channels",      "2", "--lpa-kernel",   "3",
    "--upsample-channels", "2", "--regression-hidden", "2", "--feat-channels", "2",
    "--feat-kernel", "3",    "--wavelet-length",    "7", "--labeled",      "4",
    "--batch-unlabeled", "8"};

std::vector<std::string> train_args(const fs::path& prefix, const fs::path& out_dir,
                                    const std::string& epochs) {
  std::vector<std::string> a = {"train",      "--seismic",   prefix.string() + "_seismic.surv",
                                "--impedance", prefix.string() + "_impedance.surv",
                                "--out-dir",   out_dir.string(), "--epochs", epochs};
  a.insert(a.end(), kTinyModel.begin(), kTinyModel.end());
  return a;
}

Result synth_small(const fs::path& prefix, const std::string& seed = "3") {
  return run({"synth", "--traces", "16", "--samples", "64", "--layers", "5", "--seed", seed,
              "--out-prefix", prefix.string()});
}

}  // namespace

TEST_CASE("cli synth") {
  const auto dir = testing::scratch_dir("cli_synth");
  SUBCASE("defaults") {
    const Result r = run({"synth", "--out-prefix", (dir / "d").string()});
    REQUIRE(r.code == 0);
    const TraceSet s = load_survey(dir / "d_seismic.surv");
    CHECK(s.n_traces == 200);
    CHECK(s.n_samples == 256);
    CHECK(load_survey(dir / "d_impedance.surv").n_samples == 512);
    const auto man = nlohmann::json::parse(testing::slurp(dir / "d_manifest.json"));
    CHECK(man.at("command") == "synth");
    CHECK(man.at("seed") == 1234);
    CHECK(man.at("outputs").size() == 2);
    CHECK(man.contains("git_describe"));
  }
  SUBCASE("same seed, same files") {
    REQUIRE(run({"synth", "--traces", "10", "--samples", "64", "--seed", "7", "--out-prefix",
                 (dir / "a").string()}).code == 0);
    REQUIRE(run({"synth", "--traces", "10", "--samples", "64", "--seed", "7", "--out-prefix",
                 (dir / "b").string()}).code == 0);
    CHECK(testing::slurp(dir / "a_seismic.surv") == testing::slurp(dir / "b_seismic.surv"));
    CHECK(testing::slurp(dir / "a_impedance.surv") == testing::slurp(dir / "b_impedance.surv"));
  }
  SUBCASE("usage errors exit with 2") {
    CHECK(run({"synth", "--ratio", "3", "--samples", "512", "--out-prefix", (dir / "x").string()}).code == 2);
    CHECK(run({"synth", "--snr-db", "loud"}).code == 2);
    CHECK(run({"synth", "--bogus"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
  }
  SUBCASE("infinite SNR and config files") {
    std::ofstream(dir / "cfg.json") << R"({"synth": {"traces": 6, "samples": 32, "layers": 3, "seed": 5}})";
    REQUIRE(run({"synth", "--config", (dir / "cfg.json").string(), "--snr-db", "inf", "--traces", "8",
                 "--out-prefix", (dir / "c").string()}).code == 0);
    const TraceSet s = load_survey(dir / "c_seismic.surv");
    CHECK(s.n_traces == 8);
    CHECK(s.n_samples == 16);
    SynthConfig expect;
    expect.traces = 8;
    expect.samples = 32;
    expect.layers = 3;
    expect.seed = 5;
    expect.snr_db = std::numeric_limits<double>::infinity();
    CHECK(s.values == generate_survey(expect).seismic.values);
  }
  SUBCASE("help exits cleanly") { CHECK(run({"--help"}).code == 0); }
}

TEST_CASE("cli train, invert, evaluate, export-wavelet") {
  const auto dir = testing::scratch_dir("cli_pipeline");
  const fs::path prefix = dir / "s";
  REQUIRE(synth_small(prefix).code == 0);

  SUBCASE("zero epochs stores the initial parameters") {
    const Result r = run(train_args(prefix, dir / "r0", "0"));
    REQUIRE(r.code == 0);
    const Checkpoint ck = load_checkpoint(dir / "r0" / "checkpoint.impz");
    CHECK(ck.meta.at("best_epoch") == 0);
    CHECK(ck.params.step() == 0);
    CHECK(testing::slurp(dir / "r0" / "loss.csv") == "step,epoch,property_loss,seismic_loss,total\n");
  }

  SUBCASE("full pipeline") {
    auto args = train_args(prefix, dir / "run", "2");
    const Result tr = run(args);
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("best validation pcc ") != std::string::npos);
    for (const char* f : {"checkpoint.impz", "loss.csv", "evaluations.csv", "manifest.json"})
      CHECK(fs::exists(dir / "run" / f));
    const auto man = nlohmann::json::parse(testing::slurp(dir / "run" / "manifest.json"));
    CHECK(man.at("inputs").size() == 2);
    CHECK(man.at("config").at("model").at("inverse").at("gru_hidden") == 2);

    // Rerun with the same flags: byte-identical outputs.
    const Result again = run(train_args(prefix, dir / "run2", "2"));
    REQUIRE(again.code == 0);
    CHECK(testing::slurp(dir / "run" / "checkpoint.impz") == testing::slurp(dir / "run2" / "checkpoint.impz"));
    CHECK(testing::slurp(dir / "run" / "loss.csv") == testing::slurp(dir / "run2" / "loss.csv"));

    const std::string ck = (dir / "run" / "checkpoint.impz").string();
    const std::string seis = prefix.string() + "_seismic.surv";
    const std::string ai = prefix.string() + "_impedance.surv";
    REQUIRE(run({"invert", "--checkpoint", ck, "--seismic", seis, "--out", (dir / "est.surv").string()}).code == 0);
    REQUIRE(run({"invert", "--checkpoint", ck, "--seismic", seis, "--out", (dir / "est2.surv").string()}).code == 0);
    CHECK(testing::slurp(dir / "est.surv") == testing::slurp(dir / "est2.surv"));
    const TraceSet est = load_survey(dir / "est.surv");
    CHECK(est.kind == TraceKind::impedance);
    CHECK(est.n_samples == 2 * load_survey(seis).n_samples);
    CHECK(fs::exists(dir / "est.manifest.json"));

    // Inverting the training survey reproduces the logged best validation PCC.
    const Result ev = run({"evaluate", "--impedance", ai, "--estimate", (dir / "est.surv").string(),
                           "--labeled", "4", "--out", (dir / "metrics.csv").string(), "--scatter",
                           (dir / "scatter.csv").string()});
    REQUIRE(ev.code == 0);
    const Checkpoint loaded = load_checkpoint(ck);
    const std::string csv = testing::slurp(dir / "metrics.csv");
    const auto vpos = csv.find("\nvalidation,");
    REQUIRE(vpos != std::string::npos);
    const double vpcc = std::stod(csv.substr(vpos + 12));
    CHECK(std::abs(vpcc - loaded.meta.at("best_validation_pcc").get<double>()) <= 1e-9);
    CHECK(read_scatter(dir / "scatter.csv").truth.size() == 12 * 64);

    const Result ev2 = run({"evaluate", "--impedance", ai, "--checkpoint", ck, "--seismic", seis,
                            "--pooling", "per-trace", "--out", (dir / "m2.csv").string()});
    CHECK(ev2.code == 0);
    CHECK(run({"evaluate", "--impedance", ai, "--checkpoint", ck, "--seismic", seis, "--pooling", "mean"}).code == 2);

    REQUIRE(run({"export-wavelet", "--checkpoint", ck, "--out", (dir / "w.csv").string()}).code == 0);
    const Tensor w = read_wavelet_csv(dir / "w.csv");
    CHECK(w.size() == 7);
  }

  SUBCASE("regime warnings") {
    auto args = train_args(prefix, dir / "u", "1");
    args.insert(args.end(), {"--regime", "unsupervised", "--alpha", "0.2"});
    const Result r = run(args);
    REQUIRE(r.code == 0);
    CHECK(r.err.find("alpha forced to 0") != std::string::npos);
    const Checkpoint ck = load_checkpoint(dir / "u" / "checkpoint.impz");
    CHECK(ck.meta.at("train").at("alpha") == 0.0);
    auto sup = train_args(prefix, dir / "v", "1");
    sup.insert(sup.end(), {"--regime", "supervised"});
    const Result rs = run(sup);
    CHECK(rs.code == 0);
    CHECK(rs.err.find("beta forced to 0") != std::string::npos);
    auto plain = train_args(prefix, dir / "p", "1");
    plain.insert(plain.end(), {"--labeled-synthetics", "false"});
    REQUIRE(run(plain).code == 0);
    CHECK(load_checkpoint(dir / "p" / "checkpoint.impz").meta.at("train").at("labeled_synthetics") == false);
    auto bad = train_args(prefix, dir / "w", "1");
    bad.insert(bad.end(), {"--regime", "weak"});
    CHECK(run(bad).code == 2);
  }

  SUBCASE("incompatible resolution ratio") {
    auto args = train_args(prefix, dir / "bad", "1");
    args.insert(args.end(), {"--upsample-factor", "4"});
    const Result r = run(args);
    CHECK(r.code == 2);
    CHECK(r.err.find("resolution ratio") != std::string::npos);
  }

  SUBCASE("missing files") {
    const Result r = run({"evaluate", "--impedance", prefix.string() + "_impedance.surv", "--checkpoint",
                          (dir / "nope.impz").string(), "--seismic", prefix.string() + "_seismic.surv"});
    CHECK(r.code == 2);
    CHECK(r.err.find("nope.impz") != std::string::npos);
    CHECK(run({"invert", "--checkpoint", (dir / "nope.impz").string(), "--seismic", "x"}).code == 2);
    CHECK(run({"export-wavelet", "--checkpoint", (dir / "nope.impz").string()}).code == 2);
    CHECK(run({"train", "--seismic", "a.surv"}).code == 2);
  }
}

TEST_CASE("cli gradcheck") {
  const auto dir = testing::scratch_dir("cli_gradcheck");
  const Result r = run({"gradcheck", "--cases", "1", "--out", (dir / "gc.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("gradcheck passed") != std::string::npos);
  CHECK(testing::slurp(dir / "gc.csv").rfind("name,max_rel_error,entries,passed\n", 0) == 0);
  CHECK(fs::exists(dir / "gc.manifest.json"));
  // An absurdly tight tolerance must fail with the numeric exit code.
  CHECK(run({"gradcheck", "--cases", "1", "--tol", "1e-30"}).code == 1);
  CHECK(run({"gradcheck", "--step", "0"}).code == 2);
}

TEST_CASE("run manifest") {
  const auto dir = testing::scratch_dir("cli_manifest");
  cli::RunManifest m;
  m.command = "x";
  m.config = {{"a", 1}};
  m.seed = 42;
  m.git_describe = cli::git_describe();
  m.inputs = {{"in.surv", "0123456789abcdef"}};
  m.outputs = {"out.csv"};
  m.write(dir / "m.json");
  const auto j = nlohmann::json::parse(testing::slurp(dir / "m.json"));
  CHECK(j == m.to_json());
  CHECK(j.at("seed") == 42);
  CHECK_FALSE(cli::git_describe().empty());
}

TEST_CASE("IMPZ_THREADS validation") {
  ::setenv("IMPZ_THREADS", "zero", 1);
  CHECK(run({"gradcheck", "--cases", "1"}).code == 2);
  ::setenv("IMPZ_THREADS", "0", 1);
  CHECK(run({"gradcheck", "--cases", "1"}).code == 2);
  ::unsetenv("IMPZ_THREADS");
}
