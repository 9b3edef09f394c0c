#include "mflab/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mflab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

class CliDir : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("mflab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }
    std::string at(const std::string& name) const { return (root_ / name).string(); }
    void write(const std::string& name, const std::string& text) const {
        std::ofstream(at(name), std::ios::binary) << text;
    }
    fs::path root_;
};

ConfigSchema small_schema() {
    return {ConfigKey::integer("threads", 0, 0, 64), ConfigKey::real("time.dt", 0.01, 1e-6, 1.0),
            ConfigKey::string("truncation.kind", "fejer", {"fejer", "two-thirds"})};
}

std::string error_text(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, EmptyFileGivesDefaults) {
    const auto c = parse_config("", small_schema());
    EXPECT_EQ(c.integer("threads"), 0);
    EXPECT_EQ(c.real("time.dt"), 0.01);
    EXPECT_EQ(c.str("truncation.kind"), "fejer");
    EXPECT_FALSE(c.is_explicit("time.dt"));
    EXPECT_EQ(c.canonical(), "threads = 0\ntime.dt = 0.01\ntruncation.kind = 'fejer'\n");
}

TEST(Config, SectionsCommentsAndValues) {
    const auto c = parse_config("# run\nthreads = 3\n\n[time]\n  dt = 0.5   # half\n[truncation]\nkind = \"two-thirds\"\n",
                                small_schema());
    EXPECT_EQ(c.integer("threads"), 3);
    EXPECT_EQ(c.real("time.dt"), 0.5);
    EXPECT_EQ(c.str("truncation.kind"), "two-thirds");
    EXPECT_TRUE(c.is_explicit("time.dt"));
}

TEST(Config, DuplicateKeyNamesTheKey) {
    const auto msg = error_text([] { parse_config("[time]\ndt = 0.1\ndt = 0.2\n", small_schema()); });
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("redefine existing floating-point 'dt'"), std::string::npos) << msg;
}

TEST(Config, RangeErrorNamesBounds) {
    const auto msg = error_text([] { parse_config("[time]\ndt = 2\n", small_schema()); });
    EXPECT_NE(msg.find("out of range [1e-06, 1]"), std::string::npos) << msg;
    const auto imsg = error_text([] { parse_config("threads = 65\n", small_schema()); });
    EXPECT_NE(imsg.find("[0, 64]"), std::string::npos) << imsg;
}

TEST(Config, ParseErrorsCarryLineNumbers) {
    EXPECT_NE(error_text([] { parse_config("\n\nbogus = 1\n", small_schema()); }).find("line 3: unknown key 'bogus'"),
              std::string::npos);
    EXPECT_NE(error_text([] { parse_config("threads\n", small_schema()); }).find("line 1: Error while parsing key-value pair"),
              std::string::npos);
    EXPECT_NE(error_text([] { parse_config("[time\n", small_schema()); }).find("line 1: Error while parsing table header"),
              std::string::npos);
    EXPECT_NE(error_text([] { parse_config("threads = 1.5\n", small_schema()); }).find("expects an integer"),
              std::string::npos);
    EXPECT_NE(error_text([] { parse_config("[time]\ndt = nan\n", small_schema()); }).find("finite number"),
              std::string::npos);
    EXPECT_NE(error_text([] { parse_config("[truncation]\nkind = \"spectral\"\n", small_schema()); })
                  .find("one of {fejer, two-thirds}"),
              std::string::npos);
}

TEST(Config, TemplateParsesToDefaults) {
    const auto schema = cli::simulate_schema();
    EXPECT_EQ(parse_config(config_template(schema), schema).canonical(), parse_config("", schema).canonical());
}

TEST(Manifest, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, JsonRoundTrip) {
    RunManifest m;
    m.command = "mflab fields";
    m.argv = {"fields", "--out", "x"};
    m.config_text = "a = 1\n";
    m.config_hash = sha256_hex(m.config_text);
    m.seed = 18446744073709551615ULL;
    m.threads = 3;
    m.input_digests = {{"in.fld", "00"}};
    m.outputs = {{"field.fld", "ff"}};
    const auto back = RunManifest::from_json(m.to_json());
    EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
    EXPECT_EQ(back.seed, m.seed);
}

TEST(Threads, EnvironmentOverridesFlag) {
    ::setenv("MFLAB_THREADS", "3", 1);
    EXPECT_EQ(cli::resolve_threads(7), 3);
    ::unsetenv("MFLAB_THREADS");
    EXPECT_EQ(cli::resolve_threads(7), 7);
    EXPECT_GE(cli::resolve_threads(0), 1);
}

TEST(Dispatch, SelftestPasses) {
    const auto r = run_cli({"selftest"});
    EXPECT_EQ(r.code, cli::kExitOk) << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("selftest passed"), std::string::npos);
}

TEST(Dispatch, UsageErrorsExitTwoWithSynopsis) {
    for (const auto& args : std::vector<std::vector<std::string>>{
             {}, {"--bogus"}, {"teleport"}, {"exclude", "--delta", "abc", "--out", "x"}, {"minimize", "--out", "x"}}) {
        const auto r = run_cli(args);
        EXPECT_EQ(r.code, cli::kExitUsage);
        EXPECT_NE(r.err.find("Usage:"), std::string::npos) << r.err;
    }
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
    EXPECT_EQ(run_cli({"--version"}).out, std::string(kToolVersion) + "\n");
}

TEST(Dispatch, SimulateTemplateParsesToDefaults) {
    const auto r = run_cli({"simulate", "--print-template"});
    ASSERT_EQ(r.code, cli::kExitOk);
    const auto schema = cli::simulate_schema();
    EXPECT_EQ(parse_config(r.out, schema).canonical(), parse_config("", schema).canonical());
    EXPECT_EQ(run_cli({"simulate"}).code, cli::kExitUsage);
}

TEST_F(CliDir, ExcludeContractViolationExitsOne) {
    const auto r = run_cli({"exclude", "--delta", "0.1", "--eps", "0.1", "--out", at("e")});
    EXPECT_EQ(r.code, cli::kExitDomain);
    EXPECT_NE(r.err.find("precondition: eps must be smaller than delta"), std::string::npos) << r.err;
}

TEST_F(CliDir, EveryOutputDirectoryHasManifestAndSummary) {
    ASSERT_EQ(run_cli({"fields", "--generate", "patches", "--nx", "16", "--ny", "16", "--out", at("f")}).code, 0);
    const std::string datum = at("f/field.fld");
    write("sim.cfg", "[domain]\nnx = 16\nny = 16\n[time]\ndt = 0.1\nt_end = 0.5\nrecord_every = 5\n");
    const std::vector<std::vector<std::string>> runs{
        {"rearrange", "--input", datum, "--against", datum, "--out", at("r")},
        {"minimize", "--input", datum, "--out", at("m")},
        {"exclude", "--out", at("e")},
        {"stathydro", "--model", "liouville", "--n", "64", "--out", at("s")},
        {"simulate", "--config", at("sim.cfg"), "--out", at("sim")},
        {"fields", "--input", datum, "--out", at("fi")},
    };
    for (const auto& args : runs) {
        const auto r = run_cli(args);
        ASSERT_EQ(r.code, 0) << args[0] << ": " << r.err;
        const std::string dir = args.back();
        ASSERT_TRUE(fs::exists(dir + "/manifest.json")) << args[0];
        ASSERT_TRUE(fs::exists(dir + "/summary.txt")) << args[0];
        const auto m = read_manifest(dir + "/manifest.json");
        EXPECT_EQ(m.argv, args);
        EXPECT_EQ(m.tool_version, kToolVersion);
        EXPECT_EQ(m.config_hash, sha256_hex(m.config_text));
        EXPECT_FALSE(m.outputs.empty());
        for (const auto& o : m.outputs) EXPECT_EQ(o.sha256, sha256_file(dir + "/" + o.path)) << o.path;
    }
    const auto m = read_manifest(at("r/manifest.json"));
    ASSERT_EQ(m.input_digests.size(), 2u);
    EXPECT_EQ(m.input_digests[0].sha256, sha256_file(datum));
}

TEST_F(CliDir, RunsAreDeterministicAndReplayable) {
    ASSERT_EQ(run_cli({"fields", "--generate", "patches", "--nx", "32", "--ny", "32", "--out", at("f")}).code, 0);
    const std::vector<std::string> args{"minimize", "--input", at("f/field.fld"), "--probe", "10", "--out", at("a")};
    ASSERT_EQ(run_cli(args).code, 0);
    auto again = args;
    again.back() = at("b");
    ASSERT_EQ(run_cli(again).code, 0);
    const auto ma = read_manifest(at("a/manifest.json")), mb = read_manifest(at("b/manifest.json"));
    ASSERT_EQ(ma.outputs.size(), mb.outputs.size());
    for (size_t k = 0; k < ma.outputs.size(); ++k) EXPECT_EQ(ma.outputs[k].sha256, mb.outputs[k].sha256) << ma.outputs[k].path;

    const auto r = run_cli({"--replay", at("a/manifest.json"), "--replay-out", at("c")});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("replay identical"), std::string::npos);
}

TEST_F(CliDir, ReplayDetectsChangedOutputs) {
    ASSERT_EQ(run_cli({"fields", "--generate", "smooth-random", "--nx", "16", "--ny", "16", "--out", at("f")}).code, 0);
    auto j = nlohmann::ordered_json::parse(detail::read_all(at("f/manifest.json")));
    j["outputs"][0]["sha256"] = std::string(64, '0');
    write("tampered.json", j.dump());
    const auto r = run_cli({"--replay", at("tampered.json"), "--replay-out", at("g")});
    EXPECT_EQ(r.code, cli::kExitDomain);
    EXPECT_NE(r.out.find("DIFFERS field.fld"), std::string::npos) << r.out;
}

TEST_F(CliDir, SimulateConfigErrorsExitOne) {
    write("dup.cfg", "[time]\ndt = 0.1\ndt = 0.2\n");
    const auto r = run_cli({"simulate", "--config", at("dup.cfg"), "--out", at("s")});
    EXPECT_EQ(r.code, cli::kExitDomain);
    EXPECT_NE(r.err.find("line 3: Error while parsing key-value pair: cannot redefine existing floating-point 'dt'"), std::string::npos) << r.err;
    write("range.cfg", "[domain]\nnx = 4\n");
    EXPECT_NE(run_cli({"simulate", "--config", at("range.cfg"), "--out", at("s")}).err.find("[8, 4096]"),
              std::string::npos);
}

TEST_F(CliDir, SimulateWritesSnapshotsAndDiagnostics) {
    write("sim.cfg", "[domain]\nnx = 16\nny = 16\n[time]\ndt = 0.1\nt_end = 1\nrecord_every = 5\n"
                     "[initial]\nkind = \"cos\"\n[output]\nsnapshots = \"last\"\n");
    ASSERT_EQ(run_cli({"simulate", "--config", at("sim.cfg"), "--out", at("s")}).code, 0);
    EXPECT_TRUE(fs::exists(at("s/snap_00002.fld")));
    EXPECT_FALSE(fs::exists(at("s/snap_00000.fld")));
    const auto last = read_field(at("s/snap_00002.fld"));
    const auto datum = VorticityField::sample(last.domain(), [](double x, double) { return std::cos(x); });
    EXPECT_LT(detail::sup_diff(last.values(), datum.values()), 1e-10);
    std::ifstream csv(at("s/diagnostics.csv"));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header.rfind("t,energy,enstrophy", 0), 0u) << header;
    const auto cfg = detail::read_all(at("s/config_effective.toml"));
    EXPECT_NE(cfg.find("initial.kind = 'cos'"), std::string::npos);
    EXPECT_NE(cfg.find("flow.cfl = 0.5"), std::string::npos);
}

TEST_F(CliDir, StathydroRejectsUnsupportedMatching) {
    const auto r = run_cli({"stathydro", "--model", "mrs", "--n", "16", "--target-energy", "auto", "--out", at("s")});
    EXPECT_EQ(r.code, cli::kExitDomain);
    EXPECT_NE(r.err.find("precondition"), std::string::npos);
    const auto b = run_cli({"stathydro", "--model", "sinh-poisson", "--beta", "1", "--n", "16", "--out", at("t")});
    EXPECT_EQ(b.code, cli::kExitDomain);
    EXPECT_NE(b.err.find("parameter-out-of-range"), std::string::npos) << b.err;
}

TEST_F(CliDir, StathydroLiouvilleReportsExplicitState) {
    const auto r = run_cli({"stathydro", "--model", "liouville", "--n", "256", "--beta-scan", "0,4", "--out", at("s")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto w = read_field(at("s/omega_bar.fld"));
    const auto exact = liouville_explicit(w.domain(), 4 * kPi);
    EXPECT_LT(detail::sup_diff(w.values(), exact), 1e-4);
    EXPECT_TRUE(fs::exists(at("s/profile.csv")));
    EXPECT_TRUE(fs::exists(at("s/scan.csv")));
}

TEST_F(CliDir, FieldsSummaryOfPatches) {
    ASSERT_EQ(run_cli({"fields", "--generate", "patches", "--nx", "32", "--ny", "32", "--out", at("f")}).code, 0);
    const auto r = run_cli({"fields", "--input", at("f/field.fld")});
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("kind = torus"), std::string::npos);
    EXPECT_NE(r.out.find("mean = 0\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("max = 1\n"), std::string::npos);
    const auto wrong = run_cli({"fields", "--generate", "kolmogorov", "--out", at("k")});
    EXPECT_EQ(wrong.code, cli::kExitDomain);
    EXPECT_NE(wrong.err.find("unsupported-domain"), std::string::npos);
}
