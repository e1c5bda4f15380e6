#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "support/pcap_builder.hpp"

namespace {

namespace fs = std::filesystem;
using tdntc::testing::FixturePacket;
using tdntc::testing::PcapBuilder;
using tdntc::testing::ip;

struct RunResult {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(TDNTC_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, got);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tdntc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& bytes) const {
    std::ofstream(dir_ / name, std::ios::binary) << bytes;
  }

  fs::path dir_;
};

FixturePacket pkt(std::uint32_t sec, std::uint32_t usec, std::uint32_t src, std::uint16_t sport,
                  std::uint32_t dst, std::uint16_t dport, std::uint8_t proto, std::uint16_t payload) {
  FixturePacket p;
  p.sec = sec;
  p.frac = usec;
  p.src = src;
  p.sport = sport;
  p.dst = dst;
  p.dport = dport;
  p.proto = proto;
  p.payload = payload;
  return p;
}

const std::string kHeader =
    "src_port,dst_port,protocol,duration,fwd_packets,rev_packets,fwd_bytes,rev_bytes,iat_min,iat_mean,"
    "iat_max,fwd_iat_min,fwd_iat_mean,fwd_iat_max,rev_iat_min,rev_iat_mean,rev_iat_max,pkt_len_min,"
    "pkt_len_mean,pkt_len_max,label\n";

TEST_F(Cli, AuditParamsPrintsStageTable) {
  auto r = run("audit-params m3-td 48 141");
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* row : {"CNN_2D      (3x3x1+1)x128          1,280", "BN          2x128                  256",
                          "LSTM        4x[(128+1)x128+128^2]  131,584", "TD(FFNN_0)  128x128+128            16,512",
                          "FFNN_1      6x128x141+141          108,429", "Total                              258,061"}) {
    EXPECT_NE(r.output.find(row), std::string::npos) << row << "\n" << r.output;
  }
  r = run("audit-params m3-van 48 141");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("167,821"), std::string::npos) << r.output;
}

TEST_F(Cli, AuditParamsCosWidthChangesOnlyDecisionStage) {
  const auto full = run("audit-params m3-td 48 141").output;
  const auto cos = run("audit-params m3-td 48 24").output;
  EXPECT_NE(cos.find("6x128x24+24            18,456"), std::string::npos) << cos;
  for (const char* same : {"1,280", "131,584", "16,512"}) EXPECT_NE(cos.find(same), std::string::npos);
  // 258,061 - 108,429 + 18,456
  EXPECT_NE(cos.find("168,088"), std::string::npos) << cos;
  EXPECT_EQ(full.find("18,456"), std::string::npos);
}

TEST_F(Cli, AuditParamsGeometryErrorIsNonZero) {
  auto r = run("audit-params m3-td 13 3");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("CNN_2D"), std::string::npos) << r.output;
}

TEST_F(Cli, FeaturizeFixtureMatchesHandComputedRows) {
  const auto a = ip(10, 0, 0, 1), b = ip(10, 0, 0, 2), c = ip(192, 168, 0, 7);
  PcapBuilder pb;
  pb.add(pkt(100, 0, a, 5000, b, 53, 17, 10));       // 38 bytes on the wire (IP total length)
  pb.add(pkt(100, 100000, b, 53, a, 5000, 17, 30));  // 58
  pb.add(pkt(100, 300000, a, 5000, b, 53, 17, 20));  // 48
  pb.add(pkt(101, 0, c, 443, a, 40000, 6, 0));       // lone TCP packet, 40
  write("f.pcap", pb.str());
  auto r = run("featurize " + path("f.pcap") + " chat " + path("f.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("flows 2"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("skipped 0"), std::string::npos) << r.output;
  // durations and gaps: 0.1 s and 0.2 s between the three UDP packets, 0.3 s on the forward side
  EXPECT_EQ(slurp(path("f.csv")), kHeader +
                                      "5000,53,17,0.3,2,1,86,58,0.1,0.15,0.2,0.3,0.3,0.3,0,0,0,38,48,58,chat\n"
                                      "443,40000,6,0,1,0,40,0,0,0,0,0,0,0,0,0,0,40,40,40,chat\n");

  ASSERT_EQ(run("featurize " + path("f.pcap") + " chat " + path("g.csv")).status, 0);
  EXPECT_EQ(slurp(path("f.csv")), slurp(path("g.csv")));
}

TEST_F(Cli, FeaturizePadsColumns) {
  PcapBuilder pb;
  pb.add(pkt(5, 0, ip(1, 1, 1, 1), 1, ip(2, 2, 2, 2), 2, 17, 0));
  write("p.pcap", pb.str());
  ASSERT_EQ(run("featurize --pad 24 " + path("p.pcap") + " x " + path("p.csv")).status, 0);
  const auto text = slurp(path("p.csv"));
  EXPECT_NE(text.find("pkt_len_max,pad_0,pad_1,pad_2,pad_3,label\n"), std::string::npos) << text;
  EXPECT_NE(text.find(",28,0,0,0,0,x\n"), std::string::npos) << text;
}

TEST_F(Cli, FeaturizeEmptyCaptureWritesHeaderOnly) {
  write("e.pcap", PcapBuilder().str());
  auto r = run("featurize " + path("e.pcap") + " none " + path("e.csv"));
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(path("e.csv")), kHeader);
}

TEST_F(Cli, FeaturizeBadMagicNamesFile) {
  write("bad.pcap", std::string(64, 'z'));
  auto r = run("featurize " + path("bad.pcap") + " x " + path("bad.csv"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("bad.pcap"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("magic"), std::string::npos) << r.output;
}

TEST_F(Cli, FeaturizeTruncatedRecordReportsOffset) {
  PcapBuilder pb;
  pb.add(pkt(1, 0, ip(1, 1, 1, 1), 1, ip(2, 2, 2, 2), 2, 17, 0));
  std::string bytes = pb.str();
  bytes.resize(bytes.size() - 5);
  write("t.pcap", bytes);
  auto r = run("featurize " + path("t.pcap") + " x " + path("t.csv"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("offset 24"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainWritesArtifactsAndIsIdempotent) {
  ASSERT_EQ(run("synth " + path("s.csv") + " --per-class 60 --features 12 --seed 3").status, 0);
  const std::string args = "train " + path("s.csv") + " --variant m3-td --units 8 --epochs 3 --out " + path("run");
  auto r = run(args);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("\"learning_rate\":0.001"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("accuracy "), std::string::npos);
  const std::vector<std::string> artifacts = {"model.ckpt", "history.csv", "report.txt", "report.json"};
  std::vector<std::string> first;
  for (const auto& a : artifacts) {
    ASSERT_TRUE(fs::exists(dir_ / "run" / a)) << a;
    first.push_back(slurp(dir_ / "run" / a));
  }
  EXPECT_EQ(slurp(dir_ / "run" / "history.csv").rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0), 0u);
  ASSERT_EQ(run(args).status, 0);
  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    EXPECT_EQ(slurp(dir_ / "run" / artifacts[i]), first[i]) << artifacts[i];
  }
}

TEST_F(Cli, TrialsPrintTable) {
  ASSERT_EQ(run("synth " + path("s.csv") + " --per-class 30 --features 12").status, 0);
  auto r = run("train " + path("s.csv") + " --variant m1-van --units 4 --epochs 1 --trials 5 --out " + path("t"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto table = slurp(dir_ / "t" / "trials.txt");
  EXPECT_EQ(table.rfind("Trial | Accuracy | Precision | Recall | F1-score | Time (min)\n1     | ", 0), 0u) << table;
  EXPECT_NE(table.find("\n5     | "), std::string::npos);
  EXPECT_NE(table.find("\nAvg.  | "), std::string::npos);
  EXPECT_NE(r.output.find(table), std::string::npos);
}

TEST_F(Cli, EvaluateReproducesAndChecksFeatureCount) {
  ASSERT_EQ(run("synth " + path("s.csv") + " --per-class 40 --features 12").status, 0);
  ASSERT_EQ(run("train " + path("s.csv") + " --variant m2-td --units 8 --epochs 2 --out " + path("m")).status, 0);
  auto r = run("evaluate " + path("m/model.ckpt") + " " + path("s.csv") + " --out " + path("e"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("weighted avg"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "e" / "report.json"));

  ASSERT_EQ(run("synth " + path("w.csv") + " --per-class 5 --features 20").status, 0);
  r = run("evaluate " + path("m/model.ckpt") + " " + path("w.csv"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("expects N=12"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("has N=20"), std::string::npos) << r.output;
}

TEST_F(Cli, RejectsUnknownFlagsAndVariants) {
  EXPECT_NE(run("audit-params m3-td 48 141 --bogus").status, 0);
  EXPECT_NE(run("audit-params m4-td 48 141").status, 0);
  EXPECT_NE(run("").status, 0);
  auto r = run("audit-params m3-td 48 141 --factor-pair 8x6");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("R,C"), std::string::npos) << r.output;
}

TEST_F(Cli, FactorPairOverride) {
  auto r = run("audit-params m3-td 48 3 --factor-pair 12,4");
  ASSERT_EQ(r.status, 0) << r.output;
  // 12x4 -> conv 10x2 -> pool 5x1 -> 5 steps into the decision layer
  EXPECT_NE(r.output.find("5x128x3+3"), std::string::npos) << r.output;
}

}  // namespace
