#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "emospec/corpus/epochset_io.hpp"
#include "emospec/corpus/synth.hpp"

using namespace emospec;
using namespace emospec::corpus;
namespace fs = std::filesystem;

namespace {

class EpochSetIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("emospec_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

std::string error_of(const fs::path& dir) {
  try {
    read_epochset(dir);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_F(EpochSetIo, RoundTripIsBitwise) {
  for (int classes : {3, 4, 5}) {
    const auto set = synth_generate({"small", 3, 200, 128.0}, classes, 2, 11 + classes);
    const auto path = dir_ / ("set" + std::to_string(classes));
    write_epochset(set, path);
    const auto back = read_epochset(path);
    EXPECT_TRUE(back == set) << classes;
  }
}

TEST_F(EpochSetIo, DataFileSizeAndLayout) {
  const auto set = synth_generate({"small", 3, 200, 128.0}, 3, 2, 1);
  write_epochset(set, dir_);
  EXPECT_EQ(fs::file_size(dir_ / kDataFile), 6u * 3u * 200u * 4u);
  // Epoch 1, channel 2, sample 7 sits at ((1 * 3 + 2) * 200 + 7) * 4.
  std::ifstream in(dir_ / kDataFile, std::ios::binary);
  in.seekg(((1 * 3 + 2) * 200 + 7) * 4);
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  EXPECT_EQ(v, set.records[1].channel(2)[7]);

  const auto j = nlohmann::json::parse(std::ifstream(dir_ / kManifestFile));
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["n_epochs"], 6);
  EXPECT_EQ(j["records"][1]["offset_bytes"], 3 * 200 * 4);
  EXPECT_FALSE(j["records"][1]["emotional"].get<bool>());  // class 1 = neutral
  EXPECT_TRUE(j["records"][0].contains("valence"));
}

TEST_F(EpochSetIo, TruncatedDataNamesByteCounts) {
  const auto set = synth_generate({"small", 2, 100, 128.0}, 3, 1, 1);
  write_epochset(set, dir_);
  fs::resize_file(dir_ / kDataFile, 1000);
  const auto msg = error_of(dir_);
  EXPECT_NE(msg.find("expected 2400 bytes"), std::string::npos) << msg;
  EXPECT_NE(msg.find("found 1000 bytes"), std::string::npos) << msg;
}

TEST_F(EpochSetIo, ChannelCountMismatch) {
  const auto set = synth_generate({"small", 64, 100, 128.0}, 3, 1, 1);
  write_epochset(set, dir_);
  auto j = nlohmann::json::parse(std::ifstream(dir_ / kManifestFile));
  j["n_channels"] = 128;
  std::ofstream(dir_ / kManifestFile) << j.dump();
  const auto msg = error_of(dir_);
  EXPECT_NE(msg.find("size mismatch"), std::string::npos) << msg;
}

TEST_F(EpochSetIo, BadVersionAndMissingFiles) {
  const auto set = synth_generate({"small", 2, 100, 128.0}, 3, 1, 1);
  write_epochset(set, dir_);
  auto j = nlohmann::json::parse(std::ifstream(dir_ / kManifestFile));
  j["format_version"] = 2;
  std::ofstream(dir_ / kManifestFile) << j.dump();
  EXPECT_NE(error_of(dir_).find("unsupported format_version"), std::string::npos);

  std::ofstream(dir_ / kManifestFile) << "{\"hello\": 1}";
  EXPECT_NE(error_of(dir_).find("format_version"), std::string::npos);

  std::ofstream(dir_ / kManifestFile) << "not json";
  EXPECT_NE(error_of(dir_).find("not valid JSON"), std::string::npos);

  EXPECT_NE(error_of(dir_ / "nope").find("no manifest"), std::string::npos);
}
