#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "se/cli/commands.hpp"
#include "se/cli/manifest.hpp"
#include "se/errors.hpp"
#include "se/io/container.hpp"
#include "se/io/csv.hpp"

namespace se {
namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Container, RoundTrip) {
  const auto dir = fresh_dir("se_container_test");
  io::Container c;
  c.kind = "test";
  c.attrs = {{"a", "1"}, {"name", "x y"}};
  c.tensors.emplace_back("m", grad::Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6.5}));
  c.tensors.emplace_back("s", grad::Tensor::scalar(-0.25));
  io::write_container(dir / "c.bin", c);
  const io::Container back = io::read_container(dir / "c.bin");
  EXPECT_EQ(back.kind, "test");
  EXPECT_EQ(back.attrs, c.attrs);
  EXPECT_EQ(back.tensor("m").shape(), c.tensors[0].second.shape());
  EXPECT_DOUBLE_EQ(back.tensor("m").at(1, 2), 6.5);
  EXPECT_DOUBLE_EQ(back.tensor("s").item(), -0.25);
  EXPECT_THROW(back.tensor("missing"), DataError);
}

TEST(Container, CorruptFileRejected) {
  const auto dir = fresh_dir("se_container_bad");
  std::ofstream(dir / "bad.bin", std::ios::binary) << "SECONTNR";
  EXPECT_THROW(io::read_container(dir / "bad.bin"), DataError);
  std::ofstream(dir / "magic.bin", std::ios::binary) << "NOTMAGIC12345678";
  EXPECT_THROW(io::read_container(dir / "magic.bin"), DataError);
}

TEST(Csv, FormatAndSplit) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(-6.0), "-6");
  EXPECT_EQ(io::format_double(std::nan("")), "nan");
  EXPECT_EQ(io::split_csv_line("a,,b"), (std::vector<std::string>{"a", "", "b"}));
}

TEST(Manifest, RoundTripWithRelativePaths) {
  const auto dir = fresh_dir("se_manifest_test");
  std::filesystem::create_directories(dir / "clean");
  std::ofstream(dir / "clean" / "a.wav") << "x";
  std::ofstream(dir / "clean" / "b.wav") << "x";
  cli::Manifest m;
  m.entries.push_back({"a", dir / "clean" / "a.wav", std::nullopt, std::nullopt, std::nullopt, 3});
  m.entries.push_back({"b", dir / "clean" / "b.wav", dir / "clean" / "a.wav", -6.0, 0.125, 4});
  cli::write_manifest(dir / "manifest.csv", m);
  EXPECT_NE(slurp(dir / "manifest.csv").find("clean/a.wav"), std::string::npos);
  const cli::Manifest back = cli::read_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_FALSE(back.entries[0].noisy.has_value());
  EXPECT_EQ(back.entries[1].snr_db, -6.0);
  EXPECT_EQ(back.entries[1].sigma_true, 0.125);
  EXPECT_EQ(back.entries[1].seed, 4u);
  EXPECT_TRUE(std::filesystem::equivalent(back.entries[1].clean, dir / "clean" / "b.wav"));
  EXPECT_THROW(cli::read_manifest(dir / "manifest.csv", true), DataError);
}

TEST(Manifest, RejectsDuplicatesAndBadHeader) {
  const auto dir = fresh_dir("se_manifest_bad");
  std::ofstream(dir / "a.wav") << "x";
  std::ofstream(dir / "dup.csv") << cli::kManifestHeader << "\na,a.wav,,,,1\na,a.wav,,,,2\n";
  EXPECT_THROW(cli::read_manifest(dir / "dup.csv"), DataError);
  std::ofstream(dir / "hdr.csv") << "id,path\na,a.wav\n";
  EXPECT_THROW(cli::read_manifest(dir / "hdr.csv"), DataError);
  std::ofstream(dir / "missing.csv") << cli::kManifestHeader << "\na,nope.wav,,,,1\n";
  EXPECT_THROW(cli::read_manifest(dir / "missing.csv"), DataError);
}

TEST(Commands, CorpusAndMixAreDeterministic) {
  const auto dir = fresh_dir("se_cmd_test");
  cli::ToyCorpusOptions toy;
  toy.out = dir / "corpus";
  toy.count = 2;
  ASSERT_EQ(cli::cmd_make_toy_corpus(toy), 0);
  cli::MixOptions mix;
  mix.manifest = dir / "corpus" / "manifest.csv";
  mix.snrs = {-6.0, 0.0};
  mix.out = dir / "a";
  ASSERT_EQ(cli::cmd_mix(mix), 0);
  mix.out = dir / "b";
  ASSERT_EQ(cli::cmd_mix(mix), 0);
  const cli::Manifest m = cli::read_manifest(dir / "a" / "manifest.csv", true);
  ASSERT_EQ(m.entries.size(), 4u);
  for (const auto& e : m.entries) {
    const auto name = e.noisy->filename();
    EXPECT_EQ(slurp(dir / "a" / "noisy" / name), slurp(dir / "b" / "noisy" / name));
  }
}

TEST(Commands, EnhanceNeedsMatchingModels) {
  const auto dir = fresh_dir("se_cmd_usage");
  cli::ToyCorpusOptions toy;
  toy.out = dir / "corpus";
  toy.count = 1;
  cli::cmd_make_toy_corpus(toy);
  cli::MixOptions mix;
  mix.manifest = dir / "corpus" / "manifest.csv";
  mix.snrs = {0.0};
  mix.out = dir / "mixed";
  cli::cmd_mix(mix);
  cli::EnhanceOptions en;
  en.method = "nmf";
  en.manifest = dir / "mixed" / "manifest.csv";
  en.out = dir / "out";
  EXPECT_THROW(cli::cmd_enhance(en), cli::UsageError);
  en.method = "noisy";
  EXPECT_EQ(cli::cmd_enhance(en), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "metrics.csv"));
}

}  // namespace
}  // namespace se
