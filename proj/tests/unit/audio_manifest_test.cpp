#include <gtest/gtest.h>

#include <fstream>

#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/audio/wav.hpp"
#include "birdfcn/error.hpp"
#include "test_util.hpp"

using namespace birdfcn;
using namespace birdfcn::audio;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(CsvTest, QuotedFields) {
    EXPECT_EQ(split_csv_line("a,b"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(split_csv_line("\"x,y\",\"say \"\"hi\"\"\""), (std::vector<std::string>{"x,y", "say \"hi\""}));
    EXPECT_EQ(split_csv_line(""), (std::vector<std::string>{""}));
    EXPECT_THROW(split_csv_line("\"open"), FormatError);
    EXPECT_EQ(split_csv_line(csv_escape("a,\"b\"") + "," + csv_escape("c")),
              (std::vector<std::string>{"a,\"b\"", "c"}));
}

TEST(ManifestTest, SeventeenSpecies) {
    test_support::TempDir dir("man");
    std::string csv = "path,species\n";
    for (int i = 0; i < 34; ++i) csv += "f" + std::to_string(i) + ".wav,sp" + std::to_string(i % 17) + "\n";
    write_text(dir / "m.csv", csv);
    const auto load = load_manifest(dir / "m.csv", {.check_files = false, .label_file = std::nullopt});
    EXPECT_EQ(load.manifest.entries.size(), 34u);
    EXPECT_EQ(load.manifest.num_classes(), 17u);
    EXPECT_TRUE(std::is_sorted(load.manifest.label_set.begin(), load.manifest.label_set.end()));
}

TEST(ManifestTest, EmptyFileIsEmptyManifest) {
    test_support::TempDir dir("man");
    write_text(dir / "m.csv", "");
    const auto load = load_manifest(dir / "m.csv");
    EXPECT_TRUE(load.manifest.entries.empty());
    EXPECT_TRUE(load.manifest.label_set.empty());
}

TEST(ManifestTest, DuplicatePathsDropped) {
    test_support::TempDir dir("man");
    write_text(dir / "m.csv", "path,species\r\na.wav,x\r\nb.wav,y\r\na.wav,x\r\na.wav,z\r\n");
    const auto load = load_manifest(dir / "m.csv", {.check_files = false, .label_file = std::nullopt});
    EXPECT_EQ(load.manifest.entries.size(), 2u);
    EXPECT_EQ(load.duplicates_dropped, 2u);
}

TEST(ManifestTest, LabelFileFixesOrderAndRejectsUnknown) {
    test_support::TempDir dir("man");
    write_text(dir / "m.csv", "path,species\na.wav,Cigüeña\nb.wav,Búho\n");
    write_text(dir / "order.txt", "Cigüeña\nBúho\n");
    const auto load = load_manifest(dir / "m.csv", {.check_files = false, .label_file = dir / "order.txt"});
    EXPECT_EQ(load.manifest.label_set, (std::vector<std::string>{"Cigüeña", "Búho"}));
    EXPECT_EQ(load.manifest.labels(), (std::vector<std::size_t>{0, 1}));
    write_text(dir / "order.txt", "Cigüeña\n");
    EXPECT_THROW(load_manifest(dir / "m.csv", {.check_files = false, .label_file = dir / "order.txt"}),
                 ValidationError);
}

TEST(ManifestTest, RoundTripIsLossless) {
    test_support::TempDir dir("man");
    DatasetManifest m;
    m.entries = {{"clips/one, two.wav", "Zorzal", 0.0}, {"a\"b.wav", "Abubilla", 0.0}, {"c.wav", "Zorzal", 0.0}};
    m.label_set = {"Zorzal", "Abubilla"};  // deliberately not sorted
    write_manifest(dir / "m.csv", m);
    const auto back = load_manifest(dir / "m.csv", {.check_files = false, .label_file = std::nullopt}).manifest;
    ASSERT_EQ(back.entries.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.entries[i].path, m.entries[i].path);
        EXPECT_EQ(back.entries[i].species, m.entries[i].species);
    }
    EXPECT_EQ(back.label_set, m.label_set);
}

TEST(ManifestTest, ChecksFilesAndReadsDurations) {
    test_support::TempDir dir("man");
    AudioClip c;
    c.samples.assign(22050, 0.1f);
    write_wav(dir / "half.wav", c);
    write_text(dir / "m.csv", "path,species\nhalf.wav,a\n");
    const auto load = load_manifest(dir / "m.csv");
    EXPECT_DOUBLE_EQ(load.manifest.entries[0].duration_seconds, 0.5);
    write_text(dir / "m2.csv", "path,species\nnope.wav,a\n");
    EXPECT_THROW(load_manifest(dir / "m2.csv"), ValidationError);
}

TEST(ManifestTest, BadHeaderOrRow) {
    test_support::TempDir dir("man");
    write_text(dir / "m.csv", "file,label\n");
    EXPECT_THROW(load_manifest(dir / "m.csv"), FormatError);
    write_text(dir / "m.csv", "path,species\nonlyone\n");
    EXPECT_THROW(load_manifest(dir / "m.csv", {.check_files = false, .label_file = std::nullopt}), FormatError);
    EXPECT_THROW(load_manifest(dir / "none.csv"), IoError);
}
