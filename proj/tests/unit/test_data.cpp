#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

using namespace artbrain;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string &tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("artbrain_data_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path &path() const { return path_; }

private:
    fs::path path_;
};

void touch_jpeg(const fs::path &file, std::uint8_t shade = 100) {
    fs::create_directories(file.parent_path());
    RgbImage img(8, 8);
    std::fill(img.pixels.begin(), img.pixels.end(), shade);
    write_file(file, encode_jpeg(img));
}

std::map<std::string, std::vector<std::byte>> tree_bytes(const fs::path &root) {
    std::map<std::string, std::vector<std::byte>> out;
    for (const auto &e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    }
    return out;
}

std::set<std::string> issue_kinds(const DatasetManifest &m) {
    std::set<std::string> out;
    for (const auto &i : m.issues) out.insert(std::string(name(i.kind)));
    return out;
}

// Three hand-picked statistics on the gray channel.
struct Probe {
    double checker;  // pixel-level alternation
    double ramp;     // signed slope inside 8-pixel blocks minus slope across their edges
    double detail;   // mean absolute neighbour difference
};

Probe probe(const RgbImage &img) {
    const std::size_t n = img.width;
    const auto gray = [&](std::size_t x, std::size_t y) {
        return (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
    };
    double checker = 0, inside = 0, across = 0, detail = 0;
    std::size_t n_inside = 0, n_across = 0;
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            checker += ((x + y) % 2 == 0 ? 1.0 : -1.0) * gray(x, y);
            if (x + 1 < n) {
                const double d = gray(x + 1, y) - gray(x, y);
                detail += std::abs(d);
                if (x % 8 == 7) {
                    across += d;
                    ++n_across;
                } else {
                    inside += d;
                    ++n_inside;
                }
            }
        }
    }
    const double pixels = static_cast<double>(n * n);
    return {std::abs(checker) / pixels, inside / static_cast<double>(n_inside) - across / static_cast<double>(n_across),
            detail / pixels};
}

}  // namespace

TEST(Filename, Examples) {
    EXPECT_EQ(parse_filename("3-123456789-42.jpg"), (SampleName{3, 123456789, 42}));
    EXPECT_EQ(parse_filename("0-0-0.jpg"), (SampleName{0, 0, 0}));
    EXPECT_EQ(parse_filename("29-999999999-7.jpg"), (SampleName{29, 999999999, 7}));
    try {
        parse_filename("3-1000000000-42.jpg");
        FAIL();
    } catch (const FilenameError &e) {
        EXPECT_EQ(e.kind(), ParseError::Kind::seed_range);
        EXPECT_EQ(e.segment(), "1000000000");
    }
    try {
        parse_filename("3-12x-42.jpg");
        FAIL();
    } catch (const FilenameError &e) {
        EXPECT_EQ(e.kind(), ParseError::Kind::bad_filename);
        EXPECT_EQ(e.segment(), "12x");
    }
    for (const char *bad : {"3-1-2.png", "3-1.jpg", "-1-2.jpg", "3--2.jpg", "3-1-.jpg", "a-1-2.jpg", "3-01-2.jpg",
                            "3-1-2-4.jpg", ".jpg", "3-1-2.jpg.jpg", " 3-1-2.jpg", "+3-1-2.jpg"}) {
        EXPECT_THROW(parse_filename(bad), FilenameError) << bad;
    }
    EXPECT_EQ(format_filename({3, 123456789, 42}), "3-123456789-42.jpg");
    EXPECT_THROW(format_filename({1, kMaxSeed + 1, 0}), ArgumentError);
}

TEST(Filename, CodecIsABijection) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> cls(0, 29);
    std::uniform_int_distribution<std::uint64_t> seed(0, kMaxSeed), suffix(0, 1'000'000'000'000ULL);
    std::set<std::string> names;
    for (int i = 0; i < 10'000; ++i) {
        const SampleName s{cls(rng), seed(rng), suffix(rng)};
        const auto text = format_filename(s);
        ASSERT_EQ(parse_filename(text), s);
        ASSERT_EQ(format_filename(parse_filename(text)), text);
        names.insert(text);
    }
    EXPECT_GT(names.size(), 9'990U);
}

TEST(FolderMapping, DefaultCoversEveryClass) {
    const auto m = default_folder_mapping();
    EXPECT_EQ(m.size(), kNumClasses);
    EXPECT_EQ(folder_name(Source::human, Style::ukiyoe), "ukiyo_e");
    EXPECT_EQ(folder_name(Source::latent_diffusion, Style::baroque), "AI_LD_baroque");
    EXPECT_EQ(folder_name(Source::stable_diffusion, Style::art_nouveau), "AI_SD_art_nouveau");
    for (const auto &[folder, cls] : m) EXPECT_EQ(folder_name(cls.first, cls.second), folder);
}

TEST(Manifest, EmptyOrMissingRoot) {
    TempDir dir("empty");
    const auto m = validate_manifest(dir.path(), default_folder_mapping());
    EXPECT_TRUE(m.records.empty());
    EXPECT_TRUE(m.ok());
    EXPECT_EQ(m.counts, ClassCounts{});
    EXPECT_TRUE(validate_manifest(dir.path() / "nope", default_folder_mapping()).records.empty());
}

TEST(Manifest, IssuesAreItemizedNotFatal) {
    TempDir dir("issues");
    const auto &r = dir.path();
    touch_jpeg(r / "train/AI_LD_baroque/4-11-1.jpg");
    touch_jpeg(r / "train/AI_LD_baroque/not-a-name.jpg");
    touch_jpeg(r / "train/baroque/anything.jpg");
    touch_jpeg(r / "train/baroque/Anything.jpg");
    touch_jpeg(r / "train/cubism/x.jpg");
    touch_jpeg(r / "test/AI_SD_baroque/14-1-1.jpg");
    touch_jpeg(r / "test/AI_SD_baroque/14-1-2.jpg");
    touch_jpeg(r / "test/baroque/a.jpg");
    {
        std::ofstream(r / "test/baroque/broken.jpg") << "not an image";
    }
    ValidateOptions opts;
    opts.decode_images = true;
    ClassCounts expected;
    expected.at(Split::train, Source::latent_diffusion, Style::baroque) = 2;
    opts.expected = expected;
    const auto m = validate_manifest(r, default_folder_mapping(), opts);
    EXPECT_FALSE(m.ok());
    const std::set<std::string> want = {"bad_filename", "duplicate_path", "unknown_folder", "unreadable_file",
                                        "count_mismatch", "unbalanced_test"};
    EXPECT_EQ(issue_kinds(m), want);
    EXPECT_EQ(m.counts.at(Split::train, Source::latent_diffusion, Style::baroque), 1U);
    EXPECT_EQ(m.counts.at(Split::train, Source::human, Style::baroque), 1U);
    EXPECT_EQ(m.counts.at(Split::test, Source::stable_diffusion, Style::baroque), 2U);
    EXPECT_EQ(m.records.size(), 5U);
    const auto j = m.to_json();
    EXPECT_EQ(j["issues"].size(), m.issues.size());
}

TEST(Manifest, CountsPartitionBySource) {
    TempDir dir("partition");
    std::mt19937_64 rng(2);
    ClassCounts truth;
    for (const Source source : kAllSources) {
        for (const Style style : {Style::baroque, Style::renaissance, Style::surrealism}) {
            const std::size_t n = rng() % 4;
            for (std::size_t i = 0; i < n; ++i) {
                touch_jpeg(dir.path() / "train" / folder_name(source, style) /
                           format_filename({class_of(source, style).value(), i, i}));
            }
            truth.at(Split::train, source, style) = n;
        }
    }
    const auto m = validate_manifest(dir.path(), default_folder_mapping());
    EXPECT_EQ(m.counts, truth);
    std::size_t grand = 0;
    for (const Source source : kAllSources) {
        std::size_t sum = 0;
        for (const Style style : kAllStyles) sum += m.counts.at(Split::train, source, style);
        EXPECT_EQ(m.counts.source_total(Split::train, source), sum);
        grand += sum;
    }
    EXPECT_EQ(m.counts.split_total(Split::train), grand);
    EXPECT_EQ(ClassCounts::from_json(m.counts.to_json()), m.counts);
}

class Toy : public ::testing::Test {
protected:
    static ToySpec small_spec() {
        ToySpec s;
        s.styles = {Style::baroque, Style::impressionism};
        return s;
    }
};

TEST_F(Toy, CountsAndSidecarAgree) {
    TempDir dir("toy");
    const auto m = generate_toy(small_spec(), 5, dir.path());
    EXPECT_TRUE(m.ok());
    EXPECT_EQ(m.records.size(), 750U);
    EXPECT_EQ(read_counts_sidecar(dir.path()), m.counts);
    for (const Source source : kAllSources) {
        EXPECT_EQ(m.counts.at(Split::train, source, Style::baroque), 100U);
        EXPECT_EQ(m.counts.at(Split::test, source, Style::impressionism), 25U);
        EXPECT_EQ(m.counts.at(Split::train, source, Style::romanticism), 0U);
    }
    ValidateOptions opts;
    opts.expected = read_counts_sidecar(dir.path());
    opts.decode_images = true;
    EXPECT_TRUE(validate_manifest(dir.path(), default_folder_mapping(), opts).ok());
    for (const auto &r : m.records) {
        ASSERT_TRUE(r.name.has_value());
        EXPECT_EQ(r.name->class_index, r.class_index().value());
        EXPECT_EQ(format_filename(*r.name), r.path.filename().string());
    }
}

TEST_F(Toy, DeterministicTree) {
    TempDir a("toy_a"), b("toy_b"), c("toy_c");
    ToySpec spec = small_spec();
    spec.train_per_class = 6;
    spec.test_per_class = 2;
    generate_toy(spec, 11, a.path());
    generate_toy(spec, 11, b.path());
    generate_toy(spec, 12, c.path());
    EXPECT_EQ(tree_bytes(a.path()), tree_bytes(b.path()));
    EXPECT_NE(tree_bytes(a.path()), tree_bytes(c.path()));
}

TEST_F(Toy, SourcesDifferForSameSeedAndStyle) {
    for (const Style style : kAllStyles) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            std::set<std::vector<std::uint8_t>> distinct;
            for (const Source source : kAllSources) {
                const auto img = render_toy_image(source, style, seed);
                ASSERT_EQ(img.width, 64U);
                distinct.insert(img.pixels);
            }
            EXPECT_EQ(distinct.size(), 3U);
        }
    }
}

TEST_F(Toy, FrequencyProbeSeparatesSources) {
    TempDir dir("probe");
    const auto m = generate_toy(small_spec(), 3, dir.path());
    std::array<std::array<double, 3>, kNumSources> centroid{};
    std::array<std::size_t, kNumSources> n{};
    std::vector<std::pair<Probe, Source>> held_out;
    for (const auto &r : m.records) {
        const Probe p = probe(read_image(dir.path() / r.path));
        const auto s = static_cast<std::size_t>(r.source);
        if (r.split == Split::train) {
            centroid[s][0] += p.checker;
            centroid[s][1] += p.ramp;
            centroid[s][2] += p.detail;
            ++n[s];
        } else {
            held_out.emplace_back(p, r.source);
        }
    }
    for (std::size_t s = 0; s < kNumSources; ++s)
        for (auto &v : centroid[s]) v /= static_cast<double>(n[s]);
    std::size_t correct = 0;
    for (const auto &[p, truth] : held_out) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t s = 0; s < kNumSources; ++s) {
            const double d = std::pow(p.checker - centroid[s][0], 2) + std::pow(p.ramp - centroid[s][1], 2) +
                             std::pow(p.detail - centroid[s][2], 2);
            if (d < best_d) {
                best_d = d;
                best = s;
            }
        }
        correct += best == static_cast<std::size_t>(truth) ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(held_out.size()), 0.95);
}

TEST_F(Toy, UnwritableOutputIsIoError) {
    TempDir dir("ro");
    std::ofstream(dir.path() / "file") << "x";
    EXPECT_THROW(generate_toy(small_spec(), 1, dir.path() / "file" / "sub"), IoError);
}
