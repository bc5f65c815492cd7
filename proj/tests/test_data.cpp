#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "privshield/data.hpp"
#include "privshield/image.hpp"

using namespace privshield;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_identities = 10;
  c.samples_per_identity = 20;
  c.k_attributes = 4;
  c.image_size = 32;
  c.channels = 3;
  c.seed = 77;
  return c;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("privshield_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and well formed") {
  const auto cfg = small_config();
  const Dataset d1 = generate_synthetic(cfg);
  const Dataset d2 = generate_synthetic(cfg);
  REQUIRE(d1.samples.size() == 200);
  d1.validate();

  std::vector<int> hist(cfg.n_identities, 0);
  for (std::size_t i = 0; i < d1.samples.size(); ++i) {
    ++hist[d1.samples[i].identity];
    CHECK(d1.samples[i].attributes == d2.samples[i].attributes);
    REQUIRE(d1.samples[i].image.size() == d2.samples[i].image.size());
    for (std::size_t j = 0; j < d1.samples[i].image.size(); ++j)
      CHECK(d1.samples[i].image[j] == d2.samples[i].image[j]);
  }
  for (int h : hist) CHECK(h == 20);  // uniform identity histogram
}

TEST_CASE("serialized datasets are byte-identical across runs") {
  auto cfg = small_config();
  cfg.n_identities = 3;
  cfg.samples_per_identity = 2;
  const auto dir1 = temp_dir("gen1");
  const auto dir2 = temp_dir("gen2");
  save_dataset(generate_synthetic(cfg), dir1.string());
  save_dataset(generate_synthetic(cfg), dir2.string());
  CHECK(read_file(dir1 / "manifest.csv") == read_file(dir2 / "manifest.csv"));
  CHECK(read_file(dir1 / "img_000000.png") == read_file(dir2 / "img_000000.png"));
  CHECK(read_file(dir1 / "img_000005.png") == read_file(dir2 / "img_000005.png"));
}

TEST_CASE("k=1 attribute vectors and config validation") {
  auto cfg = small_config();
  cfg.k_attributes = 1;
  const Dataset d = generate_synthetic(cfg);
  for (const Sample& s : d.samples) CHECK(s.attributes.size() == 1);

  cfg.image_size = 15;
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
  cfg.image_size = 16;
  cfg.k_attributes = 9;  // > image_size / 2
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
  cfg.k_attributes = 0;
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
}

TEST_CASE("pixel-rule oracle recovers every attribute bit") {
  auto cfg = small_config();
  cfg.k_attributes = 8;
  const Dataset d = generate_synthetic(cfg);
  long errors = 0;
  for (const Sample& s : d.samples)
    if (attribute_oracle(s.image, d.k) != s.attributes) ++errors;
  CHECK(errors == 0);

  // Still exact after the PNG round trip (8-bit quantization).
  const auto dir = temp_dir("oracle");
  save_dataset(d, dir.string());
  const Dataset loaded = load_manifest((dir / "manifest.csv").string());
  errors = 0;
  for (const Sample& s : loaded.samples)
    if (attribute_oracle(s.image, loaded.k) != s.attributes) ++errors;
  CHECK(errors == 0);
}

TEST_CASE("manifest loading round trip and errors") {
  auto cfg = small_config();
  cfg.n_identities = 3;
  cfg.samples_per_identity = 1;
  cfg.k_attributes = 2;
  const Dataset d = generate_synthetic(cfg);
  const auto dir = temp_dir("manifest");
  save_dataset(d, dir.string());

  const Dataset loaded = load_manifest((dir / "manifest.csv").string());
  CHECK(loaded.samples.size() == 3);
  CHECK(loaded.k == 2);
  CHECK(loaded.n_identities == 3);
  for (const Sample& s : loaded.samples) {
    CHECK(s.image.max() <= 1.0);
    CHECK(s.image.min() >= 0.0);
  }

  SUBCASE("attribute arity mismatch names the row") {
    std::ofstream out(dir / "bad.csv");
    out << "path,identity,attr_0,attr_1\n";
    out << "img_000000.png,0,1,0\n";
    out << "img_000001.png,1,1\n";  // one column short
    out.close();
    try {
      load_manifest((dir / "bad.csv").string());
      FAIL("expected an arity error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
  }
  SUBCASE("missing image file names the row") {
    std::ofstream out(dir / "missing.csv");
    out << "path,identity,attr_0,attr_1\n";
    out << "does_not_exist.png,0,1,0\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_manifest((dir / "missing.csv").string()),
                         doctest::Contains("row 2"), Error);
  }
  SUBCASE("malformed attribute value") {
    std::ofstream out(dir / "mal.csv");
    out << "path,identity,attr_0,attr_1\n";
    out << "img_000000.png,0,1,2\n";
    out.close();
    CHECK_THROWS_AS(load_manifest((dir / "mal.csv").string()), Error);
  }
  SUBCASE("non-contiguous identities rejected") {
    std::ofstream out(dir / "gap.csv");
    out << "path,identity,attr_0,attr_1\n";
    out << "img_000000.png,0,1,0\n";
    out << "img_000001.png,2,1,0\n";
    out.close();
    CHECK_THROWS_AS(load_manifest((dir / "gap.csv").string()), Error);
  }
}

TEST_CASE("split sizes, determinism and disjointness") {
  auto ds = std::make_shared<Dataset>(generate_synthetic(small_config()));
  const SplitSet s1 = split_dataset(ds, 0.5, 0.25, 0.25, 5);
  CHECK(s1.x1.size() == 100);
  CHECK(s1.x2.size() == 50);
  CHECK(s1.test.size() == 50);
  CHECK_FALSE(s1.identity_disjoint);

  const SplitSet s2 = split_dataset(ds, 0.5, 0.25, 0.25, 5);
  CHECK(s1.x1.indices() == s2.x1.indices());
  CHECK(s1.x2.indices() == s2.x2.indices());
  CHECK(s1.test.indices() == s2.test.indices());

  // Partition of the full index set when fractions sum to 1.
  std::set<std::size_t> all;
  for (auto i : s1.x1.indices()) all.insert(i);
  for (auto i : s1.x2.indices()) all.insert(i);
  for (auto i : s1.test.indices()) all.insert(i);
  CHECK(all.size() == 200);

  CHECK_THROWS_AS(split_dataset(ds, 0.8, 0.2, 0.2, 5), Error);
  CHECK_THROWS_AS(split_dataset(ds, 0.001, 0.001, 0.001, 5), Error);  // empty split
}

TEST_CASE("identity-disjoint split keeps identities whole") {
  auto ds = std::make_shared<Dataset>(generate_synthetic(small_config()));
  const SplitSet s = split_dataset(ds, 0.5, 0.25, 0.25, 9, true);
  CHECK(s.identity_disjoint);
  auto ids_of = [&](const DatasetSplit& split) {
    std::set<int> ids;
    for (std::size_t i = 0; i < split.size(); ++i)
      ids.insert(split.sample(i).identity);
    return ids;
  };
  const auto i1 = ids_of(s.x1), i2 = ids_of(s.x2), it = ids_of(s.test);
  for (int id : i1) {
    CHECK_FALSE(i2.count(id));
    CHECK_FALSE(it.count(id));
  }
  for (int id : i2) CHECK_FALSE(it.count(id));
}

TEST_CASE("batch iterator epochs") {
  auto ds = std::make_shared<Dataset>([&] {
    auto cfg = small_config();
    cfg.n_identities = 5;
    cfg.samples_per_identity = 2;
    return generate_synthetic(cfg);
  }());
  const SplitSet s = split_dataset(ds, 0.8, 0.1, 0.1, 1);
  REQUIRE(s.x1.size() == 8);

  BatchIterator it(s.x1, 3, 123);
  const Batch b1 = it.next();
  const Batch b2 = it.next();
  const Batch b3 = it.next();
  CHECK(b1.images.dim(0) == 3);
  CHECK(b2.images.dim(0) == 3);
  CHECK(b3.images.dim(0) == 2);  // short last batch

  // Same seed reproduces the same stream.
  BatchIterator it2(s.x1, 3, 123);
  const Batch c1 = it2.next();
  for (std::size_t i = 0; i < b1.images.size(); ++i)
    CHECK(b1.images[i] == c1.images[i]);

  // Two epochs: different order, same multiset of samples.
  BatchIterator it3(s.x1, 8, 55);
  const Batch e1 = it3.next();
  const Batch e2 = it3.next();
  auto key = [](const Batch& b, int row) {
    real sum = 0;
    const std::size_t sz = b.images.size() / b.images.dim(0);
    for (std::size_t j = row * sz; j < (row + 1) * sz; ++j) sum += b.images[j];
    return sum;
  };
  std::vector<real> k1, k2;
  for (int r = 0; r < 8; ++r) {
    k1.push_back(key(e1, r));
    k2.push_back(key(e2, r));
  }
  CHECK(k1 != k2);  // different order
  std::sort(k1.begin(), k1.end());
  std::sort(k2.begin(), k2.end());
  CHECK(k1 == k2);  // same multiset
}

TEST_CASE("merge_extra_data extends x2 and keeps disjointness") {
  auto cfg = small_config();
  auto ds = std::make_shared<Dataset>(generate_synthetic(cfg));
  SplitSet s = split_dataset(ds, 0.5, 0.25, 0.25, 5);
  auto extra_cfg = cfg;
  extra_cfg.n_identities = 4;
  extra_cfg.samples_per_identity = 5;
  extra_cfg.seed = 999;
  const Dataset extra = generate_synthetic(extra_cfg);

  const std::size_t x2_before = s.x2.size();
  merge_extra_data(s, extra, false);
  CHECK(s.x2.size() == x2_before + 20);
  CHECK(s.x1.size() == 100);
  CHECK(s.x1.dataset().n_identities == cfg.n_identities + 4);

  std::set<std::size_t> seen;
  for (auto i : s.x1.indices()) CHECK(seen.insert(i).second);
  for (auto i : s.x2.indices()) CHECK(seen.insert(i).second);
  for (auto i : s.test.indices()) CHECK(seen.insert(i).second);
}

TEST_CASE("png io round trip") {
  auto cfg = small_config();
  cfg.n_identities = 1;
  cfg.samples_per_identity = 1;
  const Dataset d = generate_synthetic(cfg);
  const auto dir = temp_dir("png");
  write_png((dir / "x.png").string(), d.samples[0].image);
  const Tensor back = read_png((dir / "x.png").string());
  REQUIRE(back.same_shape(d.samples[0].image));
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(std::abs(back[i] - d.samples[0].image[i]) <= 0.5 / 255 + 1e-9);
}
