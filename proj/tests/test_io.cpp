#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "kern/checkpoint.hpp"
#include "kern/dataset.hpp"
#include "test_util.hpp"

using namespace kern;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("kern-test-" + std::to_string(Catch::rngSeed()) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("checkpoint round trip is byte-exact", "[io]") {
  TempDir tmp;
  Rng rng(42);
  ParameterSet ps;
  ps.add_weight("layer.W", 4, 7, rng);
  ps.add_bias("layer.b", 4);
  ps.add("odd/name with spaces", test::random_tensor({2, 3}, rng, -5, 5, true));

  const std::string p1 = tmp.file("a.ckpt"), p2 = tmp.file("b.ckpt");
  save_checkpoint(ps, p1);
  ParameterSet loaded = load_checkpoint(p1);
  REQUIRE(loaded.size() == ps.size());
  for (auto& [name, t] : ps) {
    CHECK(loaded.at(name).shape() == t.shape());
    CHECK(loaded.at(name).data() == t.data());  // bitwise
  }
  save_checkpoint(loaded, p2);
  CHECK(io::read_file(p1) == io::read_file(p2));
}

TEST_CASE("checkpoint rejects bad magic, corruption and truncation", "[io]") {
  TempDir tmp;
  ParameterSet ps;
  ps.add("w", Tensor::param({2}, {1.0, 2.0}));
  const std::string path = tmp.file("c.ckpt");
  save_checkpoint(ps, path);

  auto buf = io::read_file(path);

  auto write_raw = [&](const std::vector<std::uint8_t>& b, const std::string& p) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };

  auto bad_magic = buf;
  bad_magic[0] = 'X';
  write_raw(bad_magic, tmp.file("bad_magic.ckpt"));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("bad_magic.ckpt")), parse_error);

  auto truncated = buf;
  truncated.resize(truncated.size() / 2);
  write_raw(truncated, tmp.file("trunc.ckpt"));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.ckpt")), parse_error);

  auto corrupt = buf;
  corrupt[corrupt.size() / 2] ^= 0xFF;
  write_raw(corrupt, tmp.file("corrupt.ckpt"));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("corrupt.ckpt")), parse_error);
}

TEST_CASE("load_checkpoint_into preserves tensor identity", "[io]") {
  TempDir tmp;
  Rng rng(1);
  ParameterSet a;
  a.add_weight("w", 3, 3, rng);
  save_checkpoint(a, tmp.file("w.ckpt"));

  ParameterSet b;
  b.add_weight("w", 3, 3, rng);
  auto node_before = b.at("w").node();
  load_checkpoint_into(b, tmp.file("w.ckpt"));
  CHECK(b.at("w").node() == node_before);
  CHECK(b.at("w").data() == a.at("w").data());

  ParameterSet wrong;
  wrong.add_weight("w", 2, 2, rng);
  CHECK_THROWS_AS(load_checkpoint_into(wrong, tmp.file("w.ckpt")), validation_error);
}

TEST_CASE("schema file round trip and validation", "[io]") {
  TempDir tmp;
  DatasetSchema s;
  s.category_names = {"person", "dog"};
  s.predicate_names = {"no-relationship", "rides", "holds"};
  save_schema(s, tmp.file("schema.json"));
  DatasetSchema loaded = load_schema(tmp.file("schema.json"));
  CHECK(loaded.category_names == s.category_names);
  CHECK(loaded.predicate_names == s.predicate_names);

  DatasetSchema bad = s;
  bad.predicate_names[0] = "none";
  CHECK_THROWS_AS(bad.validate(), validation_error);
  DatasetSchema dup = s;
  dup.category_names = {"person", "person"};
  CHECK_THROWS_AS(dup.validate(), validation_error);
}

TEST_CASE("annotation files round trip and report parse errors with lines", "[io]") {
  TempDir tmp;
  DatasetSchema s;
  s.category_names = {"a", "b", "c"};
  s.predicate_names = {"no-relationship", "r1", "r2"};

  AnnotatedImage img;
  img.image_id = "img-0";
  img.width = 100;
  img.height = 80;
  img.regions.push_back({{1, 2, 50, 40}, 0, {0.5, -1.5}});
  img.regions.push_back({{10, 10, 90, 70}, 2, {2.0, 0.25}});
  img.triplets.push_back({0, 1, 1});
  img.validate(s);

  save_annotations({img, img}, tmp.file("ann.jsonl"));
  auto loaded = load_annotations(tmp.file("ann.jsonl"), s);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].image_id == "img-0");
  CHECK(loaded[0].regions[1].feature == std::vector<double>{2.0, 0.25});
  CHECK(loaded[0].triplets[0].predicate == 1);

  {
    std::ofstream out(tmp.file("bad.jsonl"));
    out << to_json(img).dump() << "\n{not json\n";
  }
  CHECK_THROWS_MATCHES(load_annotations(tmp.file("bad.jsonl"), s), parse_error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring(":2")));
}

TEST_CASE("annotation invariants are enforced", "[io]") {
  DatasetSchema s;
  s.category_names = {"a", "b"};
  s.predicate_names = {"no-relationship", "r1"};

  AnnotatedImage img;
  img.image_id = "x";
  img.width = 10;
  img.height = 10;
  img.regions.push_back({{0, 0, 5, 5}, 0, {}});
  img.regions.push_back({{1, 1, 9, 9}, 1, {}});

  auto with = [&](auto mutate) {
    AnnotatedImage copy = img;
    mutate(copy);
    return copy;
  };

  CHECK_NOTHROW(img.validate(s));
  CHECK_THROWS_AS(with([](auto& i) { i.regions[0].box = {5, 0, 5, 5}; }).validate(s),
                  validation_error);
  CHECK_THROWS_AS(with([](auto& i) { i.regions[0].box = {0, 0, 11, 5}; }).validate(s),
                  validation_error);
  CHECK_THROWS_AS(with([](auto& i) { i.regions[0].label = 2; }).validate(s), validation_error);
  CHECK_THROWS_AS(with([](auto& i) { i.triplets.push_back({0, 0, 1}); }).validate(s),
                  validation_error);
  CHECK_THROWS_AS(with([](auto& i) { i.triplets.push_back({0, 2, 1}); }).validate(s),
                  validation_error);
  CHECK_THROWS_AS(with([](auto& i) { i.triplets.push_back({0, 1, 0}); }).validate(s),
                  validation_error);
  CHECK_THROWS_AS(with([](auto& i) {
                    i.triplets.push_back({0, 1, 1});
                    i.triplets.push_back({0, 1, 1});
                  }).validate(s),
                  validation_error);
}

TEST_CASE("iou matches hand geometry", "[io]") {
  Box a{0, 0, 2, 2}, b{1, 1, 3, 3};
  CHECK(iou(a, b) == Catch::Approx(1.0 / 7.0));
  CHECK(iou(a, a) == Catch::Approx(1.0));
  CHECK(iou(a, Box{5, 5, 6, 6}) == 0.0);
}
