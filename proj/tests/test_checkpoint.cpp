#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lqg/checkpoint.hpp"
#include "lqg/rng.hpp"

using namespace lqg;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  RngStream rng(1, "ckpt");
  auto w = ad::Tensor<double>::leaf({7, 5}, true, "qgen.W");
  for (Eigen::Index i = 0; i < w.size(); ++i) w.values()(i) = rng.normal();
  auto f = ad::Tensor<float>::leaf({3, 2, 2}, true, "ae.c1w");
  for (Eigen::Index i = 0; i < f.size(); ++i) f.values()(i) = static_cast<float>(rng.normal());

  const auto path = temp_file("lqg_ckpt_test.lqgc");
  write_checkpoint(path, {block_from_tensor("qgen.W", w), block_from_tensor("ae.c1w", f)});

  const auto blocks = read_checkpoint(path);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0].name == "qgen.W");
  CHECK(blocks[0].dtype == 1);
  CHECK(blocks[0].dims == std::vector<std::uint32_t>{7, 5});
  CHECK(blocks[1].dtype == 0);

  auto w2 = ad::Tensor<double>::leaf({7, 5}, false);
  load_tensor_from_block(require_block(blocks, "qgen.W"), w2);
  CHECK((w2.values() == w.values()).all());

  auto f2 = ad::Tensor<float>::leaf({3, 2, 2}, false);
  load_tensor_from_block(require_block(blocks, "ae.c1w"), f2);
  CHECK((f2.values() == f.values()).all());
  fs::remove(path);
}

TEST_CASE("corrupt checkpoints are structured data errors") {
  const auto path = temp_file("lqg_ckpt_bad.lqgc");

  SUBCASE("bad magic") {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
    os.close();
    CHECK_THROWS_AS(read_checkpoint(path), DataError);
  }
  SUBCASE("truncated payload") {
    auto w = ad::Tensor<double>::leaf({64}, true, "x");
    write_checkpoint(path, {block_from_tensor("x", w)});
    fs::resize_file(path, fs::file_size(path) - 17);
    CHECK_THROWS_AS(read_checkpoint(path), DataError);
  }
  SUBCASE("missing block") {
    auto w = ad::Tensor<double>::leaf({4}, true, "x");
    write_checkpoint(path, {block_from_tensor("x", w)});
    const auto blocks = read_checkpoint(path);
    CHECK(find_block(blocks, "y") == nullptr);
    CHECK_THROWS_AS(require_block(blocks, "y"), DataError);
  }
  fs::remove(path);
}

TEST_CASE("size mismatch on load is rejected") {
  const auto path = temp_file("lqg_ckpt_mismatch.lqgc");
  auto w = ad::Tensor<double>::leaf({4}, true, "x");
  write_checkpoint(path, {block_from_tensor("x", w)});
  auto blocks = read_checkpoint(path);
  auto small = ad::Tensor<double>::leaf({3}, false);
  CHECK_THROWS_AS(load_tensor_from_block(require_block(blocks, "x"), small), DataError);
  fs::remove(path);
}
