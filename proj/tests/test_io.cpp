#include "doctest.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phtr/checkpoint.hpp"
#include "phtr/config.hpp"
#include "phtr/image.hpp"
#include "phtr/rng.hpp"
#include "phtr/sha256.hpp"
#include "phtr/text.hpp"
#include "phtr/vocab.hpp"

using namespace phtr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static uint64_t counter = 0;
    const auto tick = static_cast<uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count());
    path = fs::temp_directory_path() /
           ("phtr_test_" + std::to_string(Rng::mix(tick, ++counter)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("sha256 matches published test vectors") {
  CHECK(Sha256::of_string("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::of_string("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(Sha256::of_string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  std::string million(1000000, 'a');
  CHECK(Sha256::of_string(million) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("rng streams are deterministic and split streams decorrelate") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs = differs || (a.next_u64() != c.next_u64());
  CHECK(differs);

  Rng base(7);
  Rng s1 = base.split(1), s2 = base.split(2), s1_again = base.split(1);
  CHECK(s1.next_u64() == s1_again.next_u64());
  CHECK(s1.next_u64() != s2.next_u64());

  Rng u(99);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    mean += v;
  }
  CHECK(std::abs(mean / 10000.0 - 0.5) < 0.02);

  Rng g(5);
  double gm = 0.0, gv = 0.0;
  std::vector<double> draws(10000);
  for (double& d : draws) d = g.gaussian();
  for (double d : draws) gm += d;
  gm /= 10000.0;
  for (double d : draws) gv += (d - gm) * (d - gm);
  gv /= 10000.0;
  CHECK(std::abs(gm) < 0.05);
  CHECK(std::abs(gv - 1.0) < 0.05);
}

TEST_CASE("utf8 and line helpers") {
  auto cps = utf8_codepoints("a،b");
  REQUIRE(cps.size() == 3);
  CHECK(cps[1] == "،");
  CHECK(is_metric_punctuation(","));
  CHECK(is_metric_punctuation("।"));
  CHECK_FALSE(is_metric_punctuation("a"));

  CHECK(split_lines("a\nb") == std::vector<std::string>{"a", "b"});
  CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
  CHECK(split_lines("") == std::vector<std::string>{""});
  CHECK(join_lines({"a", "b"}) == "a\nb");
}

TEST_CASE("downsample_halve averages with bilinear weights") {
  Image constant(6, 6, 0.7);
  Image half = downsample_halve(constant);
  CHECK(half.height == 3);
  CHECK(half.width == 3);
  for (double v : half.pixels) CHECK(v == doctest::Approx(0.7));

  Image checker(4, 4);
  for (int64_t y = 0; y < 4; ++y) {
    for (int64_t x = 0; x < 4; ++x) checker.at(y, x) = (x + y) % 2 ? 1.0 : 0.0;
  }
  Image down = downsample_halve(checker);
  CHECK(down.height == 2);
  CHECK(down.width == 2);
  for (double v : down.pixels) CHECK(v == doctest::Approx(0.5));

  Image odd(5, 7, 0.3);
  Image h2 = downsample_halve(odd);
  CHECK(h2.height == 3);
  CHECK(h2.width == 4);

  Image big(224, 224, 0.25);
  Image small = downsample_halve(big);
  CHECK(small.height == 112);
  CHECK(small.width == 112);

  CHECK_THROWS_AS(downsample_halve(Image(1, 5, 0.0)), DataError);
}

TEST_CASE("resize_square pads then scales isotropically") {
  Rng rng(17);
  Image square(64, 64);
  for (double& p : square.pixels) p = rng.uniform();
  Image same = resize_square(square, 64);
  for (int64_t i = 0; i < same.numel(); ++i) {
    CHECK(same.pixels[static_cast<size_t>(i)] ==
          doctest::Approx(square.pixels[static_cast<size_t>(i)]));
  }

  // A vertical ruler pattern in a 2:1 image must keep its stripe count
  // after the square resize (no anisotropic squeeze).
  Image tall(100, 200, 1.0);
  for (int64_t y = 0; y < 100; ++y) {
    for (int64_t x = 0; x < 200; x += 20) tall.at(y, x) = 0.0;
  }
  Image out = resize_square(tall, 100);
  CHECK(out.height == 100);
  CHECK(out.width == 100);
  int stripes = 0;
  bool in_stripe = false;
  for (int64_t x = 0; x < 100; ++x) {
    const bool dark = out.at(20, x) < 0.8;
    if (dark && !in_stripe) ++stripes;
    in_stripe = dark;
  }
  CHECK(stripes == 10);
  // Padded bottom half is pure background.
  CHECK(out.at(80, 50) == doctest::Approx(1.0));

  CHECK_THROWS_AS(resize_square(tall, 4), DataError);
}

TEST_CASE("pgm round-trips images and masks") {
  TempDir tmp;
  Rng rng(31);
  Image img(17, 23);
  for (double& p : img.pixels) p = rng.uniform();
  write_pgm(tmp.file("a.pgm"), img);
  Image back = read_pgm(tmp.file("a.pgm"));
  REQUIRE(back.height == 17);
  REQUIRE(back.width == 23);
  for (int64_t i = 0; i < img.numel(); ++i) {
    CHECK(std::abs(back.pixels[static_cast<size_t>(i)] -
                   img.pixels[static_cast<size_t>(i)]) <= 0.5 / 255.0 + 1e-12);
  }

  Mask m(9, 11);
  m.at(4, 5) = 1;
  m.at(0, 0) = 1;
  write_mask_pgm(tmp.file("m.pgm"), m);
  Mask mb = read_mask_pgm(tmp.file("m.pgm"));
  CHECK(mb.count() == 2);
  CHECK(mb.at(4, 5) == 1);

  std::ofstream bad(tmp.file("bad.pgm"));
  bad << "P2\n2 2\n255\n0 0 0 0\n";
  bad.close();
  CHECK_THROWS_AS(read_pgm(tmp.file("bad.pgm")), DataError);
  CHECK_THROWS_AS(read_pgm(tmp.file("missing.pgm")), DataError);
}

TEST_CASE("checkpoint round-trip is byte-identical and order-independent") {
  TempDir tmp;
  Rng rng(41);
  Tensor w = Tensor::randn({3, 5}, rng, 1.0);
  Tensor b = Tensor::randn({5}, rng, 1.0);
  Tensor s = Tensor::scalar(7.0);

  save_checkpoint(tmp.file("a.phtr"), {{"enc.w", w}, {"enc.b", b}, {"opt.step", s}});
  auto loaded = load_checkpoint(tmp.file("a.phtr"));
  REQUIRE(loaded.size() == 3);
  CHECK(loaded.at("enc.w").shape() == Shape{3, 5});
  for (int64_t i = 0; i < w.numel(); ++i) {
    CHECK(loaded.at("enc.w").data()[i] == w.data()[i]);
  }
  CHECK(loaded.at("opt.step").item() == 7.0);

  // Same tensors in a different insertion order serialize to the same bytes.
  save_checkpoint(tmp.file("b.phtr"), {{"opt.step", s}, {"enc.b", b}, {"enc.w", w}});
  CHECK(slurp(tmp.file("a.phtr")) == slurp(tmp.file("b.phtr")));

  // save -> load -> save is byte-identical.
  std::vector<std::pair<std::string, Tensor>> relist(loaded.begin(), loaded.end());
  save_checkpoint(tmp.file("c.phtr"), relist);
  CHECK(slurp(tmp.file("a.phtr")) == slurp(tmp.file("c.phtr")));

  // f32 storage loses precision but keeps shape and closeness.
  save_checkpoint(tmp.file("f32.phtr"), {{"enc.w", w}}, CheckpointDtype::kF32);
  auto narrow = load_checkpoint(tmp.file("f32.phtr"));
  for (int64_t i = 0; i < w.numel(); ++i) {
    CHECK(narrow.at("enc.w").data()[i] ==
          doctest::Approx(w.data()[i]).epsilon(1e-6));
  }
  CHECK(fs::file_size(tmp.file("f32.phtr")) < fs::file_size(tmp.file("a.phtr")));

  CHECK_THROWS_AS(save_checkpoint(tmp.file("dup.phtr"), {{"x", w}, {"x", b}}),
                  DataError);
  std::ofstream junk(tmp.file("junk.phtr"), std::ios::binary);
  junk << "NOPE";
  junk.close();
  CHECK_THROWS_AS(load_checkpoint(tmp.file("junk.phtr")), DataError);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("nothere.phtr")), DataError);
}

TEST_CASE("vocabulary encodes newline as a token and round-trips") {
  Vocabulary v = Vocabulary::from_corpus("the cat\nsat.");
  CHECK(v.id_of("<pad>") == Vocabulary::kPad);
  CHECK(v.id_of("<bos>") == Vocabulary::kBos);
  CHECK(v.id_of("<eos>") == Vocabulary::kEos);
  CHECK(v.id_of("\n") == Vocabulary::kNewline);
  // symbols: ".", "a", "c", "e", "h", "s", "t", " " -> 8 + 4 specials
  CHECK(v.size() == 12);

  auto ids = v.encode("cat\nsat");
  CHECK(ids[3] == Vocabulary::kNewline);
  CHECK(v.decode(ids) == "cat\nsat");
  auto re = v.encode(v.decode(ids));
  CHECK(re == ids);

  CHECK_THROWS_AS(v.encode("caz"), DataError);
  CHECK_THROWS_AS(v.decode({Vocabulary::kBos}), DataError);
  CHECK_THROWS_AS(v.decode({Vocabulary::kPad}), DataError);

  TempDir tmp;
  v.save(tmp.file("vocab.txt"));
  Vocabulary v2 = Vocabulary::load(tmp.file("vocab.txt"));
  CHECK(v2.size() == v.size());
  CHECK(v2.encode("the cat") == v.encode("the cat"));
  CHECK(v2.id_of(" ") == v.id_of(" "));

  std::ofstream badv(tmp.file("bad.txt"));
  badv << "<pad>\nwrong\n";
  badv.close();
  CHECK_THROWS_AS(Vocabulary::load(tmp.file("bad.txt")), DataError);
}

TEST_CASE("lm tokenizer maps unknown symbols to UNK and round-trips") {
  LmTokenizer t = LmTokenizer::from_corpus("abc def");
  CHECK(t.id_of("<mask>") == LmTokenizer::kMask);
  CHECK(t.id_of("<unk>") == LmTokenizer::kUnk);
  auto ids = t.encode("aXc");
  CHECK(ids[1] == LmTokenizer::kUnk);
  CHECK(t.decode(t.encode("abc def")) == "abc def");

  TempDir tmp;
  t.save(tmp.file("lm_vocab.txt"));
  LmTokenizer t2 = LmTokenizer::load(tmp.file("lm_vocab.txt"));
  CHECK(t2.size() == t.size());
  CHECK(t2.encode("fed cab") == t.encode("fed cab"));
}

TEST_CASE("config presets, file parsing, and strict key checking") {
  ExperimentConfig desk = config_for_scale("desk");
  desk.validate();
  CHECK(desk.enc.image_size == 96);
  CHECK(desk.enc.hidden_size % desk.enc.num_heads == 0);

  ExperimentConfig paper = config_for_scale("paper");
  paper.validate();
  CHECK(paper.enc.num_layers == 12);
  CHECK(paper.enc.hidden_size == 768);
  CHECK(paper.enc.num_heads == 12);
  CHECK(paper.enc.intermediate_size == 3072);
  CHECK(paper.enc.patch_size == 16);
  CHECK(paper.enc.encoder_stride == 16);
  CHECK(paper.lm.num_layers == 6);
  CHECK(paper.lm.max_seq_length == 512);
  CHECK(paper.lm.vocab_size == 50026);
  CHECK(paper.lm.dropout == doctest::Approx(0.10));

  CHECK_THROWS_AS(config_for_scale("huge"), UsageError);

  TempDir tmp;
  {
    std::ofstream f(tmp.file("run.cfg"));
    f << "# comment line\n";
    f << "seed = 99\n";
    f << "train.lr = 0.001  # inline comment\n";
    f << "enc.image_size=32\n";
    f << "enc.patch_size = 8\n";
    f << "enc.stride = 8\n";
  }
  ExperimentConfig cfg = config_for_scale("desk");
  apply_config_file(cfg, tmp.file("run.cfg"));
  cfg.validate();
  CHECK(cfg.seed == 99);
  CHECK(cfg.train.lr == doctest::Approx(0.001));
  CHECK(cfg.enc.image_size == 32);

  {
    std::ofstream f(tmp.file("typo.cfg"));
    f << "enc.imagesize = 32\n";
  }
  ExperimentConfig c2 = config_for_scale("desk");
  CHECK_THROWS_AS(apply_config_file(c2, tmp.file("typo.cfg")), UsageError);

  {
    std::ofstream f(tmp.file("badval.cfg"));
    f << "train.batch = soon\n";
  }
  CHECK_THROWS_AS(apply_config_file(c2, tmp.file("badval.cfg")), UsageError);

  ExperimentConfig broken = config_for_scale("desk");
  broken.enc.patch_size = 7;
  CHECK_THROWS_AS(broken.validate(), UsageError);
  broken = config_for_scale("desk");
  broken.dec.hidden_size = 128;
  CHECK_THROWS_AS(broken.validate(), UsageError);

  // Every declared key is settable and readable back.
  ExperimentConfig echo = config_for_scale("desk");
  for (const auto& [key, value] : config_items(echo)) {
    if (key == "scale") continue;
    apply_config_line(echo, key, value);
  }
  echo.validate();
}
