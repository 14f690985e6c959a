#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "test_support.hpp"

using namespace iviq;
using namespace iviq::testing;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(IVIQ_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct World {
  std::filesystem::path dir = temp_dir("cli");
  std::string manifest = (dir / "m.json").string();
  World() {
    const auto r = cli("world --out " + manifest + " --videos 60 --per-object 10 --living 3 --dimension 64");
    REQUIRE_MESSAGE(r.code == 0, r.out);
  }
};

}  // namespace

TEST_CASE("missing --manifest is a usage error") {
  for (const char* sub : {"simulate --query x", "eval --out /tmp/x", "index build --out /tmp/x", "serve"}) {
    const auto r = cli(sub);
    CHECK_MESSAGE(r.code == 2, sub);
    CHECK(r.out.find("--manifest") != std::string::npos);
  }
  CHECK(cli("").code == 2);
  CHECK(cli("bogus").code == 2);
}

TEST_CASE("eval twice writes identical files") {
  World w;
  const auto a = cli("eval --manifest " + w.manifest + " --seed 7 --provider synthetic --out " + (w.dir / "a").string());
  REQUIRE_MESSAGE(a.code == 0, a.out);
  const auto b = cli("eval --manifest " + w.manifest + " --seed 7 --provider synthetic --parallelism 3 --out " +
                     (w.dir / "b").string());
  REQUIRE_MESSAGE(b.code == 0, b.out);
  CHECK(slurp(w.dir / "a.json") == slurp(w.dir / "b.json"));
  CHECK(slurp(w.dir / "a.csv") == slurp(w.dir / "b.csv"));
  CHECK(slurp(w.dir / "a.csv").rfind("round,R1,R5,R10,MdR\n", 0) == 0);
  CHECK(std::filesystem::exists(w.dir / "a.latency.json"));
  const auto c = cli("eval --manifest " + w.manifest + " --seed 8 --out " + (w.dir / "c").string());
  REQUIRE(c.code == 0);
  CHECK(slurp(w.dir / "a.json") != slurp(w.dir / "c.json"));
}

TEST_CASE("simulate prints at most six question and answer pairs") {
  World w;
  const auto rec = (w.dir / "session.json").string();
  const auto r = cli("simulate --manifest " + w.manifest + " --generator heuristic --query \"a man is singing\" --out " + rec);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  std::size_t questions = 0;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) questions += line.rfind("Q", 0) == 0;
  CHECK(questions >= 1);
  CHECK(questions <= 6);
  CHECK(r.out.find("what is the man doing?") != std::string::npos);
  const auto record = session_record_from_json(nlohmann::json::parse(slurp(rec)));
  CHECK(record.rounds.size() == questions);
}

TEST_CASE("index build and verify") {
  World w;
  const auto idx = (w.dir / "m.idx").string();
  REQUIRE(cli("index build --manifest " + w.manifest + " --out " + idx).code == 0);
  const auto ok = cli("index verify --manifest " + w.manifest + " --index " + idx);
  CHECK_MESSAGE(ok.code == 0, ok.out);
  CHECK(cli("index verify --manifest " + w.manifest + " --index " + idx + " --seed 99").code == 1);
  {
    std::fstream f(idx, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK(cli("index verify --manifest " + w.manifest + " --index " + idx).code == 1);
  const auto sim = cli("eval --manifest " + w.manifest + " --index " + (w.dir / "missing.idx").string() + " --out " +
                       (w.dir / "r").string());
  CHECK(sim.code == 1);
}

TEST_CASE("config errors are listed together") {
  World w;
  const auto cfg = w.dir / "bad.json";
  std::ofstream(cfg) << R"({"session":{"max_rounds":20,"caption_k":0},"parallelism":0,"surprise":1})";
  const auto r = cli("eval --manifest " + w.manifest + " --config " + cfg.string() + " --out " + (w.dir / "r").string());
  CHECK(r.code == 1);
  for (const char* part : {"max_rounds", "caption_k", "parallelism", "surprise"}) {
    CHECK_MESSAGE(r.out.find(part) != std::string::npos, part);
  }
  CHECK(cli("simulate --manifest " + w.manifest + " --query x --generator nope").code == 1);
}

TEST_CASE("timing writes a per-provider table") {
  World w;
  const auto out = (w.dir / "timing").string();
  const auto r = cli("timing --manifest " + w.manifest + " --sample-n 5 --providers videoqa,cap_lm --delay-ms 2 --out " + out);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("cap_lm") != std::string::npos);
  CHECK(cli("timing --manifest " + w.manifest + " --sample-n 500 --out " + out).code == 1);
}
