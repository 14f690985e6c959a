#include <doctest.h>

#include <atomic>
#include <random>

#include "test_support.hpp"
#include "stub_server.hpp"

using namespace iviq;
using namespace iviq::testing;
using nlohmann::json;

namespace {

std::shared_ptr<SyntheticWorld> world_of(const CorpusManifest& m, std::uint64_t seed = 7, double noise = 0.0) {
  return std::make_shared<SyntheticWorld>(m, seed, m.dimension, noise);
}

double cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) { return a.cast<double>().dot(b.cast<double>()); }

}  // namespace

TEST_CASE("token vectors match the independent oracle") {
  // tests/oracles/synthetic_oracle.py
  const auto man = token_vector(7, "man", 256);
  CHECK(man[0] == doctest::Approx(-0.029617761865551963).epsilon(1e-12));
  CHECK(man[1] == doctest::Approx(0.08298484160099845).epsilon(1e-12));
  CHECK(man[2] == doctest::Approx(0.03111816808471101).epsilon(1e-12));
  CHECK(man[3] == doctest::Approx(-0.0714873493455402).epsilon(1e-12));
  const auto street = token_vector(7, "street", 256);
  CHECK(street[0] == doctest::Approx(-0.016018486823560076).epsilon(1e-12));
  CHECK(street[3] == doctest::Approx(0.06886183882071294).epsilon(1e-12));
  CHECK(man.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(token_vector(7, "man", 256) == man);
  CHECK(token_vector(8, "man", 256) != man);
}

TEST_CASE("embed_text is a bag of content tokens") {
  const auto m = manifest_of({video("a", {{Slot::object, {"man"}}})});
  SyntheticGateway g(world_of(m));
  CHECK(g.embed_text("man singing") == g.embed_text("singing man"));
  CHECK(g.embed_text("man [SEP] street") == g.embed_text("man street"));
  CHECK(g.embed_text("Man, singing!") == g.embed_text("man singing"));
  CHECK(g.embed_text("what is the of") == g.world().null_vector());
  CHECK(g.embed_text("man man") == g.embed_text("man"));
  CHECK(g.embed_text("man").norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("overlap ordering holds for any seed") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = manifest_of({video("x", {{Slot::object, {"man"}}, {Slot::action, {"singing"}}, {Slot::scene, {"street"}}}),
                                video("y", {{Slot::object, {"man"}}, {Slot::action, {"cooking"}}, {Slot::scene, {"kitchen"}}})},
                               64, seed);
    SyntheticGateway g(world_of(m, seed));
    const auto q = g.embed_text("man singing street");
    CHECK(cosine(q, g.embed_video("x", Segment::whole)) > cosine(q, g.embed_video("y", Segment::whole)));
  }
}

TEST_CASE("shared space: a video's own tokens rank it first when token sets are disjoint") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<VideoRecord> vs;
    for (int i = 0; i < 30; ++i) {
      const std::string s = std::to_string(i);
      vs.push_back(video("v" + s, {{Slot::object, {"obj" + s}}, {Slot::action, {"act" + s}}, {Slot::scene, {"sc" + s}}}));
    }
    const auto m = manifest_of(vs, 32, seed);
    SyntheticGateway g(world_of(m, seed));
    const auto idx = build_index(m, g);
    const auto gallery = idx.gallery();
    for (const auto& v : m.videos) {
      const auto q = g.embed_text(text::join(v.truth->all_tokens(Segment::whole), " "));
      CHECK(rank_of(rank_cosine(q, gallery), v.video_id).rank == 1);
    }
  }
}

TEST_CASE("caption and ITM rules") {
  const auto m = manifest_of({video("d", {{Slot::object, {"dog"}}, {Slot::action, {"running"}}, {Slot::scene, {"park"}}}),
                              video("o", {{Slot::object, {"lamp"}}})});
  SyntheticGateway g(world_of(m));
  CHECK(g.caption("d") == "a dog running in the park");
  CHECK(g.caption("o") == "a lamp");
  // Stopword "a" dropped: {dog, running} against {dog, running, park}.
  CHECK(g.itm("d", "a dog running") == doctest::Approx(2.0 / 3.0));
  CHECK(g.itm("d", "a cat sleeping") == 0.0);
  CHECK(g.itm("d", "dog running park") == 1.0);
}

TEST_CASE("unknown id and unsupported segment") {
  const auto m = manifest_of({video("a", {{Slot::object, {"dog"}}})});
  SyntheticGateway g(world_of(m));
  CHECK_THROWS_AS(g.caption("zz"), NotFoundError);
  CHECK_THROWS_AS(g.vqa("zz", "where is the dog?", Segment::whole), NotFoundError);
  CHECK_THROWS_AS(g.embed_video("a", Segment::first_half), CapabilityError);
  CHECK_THROWS_AS(g.vqa("a", "where is the dog?", Segment::second_half), CapabilityError);
}

TEST_CASE("noise rate 0 makes VQA the scripted oracle") {
  const auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  SyntheticGateway g(world_of(m, 7, 0.0));
  std::vector<Question> questions = {
      {std::string(phrasing::kIdentifyObject), QuestionKind::object_identify, Segment::whole},
      {std::string(phrasing::kInventory), QuestionKind::object_inventory, Segment::whole},
      {phrasing::slot_question(Slot::color), QuestionKind::open, Segment::whole},
      {"what is happening?", QuestionKind::open, Segment::whole},
  };
  for (const auto& v : m.videos) {
    const auto object = v.truth->tokens(Segment::whole, Slot::object).front();
    auto qs = questions;
    qs.push_back({phrasing::action_question(object), QuestionKind::action, Segment::whole});
    qs.push_back({phrasing::scene_question(object), QuestionKind::scene, Segment::whole});
    const auto halves = qs;
    for (const auto& q : halves) {
      for (const Segment s : {Segment::first_half, Segment::second_half}) {
        qs.push_back({phrasing::with_segment_prefix(q.text, s), q.kind, s});
      }
    }
    for (const auto& q : qs) {
      const auto scripted = answer_scripted({v.video_id, q, 30.0}, *v.truth).answer;
      CHECK(g.vqa(v.video_id, q.text, q.segment) == scripted);
    }
  }
}

TEST_CASE("noisy VQA is seeded and swaps within the slot") {
  const auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  SyntheticGateway a(world_of(m, 7, 0.5));
  SyntheticGateway b(world_of(m, 7, 0.5));
  int changed = 0;
  const auto& scenes = a.world().slot_vocabulary(Slot::scene);
  for (const auto& v : m.videos) {
    const auto q = phrasing::scene_question(v.truth->tokens(Segment::whole, Slot::object).front());
    const auto answer = a.vqa(v.video_id, q, Segment::whole);
    CHECK(answer == b.vqa(v.video_id, q, Segment::whole));
    CHECK(std::find(scenes.begin(), scenes.end(), answer) != scenes.end());
    changed += answer != v.truth->tokens(Segment::whole, Slot::scene).front() ? 1 : 0;
  }
  CHECK(changed > 10);
  CHECK(changed < 50);
}

TEST_CASE("synthetic LM question rule, recomputed") {
  // Slots in fixed order; an asked slot's question appears verbatim in the query.
  const std::vector<Slot> order = {Slot::action, Slot::scene, Slot::object, Slot::color, Slot::material};
  const std::string q0 = "a man is singing";
  const std::string q1 = q0 + " [SEP] what is the action in the video? singing";
  for (const auto& q : {q0, q1}) {
    const std::string prompt = render_auto_text(q);
    std::vector<Slot> unasked;
    for (const Slot s : order) {
      if (q.find(phrasing::slot_question(s)) == std::string::npos) unasked.push_back(s);
    }
    const Slot expected = unasked[fnv1a64(prompt) % unasked.size()];
    CHECK(synthetic_lm(prompt) == phrasing::slot_question(expected));
    CHECK(synthetic_lm(prompt) == synthetic_lm(prompt));
  }
  // Caption-conditioned: only slots whose caption words are missing from the query.
  CaptionSet cs{0, {{"a", "a man singing in the park"}, {"b", "a man singing in the street"}}};
  const std::string prompt = render_auto_text_vid("a man singing", cs);
  CHECK(synthetic_lm(prompt) == phrasing::slot_question(Slot::scene));
  // CAP+LM prompt answered from the caption.
  CHECK(synthetic_lm(render_cap_lm_prompt("a dog running in the park", "where is the dog?")) == "park");
  CHECK(synthetic_lm(render_cap_lm_prompt("a dog running", "where is the dog?")) == "dog running");
}

TEST_CASE("remote transport round-trips through the provider routes") {
  const auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  SyntheticGateway local(world_of(m));
  StubServer stub;
  mount_provider_routes(stub.server, local);
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = m.dimension, .timeout_s = 5.0});
  const auto& v = m.videos[3];
  CHECK(remote.embed_text("a man singing") == local.embed_text("a man singing"));
  CHECK(remote.embed_video(v.video_id, Segment::first_half) == local.embed_video(v.video_id, Segment::first_half));
  CHECK(remote.caption(v.video_id) == local.caption(v.video_id));
  CHECK(remote.itm(v.video_id, "a cup") == local.itm(v.video_id, "a cup"));
  CHECK(remote.vqa(v.video_id, phrasing::kInventory, Segment::whole) ==
        local.vqa(v.video_id, phrasing::kInventory, Segment::whole));
  CHECK(remote.lm_generate(render_auto_text("a cup"), 32) == local.lm_generate(render_auto_text("a cup"), 32));
  try {
    remote.caption("nope");
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.status() == 404);
    CHECK(e.attempts() == 1);
  }
}

TEST_CASE("remote vqa schema example") {
  StubServer stub;
  json seen;
  stub.server.Post("/v1/vqa", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"answer":"singing"})", "application/json");
  });
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = 8});
  CHECK(remote.vqa("v1", "what is the man doing?", Segment::whole) == "singing");
  CHECK(seen == json::parse(R"({"video_id":"v1","question":"what is the man doing?","segment":"whole"})"));
}

TEST_CASE("remote retries server errors and reports the attempt count") {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server.Post("/v1/caption", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
    res.set_content(R"({"error":{"code":"boom","message":"down"}})", "application/json");
  });
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = 8, .backoff = std::chrono::milliseconds(1)});
  try {
    remote.caption("v1");
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.attempts() == 3);
    CHECK(std::string(e.what()).find("after 3 attempts") != std::string::npos);
  }
  CHECK(calls == 3);
}

TEST_CASE("remote recovers when a retry succeeds") {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server.Post("/v1/caption", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"caption":"a dog"})", "application/json");
  });
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = 8, .backoff = std::chrono::milliseconds(1)});
  CHECK(remote.caption("v1") == "a dog");
  CHECK(calls == 3);
}

TEST_CASE("remote never retries 4xx") {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server.Post("/v1/itm", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 422;
    res.set_content(R"({"error":{"code":"bad","message":"no"}})", "application/json");
  });
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = 8, .backoff = std::chrono::milliseconds(1)});
  CHECK_THROWS_AS(remote.itm("v1", "x"), ProviderError);
  CHECK(calls == 1);
}

TEST_CASE("remote malformed responses") {
  StubServer stub;
  stub.server.Post("/v1/vqa", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text":"singing"})", "application/json");
  });
  stub.server.Post("/v1/embed/text", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vector":[1,0,0]})", "application/json");
  });
  stub.server.Post("/v1/caption", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>", "text/html");
  });
  stub.start();
  RemoteGateway remote({.base_url = stub.url(), .dimension = 8});
  CHECK_THROWS_WITH_AS(remote.vqa("v1", "q", Segment::whole), doctest::Contains("answer"), ProviderError);
  CHECK_THROWS_WITH_AS(remote.embed_text("x"), doctest::Contains("dimension"), ProviderError);
  CHECK_THROWS_WITH_AS(remote.caption("v1"), doctest::Contains("malformed"), ProviderError);
}

TEST_CASE("remote transport errors are retried then surfaced") {
  RemoteGateway remote({.base_url = "http://127.0.0.1:1", .dimension = 8, .timeout_s = 0.5,
                        .backoff = std::chrono::milliseconds(1)});
  try {
    remote.caption("v1");
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.attempts() == 3);
  }
  CHECK_THROWS_AS(RemoteGateway({.base_url = "http://x", .dimension = 4}), ValidationError);
}

TEST_CASE("ITM disagrees with cosine on some rankings") {
  int disagreements = 0;
  int trials = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = small_world_spec(seed);
    const auto m = make_synthetic_manifest(spec, lexicon());
    SyntheticGateway g(world_of(m, seed));
    const auto gallery = build_index(m, g).gallery();
    for (std::size_t i = 0; i < m.captions.size(); i += 10) {
      const auto& c = m.captions[i];
      const auto cos = rank_cosine(g.embed_text(c.query + " " + g.caption(c.video_id)), gallery);
      const auto re = rerank_itm(cos, c.query + " " + g.caption(c.video_id), 10, g);
      ++trials;
      disagreements += std::equal(cos.entries.begin(), cos.entries.begin() + 10, re.entries.begin(),
                                  [](const auto& a, const auto& b) { return a.video_id == b.video_id; })
                           ? 0
                           : 1;
    }
  }
  CHECK(disagreements > trials / 4);
}
