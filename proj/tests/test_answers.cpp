#include <doctest.h>

#include <future>
#include <thread>

#include "test_support.hpp"

using namespace iviq;
using namespace iviq::testing;
using namespace std::chrono_literals;

namespace {

CorpusManifest singer() {
  return manifest_of({video_with_halves("v1",
                                        {{Slot::object, {"man"}}, {Slot::action, {"singing"}},
                                         {Slot::scene, {"street"}}, {Slot::extra_objects, {"guitar"}}},
                                        {{Slot::object, {"man"}}, {Slot::action, {"dancing"}},
                                         {Slot::scene, {"street"}}, {Slot::extra_objects, {"microphone"}}})});
}

AnswerRequest ask(std::string subject, std::string text, QuestionKind kind, Segment s = Segment::whole) {
  return {std::move(subject), {std::move(text), kind, s}, 30.0};
}

}  // namespace

TEST_CASE("videoqa reads the truth") {
  const auto m = singer();
  const auto g = make_gateway(m);
  const auto first = answer_videoqa(ask("v1", "in the first half of the video, what is the man doing?",
                                        QuestionKind::action, Segment::first_half),
                                    *g);
  CHECK(first.answer == "singing");
  CHECK(first.provider == "videoqa");
  CHECK(first.latency_s >= 0.0);
  CHECK(answer_videoqa(ask("v1", "in the second half of the video, what is the man doing?", QuestionKind::action,
                           Segment::second_half),
                       *g)
            .answer == "dancing");
  CHECK(answer_videoqa(ask("v1", "what is the man doing?", QuestionKind::action), *g).answer == "singing and dancing");
  CHECK(answer_videoqa(ask("v1", "what other objects are in the video?", QuestionKind::object_inventory,
                           Segment::first_half),
                       *g)
            .answer == "guitar");
  CHECK_THROWS_AS(answer_videoqa(ask("v9", "where is the man?", QuestionKind::scene), *g), NotFoundError);
}

TEST_CASE("videoqa deadline") {
  const auto m = singer();
  const auto g = make_gateway(m);
  DelayGateway slow(*g, 20ms);
  auto req = ask("v1", "where is the man?", QuestionKind::scene);
  req.deadline_s = 0.001;
  CHECK_THROWS_AS(answer_videoqa(req, slow), TimeoutError);
  req.deadline_s = 0;
  CHECK_THROWS_AS(answer_videoqa(req, *g), ValidationError);
}

TEST_CASE("scripted answers") {
  const auto truth = video("v1", {{Slot::object, {"man", "guitar", "microphone"}}, {Slot::action, {"singing"}},
                                  {Slot::scene, {"street"}}})
                         .truth.value();
  CHECK(answer_scripted(ask("v1", "what is the man doing?", QuestionKind::action), truth).answer == "singing");
  CHECK(answer_scripted(ask("v1", "what other objects are in the video?", QuestionKind::object_inventory), truth)
            .answer == "guitar, microphone");
  CHECK(answer_scripted(ask("v1", "what object is in the video?", QuestionKind::object_identify), truth).answer ==
        "a man");
  CHECK(answer_scripted(ask("v1", "anything else?", QuestionKind::open), truth).answer ==
        "man guitar microphone singing street");
  CHECK_THROWS_AS(answer_scripted(ask("v1", "x?", QuestionKind::scene, Segment::first_half), truth), CapabilityError);

  auto m = singer();
  m.videos.push_back(VideoRecord{"v2", "synthetic://v2", {Segment::whole}, std::nullopt});
  ScriptedAnswerer s(m);
  CHECK(s.answer(ask("v1", "where is the man?", QuestionKind::scene)).answer == "street");
  CHECK_THROWS_AS(s.answer(ask("v2", "where is the man?", QuestionKind::scene)), NotFoundError);
}

TEST_CASE("cap_lm composes caption and language model") {
  const auto m = manifest_of({video("v1", {{Slot::object, {"dog"}}, {Slot::action, {"running"}}, {Slot::scene, {"park"}}}),
                              video("v2", {{Slot::object, {"lamp"}}, {Slot::material, {"brass"}}})});
  const auto g = make_gateway(m);
  // Caption "a dog running in the park"; the LM answers from that text.
  CHECK(g->caption("v1") == "a dog running in the park");
  CHECK(answer_cap_lm(ask("v1", "what is the dog doing?", QuestionKind::action), *g).answer == "running");
  CHECK(answer_cap_lm(ask("v1", "where is the dog?", QuestionKind::scene), *g).answer == "park");
  // The caption has no scene or material: the answer is whatever the caption allows.
  CHECK(answer_cap_lm(ask("v2", "where is the lamp?", QuestionKind::scene), *g).answer == "lamp");
  CHECK(answer_videoqa(ask("v2", "what is the material in the video?", QuestionKind::open), *g).answer == "brass");
  CHECK(answer_cap_lm(ask("v2", "what is the material in the video?", QuestionKind::open), *g).answer != "brass");

  const auto again = answer_cap_lm(ask("v1", "what other objects are in the video?", QuestionKind::object_inventory), *g);
  CHECK(answer_cap_lm(ask("v1", "what other objects are in the video?", QuestionKind::object_inventory), *g).answer ==
        again.answer);
  CHECK(render_cap_lm_prompt("a dog", "where?") ==
        "Answer the question based on the description. Description: a dog Question: where?");

  FaultyGateway faulty(*g);
  faulty.fail_caption_for = "v1";
  try {
    answer_cap_lm(ask("v1", "where is the dog?", QuestionKind::scene), faulty);
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.endpoint() == "/v1/caption");
  }
  faulty.fail_caption_for.clear();
  faulty.fail_lm = true;
  try {
    answer_cap_lm(ask("v1", "where is the dog?", QuestionKind::scene), faulty);
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.endpoint() == "/v1/lm/generate");
  }
}

TEST_CASE("cap_lm latency covers both calls") {
  const auto m = singer();
  const auto g = make_gateway(m);
  DelayGateway slow(*g, 30ms);
  const auto req = ask("v1", "where is the man?", QuestionKind::scene);
  CHECK(answer_videoqa(req, slow).latency_s >= 0.03);
  CHECK(answer_cap_lm(req, slow).latency_s >= 0.06);
}

TEST_CASE("human relay") {
  HumanRelay relay;
  relay.attach("s1");
  const Question q{"where is the man?", QuestionKind::scene, Segment::whole};
  relay.ask("s1", q);
  CHECK(relay.has_pending("s1"));
  CHECK_THROWS_AS(relay.ask("s1", q), ValidationError);
  CHECK_THROWS_AS(relay.deliver("s1", "   "), ValidationError);
  CHECK(relay.pending("s1") == q);

  auto waiter = std::async(std::launch::async, [&] { return relay.await("s1", 5.0); });
  std::this_thread::sleep_for(20ms);
  relay.deliver("s1", "  Street ");
  const auto r = waiter.get();
  CHECK(r.answer == "street");
  CHECK(r.provider == "human");
  CHECK(r.latency_s >= 0.015);
  CHECK(!relay.has_pending("s1"));

  // Detach wakes the waiter; the question survives for a later resume.
  relay.ask("s1", q);
  auto detached = std::async(std::launch::async, [&] { return relay.await("s1", 5.0); });
  std::this_thread::sleep_for(10ms);
  relay.detach("s1");
  CHECK_THROWS_AS(detached.get(), DetachedError);
  CHECK(relay.has_pending("s1"));
  relay.attach("s1");
  relay.deliver("s1", "street");
  CHECK(answer_human({"s1", q, 1.0}, relay).answer == "street");

  relay.ask("s1", q);
  CHECK_THROWS_AS(relay.await("s1", 0.01), TimeoutError);
  CHECK_THROWS_AS(relay.await("nope", 1.0), NotFoundError);
  relay.forget("s1");
  CHECK(!relay.has_pending("s1"));
}

TEST_CASE("providers are substitutable and latency adds up") {
  const auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  const auto engine = make_engine(m);
  SessionConfig c;
  ExperimentOptions o;
  o.keep_records = true;
  o.limit = 20;
  c.answer_provider = AnswerProviderKind::scripted;
  const auto scripted = run_experiment(*engine->retriever, c, o);
  c.answer_provider = AnswerProviderKind::videoqa;
  const auto vqa = run_experiment(*engine->retriever, c, o);
  CHECK(scripted.rounds == vqa.rounds);
  for (std::size_t i = 0; i < vqa.sessions.size(); ++i) {
    CHECK(scripted.sessions[i].record->query.composed == vqa.sessions[i].record->query.composed);
  }

  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : vqa.sessions) {
    for (const auto& r : s.record->rounds) {
      sum += r.answer_latency_s;
      ++n;
    }
  }
  REQUIRE(vqa.latency.contains("videoqa"));
  CHECK(vqa.latency.at("videoqa").answers == n);
  CHECK(std::abs(vqa.latency.at("videoqa").total_s - sum) <= 0.001 * static_cast<double>(n));
  CHECK_THROWS_AS(make_answer_provider(AnswerProviderKind::human, *engine->gateway, m), ValidationError);
}
