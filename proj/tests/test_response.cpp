#include <doctest.h>

#include "generators.hpp"
#include "tforge/response.hpp"

using namespace tforge;
using namespace tforge::response;

namespace {

const std::string kPayload = R"({"bbox":[10,20,110,220]})";

}  // namespace

TEST_CASE("parse training and inference layouts") {
  const auto train = parse("<think>t</think><answer>" + kPayload + "</answer><d_think>d</d_think>");
  CHECK(train.order == SectionOrder::from_code("cAd"));
  CHECK(train.concise == "t");
  CHECK(train.detailed == "d");
  REQUIRE(train.answer);
  CHECK(train.diagnostics.empty());

  const auto infer = parse("<think>t</think><answer>" + kPayload + "</answer>");
  CHECK(infer.order == SectionOrder::inference());
  CHECK_FALSE(infer.detailed);

  const auto first = parse("<answer>" + kPayload + "</answer><think>t</think><d_think>d</d_think>");
  CHECK(detect_order(first) == SectionOrder::from_code("Acd"));
}

TEST_CASE("parse malformed payload keeps the raw answer") {
  const auto r = parse("<answer>not-json</answer>");
  CHECK(r.answer_raw == "not-json");
  CHECK_FALSE(r.answer);
  CHECK(r.has(DiagnosticCode::MalformedPayload));
}

TEST_CASE("parse defects") {
  SUBCASE("unclosed tag") {
    const auto r = parse("<think>abc<answer>" + kPayload + "</answer>");
    CHECK(r.has(DiagnosticCode::UnclosedTag));
    CHECK_FALSE(r.concise);
    CHECK(r.answer);
  }
  SUBCASE("nested tag of the same kind") {
    const auto r = parse("<think>a<think>b</think></think><answer>" + kPayload + "</answer>");
    CHECK(r.has(DiagnosticCode::NestedTag));
    CHECK_FALSE(r.concise);
  }
  SUBCASE("duplicate section") {
    const auto r = parse("<think>a</think><think>b</think><answer>" + kPayload + "</answer>");
    CHECK(r.has(DiagnosticCode::DuplicateSection));
    CHECK_FALSE(r.concise);
  }
  SUBCASE("empty section") {
    const auto r = parse("<think></think><answer>" + kPayload + "</answer>");
    CHECK(r.has(DiagnosticCode::EmptySection));
    CHECK_FALSE(r.concise);
  }
  SUBCASE("stray text is kept in raw") {
    const std::string raw = "hello <think>a</think><answer>" + kPayload + "</answer>";
    const auto r = parse(raw);
    CHECK(r.has(DiagnosticCode::StrayText));
    CHECK(r.raw == raw);
    CHECK(r.concise == "a");
  }
  SUBCASE("stray close tag") {
    CHECK(parse("</think><answer>" + kPayload + "</answer>").has(DiagnosticCode::StrayCloseTag));
  }
  SUBCASE("tags are case sensitive") {
    const auto r = parse("<THINK>a</THINK>");
    CHECK_FALSE(r.concise);
    CHECK(r.has(DiagnosticCode::StrayText));
  }
}

TEST_CASE("whitespace inside tags is preserved") {
  const auto r = parse("<think>  a b\n</think><answer>" + kPayload + "</answer>");
  CHECK(r.concise == "  a b\n");
}

TEST_CASE("decode_answer schema") {
  const auto a = decode_answer(R"({"bbox":[10,20,110,220]})");
  CHECK(a.box.min() == geometry::Pointd(10, 20));
  CHECK(a.box.max() == geometry::Pointd(110, 220));
  CHECK(a.points.empty());

  const auto b = decode_answer(R"({"bbox":[0,0,4,4],"points":[[2,2]]})");
  REQUIRE(b.points.size() == 1);
  CHECK(b.points[0] == geometry::Pointd(2, 2));

  for (const char* bad : {R"({"bbox":[0,0,4]})", R"({"bbox":[0,0,4,"4"]})", R"([0,0,4,4])",
                          R"({"box":[0,0,4,4]})", R"({"bbox":[0,0,4,true]})", "",
                          R"({"bbox":[0,0,4,4],"points":[[1]]})", R"({"bbox":[0,0,4,1e999]})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(decode_answer(bad), Error);
  }
}

TEST_CASE("decode_answer classifies random JSON") {
  gen::Rng rng(21);
  for (int i = 0; i < 3000; ++i) {
    const std::string s = gen::fuzz_bytes(rng, 12);
    try {
      (void)decode_answer(s);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedPayload);
    }
  }
}

TEST_CASE("serialize") {
  StructuredResponse r;
  r.answer = decode_answer(kPayload);
  r.order = SectionOrder::from_code("A");
  CHECK(serialize(r) == "<answer>" + kPayload + "</answer>");

  r.concise = "c";
  r.detailed = "d";
  r.order = SectionOrder::from_code("dcA");
  CHECK(serialize(r) == "<d_think>d</d_think><think>c</think><answer>" + kPayload + "</answer>");

  r.order = SectionOrder::from_code("cd");
  CHECK_THROWS_AS(serialize(r), Error);
  r.order = SectionOrder::from_code("cA");
  r.concise = "has </think> inside";
  CHECK_THROWS_AS(serialize(r), Error);
}

TEST_CASE("section order codes") {
  CHECK(SectionOrder::from_code("cAd").code() == "cAd");
  CHECK(SectionOrder::training().precedes(Section::Concise, Section::Detailed));
  CHECK_THROWS_AS(SectionOrder::from_code("cAc"), Error);
  CHECK_THROWS_AS(SectionOrder::from_code("cx"), Error);
  CHECK_FALSE(SectionOrder::from_code("cd").complete());
}

TEST_CASE("serialize then parse is identity across orders") {
  gen::Rng rng(22);
  for (const auto& code : gen::order_codes()) {
    const SectionOrder order = SectionOrder::from_code(code);
    for (int i = 0; i < 200; ++i) {
      const StructuredResponse r = gen::response(rng, order);
      const std::string text = serialize(r);
      const StructuredResponse back = parse(text);
      CAPTURE(text);
      CHECK(back.diagnostics.empty());
      CHECK(back.same_structure(r));
      CHECK(serialize(back) == text);
    }
  }
}

TEST_CASE("parse never throws on fuzz input") {
  gen::Rng rng(23);
  for (int i = 0; i < 5000; ++i) {
    const std::string s = gen::fuzz_bytes(rng, 40);
    StructuredResponse r;
    CHECK_NOTHROW(r = parse(s));
    CHECK(r.raw == s);
    // every present section is clean enough to serialize again
    if (r.answer && !r.has(DiagnosticCode::MalformedPayload)) {
      bool clean = true;
      for (Section sec : r.order.sections()) clean = clean && r.text(sec).has_value();
      if (clean) CHECK_NOTHROW((void)serialize(r));
    }
  }
}
