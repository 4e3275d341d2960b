#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "cct/crowd.hpp"
#include "cct/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cct;
using testing::Gen;
using testing::ScratchDir;

namespace {

// Plurality per item over class labels plus NONE; ties go to the lowest
// class, NONE counted after every class.
std::vector<int> oracle_majority(const AnnotationTable& t) {
  std::vector<int> out(t.item_count, kDiscarded);
  for (std::size_t i = 0; i < t.item_count; ++i) {
    std::map<int, int> counts;
    for (const auto& r : t.records)
      if (r.item == i) ++counts[r.label == kNoneLabel ? t.class_count : r.label];
    int best = -1, best_count = 0;
    for (const auto& [label, c] : counts)
      if (c > best_count) {
        best = label;
        best_count = c;
      }
    if (best >= 0 && best < t.class_count) out[i] = best;
  }
  return out;
}

struct OraclePm {
  std::vector<int> labels;
  std::vector<double> expertise;
  int iterations = 0;
  bool tied = false;
};

// Straight-line PM: weighted plurality (unweighted where an item's weight is
// zero), then expertise from mistake counts. Records whether any vote tied.
OraclePm oracle_pm(const AnnotationTable& t, double s, int max_iter) {
  OraclePm out;
  out.expertise.assign(t.annotator_count, 1.0);
  const int none = t.class_count;
  auto slot = [&](int label) { return label == kNoneLabel ? none : label; };
  for (int iter = 1; iter <= max_iter; ++iter) {
    std::vector<int> labels(t.item_count, kDiscarded);
    for (std::size_t i = 0; i < t.item_count; ++i) {
      std::vector<double> w(static_cast<std::size_t>(none) + 1, 0.0), c(w.size(), 0.0);
      double total = 0.0;
      bool seen = false;
      for (const auto& r : t.records)
        if (r.item == i) {
          w[static_cast<std::size_t>(slot(r.label))] += out.expertise[r.annotator];
          c[static_cast<std::size_t>(slot(r.label))] += 1.0;
          total += out.expertise[r.annotator];
          seen = true;
        }
      if (!seen) continue;
      const auto& score = total > 0.0 ? w : c;
      const auto top = std::max_element(score.begin(), score.end());
      if (std::count(score.begin(), score.end(), *top) > 1) out.tied = true;
      const int best = static_cast<int>(top - score.begin());
      labels[i] = best == none ? kDiscarded : best;
    }
    out.iterations = iter;
    if (iter > 1 && labels == out.labels) break;
    out.labels = labels;
    std::vector<double> m(t.annotator_count, 0.0);
    for (const auto& r : t.records)
      if (slot(r.label) != (labels[r.item] == kDiscarded ? none : labels[r.item])) m[r.annotator] += 1.0;
    const double worst = *std::max_element(m.begin(), m.end());
    for (std::size_t a = 0; a < t.annotator_count; ++a) out.expertise[a] = -std::log((m[a] + s) / (worst + s));
  }
  return out;
}

AnnotationTable random_table(Gen& g, bool with_none) {
  AnnotationTable t;
  t.item_count = static_cast<std::size_t>(g.integer(1, 40));
  t.annotator_count = static_cast<std::size_t>(g.integer(1, 9));
  t.class_count = g.integer(2, 6);
  for (std::size_t i = 0; i < t.item_count; ++i)
    for (std::size_t a = 0; a < t.annotator_count; ++a) {
      if (g.uniform() < 0.3) continue;
      int label = g.integer(0, t.class_count - 1);
      if (with_none && g.uniform() < 0.1) label = kNoneLabel;
      t.records.push_back({i, a, label});
    }
  if (t.records.empty()) t.records.push_back({0, 0, 0});
  return t;
}

}  // namespace

TEST_SUITE("crowd") {
  TEST_CASE("majority vote basics") {
    AnnotationTable one{{{0, 0, 2}, {1, 0, 1}}, 2, 1, 3};
    CHECK(majority_vote(one) == std::vector<int>{2, 1});
    AnnotationTable two_one{{{0, 0, 1}, {0, 1, 1}, {0, 2, 0}}, 1, 3, 2};
    CHECK(majority_vote(two_one) == std::vector<int>{1});
    AnnotationTable none_wins{{{0, 0, kNoneLabel}, {0, 1, kNoneLabel}, {0, 2, 0}}, 1, 3, 2};
    CHECK(majority_vote(none_wins) == std::vector<int>{kDiscarded});
    CHECK_THROWS_AS(majority_vote(AnnotationTable{{}, 1, 1, 2}), ContractError);
  }

  TEST_CASE("majority vote matches the oracle") {
    Gen g(100);
    for (int trial = 0; trial < 300; ++trial) {
      const auto t = random_table(g, true);
      CHECK(majority_vote(t) == oracle_majority(t));
    }
  }

  TEST_CASE("first PM iteration is the majority vote") {
    Gen g(101);
    for (int trial = 0; trial < 200; ++trial) {
      const auto t = random_table(g, true);
      const auto r = pm_infer(t, PmOptions{0.5, 1});
      CHECK(r.iterations == 1);
      CHECK(r.labels == majority_vote(t));
    }
  }

  TEST_CASE("single annotator and unanimous crowds") {
    AnnotationTable single{{{0, 0, 1}, {1, 0, 0}, {2, 0, 2}}, 3, 1, 3};
    const auto r = pm_infer(single);
    CHECK(r.labels == std::vector<int>{1, 0, 2});

    AnnotationTable unanimous;
    unanimous.item_count = 10;
    unanimous.annotator_count = 4;
    unanimous.class_count = 3;
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t a = 0; a < 4; ++a) unanimous.records.push_back({i, a, static_cast<int>(i % 3)});
    const auto u = pm_infer(unanimous);
    CHECK(u.converged);
    CHECK(u.iterations <= 2);
    CHECK(u.discarded_count() == 0);
    for (double e : u.expertise) CHECK(e == 0.0);
    for (std::size_t i = 0; i < 10; ++i) CHECK(u.labels[i] == static_cast<int>(i % 3));
  }

  TEST_CASE("NONE winning an item discards it") {
    AnnotationTable t{{{0, 0, kNoneLabel}, {0, 1, kNoneLabel}, {0, 2, 1}, {1, 0, 1}, {1, 1, 1}, {1, 2, 1}}, 2, 3, 2};
    const auto r = pm_infer(t);
    CHECK(r.labels[0] == kDiscarded);
    CHECK(r.labels[1] == 1);
    CHECK(r.discarded_count() == 1);
  }

  TEST_CASE("expertise is anti-monotone in mistakes") {
    Gen g(5);
    for (int trial = 0; trial < 100; ++trial) {
      const auto t = random_table(g, false);
      const auto r = pm_infer(t);
      if (!r.converged) continue;
      std::vector<int> mistakes(t.annotator_count, 0);
      for (const auto& rec : t.records)
        if (rec.label != r.labels[rec.item]) ++mistakes[rec.annotator];
      for (std::size_t a = 0; a < t.annotator_count; ++a) {
        CHECK(r.expertise[a] >= 0.0);
        for (std::size_t b = 0; b < t.annotator_count; ++b)
          if (mistakes[a] <= mistakes[b]) CHECK(r.expertise[a] >= r.expertise[b]);
      }
    }
  }

  TEST_CASE("PM matches an independent oracle") {
    Gen g(7);
    for (int trial = 0; trial < 300; ++trial) {
      const auto t = random_table(g, true);
      const auto want = oracle_pm(t, 0.5, 100);
      const auto got = pm_infer(t);
      CHECK(got.labels == want.labels);
      CHECK(got.iterations == want.iterations);
      REQUIRE(got.expertise.size() == want.expertise.size());
      for (std::size_t a = 0; a < want.expertise.size(); ++a)
        CHECK(got.expertise[a] == doctest::Approx(want.expertise[a]).epsilon(1e-12));
    }
  }

  TEST_CASE("class relabelling commutes with inference") {
    Gen g(6);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const auto t = random_table(g, false);
      // ties break by class index, so only runs that never tie are comparable
      if (oracle_pm(t, 0.5, 100).tied) continue;
      std::vector<int> perm(t.class_count);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), g.eng);
      auto p = t;
      for (auto& r : p.records) r.label = perm[r.label];
      const auto a = pm_infer(t), b = pm_infer(p);
      for (std::size_t i = 0; i < t.item_count; ++i) CHECK(b.labels[i] == (a.labels[i] < 0 ? a.labels[i] : perm[a.labels[i]]));
      CHECK(a.expertise == b.expertise);
      ++checked;
    }
    CHECK(checked > 20);
  }

  TEST_CASE("PM is deterministic and validates input") {
    Gen g(8);
    const auto t = random_table(g, true);
    const auto a = pm_infer(t), b = pm_infer(t);
    CHECK(a.labels == b.labels);
    CHECK(a.expertise == b.expertise);
    CHECK_THROWS_AS(pm_infer(t, PmOptions{0.0, 10}), ContractError);
    CHECK_THROWS_AS(pm_infer(t, PmOptions{0.5, 0}), ContractError);
    auto dup = t;
    dup.records.push_back(dup.records.front());
    CHECK_THROWS_AS(pm_infer(dup), ContractError);
  }

  TEST_CASE("simulator examples") {
    std::vector<int> truth(300);
    Gen g(3);
    for (auto& y : truth) y = g.integer(0, 4);
    const std::vector<double> perfect = {1.0, 1.0};
    const auto t = simulate_crowd(truth, 5, perfect, 1.0, 9);
    CHECK(t.records.size() == 600);
    for (const auto& r : t.records) CHECK(r.label == truth[r.item]);

    const auto again = simulate_crowd(truth, 5, perfect, 1.0, 9);
    CHECK(again.records == t.records);

    std::vector<int> many(20000);
    for (auto& y : many) y = g.integer(0, 3);
    const double acc = 0.25 + 0.05;
    const std::vector<double> weak = {acc};
    const auto w = simulate_crowd(many, 4, weak, 1.0, 2);
    double agree = 0.0;
    for (const auto& r : w.records) agree += r.label == many[r.item];
    const double sigma = std::sqrt(acc * (1 - acc) / many.size());
    CHECK(std::abs(agree / many.size() - acc) < 3 * sigma);

    const auto partial = simulate_crowd(truth, 5, perfect, 0.5, 9);
    CHECK(partial.records.size() == 300);
    CHECK_THROWS_AS(simulate_crowd(truth, 5, perfect, 0.0, 9), ContractError);
  }

  TEST_CASE("PM beats or ties majority vote on simulated crowds") {
    std::vector<double> pm_acc, mv_acc;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      Gen g(trial + 1000);
      std::vector<int> truth(500);
      for (auto& y : truth) y = g.integer(0, 7);
      std::vector<double> accs(16);
      for (auto& a : accs) a = g.uniform(0.55, 0.95);
      const auto t = simulate_crowd(truth, 8, accs, 1.0, trial);
      const auto mv = majority_vote(t);
      const auto pm = pm_infer(t);
      double a = 0, b = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        a += pm.labels[i] == truth[i];
        b += mv[i] == truth[i];
      }
      pm_acc.push_back(a);
      mv_acc.push_back(b);
    }
    std::sort(pm_acc.begin(), pm_acc.end());
    std::sort(mv_acc.begin(), mv_acc.end());
    CHECK(pm_acc[5] >= mv_acc[5]);
  }

  TEST_CASE("annotation CSV round-trip and errors") {
    ScratchDir dir("crowd");
    AnnotationTable t{{{0, 0, 1}, {0, 1, kNoneLabel}, {2, 1, 0}}, 3, 2, 2};
    write_annotations_csv(dir / "a.csv", t);
    CHECK(testing::file_text(dir / "a.csv") == "item_id,annotator_id,label\n0,0,1\n0,1,NONE\n2,1,0\n");
    const auto back = read_annotations_csv(dir / "a.csv");
    CHECK(back.records == t.records);
    CHECK(back.item_count == 3);
    CHECK(back.class_count == 2);

    auto write = [&](const std::string& name, const std::string& text) {
      std::ofstream(dir / name) << text;
      return dir / name;
    };
    CHECK_THROWS_AS(read_annotations_csv(write("h.csv", "item,annotator,label\n")), ParseError);
    try {
      read_annotations_csv(write("bad.csv", "item_id,annotator_id,label\n0,0,1\n1,x,2\n"));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    CHECK_THROWS_AS(read_annotations_csv(write("f.csv", "item_id,annotator_id,label\n0,0\n")), ParseError);
    CHECK_THROWS_AS(read_annotations_csv(write("d.csv", "item_id,annotator_id,label\n0,0,1\n0,0,2\n")), ParseError);
    CHECK_THROWS_AS(read_annotations_csv(dir / "missing.csv"), IoError);
  }

  TEST_CASE("PM result files") {
    ScratchDir dir("pmout");
    PmResult r{{1, kDiscarded, 0}, {0.0, 1.25}, 3, true};
    write_pm_result(dir / "out", r);
    CHECK(testing::file_text(dir / "out_labels.csv") == "item_id,inferred_label\n0,1\n1,DISCARDED\n2,0\n");
    CHECK(testing::file_text(dir / "out_expertise.csv") == "annotator_id,expertise\n0,0.000000\n1,1.250000\n");
  }
}
