#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "miwv/error.hpp"
#include "miwv/selection.hpp"
#include "support.hpp"

using namespace miwv;

namespace {

std::vector<MiwvRecord> records_with(std::vector<double> miwv) {
    std::vector<MiwvRecord> out;
    for (std::size_t i = 0; i < miwv.size(); ++i) {
        MiwvRecord r;
        r.sample_id = i;
        r.neighbor_id = (i + 1) % miwv.size();
        r.miwv = miwv[i];
        r.loss_uncond = {1.0, 1, 1.0};
        r.loss_cond = {1.0 + miwv[i], 1, 1.0 + miwv[i]};
        out.push_back(r);
    }
    return out;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected miwv::Error");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("miwv-desc ranks by value then id") {
    const auto recs = records_with({0.3, -0.1, 0.3, 0.7});
    CHECK(rank(recs, Strategy::parse("miwv-desc")).ordered_ids == std::vector<std::size_t>{3, 0, 2, 1});
    CHECK(rank(recs, Strategy::parse("miwv-asc")).ordered_ids == std::vector<std::size_t>{1, 2, 0, 3});
    CHECK(rank(recs, Strategy::parse("low-miwv")).ordered_ids == std::vector<std::size_t>{1, 2, 0, 3});
    CHECK(rank(recs, Strategy::parse("prompt-loss-desc")).ordered_ids == std::vector<std::size_t>{3, 0, 2, 1});
}

TEST_CASE("empty record set cannot be ranked") {
    CHECK(kind_of([] { rank({}, Strategy{}); }) == ErrorKind::Empty);
}

TEST_CASE("strategy names") {
    CHECK(Strategy::parse("random(7)").seed == 7);
    CHECK(Strategy::parse("random(7)").name() == "random(7)");
    CHECK(Strategy::parse("random", 3).name() == "random(3)");
    CHECK(Strategy::parse("high-prompt-loss").kind == StrategyKind::PromptLossDesc);
    CHECK(Strategy::parse("miwv-desc").name() == "miwv-desc");
    CHECK_THROWS_AS(Strategy::parse("best"), Error);
}

TEST_CASE("random strategy is a seeded Fisher-Yates shuffle") {
    const auto recs = records_with(std::vector<double>(10, 0.0));
    const auto a = rank(recs, Strategy::parse("random(7)"));
    CHECK(a.ordered_ids == std::vector<std::size_t>{9, 5, 8, 6, 1, 2, 4, 7, 0, 3});
    CHECK(rank(recs, Strategy::parse("random(7)")).ordered_ids == a.ordered_ids);
    CHECK(rank(recs, Strategy::parse("random(8)")).ordered_ids != a.ordered_ids);
}

TEST_CASE("SplitMix64 reference outputs") {
    SplitMix64 g(0);
    CHECK(g.next() == 0xe220a8397b1dcdafULL);
    CHECK(g.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(g.next() == 0x06c45d188009454fULL);
}

TEST_CASE("subset sizes for the two reference corpora") {
    const std::pair<std::size_t, std::vector<std::size_t>> cases[] = {
        {52002, {520, 2600, 5200, 7800}},
        {63655, {636, 3182, 6365, 9548}},
    };
    const double ratios[] = {0.01, 0.05, 0.10, 0.15};
    for (const auto& [n, want] : cases) {
        for (std::size_t k = 0; k < 4; ++k) CHECK(subset_count(ratios[k], n) == want[k]);
    }
    CHECK(subset_count(1.0, 17) == 17);
    CHECK(subset_count(0.3, 10) == 3);
    CHECK(kind_of([] { subset_count(0.0, 10); }) == ErrorKind::RatioOutOfRange);
    CHECK(kind_of([] { subset_count(1.5, 10); }) == ErrorKind::RatioOutOfRange);
}

TEST_CASE("top fraction is a prefix of the ranking") {
    const auto recs = records_with({0.3, -0.1, 0.3, 0.7, 0.0});
    const auto ranking = rank(recs, Strategy{});
    const auto s = select_top_fraction(ranking, 0.4);
    CHECK(s.ids == std::vector<std::size_t>{3, 0});
    CHECK(s.count == 2);
    CHECK(s.n_scored == 5);
    CHECK(kind_of([&] { select_top_fraction(ranking, 0.1); }) == ErrorKind::EmptySelection);
    const auto m = s.manifest();
    CHECK(m["ids"] == nlohmann::json::array({3, 0}));
    CHECK(m["strategy"] == "miwv-desc");
    CHECK(m.contains("created_at"));
}

TEST_CASE("statistics of small sets") {
    const auto r = score_statistics(records_with({1, 2, 3}));
    CHECK(r.count == 3);
    CHECK(r.mean == 2.0);
    CHECK(r.min == 1.0);
    CHECK(r.max == 3.0);
    CHECK(r.median == 2.0);
    CHECK(r.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    CHECK(score_statistics(records_with({1, 2, 3, 4})).median == 2.5);
    CHECK(r.histogram.size() == kHistogramBins);
    CHECK(r.bin_edges.size() == kHistogramBins + 1);
    std::size_t total = 0;
    for (auto c : r.histogram) total += c;
    CHECK(total == 3);
    CHECK(r.histogram.back() == 1);
    CHECK(r.top_ids.front() == 2);
    CHECK(r.bottom_ids.front() == 0);
}

TEST_CASE("statistics of 10k values agree with a reference implementation") {
    SplitMix64 g(12345);
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) {
        xs.push_back(static_cast<double>(g.next() >> 11) * 0x1.0p-53 * 10 - 5);
    }
    const auto r = score_statistics(records_with(xs));
    CHECK(r.mean == doctest::Approx(0.03267851492088885).epsilon(1e-12));
    CHECK(r.stddev == doctest::Approx(2.9148780373501477).epsilon(1e-12));
    CHECK(r.q1 == doctest::Approx(-2.5021394080079267).epsilon(1e-12));
    CHECK(r.median == doctest::Approx(0.03127892239895447).epsilon(1e-12));
    CHECK(r.q3 == doctest::Approx(2.59132635336272).epsilon(1e-12));
}

TEST_CASE("export writes ranked records and a manifest") {
    testing::TempDir tmp("export");
    const auto d = testing::fixture20();
    std::vector<double> vals(20);
    for (std::size_t i = 0; i < 20; ++i) vals[i] = static_cast<double>((i * 7) % 20);
    const auto recs = records_with(vals);
    const auto subset = select_top_fraction(rank(recs, Strategy{}), 0.25);

    const auto out = tmp / "s.jsonl";
    const auto manifest = export_subset(d, subset, out, {ExportFormat::GenericJsonl, false});
    const auto back = parse_dataset(read_file(out), SourceFormat::GenericJsonl);
    REQUIRE(back.size() == subset.ids.size());
    for (std::size_t k = 0; k < subset.ids.size(); ++k) {
        CHECK(back.samples[k].instruction == d.samples[subset.ids[k]].instruction);
        CHECK(back.samples[k].response == d.samples[subset.ids[k]].response);
    }
    const auto m = nlohmann::json::parse(read_file(manifest));
    CHECK(m["count"] == 5);
    CHECK(m["ids"].size() == 5);

    const auto first = read_file(out);
    export_subset(d, subset, out, {ExportFormat::GenericJsonl, false});
    CHECK(read_file(out) == first);

    const auto sorted_path = tmp / "sorted.json";
    export_subset(d, subset, sorted_path, {ExportFormat::Source, true});
    const auto sorted = parse_dataset(read_file(sorted_path), SourceFormat::GenericJsonl);
    auto ids = subset.ids;
    std::sort(ids.begin(), ids.end());
    for (std::size_t k = 0; k < ids.size(); ++k) CHECK(sorted.samples[k].instruction == d.samples[ids[k]].instruction);

    auto bogus = subset;
    bogus.ids.push_back(99);
    CHECK(kind_of([&] { export_subset(d, bogus, tmp / "x.jsonl", {ExportFormat::GenericJsonl, false}); }) ==
          ErrorKind::IdNotFound);
}
