#include <sstream>

#include "doctest.h"
#include "support/datasets.hpp"
#include "v2n/error.hpp"
#include "v2n/evaluation.hpp"
#include "v2n/forecaster.hpp"
#include "v2n/queueing.hpp"
#include "v2n/scaling.hpp"

using namespace v2n;
using namespace v2n::scaling;

namespace {

const ingest::ScenarioSplit kSplit{"demo",
                                   {from_civil(2020, 1, 28), from_civil(2020, 2, 2)},
                                   {from_civil(2020, 2, 3), from_civil(2020, 2, 6)}};

// Daily wave big enough to need several remote-driving instances at the peak.
ingest::CleanDataset seasonal(double amplitude = 2.0e6, double noise = 0.0) {
    evaluation::SynthOptions s;
    s.days = 10;
    s.amplitude = amplitude;
    s.noise_sd = noise;
    auto series = evaluation::synth_series(s);
    series.probe_id = "P0";
    return ingest::single_probe_dataset(series);
}

forecast::TechniqueConfig techniques() {
    auto t = forecast::TechniqueConfig::defaults();
    t.smoothing.season_len = 288;
    return t;
}

struct Fixture {
    ingest::CleanDataset clean;
    forecast::SeriesView view;
    ingest::IndexRange train, test;

    explicit Fixture(ingest::CleanDataset c) : clean(std::move(c)) {
        view = forecast::make_view(clean, "P0", std::nullopt);
        train = ingest::index_range(clean.grid(), kSplit.train);
        test = ingest::index_range(clean.grid(), kSplit.test);
    }

    std::unique_ptr<forecast::Forecaster> fitted(const std::string& technique, forecast::Mode mode) {
        auto f = forecast::make_forecaster(technique, mode, techniques(), 7);
        f->fit(view, train.begin, train.end);
        return f;
    }

    std::span<const double> train_flows() const {
        return std::span(view.flow()).subspan(train.begin, train.size());
    }
};

// Throws for origins in [from, to).
class FlakyForecaster final : public forecast::Forecaster {
public:
    FlakyForecaster(std::size_t from, std::size_t to) : from_(from), to_(to) {}
    std::string name() const override { return "flaky"; }
    void fit(const forecast::SeriesView& view, std::size_t, std::size_t) override { view_ = view; }
    double forecast(std::size_t origin, std::size_t k) override {
        if (origin >= from_ && origin < to_) throw Error("sensor feed down");
        return view_.flow()[origin + k];
    }

private:
    std::size_t from_, to_;
    forecast::SeriesView view_;
};

}  // namespace

TEST_CASE("profiles") {
    CHECK(service_profile("remote_driving").mu == kMuEvs);
    CHECK(service_profile("remote_driving").T0 == 0.005);
    CHECK(service_profile("cooperative_awareness").mu == doctest::Approx(kMuEvs / 20));
    CHECK(service_profile("cooperative_awareness").T0 == 0.1);
    CHECK(service_profile("hazard_warning").mu == doctest::Approx(kMuEvs / 2));
    CHECK(service_profile("hazard_warning").T0 == 0.01);
    CHECK(service_profiles().size() == 3);
    CHECK_THROWS_AS(service_profile("teleport"), ConfigError);
    CHECK(per_second(3600) == 1.0);
}

TEST_CASE("policy names") {
    CHECK(parse_policy("max").kind == PolicyKind::max);
    CHECK(parse_policy("avg").name() == "avg");
    const auto p = parse_policy("n_min:45:lstm-online");
    CHECK(p.n_minutes == 45);
    CHECK(p.forecaster == "lstm-online");
    CHECK(p.name() == "n_min_45");
    CHECK(parse_policy("n_min:30").forecaster == "tes-online");
    CHECK_THROWS_AS(parse_policy("n_min:32"), ConfigError);
    CHECK_THROWS_AS(parse_policy("min"), ConfigError);
}

TEST_CASE("constant flow with a perfect forecaster keeps one server count") {
    const double flow = 90000.0;
    Fixture fx(v2n::testing::make_dataset({{45, 7.6}}, {std::vector<double>(10 * 288, flow)}));
    auto f = fx.fitted("perfect", forecast::Mode::offline);
    const auto trace = n_min_schedule(fx.view, fx.test.begin, fx.test.end, *f, 30, service_profile("remote_driving"));
    const auto want = queueing::min_servers(flow / 3600.0, kMuEvs, 0.005);
    CHECK(want > 1);
    CHECK(trace.intervals.size() == 4 * 288 / 6);
    for (const auto& iv : trace.intervals) CHECK(iv.c == want);
}

TEST_CASE("a silent night needs one server") {
    Fixture fx(v2n::testing::make_dataset({{45, 7.6}}, {std::vector<double>(10 * 288, 0.0)}));
    auto f = fx.fitted("hold", forecast::Mode::offline);
    const auto trace = n_min_schedule(fx.view, fx.test.begin, fx.test.end, *f, 60, service_profile("hazard_warning"));
    for (const auto& iv : trace.intervals) CHECK(iv.c == 1);
}

TEST_CASE("each epoch matches a brute-force recomputation") {
    Fixture fx(seasonal(2.0e6, 5000));
    auto f = fx.fitted("tes", forecast::Mode::online);
    auto again = fx.fitted("tes", forecast::Mode::online);
    const auto& profile = service_profile("remote_driving");
    const auto trace = n_min_schedule(fx.view, fx.test.begin, fx.test.end, *f, 45, profile);
    std::size_t lo = 1000, hi = 0;
    for (const auto& iv : trace.intervals) {
        double peak = fx.view.flow()[iv.begin];
        for (std::size_t k = 1; k < 9; ++k) peak = std::max(peak, again->forecast(iv.begin, k));
        REQUIRE(iv.peak_flow == peak);
        std::size_t c = 1;
        while (peak / 3600.0 >= c * profile.mu ||
               queueing::mean_system_time(peak / 3600.0, profile.mu, c) > profile.T0) {
            ++c;
        }
        REQUIRE(iv.c == c);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    CHECK(lo == 1);
    CHECK(hi > 2);
    CHECK(trace.intervals.front().begin == fx.test.begin);
    for (std::size_t i = 1; i < trace.intervals.size(); ++i) {
        CHECK(trace.intervals[i].begin == trace.intervals[i - 1].end);
    }
}

TEST_CASE("forecaster failures hold the previous count") {
    Fixture fx(seasonal());
    FlakyForecaster f(fx.test.begin + 100, fx.test.begin + 130);
    f.fit(fx.view, fx.train.begin, fx.train.end);
    const auto trace = n_min_schedule(fx.view, fx.test.begin, fx.test.end, f, 30, service_profile("remote_driving"));
    CHECK(trace.incidents.size() == 5);
    for (std::size_t i = 1; i < trace.intervals.size(); ++i) {
        const auto& iv = trace.intervals[i];
        if (iv.begin >= fx.test.begin + 100 && iv.begin < fx.test.begin + 130) {
            CHECK(iv.c == trace.intervals[i - 1].c);
        }
    }
}

TEST_CASE("static schedules") {
    const auto& remote = service_profile("remote_driving");
    Fixture flat(v2n::testing::make_dataset({{45, 7.6}}, {std::vector<double>(10 * 288, 50000.0)}));
    const auto a = static_schedule(flat.train_flows(), PolicyKind::avg, flat.clean.grid(), flat.test.begin, flat.test.end, remote);
    const auto m = static_schedule(flat.train_flows(), PolicyKind::max, flat.clean.grid(), flat.test.begin, flat.test.end, remote);
    CHECK(a.intervals.size() == 1);
    CHECK(a.intervals[0].c == m.intervals[0].c);

    Fixture wave(seasonal());
    const auto wa = static_schedule(wave.train_flows(), PolicyKind::avg, wave.clean.grid(), wave.test.begin, wave.test.end, remote);
    const auto wm = static_schedule(wave.train_flows(), PolicyKind::max, wave.clean.grid(), wave.test.begin, wave.test.end, remote);
    CHECK(wm.intervals[0].peak_flow == doctest::Approx(2 * wa.intervals[0].peak_flow).epsilon(1e-3));
    CHECK(wm.intervals[0].c >= wa.intervals[0].c);

    Fixture desk(seasonal(1200));
    const auto& coop = service_profile("cooperative_awareness");
    CHECK(static_schedule(desk.train_flows(), PolicyKind::max, desk.clean.grid(), desk.test.begin, desk.test.end, coop).intervals[0].c == 1);
    CHECK(static_schedule(desk.train_flows(), PolicyKind::avg, desk.clean.grid(), desk.test.begin, desk.test.end, coop).intervals[0].c == 1);

    CHECK_THROWS_AS(static_schedule({}, PolicyKind::max, desk.clean.grid(), desk.test.begin, desk.test.end, coop), PreconditionError);
    const ServiceProfile impossible{"x", 100.0, 0.005};
    CHECK_THROWS_AS(static_schedule(desk.train_flows(), PolicyKind::max, desk.clean.grid(), desk.test.begin, desk.test.end, impossible),
                    InfeasibleError);
}

TEST_CASE("replay") {
    Fixture fx(seasonal());
    const auto realized = fx.clean.series("P0");
    const auto& remote = service_profile("remote_driving");
    const auto max_trace = static_schedule(fx.train_flows(), PolicyKind::max, fx.clean.grid(), fx.test.begin, fx.test.end, remote);
    const auto max_report = replay(max_trace, realized);
    CHECK(max_report.violations == 0);
    CHECK(max_report.steps == fx.test.size());
    CHECK(replay(max_trace, realized, max_report.cost).cost_ratio == 1.0);

    auto perfect = fx.fitted("perfect", forecast::Mode::offline);
    const auto pt = n_min_schedule(fx.view, fx.test.begin, fx.test.end, *perfect, 30, remote);
    const auto pr = replay(pt, realized, max_report.cost);
    CHECK(pr.violation_ratio == 0.0);
    CHECK(pr.cost_ratio < 1.0);

    // Square wave: half of the steps sit at a level the mean-sized pool cannot serve.
    std::vector<double> square(10 * 288);
    for (std::size_t t = 0; t < square.size(); ++t) square[t] = (t / 144) % 2 == 0 ? 0.0 : 2.0e6;
    Fixture sq(v2n::testing::make_dataset({{45, 7.6}}, {square}));
    const auto avg_trace = static_schedule(sq.train_flows(), PolicyKind::avg, sq.clean.grid(), sq.test.begin, sq.test.end, remote);
    CHECK(queueing::min_servers(2.0e6 / 3600.0, remote.mu, remote.T0) > avg_trace.intervals[0].c);
    const auto avg = replay(avg_trace, sq.clean.series("P0"));
    CHECK(avg.violation_ratio >= 0.5);

    auto shifted = realized;
    shifted.start += 7;
    CHECK_THROWS_AS(replay(max_trace, shifted), PreconditionError);
}

TEST_CASE("policy comparison") {
    Fixture fx(seasonal(2.0e6, 20000));
    CompareOptions opts;
    opts.techniques = techniques();
    const auto only_max = compare_policies({Policy::max()}, fx.clean, "P0", kSplit, {service_profile("remote_driving")}, opts);
    REQUIRE(only_max.size() == 1);
    CHECK(only_max[0].report.cost_ratio == 1.0);
    CHECK(only_max[0].report.violation_ratio == 0.0);

    Fixture flat(v2n::testing::make_dataset({{45, 7.6}}, {std::vector<double>(10 * 288, 50000.0)}));
    const auto same = compare_policies({Policy::max(), Policy::avg()}, flat.clean, "P0", kSplit, {service_profile("remote_driving")}, opts);
    CHECK(same[0].report.cost == same[1].report.cost);
    CHECK(same[0].report.violations == same[1].report.violations);

    const std::vector<Policy> all{Policy::max(), Policy::avg(), Policy::n_min(30), Policy::n_min(45), Policy::n_min(60)};
    opts.jobs = 3;
    const auto grid = compare_policies(all, fx.clean, "P0", kSplit, service_profiles(), opts);
    REQUIRE(grid.size() == 15);
    CHECK(grid[0].report.profile == "remote_driving");
    CHECK(grid[4].report.policy == "n_min_60");
    CHECK(grid[5].report.profile == "cooperative_awareness");
    const auto& avg = grid[1].report;
    for (std::size_t i = 2; i < 5; ++i) {
        REQUIRE(grid[i].ok());
        CHECK(grid[i].report.cost_ratio < 1.0);
        CHECK(grid[i].report.violation_ratio < avg.violation_ratio);
    }
    opts.jobs = 1;
    const auto serial = compare_policies(all, fx.clean, "P0", kSplit, service_profiles(), opts);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(serial[i].report.cost == grid[i].report.cost);

    const auto broken = compare_policies({Policy::n_min(30, "nonsense-online"), Policy::max()}, fx.clean, "P0", kSplit,
                                         {service_profile("remote_driving")}, opts);
    CHECK_FALSE(broken[0].ok());
    CHECK(broken[1].ok());
}

TEST_CASE("trace files round-trip through replay") {
    Fixture fx(seasonal(2.0e6, 20000));
    const auto realized = fx.clean.series("P0");
    auto f = fx.fitted("tes", forecast::Mode::online);
    const auto trace = n_min_schedule(fx.view, fx.test.begin, fx.test.end, *f, 30, service_profile("hazard_warning"));
    const auto max_trace = static_schedule(fx.train_flows(), PolicyKind::max, fx.clean.grid(), fx.test.begin, fx.test.end,
                                           service_profile("hazard_warning"));
    std::stringstream file;
    write_trace_csv(file, trace, realized);
    write_trace_csv(file, max_trace, realized, false);
    const auto back = read_trace_csv(file);
    REQUIRE(back.size() == 2);
    CHECK(back[0].trace.policy == "n_min_30");
    CHECK(back[1].trace.policy == "max");
    const auto a = replay(trace, realized);
    const auto b = replay(back[0].trace, back[0].realized);
    CHECK(a.cost == b.cost);
    CHECK(a.violations == b.violations);
    CHECK(back[0].trace.profile.mu == trace.profile.mu);

    std::ostringstream rep;
    write_report_csv(rep, {a});
    CHECK(rep.str().rfind("policy,service,steps,cost,cost_ratio,violations,violation_ratio\n", 0) == 0);
}
