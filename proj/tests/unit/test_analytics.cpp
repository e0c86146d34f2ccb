#include <doctest.h>

#include <cmath>
#include <random>

#include "looptrack/analytics.hpp"
#include "../support/oracles.hpp"

using namespace looptrack;

namespace {

Trajectory make_traj(long id, const std::vector<std::array<double, 3>>& frame_xy) {
    Trajectory t;
    t.id = id;
    for (const auto& [f, x, y] : frame_xy) {
        DefectObservation o;
        o.frame = static_cast<long>(f);
        o.center_x = x;
        o.center_y = y;
        o.box = {x - 2, y - 2, x + 2, y + 2};
        t.observations.push_back(o);
    }
    return t;
}

}  // namespace

TEST_CASE("loop density") {
    Calibration cal;
    CHECK(loop_density_cm3(0, cal) == 0.0);
    // 1.75 * 100 / 8.24868e-15 cm^3
    CHECK(loop_density_cm3(100, cal) == doctest::Approx(2.12e16).epsilon(0.01));
    // Linear in count and visibility factor.
    CHECK(loop_density_cm3(200, cal) == doctest::Approx(2.0 * loop_density_cm3(100, cal)));
    Calibration doubled = cal;
    doubled.visibility_factor *= 2.0;
    CHECK(loop_density_cm3(100, doubled) == doctest::Approx(2.0 * loop_density_cm3(100, cal)));

    CHECK(std::lround(mean_defect_spacing_nm(3e16)) == 32);
}

TEST_CASE("size_stats quartiles") {
    std::vector<double> one{5.0};
    auto q = size_stats(one);
    CHECK(q.q1 == 5.0);
    CHECK(q.median == 5.0);
    CHECK(q.q3 == 5.0);

    std::vector<double> five{1, 2, 3, 4, 5};
    q = size_stats(five);
    CHECK(q.q1 == doctest::Approx(2.0));
    CHECK(q.median == doctest::Approx(3.0));
    CHECK(q.q3 == doctest::Approx(4.0));

    std::vector<double> empty;
    CHECK_THROWS_AS(size_stats(empty), std::invalid_argument);

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> val(0.0, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> sample(1 + rng() % 40);
        for (auto& v : sample) v = val(rng);
        q = size_stats(sample);
        CHECK(q.q1 == doctest::Approx(oracle::quantile_ref(sample, 0.25)).epsilon(1e-12));
        CHECK(q.median == doctest::Approx(oracle::quantile_ref(sample, 0.5)).epsilon(1e-12));
        CHECK(q.q3 == doctest::Approx(oracle::quantile_ref(sample, 0.75)).epsilon(1e-12));
        CHECK(q.q1 <= q.median);
        CHECK(q.median <= q.q3);

        // Permutation invariance and monotonicity under shifts.
        std::vector<double> shuffled = sample;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto q2 = size_stats(shuffled);
        CHECK(q2.median == q.median);
        std::vector<double> shifted = sample;
        for (auto& v : shifted) v += 3.25;
        CHECK(size_stats(shifted).median == doctest::Approx(q.median + 3.25).epsilon(1e-12));
    }
}

TEST_CASE("percent difference statistics") {
    std::vector<double> a{3.0, 4.5, 9.0};
    auto s = percent_difference_stats(a, a);
    CHECK(s.max_pct == 0.0);
    CHECK(s.mean_pct == 0.0);
    CHECK(s.std_pct == 0.0);

    std::vector<double> a2{110.0}, b2{100.0};
    s = percent_difference_stats(a2, b2);
    CHECK(s.max_pct == doctest::Approx(10.0));
    CHECK(s.mean_pct == doctest::Approx(10.0));
    CHECK(s.std_pct == 0.0);

    std::vector<double> zeros{1.0}, with_zero{0.0};
    CHECK_THROWS_AS(percent_difference_stats(zeros, with_zero), std::invalid_argument);
    std::vector<double> mismatched{1.0, 2.0};
    CHECK_THROWS_AS(percent_difference_stats(mismatched, zeros), std::invalid_argument);
}

TEST_CASE("d_eff hand cases") {
    Calibration cal;

    auto still = make_traj(0, {{0, 10, 10}, {1, 10, 10}, {2, 10, 10}});
    auto rec = d_eff(still, cal);
    REQUIRE(rec.has_value());
    CHECK(rec->d_eff_nm2_per_s == 0.0);

    Calibration unit = cal;
    unit.pixels_per_nm = 1.0;
    unit.dpa_per_frame = 0.0014;  // tau = 1.75 s exactly
    auto step = make_traj(1, {{0, 0, 0}, {1, 3, 4}});
    rec = d_eff(step, unit);
    REQUIRE(rec.has_value());
    CHECK(rec->d_eff_nm2_per_s == doctest::Approx(25.0 / 7.0).epsilon(1e-12));
    CHECK(rec->lifetime_frames == 2);

    // A gap-bridged pair is not unit-lag: no pairs -> no estimate.
    auto gapped = make_traj(2, {{0, 0, 0}, {3, 1, 1}});
    CHECK_FALSE(d_eff(gapped, cal).has_value());
    auto single = make_traj(3, {{0, 0, 0}});
    CHECK_FALSE(d_eff(single, cal).has_value());
}

TEST_CASE("d_eff matches random-walk theory") {
    Calibration cal;
    const double tau = cal.seconds_per_frame();
    const double step_px = 0.8;
    const double nm_per_px = 1.0 / cal.pixels_per_nm;
    const double expected = step_px * step_px * nm_per_px * nm_per_px / (2.0 * tau);

    for (std::uint32_t seed = 0; seed < 5; ++seed) {
        std::mt19937 rng(7000 + seed);
        std::normal_distribution<double> step(0.0, step_px);
        std::vector<std::array<double, 3>> path;
        double x = 500.0, y = 500.0;
        for (int f = 0; f < 1000; ++f) {
            path.push_back({static_cast<double>(f), x, y});
            x += step(rng);
            y += step(rng);
        }
        const auto rec = d_eff(make_traj(0, path), cal);
        REQUIRE(rec.has_value());
        CHECK(std::abs(rec->d_eff_nm2_per_s - expected) / expected < 0.15);
    }
}

TEST_CASE("d_eff is translation invariant") {
    Calibration cal;
    auto traj = make_traj(0, {{0, 10, 20}, {1, 12, 19}, {2, 13, 22}, {3, 11, 21}});
    auto moved = make_traj(0, {{0, 110, -80}, {1, 112, -81}, {2, 113, -78}, {3, 111, -79}});
    CHECK(d_eff(traj, cal)->d_eff_nm2_per_s ==
          doctest::Approx(d_eff(moved, cal)->d_eff_nm2_per_s).epsilon(1e-12));
}

TEST_CASE("bin_diffusion geometry and contents") {
    const auto empty_bins = bin_diffusion({});
    REQUIRE(empty_bins.size() == 50);
    for (const auto& b : empty_bins) {
        CHECK(b.count == 0);
        CHECK(b.hi_nm - b.lo_nm == doctest::Approx(0.32).epsilon(1e-12));
    }
    CHECK(empty_bins.front().lo_nm == doctest::Approx(2.0));
    CHECK(empty_bins.back().hi_nm == doctest::Approx(18.0));
    // Contiguous, non-overlapping cover of [2, 18).
    for (size_t i = 1; i < empty_bins.size(); ++i)
        CHECK(empty_bins[i].lo_nm == doctest::Approx(empty_bins[i - 1].hi_nm).epsilon(1e-12));

    std::vector<DiffusionRecord> recs{{0, 1.5, 2.1, 10}};
    const auto one = bin_diffusion(recs);
    CHECK(one[0].count == 1);
    CHECK(one[0].mean_d_eff == doctest::Approx(1.5));
    CHECK_FALSE(one[0].sem_d_eff.has_value());  // single-record bins carry no error
    for (size_t i = 1; i < one.size(); ++i) CHECK(one[i].count == 0);

    std::vector<DiffusionRecord> multi{{0, 1.0, 5.0, 4}, {1, 3.0, 5.05, 4}, {2, 99.0, 30.0, 4}};
    const auto bins = bin_diffusion(multi);
    long total = 0;
    for (const auto& b : bins) total += b.count;
    CHECK(total == 2);  // the 30 nm record is out of range
    const auto& hit = bins[static_cast<size_t>((5.0 - 2.0) / 0.32)];
    CHECK(hit.count == 2);
    CHECK(hit.mean_d_eff == doctest::Approx(2.0));
    REQUIRE(hit.sem_d_eff.has_value());
    CHECK(*hit.sem_d_eff == doctest::Approx(std::sqrt(2.0) / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("roi_filter keeps closed-interval interior, boundary inclusive") {
    std::vector<DefectObservation> obs;
    for (double x : {100.0, 250.0, 1200.0, 2150.0, 2151.0}) {
        DefectObservation o;
        o.frame = 0;
        o.center_x = x;
        o.center_y = 800.0;
        o.box = {x - 3, 797, x + 3, 803};
        obs.push_back(o);
    }
    const auto kept = roi_filter(obs, 250.0, 2150.0, 200.0, 1450.0);
    REQUIRE(kept.size() == 3);
    CHECK(kept.front().center_x == 250.0);  // boundary retained
    CHECK(kept.back().center_x == 2150.0);

    const auto all = roi_filter(obs, 0.0, 1e6, 0.0, 1e6);
    CHECK(all.size() == obs.size());
}

TEST_CASE("growth_curve") {
    Calibration cal;
    Trajectory t = make_traj(3, {{10, 5, 5}, {11, 5, 5}, {12, 5, 5}});
    t.observations[0].size_nm = 4.0;
    t.observations[1].size_nm = 4.5;
    // observation 2 has no size
    const auto curve = growth_curve(t, cal);
    CHECK(curve.trajectory_id == 3);
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.skipped == 1);
    CHECK(curve.points[0][0] == doctest::Approx(frame_to_dpa(10, cal)));
    CHECK(curve.points[0][1] == 4.0);
    CHECK(curve.points[1][0] > curve.points[0][0]);  // dpa strictly increasing
}

TEST_CASE("lifetime_stats") {
    std::vector<Trajectory> empty;
    const auto none = lifetime_stats(empty);
    CHECK(none.count == 0);
    CHECK_FALSE(none.mean_lifetime_frames.has_value());

    std::vector<Trajectory> ts;
    ts.push_back(make_traj(0, {{461, 0, 0}, {805, 1, 1}}));
    const auto one = lifetime_stats(ts);
    CHECK(one.count == 1);
    CHECK(*one.mean_lifetime_frames == doctest::Approx(345.0));

    ts.push_back(make_traj(1, {{0, 0, 0}, {1, 0, 0}, {4, 0, 0}}));  // lifetime 5
    const auto two = lifetime_stats(ts);
    CHECK(two.count == 2);
    CHECK(*two.mean_lifetime_frames == doctest::Approx((345.0 + 5.0) / 2.0));
}

TEST_CASE("frame_stats computes density and quartiles per frame") {
    Calibration cal;
    std::vector<std::vector<DefectObservation>> frames(1);
    for (int i = 0; i < 5; ++i) {
        DefectObservation o;
        o.frame = 120;
        o.center_x = 10.0 * i;
        o.center_y = 10.0;
        o.box = {10.0 * i - 2, 8, 10.0 * i + 2, 12};
        o.size_nm = 1.0 + i;  // sizes 1..5
        frames[0].push_back(o);
    }
    frames[0][4].size_nm.reset();  // falls back to box extent

    const auto stats = frame_stats(frames, cal);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].frame == 120);
    CHECK(stats[0].dpa == doctest::Approx(frame_to_dpa(120, cal)));
    CHECK(stats[0].raw_count == 5);
    CHECK(stats[0].fallback_sizes == 1);
    CHECK(stats[0].corrected_density_cm3 == doctest::Approx(loop_density_cm3(5, cal)));
    CHECK(stats[0].size_q1_nm <= stats[0].size_median_nm);
    CHECK(stats[0].size_median_nm <= stats[0].size_q3_nm);
}
