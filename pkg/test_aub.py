"""
Tests for recession window detection, AUB scoring and ranking
"""
import json
import os
import unittest
from pathlib import Path

import numpy as np

import config
import synth
from aub import (
    AubConfig,
    AubScore,
    Classification,
    RecessionWindow,
    aub_pipeline,
    find_window,
    rank_regions,
    report_to_csv,
    report_to_json,
    score_aub,
)
from errors import AnalysisError, KTooLargeError, NoLocalMaxError, SeriesTooShortError
from ingest import MonthlySeries, RegionId, fill_gaps, parse_series_csv, read_partial_series
from tscore import SmoothedSeries

ONSET = config.parse_month("2007-01")


def _smoothed(values, start=0, window=1):
    source = MonthlySeries(
        region=RegionId("1", "Test, CA"), start=start - window + 1, values=tuple([1.0] * (len(values) + window - 1))
    )
    return SmoothedSeries(source=source, window=window, values=tuple(float(v) for v in values))


def _score(code, value):
    return AubScore(region=RegionId(code, f"Metro {code}"), window=RecessionWindow(0, 1, 1.0, True), aub=value)


class TestFindWindow(unittest.TestCase):
    """find_window on hand-built smoothed series"""

    def test_tent(self):
        """Single peak that never recovers"""
        window = find_window(_smoothed([1, 2, 3, 2, 1], start=10), onset=0)
        self.assertEqual(window, RecessionWindow(start=2, end=4, baseline=3.0, recovered=False))

    def test_v_recovery(self):
        """Rise into a peak, fall, then the first index back at the peak closes the window"""
        window = find_window(_smoothed([3, 4, 5, 4, 3, 4, 5, 6]), onset=0)
        self.assertEqual(window, RecessionWindow(start=2, end=6, baseline=5.0, recovered=True))

    def test_increasing(self):
        with self.assertRaises(NoLocalMaxError):
            find_window(_smoothed([1, 2, 3, 4, 5]), onset=0)

    def test_decreasing(self):
        with self.assertRaises(NoLocalMaxError):
            find_window(_smoothed([5, 4, 3, 2, 1]), onset=0)

    def test_highest_candidate_wins(self):
        window = find_window(_smoothed([1, 3, 2, 5, 4, 6]), onset=0)
        self.assertEqual((window.start, window.end, window.recovered), (3, 5, True))

    def test_ties_take_earliest(self):
        window = find_window(_smoothed([1, 3, 2, 3, 2]), onset=0)
        self.assertEqual(window.start, 1)
        self.assertEqual(window.end, 3)

    def test_peaks_before_onset_ignored(self):
        """A higher peak before the onset does not count"""
        window = find_window(_smoothed([1, 9, 1, 2, 4, 3, 2], start=ONSET - 3), onset=ONSET)
        self.assertEqual(window.start, 4)
        self.assertEqual(window.baseline, 4.0)

    def test_too_few_points_after_onset(self):
        with self.assertRaises(SeriesTooShortError):
            find_window(_smoothed([1, 2, 3, 2, 1], start=ONSET - 3), onset=ONSET)

    def test_window_invariants(self):
        """Values strictly between a and b sit below the baseline"""
        values = np.random.default_rng(9).normal(size=200).cumsum()
        window = find_window(_smoothed(values), onset=0)
        interior = values[window.start + 1:window.end]
        self.assertTrue(np.all(interior < window.baseline))
        if window.recovered:
            self.assertGreaterEqual(values[window.end], window.baseline)
        else:
            self.assertEqual(window.end, len(values) - 1)


class TestScoreAub(unittest.TestCase):

    def test_flat(self):
        smoothed = _smoothed([4, 4, 4, 4])
        self.assertEqual(score_aub(smoothed, RecessionWindow(0, 3, 4.0, True)), 0.0)

    def test_term_by_term(self):
        smoothed = _smoothed([10, 7, 8, 10])
        self.assertEqual(score_aub(smoothed, RecessionWindow(0, 3, 10.0, True)), 5.0)


class TestAubProperties(unittest.TestCase):
    """AUB under transformations of the input"""

    SHAPE = synth.BoomBustShape(peak=200000.0, depth=50000.0, fall=12, rise=30)

    def _boom_bust(self, transform):
        base = synth.boom_bust_series(RegionId("1", "Boom, NV"), self.SHAPE)
        return MonthlySeries(region=base.region, start=base.start, values=tuple(transform(np.asarray(base.values))))

    def test_translation_leaves_aub_unchanged(self):
        base = aub_pipeline(self._boom_bust(lambda v: v))
        shifted = aub_pipeline(self._boom_bust(lambda v: v + 12345.0))
        self.assertAlmostEqual(shifted.aub, base.aub, delta=1e-9 * base.aub)
        self.assertEqual(shifted.window.start, base.window.start)

    def test_scaling_scales_aub(self):
        base = aub_pipeline(self._boom_bust(lambda v: v))
        scaled = aub_pipeline(self._boom_bust(lambda v: v * 2.0))
        self.assertEqual(scaled.aub, 2.0 * base.aub)
        self.assertEqual(scaled.window.baseline, 2.0 * base.window.baseline)

    def test_deeper_trough_never_lowers_aub(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            values = rng.normal(size=200).cumsum()
            window = find_window(_smoothed(values), onset=0)
            if window.end - window.start < 4:
                continue
            before = score_aub(_smoothed(values), window)
            deeper = values.copy()
            # leave the neighbours of the window ends alone so no new peak appears
            inner = slice(window.start + 2, window.end - 1)
            deeper[inner] -= rng.uniform(0.0, 3.0, deeper[inner].size)
            self.assertEqual(find_window(_smoothed(deeper), onset=0), window)
            self.assertGreaterEqual(score_aub(_smoothed(deeper), window), before)

    def test_non_negative(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            smoothed = _smoothed(rng.normal(size=150).cumsum())
            try:
                window = find_window(smoothed, onset=0)
            except AnalysisError:
                continue
            self.assertGreaterEqual(score_aub(smoothed, window), 0.0)


class TestRanking(unittest.TestCase):

    def test_order_and_labels(self):
        ranked = rank_regions([_score("A", 5), _score("B", 1), _score("C", 9)], k=1)
        self.assertEqual([s.aub for s in ranked], [9, 5, 1])
        self.assertEqual(
            [s.classification for s in ranked],
            [Classification.LOSER, Classification.UNRANKED, Classification.GAINER],
        )

    def test_ties_by_code(self):
        ranked = rank_regions([_score("Z", 2), _score("M", 2), _score("A", 2)], k=1)
        self.assertEqual([s.region.code for s in ranked], ["A", "M", "Z"])

    def test_k_too_large(self):
        with self.assertRaises(KTooLargeError):
            rank_regions([_score("A", 1), _score("B", 2), _score("C", 3)], k=2)

    def test_report_columns(self):
        ranked = rank_regions([_score("A", 5), _score("B", 1)], k=1)
        header = report_to_csv(ranked).decode().splitlines()[0]
        self.assertEqual(
            header, "region_code,region_name,state,window_start,window_end,recovered,baseline,aub,classification"
        )
        rows = json.loads(report_to_json(ranked))
        self.assertEqual(rows[0]["classification"], "Loser")


class TestPipeline(unittest.TestCase):
    """aub_pipeline on synthetic curves with a closed-form answer"""

    def test_constant_series(self):
        series = MonthlySeries(region=RegionId("1", "Flat, OH"), start=0, values=tuple([100.0] * 200))
        with self.assertRaises(NoLocalMaxError):
            aub_pipeline(series)

    def test_single_boom_bust(self):
        shape = synth.BoomBustShape(peak=200000.0, depth=50000.0, fall=12, rise=30)
        score = aub_pipeline(synth.boom_bust_series(RegionId("1", "Boom, NV"), shape))
        self.assertAlmostEqual(score.aub, 50000.0 * 42 / 2, delta=1e-9 * score.aub)
        self.assertEqual(score.start_month, shape.peak_end)
        self.assertEqual(score.end_month, shape.recovery_month)
        self.assertTrue(score.window.recovered)

    def test_oracle_100_regions(self):
        """Pipeline AUB matches ground truth for 100 seeded boom-bust curves"""
        dataset = synth.generate(synth.SynthConfig(seed=2024, regions=100))
        series = parse_series_csv(synth.series_to_csv(dataset), "long")
        truth = {row["region_code"]: row["true_aub"] for row in dataset.truth}
        for s in series:
            score = aub_pipeline(s)
            expected = truth[s.region.code]
            self.assertLessEqual(abs(score.aub - expected), 1e-6 * expected, s.region.code)

    def test_normalized_baseline(self):
        shape = synth.BoomBustShape(peak=1000.0, depth=100.0, fall=10, rise=10)
        series = synth.boom_bust_series(RegionId("1", "Boom, NV"), shape)
        score = aub_pipeline(series, AubConfig(normalize_baseline=True))
        self.assertAlmostEqual(score.aub, 100.0 * 20 / 2 / 1000.0, places=9)


@unittest.skipUnless(os.environ.get("HOUSING_ZILLOW_METRO_CSV"), "Zillow metro dataset not supplied")
class TestZillowLosers(unittest.TestCase):
    """Top losers on the public Zillow metro ZHVI export"""

    def test_top_three(self):
        raw = Path(os.environ["HOUSING_ZILLOW_METRO_CSV"]).read_bytes()
        schema = os.environ.get("HOUSING_ZILLOW_SCHEMA", "wide")
        scores = []
        for partial in read_partial_series(raw, schema):
            try:
                scores.append(aub_pipeline(fill_gaps(partial)))
            except AnalysisError:
                continue
        ranked = rank_regions(scores, 3)
        names = {s.region.name.split(",")[0] for s in ranked[:3]}
        self.assertEqual(names, {"Key West", "Salinas", "Carson City"})
        for score, expected in zip(ranked[:3], (1.638e11, 1.541e11, 1.331e11)):
            self.assertLess(max(score.aub / expected, expected / score.aub), 2.0)


if __name__ == '__main__':
    unittest.main()
