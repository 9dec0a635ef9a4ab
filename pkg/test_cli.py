"""
End-to-end tests for the command line
"""
import json
import os
import tempfile
import unittest
from pathlib import Path

import cli
from errors import ConfigError


def _tree(root):
    """Every file under ``root`` keyed by relative path."""
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def path(self, *parts):
        return str(self.tmp.joinpath(*parts))

    def synth(self, name="data", *extra):
        code = cli.main(["synth", "--seed", "11", "--regions", "8", "--output-dir", self.path(name), *extra])
        self.assertEqual(code, cli.EXIT_OK)
        return self.path(name, "synthetic_series.csv")


class TestSynthAndRank(CliTestCase):

    def test_synth_outputs(self):
        self.synth()
        files = _tree(self.path("data"))
        self.assertEqual(set(files), {"synthetic_series.csv", "ground_truth.csv", "run_manifest.json"})
        manifest = json.loads(files["run_manifest.json"])
        self.assertEqual(manifest["command"], "synth")
        self.assertEqual(manifest["config"]["seed"], 11)
        self.assertNotIn("output_dir", manifest["config"])
        self.assertEqual(manifest["runtime"]["output_dir"], self.path("data"))
        self.assertEqual(set(manifest["runtime"]), set(cli.RUNTIME_FIELDS))

    def test_rank_outputs(self):
        series = self.synth()
        code = cli.main(["aub-rank", "--input", series, "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_OK)
        lines = Path(self.path("out", "aub_scores.csv")).read_text().splitlines()
        self.assertEqual(len(lines), 9)
        self.assertTrue(lines[0].startswith("region_code,region_name,state"))
        manifest = json.loads(Path(self.path("out", "run_manifest.json")).read_text())
        self.assertEqual(len(manifest["inputs"]["input"]), 64)

    def test_rerun_and_jobs_identical(self):
        series = self.synth()
        cli.main(["aub-rank", "--input", series, "--output-dir", self.path("a")])
        cli.main(["aub-rank", "--input", series, "--output-dir", self.path("b")])
        cli.main(["aub-rank", "--input", series, "--output-dir", self.path("c"), "--jobs", "8"])
        trees = [_tree(self.path(name)) for name in "abc"]
        manifests = [json.loads(tree.pop("run_manifest.json")) for tree in trees]
        self.assertEqual(trees[0], trees[1])
        self.assertEqual(trees[0], trees[2])
        runtimes = [manifest.pop("runtime") for manifest in manifests]
        self.assertEqual(manifests[0], manifests[1])
        self.assertEqual(manifests[0], manifests[2])
        self.assertEqual((runtimes[0]["jobs"], runtimes[2]["jobs"]), (cli.RunConfig().jobs, 8))
        self.assertEqual(runtimes[2]["output_dir"], self.path("c"))

    def test_skipped_regions_exit_partial(self):
        series = self.synth("data", "--zero-depth-every", "4")
        code = cli.main(["aub-rank", "--input", series, "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_PARTIAL)
        skipped = Path(self.path("out", "skipped.csv")).read_text().splitlines()
        self.assertEqual([line.split(",")[0] for line in skipped[1:]], ["B0000", "B0004"])
        self.assertIn("NoLocalMaxError", skipped[1])


class TestExitCodes(CliTestCase):

    def test_missing_input(self):
        code = cli.main(["aub-rank", "--input", self.path("nope.csv"), "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_INVALID)
        self.assertFalse(os.path.exists(self.path("out", "run_manifest.json")))

    def test_bad_order(self):
        code = cli.main(["arima-score", "--input", "x.csv", "--order", "1,x,0", "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_INVALID)

    def test_malformed_input(self):
        bad = self.tmp / "bad.csv"
        bad.write_text("Date,RegionCode,RegionName,Value\n2005-13,1,\"A, CA\",5\n")
        code = cli.main(["aub-rank", "--input", str(bad), "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_INVALID)


class TestConfigPrecedence(CliTestCase):

    def _resolve(self, argv):
        return cli.resolve_config(cli.build_parser().parse_args(argv))

    def test_defaults_file_flags(self):
        settings = self.tmp / "run.json"
        settings.write_text(json.dumps({"k": 2, "ma_window": 3}))
        cfg = self._resolve(["aub-rank", "--config", str(settings), "--k", "1"])
        self.assertEqual(cfg.k, 1)
        self.assertEqual(cfg.ma_window, 3)
        self.assertEqual(cfg.max_gap, cli.RunConfig().max_gap)

    def test_unknown_key(self):
        settings = self.tmp / "run.json"
        settings.write_text(json.dumps({"window_size": 3}))
        with self.assertRaises(ConfigError):
            self._resolve(["aub-rank", "--config", str(settings)])

    def test_invalid_value(self):
        with self.assertRaises(ConfigError):
            self._resolve(["aub-rank", "--ma-window", "0"])

    def test_criterion(self):
        self.assertEqual(self._resolve(["arima-score"]).criterion, "aic")
        self.assertEqual(self._resolve(["arima-score", "--criterion", "bic"]).criterion, "bic")
        settings = self.tmp / "run.json"
        settings.write_text(json.dumps({"criterion": "hqic"}))
        with self.assertRaises(ConfigError):
            self._resolve(["arima-score", "--config", str(settings)])


class TestArimaScore(CliTestCase):

    def test_fixed_order(self):
        series = self.synth("data", "--regions", "2", "--arma-regions", "1")
        code = cli.main([
            "arima-score", "--input", series, "--order", "0,1,0", "--horizon", "12",
            "--output-dir", self.path("out"),
        ])
        self.assertEqual(code, cli.EXIT_OK)
        files = _tree(self.path("out"))
        self.assertIn("forecasts/A0000.csv", files)
        self.assertIn("correlogram.csv", files)
        rows = files["arima_scores.csv"].decode().splitlines()
        self.assertEqual(len(rows), 4)
        self.assertTrue(rows[0].startswith("region_code,region_name,p,d,q,sigma2"))
        forecast = files["forecasts/A0000.csv"].decode().splitlines()
        self.assertEqual(len(forecast), 13)
        histogram = files["ci_area_histogram.csv"].decode().splitlines()
        self.assertEqual(histogram[0], "bin_lower,bin_upper,count")
        self.assertEqual(sum(int(line.split(",")[2]) for line in histogram[1:]), 3)
        correlogram = files["correlogram.csv"].decode().splitlines()
        self.assertEqual(correlogram[0], "region_code,lag,acf,band95")

    def test_backtest_columns(self):
        series = self.synth("data", "--regions", "0", "--arma-regions", "1")
        code = cli.main([
            "arima-score", "--input", series, "--order", "1,1,0", "--split", "2005-01",
            "--acf-lags", "0", "--output-dir", self.path("out"),
        ])
        self.assertEqual(code, cli.EXIT_OK)
        header = Path(self.path("out", "arima_scores.csv")).read_text().splitlines()[0]
        self.assertTrue(header.endswith("backtest_n,rmse,mae,coverage95"))
        self.assertFalse(os.path.exists(self.path("out", "correlogram.csv")))


class TestOtherCommands(CliTestCase):

    def test_pca(self):
        features = self.tmp / "features.csv"
        features.write_text(
            "RegionCode,RegionName,price,income,density,label\n"
            "1,\"A, CA\",500000,70000,1200,x\n"
            "2,\"B, TX\",200000,50000,300,y\n"
            "3,\"C, NY\",650000,90000,5000,z\n"
            "4,\"D, OH\",150000,45000,NA,w\n"
            "5,\"E, FL\",300000,52000,800,v\n"
        )
        code = cli.main(["pca", "--features", str(features), "--k", "2", "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_OK)
        scatter = Path(self.path("out", "pca_scatter.csv")).read_text().splitlines()
        self.assertEqual(scatter[0], "region_code,pc1,pc2")
        self.assertEqual(len(scatter), 6)
        summary = json.loads(Path(self.path("out", "pca_summary.json")).read_text())
        self.assertEqual(summary["k"], 2)

    def test_correlate(self):
        series = self.synth()
        cli.main(["aub-rank", "--input", series, "--output-dir", self.path("rank")])
        population = self.tmp / "population.csv"
        population.write_text("RegionCode,Value\n" + "".join(f"B{i:04d},{10000 + 500 * i * i}\n" for i in range(8)))
        code = cli.main([
            "correlate", "--aub-scores", self.path("rank", "aub_scores.csv"),
            "--population", str(population), "--output-dir", self.path("out"),
        ])
        self.assertEqual(code, cli.EXIT_OK)
        report = Path(self.path("out", "correlation_report.csv")).read_text().splitlines()
        self.assertEqual(report[0], "metric,covariate,n,slope,intercept,r,r_squared")
        self.assertTrue(report[1].startswith("aub,population,8,"))
        self.assertTrue(os.path.exists(self.path("out", "scatter", "aub_vs_population.csv")))

    def test_correlate_needs_inputs(self):
        code = cli.main(["correlate", "--output-dir", self.path("out")])
        self.assertEqual(code, cli.EXIT_INVALID)

    def test_choropleth(self):
        series = self.synth()
        code = cli.main([
            "choropleth-export", "--input", series, "--year-start", "2005", "--year-end", "2010",
            "--level-clamp", "0,550000", "--output-dir", self.path("out"),
        ])
        self.assertEqual(code, cli.EXIT_OK)
        levels = Path(self.path("out", "state_levels.csv")).read_text().splitlines()
        self.assertEqual(levels[0], "state,2005,2006,2007,2008,2009,2010")
        diffs = Path(self.path("out", "state_diffs.csv")).read_text().splitlines()
        self.assertEqual(diffs[0], "state,2005,2006,2007,2008,2009")

    def test_metrics_file(self):
        series = self.synth()
        metrics = self.path("metrics.prom")
        cli.main(["aub-rank", "--input", series, "--output-dir", self.path("out"), "--metrics-file", metrics])
        text = Path(metrics).read_text()
        self.assertIn('housing_regions_total{command="aub-rank",status="ok"} 8.0', text)
        manifest = json.loads(Path(self.path("out", "run_manifest.json")).read_text())
        self.assertEqual(manifest["runtime"]["metrics_file"], metrics)
        self.assertNotIn("metrics_file", manifest["config"])


if __name__ == '__main__':
    unittest.main()
