"""Runs the egoae binary and checks exit codes and output shapes.

usage: cli_contract.py EGOAE PROJECT_ROOT
"""

import csv
import io
import json
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema

EGOAE = ""
ROOT = Path(".")


def schema(name):
    return json.loads((ROOT / "docs" / "schemas" / f"{name}.schema.json").read_text())


def run(*args, check=True):
    p = subprocess.run([EGOAE, *map(str, args)], capture_output=True, text=True, timeout=300)
    if check and p.returncode != 0:
        raise AssertionError(f"egoae {' '.join(map(str, args))} exited {p.returncode}\n{p.stderr}")
    return p


def lines(p):
    return [json.loads(line) for line in p.stdout.splitlines() if line.strip()]


class Orbits(unittest.TestCase):
    def test_triangle_file(self):
        out = lines(run("orbits", ROOT / "data/templates/s3.json"))
        self.assertEqual(len(out), 1)
        jsonschema.validate(out[0], schema("orbits"))
        self.assertEqual(out[0]["orbits"], [[0], [1, 2]])
        self.assertEqual(out[0]["group_size"], 2)

    def test_path_has_three_orbits(self):
        out = lines(run("orbits", ROOT / "data/templates/s2.json"))
        self.assertEqual(len(out[0]["orbits"]), 3)

    def test_disconnected_is_input_error(self):
        p = run("orbits", ROOT / "data/templates/disconnected.json", check=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("disconnected", p.stderr)

    def test_missing_file(self):
        self.assertEqual(run("orbits", ROOT / "data/templates/nope.json", check=False).returncode, 2)


class Templates(unittest.TestCase):
    def test_list_and_show(self):
        out = lines(run("templates", "list"))
        self.assertGreaterEqual(len(out), 11)
        for entry in out:
            jsonschema.validate(entry, schema("template"))
        shown = json.loads(run("templates", "show", "S5").stdout)
        jsonschema.validate(shown, schema("template"))
        self.assertEqual(shown["orbits"], [[0], [1, 2, 3]])

    def test_unknown_name(self):
        self.assertEqual(run("templates", "show", "S99", check=False).returncode, 2)


class Match(unittest.TestCase):
    def test_lines_validate_and_use_original_ids(self):
        out = lines(run("match", "--edges", ROOT / "data/two_stars/edges.txt", "--template", "S2"))
        s = schema("match")
        for entry in out:
            jsonschema.validate(entry, s)
        egos = {e["ego"]: e for e in out if e["type"] == "ego"}
        self.assertEqual(len(egos), 22)
        # A leaf reaches the other leaves of its star through the center.
        leaf = egos[101]
        self.assertEqual(len(leaf["matches"]), 9)
        self.assertEqual(leaf["ae_sets"][1], [100])
        self.assertEqual(sorted(leaf["ae_sets"][2]), [102, 103, 104, 105, 106, 107, 108, 109, 110])

    def test_two_template_sources_rejected(self):
        p = run("match", "--edges", ROOT / "data/two_stars/edges.txt", "--template", "S1",
                "--catalogue", "citation", check=False)
        self.assertEqual(p.returncode, 2)

    def test_directed_graph_needs_ignore_direction(self):
        args = ["--directed", "match", "--edges", ROOT / "data/two_stars/edges.txt", "--template", "S1"]
        self.assertEqual(run(*args, check=False).returncode, 2)
        self.assertEqual(run("--ignore-direction", *args).returncode, 0)


class Train(unittest.TestCase):
    def train(self, out, *extra):
        d = ROOT / "data/two_stars"
        return run("--out-dir", out, "train", "--edges", d / "edges.txt", "--features", d / "features.csv",
                   "--labels", d / "labels.csv", "--template", "S1", *extra)

    def test_two_stars_runs(self):
        with tempfile.TemporaryDirectory() as out:
            self.train(out, "--runs", "3")
            out = Path(out)
            metrics = json.loads((out / "metrics.json").read_text())
            jsonschema.validate(metrics, schema("metrics"))
            self.assertEqual(len(metrics["test_acc"]), 3)
            self.assertEqual(metrics["mean"], 1.0)
            log = list(csv.reader(io.StringIO((out / "train_log.csv").read_text())))
            self.assertEqual(log[0], ["run", "epoch", "train_loss", "val_acc", "lr"])
            self.assertEqual({r[0] for r in log[1:]}, {"0", "1", "2"})
            ckpt = json.loads((out / "checkpoint.json").read_text())
            self.assertEqual(ckpt["format"], "grape-checkpoint-v1")
            self.assertEqual(json.loads((out / "id_map.json").read_text())["dense_to_original"][0], 100)
            splits = json.loads((out / "split.json").read_text())
            self.assertEqual(len(splits), 3)
            ids = sorted(splits[0]["train"] + splits[0]["val"] + splits[0]["test"])
            self.assertEqual(ids[0], 100)

    def test_split_file_reuse_and_determinism(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            self.train(a)
            self.train(b, "--split", Path(a) / "split.json")
            self.assertEqual((Path(a) / "train_log.csv").read_text(), (Path(b) / "train_log.csv").read_text())

    def test_missing_labels(self):
        p = run("train", "--edges", ROOT / "data/two_stars/edges.txt", "--template", "S1", "--dummy-features",
                "--labels", ROOT / "data/two_stars/missing.csv", check=False)
        self.assertEqual(p.returncode, 2)
        self.assertIn("missing.csv", p.stderr)


def fitness_columns(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    return [(r["generation"], r["best_fitness"], r["mean_fitness"]) for r in rows]


class Search(unittest.TestCase):
    def search(self, out, *extra):
        return run("--synthetic", "planted-triangles", "--seed", "4", "--out-dir", out, "search", *extra)

    def test_outputs_validate_and_repeat(self):
        small = ["--generations", "3", "--pool", "6", "--eliminate", "2"]
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            summary = json.loads(self.search(a, *small).stdout)
            jsonschema.validate(summary, schema("search_summary"))
            self.search(b, *small)
            best = json.loads((Path(a) / "best_gene.json").read_text())
            jsonschema.validate(best, schema("best_gene"))
            self.assertEqual(best, json.loads((Path(b) / "best_gene.json").read_text()))
            ha = (Path(a) / "history.csv").read_text()
            hb = (Path(b) / "history.csv").read_text()
            self.assertEqual(ha.splitlines()[0],
                             "generation,best_fitness,mean_fitness,scratch_match_s,incremental_match_s,eval_s")
            self.assertEqual(fitness_columns(ha), fitness_columns(hb))
            self.assertEqual(len(fitness_columns(ha)), 4)

    def test_zero_budget_scores_initial_genes_only(self):
        with tempfile.TemporaryDirectory() as a:
            self.search(a, "--budget", "0", "--generations", "0")
            rows = fitness_columns((Path(a) / "history.csv").read_text())
            self.assertEqual(len(rows), 1)
            best = json.loads((Path(a) / "best_gene.json").read_text())
            self.assertTrue(all(t["name"] == "S1" for t in best["templates"]))


class DemoLimitation(unittest.TestCase):
    def test_default(self):
        out = json.loads(run("demo-limitation").stdout)
        jsonschema.validate(out, schema("demo_limitation"))
        self.assertEqual(out["mpnn_max_distance"], 0.0)
        self.assertEqual(out["grape_separated"], 20)
        self.assertTrue(out["passed"])

    def test_deep_mpnn_still_blind(self):
        out = json.loads(run("demo-limitation", "--layers", "5").stdout)
        self.assertEqual(out["mpnn_distance_by_depth"], [0.0] * 5)

    def test_deterministic(self):
        self.assertEqual(run("--seed", "7", "demo-limitation").stdout, run("--seed", "7", "demo-limitation").stdout)


class Usage(unittest.TestCase):
    def test_no_subcommand(self):
        self.assertEqual(run(check=False).returncode, 2)

    def test_help(self):
        self.assertEqual(run("--help", check=False).returncode, 0)


if __name__ == "__main__":
    EGOAE = sys.argv[1]
    ROOT = Path(sys.argv[2])
    unittest.main(argv=[sys.argv[0], "-v"])
