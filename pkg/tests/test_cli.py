import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from osskit import cli
from osskit.config import ConfigError, RunConfig, dump_config, load_config
from osskit.ingest import load_feature_table, save_feature_table
from osskit.osscore import VARIANTS, OSSConfig

from conftest import gaussian_table


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def write_config(path, **doc):
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture
def kitti_config(tmp_path, kitti_fixture):
    labels, images = kitti_fixture
    return write_config(
        tmp_path / "run.yaml",
        seed=4,
        out="out",
        datasets={"kitti": {"format": "kitti", "labels": labels.name, "images": images.name}},
    )


@pytest.fixture
def tables(tmp_path):
    means = [[0, 0, 0], [3, 0, 0], [0, 3, 0]]
    paths = {}
    for i, name in enumerate(["ref", "a", "b", "c"]):
        t = gaussian_table(name, [[m[0] + 0.4 * i, m[1], m[2]] for m in means], [60 + 10 * i] * 3, i)
        paths[name] = tmp_path / f"{name}.ossft"
        save_feature_table(t, paths[name])
    return paths


class TestExtract:
    def test_kitti_row_count(self, tmp_path, kitti_config):
        assert run("extract", "kitti", "--config", kitti_config) == 0
        table = load_feature_table(tmp_path / "out" / "kitti.ossft")
        assert len(table) == 5
        summary = json.loads((tmp_path / "out" / "kitti.extract.json").read_text())
        assert summary["seed"] == 4
        assert summary["extraction"]["crops"] == 5
        assert "wall_time_s" not in json.dumps(summary)

    def test_rerun_byte_identical(self, tmp_path, kitti_config):
        run("extract", "kitti", "--config", kitti_config)
        first = (tmp_path / "out" / "kitti.ossft").read_bytes()
        run("extract", "kitti", "--config", kitti_config, "--threads", 4)
        assert (tmp_path / "out" / "kitti.ossft").read_bytes() == first

    def test_missing_image_dir(self, tmp_path, kitti_fixture):
        labels, _ = kitti_fixture
        cfg = write_config(tmp_path / "c.yaml", out="out", datasets={"k": {"format": "kitti", "labels": str(labels), "images": "nope"}})
        assert run("extract", "k", "--config", cfg) == 3
        assert not (tmp_path / "out" / "k.ossft").exists()

    def test_parse_failure(self, tmp_path):
        (tmp_path / "imgs").mkdir()
        (tmp_path / "bad.json").write_text('{"images": [')
        cfg = write_config(tmp_path / "c.yaml", out="out", datasets={"d": {"format": "coco", "images": "imgs", "annotations": "bad.json"}})
        assert run("extract", "d", "--config", cfg) == 2
        assert not (tmp_path / "out" / "d.ossft").exists()
        assert not (tmp_path / "out" / "d.extract.json").exists()

    def test_unknown_dataset(self, kitti_config):
        assert run("extract", "nope", "--config", kitti_config) == 1


class TestOss:
    def test_self_comparison_band(self, tmp_path, tables):
        scores = []
        for seed in range(10):
            assert run("oss", tables["ref"], "--reference", tables["ref"], "--seed", seed, "--out", tmp_path / "r") == 0
            doc = json.loads((tmp_path / "r" / "oss.json").read_text())
            assert doc["seed"] == seed
            scores.append(doc["results"][0]["oss"])
        assert 1 / 0.77 <= np.mean(scores) <= 1 / 0.73

    def test_three_sets_csv(self, tmp_path, tables):
        assert run("oss", tables["a"], tables["b"], tables["c"], "--reference", tables["ref"], "--out", tmp_path / "r") == 0
        with open(tmp_path / "r" / "oss.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["set_id"] for r in rows] == ["a", "b", "c"]
        assert set(rows[0]) == {"set_id", "oss", "beta", "weighting_active"}

    def test_disjoint_catalogs(self, tmp_path, capsys):
        save_feature_table(gaussian_table("p", [[0, 0, 0]], [20], 1, catalog=["boat"]), tmp_path / "p.ossft")
        save_feature_table(gaussian_table("q", [[0, 0, 0]], [20], 2, catalog=["car"]), tmp_path / "q.ossft")
        assert run("oss", tmp_path / "p.ossft", "--reference", tmp_path / "q.ossft", "--out", tmp_path / "r") == 4
        err = capsys.readouterr().err
        assert "boat" in err and "car" in err

    def test_corrupt_table(self, tmp_path, tables):
        buf = bytearray(tables["a"].read_bytes())
        buf[-2] ^= 0xFF
        tables["a"].write_bytes(bytes(buf))
        assert run("oss", tables["a"], "--reference", tables["ref"], "--out", tmp_path / "r") == 2

    def test_missing_table(self, tmp_path, tables):
        assert run("oss", tmp_path / "nope.ossft", "--reference", tables["ref"]) == 3

    def test_format_json_only(self, tmp_path, tables):
        run("oss", tables["a"], "--reference", tables["ref"], "--out", tmp_path / "r", "--format", "json")
        assert (tmp_path / "r" / "oss.json").exists() and not (tmp_path / "r" / "oss.csv").exists()

    def test_config_overrides(self, tmp_path, tables):
        cfg = write_config(tmp_path / "c.yaml", seed=11, oss={"kde_sample_size": 300, "c_w": 0.5})
        run("oss", tables["a"], "--reference", tables["ref"], "--config", cfg, "--out", tmp_path / "r")
        doc = json.loads((tmp_path / "r" / "oss.json").read_text())
        assert doc["seed"] == 11
        assert doc["config"]["oss"]["kde_sample_size"] == 300 and doc["config"]["oss"]["c_w"] == 0.5


class TestSelectVal:
    def test_full_set(self, tmp_path, tables):
        assert run("select-val", tables["a"], tables["ref"], "--z", 1, "--fraction", 1.0, "--out", tmp_path / "r") == 0
        doc = json.loads((tmp_path / "r" / "subset.json").read_text())
        assert doc["result"]["best_subset"] == load_feature_table(tables["a"]).distinct_images()

    def test_repeat_identical(self, tmp_path, tables):
        for out in ("r1", "r2"):
            run("select-val", tables["a"], tables["ref"], "--z", 8, "--fraction", 0.25, "--seed", 3, "--out", tmp_path / out)
        for name in ("subset.json", "subset.csv"):
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()

    def test_bad_fraction(self, tables):
        assert run("select-val", tables["a"], tables["ref"], "--fraction", 2) == 1


class TestTextCommands:
    def test_savings(self, tmp_path, capsys):
        (tmp_path / "c.csv").write_text("iteration,gpu_hours\n" + "".join(f"{i},{c}\n" for i, c in enumerate([3, 4, 4, 5, 6, 9, 23])))
        assert run("savings", tmp_path / "c.csv", "-i", 1, "--out", tmp_path / "r") == 0
        assert "S_OSS=51 S_mAP=47" in capsys.readouterr().out

    def test_savings_bad_iteration(self, tmp_path):
        (tmp_path / "c.csv").write_text("0,1\n1,2\n2,3\n")
        assert run("savings", tmp_path / "c.csv", "-i", 5, "--out", tmp_path / "r") == 4

    def _scores(self, tmp_path):
        (tmp_path / "oss.csv").write_text("method_id,oss\nm1,1.2\nm2,0.9\nm3,1.0\nm4,1.1\n")
        (tmp_path / "map.csv").write_text("method_id,map\nm3,0.40\nm1,0.52\nm2,0.31\nm4,0.47\n")

    def test_rank_keep_all(self, tmp_path):
        self._scores(tmp_path)
        assert run("rank", tmp_path / "oss.csv", "--keep-top", 4, "--out", tmp_path / "r") == 0
        doc = json.loads((tmp_path / "r" / "ranking.json").read_text())
        assert doc["dropped"] == [] and doc["kept"] == ["m1", "m4", "m3", "m2"]

    def test_correlate(self, tmp_path):
        self._scores(tmp_path)
        assert run("correlate", tmp_path / "oss.csv", tmp_path / "map.csv", "--out", tmp_path / "r") == 0
        doc = json.loads((tmp_path / "r" / "correlation.json").read_text())
        assert doc["report"]["kendall"]["statistic"] == 1.0

    def test_correlate_missing_method(self, tmp_path):
        self._scores(tmp_path)
        (tmp_path / "map.csv").write_text("method_id,map\nm1,0.5\nm2,0.3\nm3,0.4\n")
        assert run("correlate", tmp_path / "oss.csv", tmp_path / "map.csv", "--out", tmp_path / "r") == 4


def test_ablate_one_block_per_variant(tmp_path, tables):
    assert run("ablate", tables["a"], tables["b"], "--reference", tables["ref"], "--out", tmp_path / "r") == 0
    doc = json.loads((tmp_path / "r" / "ablation.json").read_text())
    assert sorted(doc["variants"]) == sorted(VARIANTS)
    assert all(len(v) == 2 for v in doc["variants"].values())


def test_synth(tmp_path):
    spec = {
        "n_images": 4,
        "canvas": [64, 48],
        "classes": [{"name": "a", "frequency": 0.5}, {"name": "b", "frequency": 0.5, "size_range": [8, 20]}],
    }
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(spec))
    assert run("synth", tmp_path / "s.yaml", "--seed", 2, "--out", tmp_path / "d") == 0
    assert len(list((tmp_path / "d" / "images").glob("*.png"))) == 4
    assert json.loads((tmp_path / "d" / "synth.json").read_text())["seed"] == 2


def test_synth_bad_spec(tmp_path):
    (tmp_path / "s.yaml").write_text("classes: [{name: a, frequency: 0.3}]\n")
    assert run("synth", tmp_path / "s.yaml", "--out", tmp_path / "d") == 2


class TestUsage:
    def test_unknown_flag(self):
        assert run("oss", "--bogus") == 1

    def test_no_command(self):
        assert run() == 1

    def test_bad_config(self, tmp_path, tables):
        cfg = write_config(tmp_path / "c.yaml", oss={"no_such_key": 1})
        assert run("oss", tables["a"], "--reference", tables["ref"], "--config", cfg) == 1

    def test_seed_in_section_rejected(self, tmp_path, tables):
        cfg = write_config(tmp_path / "c.yaml", oss={"seed": 3})
        assert run("oss", tables["a"], "--reference", tables["ref"], "--config", cfg) == 1

    def test_thread_env(self, tmp_path, tables, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "x")
        assert run("oss", tables["a"], "--reference", tables["ref"], "--out", tmp_path / "r") == 1
        monkeypatch.setenv(cli.THREADS_ENV, "3")
        assert run("oss", tables["a"], "--reference", tables["ref"], "--out", tmp_path / "r") == 0


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict(
            {
                "seed": 7,
                "threads": 2,
                "aliases": {"person": "pedestrian"},
                "datasets": {"k": {"format": "kitti", "images": "i", "labels": "l", "aliases": {"van": "car"}}},
                "features": {"use_hue": True, "ch_normalized": True},
                "oss": {"c_w": 0.5, "disable_beta": True},
                "search": {"z": 10, "include_full_set": True},
            }
        )
        path = tmp_path / "c.yaml"
        path.write_text(dump_config(cfg))
        again = load_config(path)
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)

    def test_seed_injected(self):
        cfg = RunConfig(seed=5)
        assert cfg.oss_config().seed == 5 and cfg.search_config().seed == 5

    def test_paths_relative_to_file(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", out="reports")
        assert load_config(path).resolve("reports") == tmp_path / "reports"

    def test_bad_format(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"datasets": {"x": {"format": "voc", "images": "i"}}})
