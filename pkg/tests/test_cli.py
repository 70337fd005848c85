import json

import numpy as np
import pytest

import matchaffinity as ma
from matchaffinity.cli import main

SCHEMA_BLOCK = {
    "continuous": ["age", "educ"],
    "categoricals": [{"name": "race", "labels": ["w", "b", "h"]}],
}


def write_market(tmp_path, name="m1", n_couples=500, seed=101,
                 kind=ma.UNIPARTITE, a_star=None):
    schema = ma.TraitSchema(("age", "educ"),
                            (ma.CategoricalDef("race", ("w", "b", "h")),))
    law = ma.TraitLaw.gaussian(np.zeros(2), np.eye(2),
                               category_probs=[(0.5, 0.3, 0.2)])
    if a_star is None:
        a_star = np.array([[0.8, -0.1], [-0.1, 0.3]])
    model = ma.AffinityModel(a_star, np.array([1.0]), 1.0)
    spec = ma.ScenarioSpec(schema, law, model, n_support=25,
                           n_couples=n_couples, seed=seed, kind=kind)
    path = tmp_path / f"{name}.csv"
    ma.generate_frame(spec).to_csv(path, index=False)
    return path


def write_config(tmp_path, markets, **extra):
    cfg = {"version": 1, "schema": SCHEMA_BLOCK, "markets": markets,
           "seed": 5, "bootstrap": {"replicates": 20}}
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestEstimateCommand:
    def test_estimate_writes_reports(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "m1.csv",
                             "kind": "unipartite"}])
        out = tmp_path / "out"
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "estimate_m1.json").read_text())
        assert payload["converged"]
        assert payload["sigma"] > 0
        assert len(payload["affinity"]) == 2
        assert payload["entropy_convention"] == "mutual-information"
        text = (out / "estimate_m1.txt").read_text()
        assert "sigma" in text
        assert "NONCONVERGED" not in text

    def test_estimate_recovers_planted_values(self, tmp_path):
        write_market(tmp_path, n_couples=2000)
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "m1.csv",
                             "kind": "unipartite"}])
        out = tmp_path / "out"
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "estimate_m1.json").read_text())
        a_hat = np.asarray(payload["affinity"])
        a_se = np.asarray(payload["affinity_se"])
        sigma = payload["sigma"]
        planted = np.array([[0.8, -0.1], [-0.1, 0.3]]) * sigma
        assert (np.abs(a_hat - planted) <= 4 * a_se + 0.05).all()

    def test_missing_market_file_is_data_error(self, tmp_path):
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "absent.csv",
                             "kind": "unipartite"}])
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_empty_input_is_data_error(self, tmp_path):
        (tmp_path / "empty.csv").write_text(
            "head_age,partner_age,head_educ,partner_educ,"
            "head_race,partner_race\n")
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "empty.csv",
                             "kind": "unipartite"}])
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_duplicate_market_names_rejected(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "m1.csv"},
                            {"name": "m1", "path": "m1.csv"}])
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_bad_version_rejected(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "m1.csv"}], version=2)
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_nonconvergence_writes_banner_and_exit_3(self, tmp_path):
        write_market(tmp_path, n_couples=800)
        cfg = write_config(tmp_path,
                           [{"name": "m1", "path": "m1.csv",
                             "kind": "unipartite"}],
                           fit={"max_outer_iterations": 1})
        out = tmp_path / "out"
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(out)]) == 3
        text = (out / "estimate_m1.txt").read_text()
        assert "NONCONVERGED" in text
        payload = json.loads((out / "estimate_m1.json").read_text())
        assert not payload["converged"]


class TestSimulateCommand:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, [], scenario={
            "kind": "unipartite", "seed": 3, "n_support": 15,
            "n_couples": 60,
            "schema": SCHEMA_BLOCK | {"categoricals": []},
            "law": {"components": [{"weight": 1.0, "mean": [0, 0],
                                    "covariance": [[1, 0], [0, 1]]}],
                    "category_probs": []},
            "model": {"affinity": [[0.5, 0.0], [0.0, 0.5]],
                      "homogamy": [], "sigma": 1.0}},
            name="sim")
        # config schema includes a categorical the scenario does not use;
        # the scenario block carries its own schema
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(out_a)]) == 0
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(out_b)]) == 0
        assert (out_a / "sample_sim.csv").read_bytes() == \
            (out_b / "sample_sim.csv").read_bytes()
        assert (out_a / "truth_sim.json").read_bytes() == \
            (out_b / "truth_sim.json").read_bytes()

    def test_pooled_preset_sidecar(self, tmp_path):
        cfg = write_config(tmp_path, [], preset="pooled", name="pool")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(out)]) == 0
        truth = json.loads((out / "truth_pool.json").read_text())
        traits = truth["continuous"]
        g = traits.index("gender")
        o = traits.index("orientation")
        a_mat = np.asarray(truth["affinity"])
        assert a_mat[g, g] < 0
        assert a_mat[g, o] > 0
        assert "demonstrative" in truth["note"]

    def test_missing_scenario_rejected(self, tmp_path):
        cfg = write_config(tmp_path, [])
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2


class TestCompareCommand:
    def test_same_market_twice_identical_columns(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path,
                           [{"name": "ma", "path": "m1.csv"},
                            {"name": "mb", "path": "m1.csv"}])
        out = tmp_path / "out"
        assert main(["compare", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "compare.json").read_text())
        first, second = payload["markets"]
        assert first["affinity"] == second["affinity"]
        assert first["sigma"] == second["sigma"]
        text = (out / "compare.txt").read_text()
        assert "not an innocuous normalization" in text

    def test_needs_two_markets(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path, [{"name": "m1", "path": "m1.csv"}])
        assert main(["compare", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_scaled_market_ordering_preserved(self, tmp_path):
        write_market(tmp_path, name="base", seed=7)
        write_market(tmp_path, name="strong", seed=7,
                     a_star=np.array([[1.6, -0.2], [-0.2, 0.6]]))
        cfg = write_config(tmp_path,
                           [{"name": "base", "path": "base.csv"},
                            {"name": "strong", "path": "strong.csv"}])
        out = tmp_path / "out"
        assert main(["compare", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "compare.json").read_text())
        base, strong = payload["markets"]
        assert np.asarray(strong["affinity"])[0, 0] > \
            np.asarray(base["affinity"])[0, 0]


class TestDescriptivesCommand:
    def test_writes_tables(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path, [{"name": "m1", "path": "m1.csv"}])
        out = tmp_path / "out"
        assert main(["descriptives", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "descriptives_m1.json").read_text())
        assert -1 <= payload["correlations"]["age"] <= 1
        text = (out / "descriptives_m1.txt").read_text()
        assert "Homogamy rates" in text
        assert "Pearson" in text


class TestSymmetryCommand:
    def test_role_scheme_by_trait(self, tmp_path):
        write_market(tmp_path, n_couples=400)
        cfg = write_config(tmp_path, [{"name": "m1", "path": "m1.csv"}],
                           role={"scheme": "by_trait", "trait": "age"},
                           bootstrap={"replicates": 15})
        out = tmp_path / "out"
        assert main(["test-symmetry", "--config", str(cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "symmetry_m1.json").read_text())
        assert payload["role_scheme"] == "by_trait:age"
        stats = np.asarray(payload["statistics"], dtype=float)
        assert np.isfinite(stats).all()

    def test_unknown_role_scheme_rejected(self, tmp_path):
        write_market(tmp_path)
        cfg = write_config(tmp_path, [{"name": "m1", "path": "m1.csv"}],
                           role={"scheme": "coin-flip"})
        assert main(["test-symmetry", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2


class TestSeedAndThreads:
    def test_seed_flag_changes_simulation(self, tmp_path):
        cfg = write_config(tmp_path, [], preset="pooled", name="pool")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out_a),
              "--seed", "1"])
        main(["simulate", "--config", str(cfg), "--out", str(out_b),
              "--seed", "2"])
        assert (out_a / "sample_pool.csv").read_bytes() != \
            (out_b / "sample_pool.csv").read_bytes()

    def test_threads_flag_keeps_results(self, tmp_path):
        write_market(tmp_path, n_couples=300)
        cfg = write_config(tmp_path, [{"name": "m1", "path": "m1.csv"}],
                           bootstrap={"replicates": 10})
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["estimate", "--config", str(cfg), "--out", str(out_a),
                     "--threads", "1"]) == 0
        assert main(["estimate", "--config", str(cfg), "--out", str(out_b),
                     "--threads", "2"]) == 0
        assert (out_a / "estimate_m1.json").read_bytes() == \
            (out_b / "estimate_m1.json").read_bytes()
