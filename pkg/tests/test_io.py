"""File-format tests: deterministic tables, config hashing, JSON records."""

import json

import numpy as np
import pytest

from dickeising.dynamics import (KrylovConfig, TRAJECTORY_COLUMNS,
                                 run_trajectory)
from dickeising.io import (config_hash, load_config, read_solver_record,
                           read_table, write_solver_record, write_table,
                           write_trajectory_table)
from dickeising.model import ModelParams
from dickeising.mps import random_mps


def test_table_round_trip_exact(tmp_path):
    """Floats survive write/read bit for bit, including awkward values."""
    rng = np.random.default_rng(5)
    rows = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-12, 12, (7, 3))
    rows[0, 0] = 1.0 / 3.0
    rows[1, 1] = 0.1 + 0.2
    rows[2, 2] = 0.0
    path = tmp_path / "t.tsv"
    write_table(path, ["a", "b", "c"], rows.tolist())
    meta, cols, data = read_table(path)
    assert cols == ["a", "b", "c"]
    assert data.shape == rows.shape
    assert np.array_equal(data, rows)


def test_table_rewrite_byte_identical(tmp_path):
    rows = [[1.5, -2.0], [np.pi, 1e-300]]
    meta = {"foo": "bar", "alpha": "1"}
    p1 = tmp_path / "one.tsv"
    p2 = tmp_path / "two.tsv"
    write_table(p1, ["x", "y"], rows, meta)
    write_table(p2, ["x", "y"], rows, meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_table_meta_round_trip(tmp_path):
    path = tmp_path / "m.tsv"
    write_table(path, ["v"], [[1.0]], {"config": "abc123", "L": "8"})
    meta, _, _ = read_table(path)
    assert meta == {"config": "abc123", "L": "8"}


def test_table_ints_and_bools_formatted(tmp_path):
    path = tmp_path / "i.tsv"
    write_table(path, ["n", "flag"], [[3, True], [7, False]])
    text = path.read_text()
    assert "\n3\t1\n7\t0\n" in text
    _, _, data = read_table(path)
    assert data.tolist() == [[3.0, 1.0], [7.0, 0.0]]


def test_table_empty_rows(tmp_path):
    path = tmp_path / "e.tsv"
    write_table(path, ["a", "b"], [])
    _, cols, data = read_table(path)
    assert cols == ["a", "b"]
    assert data.shape == (0, 2)


def test_table_row_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_table(tmp_path / "bad.tsv", ["a", "b"], [[1.0]])


def test_table_rejects_foreign_file(tmp_path):
    path = tmp_path / "not_a_table.tsv"
    path.write_text("hello\n1\t2\n")
    with pytest.raises(ValueError):
        read_table(path)


def test_table_rejects_future_version(tmp_path):
    path = tmp_path / "v9.tsv"
    path.write_text("# dickeising table v9\n# columns: a\n1.0\n")
    with pytest.raises(ValueError):
        read_table(path)


def test_config_hash_order_insensitive():
    a = {"x": 1, "y": [1, 2, 3], "z": {"p": 0.5, "q": "s"}}
    b = {"z": {"q": "s", "p": 0.5}, "y": [1, 2, 3], "x": 1}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 12
    assert all(c in "0123456789abcdef" for c in config_hash(a))


def test_config_hash_value_sensitive():
    base = {"x": 1, "y": 2.0}
    assert config_hash(base) != config_hash({"x": 1, "y": 2.0001})
    assert config_hash(base) != config_hash({"x": 1})
    # list order matters even though key order does not
    assert config_hash({"y": [1, 2]}) != config_hash({"y": [2, 1]})


def test_config_hash_numpy_scalars():
    assert config_hash({"n": np.int64(4), "g": np.float64(0.5)}) == \
        config_hash({"n": 4, "g": 0.5})


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("model:\n  L: 4\n  g: 0.3\nsolver:\n  max_bond: 16\n")
    cfg = load_config(path)
    assert cfg == {"model": {"L": 4, "g": 0.3}, "solver": {"max_bond": 16}}


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_solver_record_round_trip(tmp_path):
    path = tmp_path / "rec.json"
    payload = {"energy": -3.5, "sweeps": 12, "gaps": [0.1, 0.2]}
    write_solver_record(path, payload)
    doc = read_solver_record(path)
    assert doc["schema_version"] == 1
    assert doc["energy"] == -3.5
    assert doc["sweeps"] == 12
    assert doc["gaps"] == [0.1, 0.2]


def test_solver_record_deterministic(tmp_path):
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    write_solver_record(p1, {"b": 1, "a": 2})
    write_solver_record(p2, {"a": 2, "b": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_solver_record_rejects_unknown_schema(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema_version": 99, "energy": 0.0}))
    with pytest.raises(ValueError):
        read_solver_record(path)


def test_trajectory_table_round_trip(tmp_path):
    params = ModelParams(omega=1.0, h=0.2, J=0.1, g=0.3, L=2, n_max=3)
    psi = random_mps(params.site_specs(), 3, np.random.default_rng(3))
    rec = run_trajectory(params, psi, t_final=0.2, dt=0.05, kappa=0.4,
                         seed=7, config=KrylovConfig(basis_size=4))
    path = tmp_path / "traj.tsv"
    write_trajectory_table(path, rec, {"config": "deadbeef0123"})
    meta, cols, data = read_table(path)
    assert cols == list(TRAJECTORY_COLUMNS)
    assert meta["seed"] == "7"
    assert meta["config"] == "deadbeef0123"
    assert float(meta["dt"]) == 0.05
    assert float(meta["kappa"]) == 0.4
    assert np.array_equal(data, rec.as_table())
