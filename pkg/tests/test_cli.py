import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from dcqd_lab import cli, dcrt
from dcqd_lab.channels import ChannelSpec, ProcessMatrix

T1, T2 = 1.146, 0.0193


def write_config(tmp_path, name="cfg.json", **doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def tomo(tmp_path, protocol="dcqd", channel=None, shots=250, seed=3, **extra):
    channel = channel or {"kind": "amplitude_damping", "p": 0.6}
    extra.setdefault("bootstrap_resamples", 4)
    return write_config(tmp_path, protocol=protocol, channel=channel, shots=shots, seed=seed, **extra)


def run_to_doc(tmp_path, cfg, *args, name="out.json"):
    out = tmp_path / name
    assert cli.main(["run", "--config", cfg, "--out", str(out), *args]) == 0
    return out, json.loads(out.read_text())


# ----- configuration parsing


def test_parse_minimal_tomography_config():
    cfg = cli.parse_config({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 100})
    assert cfg.seed == 0 and cfg.estimator == "mle" and cfg.bootstrap_resamples == 200
    assert cfg.channel == ChannelSpec.of("identity")
    assert cli.parse_config(cfg.to_dict()) == cfg


def test_parse_probe_params():
    cfg = cli.parse_config({"protocol": "dcqd", "channel": {"kind": "identity"}, "shots": 1,
                            "probe_params": {"alpha": 0.6, "beta": [0, 0.8]}})
    assert cfg.probe_params == (0.6, 0.8j)
    assert cli.parse_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize("doc, field", [
    ([], "<root>"),
    ({"protocol": "qpt", "shots": 1}, "protocol"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}}, "shots"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 0}, "shots"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1.5}, "shots"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": True}, "shots"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1, "seed": -1}, "seed"),
    ({"protocol": "sqpt", "shots": 1}, "channel"),
    ({"protocol": "sqpt", "channel": {"kind": "teleport"}, "shots": 1}, "channel.kind"),
    ({"protocol": "sqpt", "channel": {"kind": "amplitude_damping", "p": 2}, "shots": 1}, "channel"),
    ({"protocol": "sqpt", "channel": {"kind": "ms_gate", "theta": 1, "phi": 0}, "shots": 1}, "channel"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1, "colour": 1}, "colour"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1, "estimator": "bayes"}, "estimator"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1, "bootstrap_resamples": 1},
     "bootstrap_resamples"),
    ({"protocol": "sqpt", "channel": {"kind": "identity"}, "shots": 1, "schema_version": 2}, "schema_version"),
    ({"protocol": "dcqd", "channel": {"kind": "identity"}, "shots": 1,
      "probe_params": {"alpha": 1, "beta": 1}}, "probe_params"),
    ({"protocol": "dcqd", "channel": {"kind": "identity"}, "shots": 1,
      "probe_params": {"alpha": "x", "beta": 0}}, "probe_params.alpha"),
    ({"protocol": "dcrt", "shots": 1}, "dcrt_params"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1}}, "dcrt_params.T2"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 3}}, "dcrt_params.T2"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": -1, "T2": 1}}, "dcrt_params.T1"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 1, "N": 3}}, "dcrt_params.N"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 1, "a0": 2}}, "dcrt_params.a0"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 1, "times": [0, 1]}}, "dcrt_params.times"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 1, "times": [0, 2, 1]}},
     "dcrt_params.times"),
    ({"protocol": "dcrt", "shots": 1, "dcrt_params": {"T1": 1, "T2": 1, "tau": 1}}, "dcrt_params.tau"),
    ({"protocol": "ramsey", "shots": 1, "dcrt_params": {"T1": 1}}, "dcrt_params.T2"),
    ({"protocol": "decay", "shots": 1, "dcrt_params": {"T2": 1}}, "dcrt_params.T1"),
])
def test_parse_config_names_offending_field(doc, field):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(doc)
    assert info.value.field == field


def test_validate_subcommand(tmp_path, capsys):
    assert cli.main(["validate", "--config", tomo(tmp_path)]) == 0
    assert "valid" in capsys.readouterr().out
    bad = write_config(tmp_path, "bad.json", protocol="dcqd", shots=-3, channel={"kind": "identity"})
    assert cli.main(["validate", "--config", bad]) == 2
    assert "shots" in capsys.readouterr().err
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    assert cli.main(["validate", "--config", str(garbage)]) == 2
    assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 2


def test_argument_errors_exit_2(tmp_path):
    assert cli.main(["frobnicate"]) == 2
    assert cli.main([]) == 2
    assert cli.main(["run", "--config", tomo(tmp_path), "--threads", "0"]) == 2
    assert cli.main(["run", "--config", tomo(tmp_path), "--seed", "-4"]) == 2


# ----- run


def test_run_writes_valid_reproducible_result(tmp_path):
    cfg = tomo(tmp_path)
    a, doc = run_to_doc(tmp_path, cfg, "--no-runtime", name="a.json")
    b, _ = run_to_doc(tmp_path, cfg, "--no-runtime", name="b.json")
    assert a.read_bytes() == b.read_bytes()
    cli.validate_result(doc)
    assert doc["runtime_s"] is None
    assert abs(cli.rescore(doc) - doc["fidelity"]) <= 1e-12
    assert doc["estimator"]["converged"] and doc["estimator"]["monotone"]
    assert doc["estimator"]["min_choi_eigenvalue"] >= -1e-10 and doc["estimator"]["tp_residual"] <= 1e-8
    assert doc["lambda_condition_number"] == pytest.approx(6.202742008738108, rel=1e-12)
    assert sum(c["shots"] for c in doc["counts"]) == 250 * 4


def test_runtime_is_the_only_difference(tmp_path):
    cfg = tomo(tmp_path)
    _, a = run_to_doc(tmp_path, cfg, name="a.json")
    _, b = run_to_doc(tmp_path, cfg, name="b.json")
    assert a["runtime_s"] >= 0
    a.pop("runtime_s"), b.pop("runtime_s")
    assert a == b


def test_seed_override_and_thread_invariance(tmp_path, monkeypatch):
    cfg = tomo(tmp_path)
    _, base = run_to_doc(tmp_path, cfg, "--no-runtime", "--seed", "11", name="a.json")
    assert base["seed"] == 11 and base["config"]["seed"] == 11
    _, threaded = run_to_doc(tmp_path, cfg, "--no-runtime", "--seed", "11", "--threads", "3", name="b.json")
    assert threaded == base
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    _, env = run_to_doc(tmp_path, cfg, "--no-runtime", "--seed", "11", name="c.json")
    assert env == base
    monkeypatch.setenv(cli.THREADS_ENV, "lots")
    assert cli.main(["run", "--config", cfg]) == 2


def test_run_to_stdout_and_output_path(tmp_path, capsys):
    target = tmp_path / "from_config.json"
    cfg = tomo(tmp_path, output_path=str(target))
    assert cli.main(["run", "--config", cfg, "--no-runtime"]) == 0
    assert json.loads(target.read_text())["protocol"] == "dcqd"
    cfg = tomo(tmp_path, name="x")
    assert cli.main(["run", "--config", cfg, "--no-runtime"]) == 0
    assert json.loads(capsys.readouterr().out)["protocol"] == "dcqd"


def test_high_shot_identity_dcqd(tmp_path):
    cfg = tomo(tmp_path, channel={"kind": "identity"}, shots=10 ** 6)
    _, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    assert doc["fidelity"] >= 0.999


@pytest.mark.parametrize("protocol", ["sqpt", "gm"])
def test_other_tomography_paths(tmp_path, protocol):
    cfg = tomo(tmp_path, protocol=protocol, channel={"kind": "rotation", "theta": np.pi, "phi": 0.0}, shots=500)
    _, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    cli.validate_result(doc)
    assert doc["fidelity"] > 0.9
    assert len(doc["counts"]) == {"sqpt": 12, "gm": 1}[protocol]


def test_linear_estimator_result(tmp_path):
    cfg = tomo(tmp_path, channel={"kind": "phase_damping", "p": 0.6}, shots=10 ** 5, estimator="linear")
    _, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    cli.validate_result(doc)
    assert doc["estimator"]["method"] == "linear_inversion" and doc["bootstrap_resamples"] == 0
    assert doc["fidelity"] is None or doc["fidelity"] > 0.99


def test_singular_configuration_is_numerical_failure(tmp_path):
    # a product probe |0> gives a rank-deficient Lambda
    cfg = tomo(tmp_path, probe_params={"alpha": 1, "beta": 0})
    assert cli.main(["run", "--config", cfg]) == 3


def test_dcrt_run(tmp_path):
    cfg = write_config(tmp_path, protocol="dcrt", shots=100, seed=1, dcrt_params={"T1": T1, "T2": T2})
    _, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    cli.validate_result(doc)
    assert doc["fit"]["converged"]
    assert len(doc["series"]["times"]) == 24
    assert abs(doc["relative_error"]["T1"]) < 0.3 and abs(doc["relative_error"]["T2"]) < 0.3


@pytest.mark.parametrize("protocol, params, key", [
    ("ramsey", {"T2": T2}, "T2"),
    ("decay", {"T1": T1}, "T1"),
])
def test_baseline_runs(tmp_path, protocol, params, key):
    cfg = write_config(tmp_path, protocol=protocol, shots=500, seed=2, dcrt_params=params)
    _, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    cli.validate_result(doc)
    assert abs(doc["relative_error"][key]) < 0.2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dcqd_lab", "validate", "--config", tomo(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


# ----- fit


def test_fit_subcommand(tmp_path):
    series = dcrt.simulate_dcrt_series(T1, T2, 1.0, 2, dcrt.dcrt_time_grid(T1, T2), shots=100, seed=5)
    path = tmp_path / "series.csv"
    series.to_csv(path)
    out = tmp_path / "fit.json"
    assert cli.main(["fit", str(path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    expected = dcrt.fit_relaxation(series)
    assert doc["T1"] == pytest.approx(expected.T1, rel=1e-12)
    assert doc["T2"] == pytest.approx(expected.T2, rel=1e-12)
    assert cli.main(["fit", str(path), "--a0", "1.5"]) == 2
    assert cli.main(["fit", str(tmp_path / "nope.csv")]) == 2
    short = tmp_path / "short.csv"
    short.write_text(",".join(dcrt.CSV_COLUMNS) + "\n0.1,5,0,0,5,10\n0.2,4,1,1,4,10\n")
    assert cli.main(["fit", str(short)]) == 2


# ----- Bloch export


def bloch(tmp_path, chi, *args):
    src = tmp_path / "chi.json"
    src.write_text(json.dumps(cli.matrix_doc(chi.chi)))
    out = tmp_path / "bloch.csv"
    assert cli.main(["export-bloch", str(src), "--out", str(out), *args]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == cli.BLOCH_COLUMNS
    pts_in = np.array([[float(r[c]) for c in ("x_in", "y_in", "z_in")] for r in rows])
    pts_out = np.array([[float(r[c]) for c in ("x_out", "y_out", "z_out")] for r in rows])
    return rows, pts_in, pts_out


def test_export_bloch_identity(tmp_path):
    rows, a, b = bloch(tmp_path, ProcessMatrix.from_spec(ChannelSpec.of("identity")))
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1, atol=1e-12)
    assert [r["label"] for r in rows if r["kind"] == "axis"] == ["+x", "-x", "+y", "-y", "+z", "-z"]


def test_export_bloch_phase_damping(tmp_path):
    _, _, b = bloch(tmp_path, ProcessMatrix.from_spec(ChannelSpec.of("phase_damping", p=0.6)), "--resolution", "17")
    assert np.abs(b[:, 0]).max() == pytest.approx(0.4, abs=1e-12)
    assert np.abs(b[:, 2]).max() == pytest.approx(1.0, abs=1e-12)


def test_export_bloch_full_damping_collapses_to_pole(tmp_path):
    _, _, b = bloch(tmp_path, ProcessMatrix.from_spec(ChannelSpec.of("amplitude_damping", p=1.0)))
    # ground state |1> sits at z = -1
    np.testing.assert_allclose(b, np.tile([0, 0, -1], (len(b), 1)), atol=1e-12)


def test_export_bloch_from_result_document(tmp_path, capsys):
    cfg = tomo(tmp_path, bootstrap_resamples=0)
    out, doc = run_to_doc(tmp_path, cfg, "--no-runtime")
    assert cli.main(["export-bloch", str(out)]) == 0
    assert capsys.readouterr().out.startswith(",".join(cli.BLOCH_COLUMNS))


@pytest.mark.parametrize("content", [
    "{broken",
    json.dumps({"real": [[1, 0], [0, 0]]}),
    json.dumps(cli.matrix_doc(np.eye(16) / 16)),
    json.dumps(cli.matrix_doc(np.diag([1.5, -0.5, 0, 0]))),
    json.dumps([1, 2]),
])
def test_export_bloch_malformed(tmp_path, content):
    src = tmp_path / "chi.json"
    src.write_text(content)
    assert cli.main(["export-bloch", str(src)]) in (2, 3)
    assert cli.main(["export-bloch", str(src)]) != 0


def test_export_bloch_bad_resolution(tmp_path):
    src = tmp_path / "chi.json"
    src.write_text(json.dumps(cli.matrix_doc(ProcessMatrix.from_spec(ChannelSpec.of("identity")).chi)))
    assert cli.main(["export-bloch", str(src), "--resolution", "2"]) == 2
