"""End-to-end tests of the command line interface.

Every test drives ``fracsource.cli.main`` with a JSON config written to a
temporary directory and asserts on exit codes and emitted artifacts.
"""

import json
import math

import numpy as np
import pytest

from fracsource.cli import (
    EXIT_COMPATIBILITY,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
)


def _write_cfg(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _forward_cfg(N=64, n_max=2):
    return {
        "operator": {"alpha": 0.8},
        "grid": {"T": 1.0, "N": N},
        "phi": {"name": "cos_mode", "params": {"n": 1, "k": 1}},
        "source": {"field": {"name": "constant"}},
        "amplitude": {"name": "poly_t", "params": {"coeffs": [1.0, 1.0]}},
        "modes": {"n_max": n_max, "k_max": n_max},
    }


def _read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


class TestMlfEval:
    def test_exponential_special_case(self, tmp_path):
        # eta = 1 with a single unit-order term gives exactly exp(-t)
        cfg = _write_cfg(tmp_path, "c.json", {
            "kernel": {"eta": 1.0, "terms": [[1.0, 1.0]]},
            "times": {"start": 0.1, "stop": 2.0, "count": 8},
        })
        assert main(["mlf-eval", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        rows = _read_csv(tmp_path / "o" / "mlf_eval.csv")
        np.testing.assert_allclose(rows["kernel"], np.exp(-rows["t"]), rtol=1e-10)
        np.testing.assert_allclose(
            rows["antiderivative"], 1.0 - np.exp(-rows["t"]), rtol=1e-8
        )

    def test_negative_time_rejected(self, tmp_path):
        cfg = _write_cfg(tmp_path, "c.json", {
            "kernel": {"eta": 1.0, "terms": [[1.0, 0.5]]},
            "times": {"start": -1.0, "stop": 1.0, "count": 4},
        })
        assert main(["mlf-eval", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestForward:
    def test_artifacts_and_exit_code(self, tmp_path):
        cfg = _write_cfg(tmp_path, "c.json", _forward_cfg())
        out = tmp_path / "o"
        assert main(["forward", cfg, "--out", str(out)]) == EXIT_OK
        for name in (
            "energy.csv",
            "coefficients.csv",
            "field_final.csv",
            "forward_metadata.json",
        ):
            assert (out / name).exists()
        meta = json.loads((out / "forward_metadata.json").read_text())
        assert meta["n_max"] == 2
        assert math.isfinite(meta["energy_final"])

    def test_deterministic_reruns(self, tmp_path):
        cfg = _write_cfg(tmp_path, "c.json", _forward_cfg())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["forward", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["forward", cfg, "--out", str(out2)]) == EXIT_OK
        for name in ("energy.csv", "coefficients.csv", "field_final.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_malformed_operator_ordering(self, tmp_path):
        payload = _forward_cfg()
        # lower-order exponent must stay strictly below alpha
        payload["operator"] = {"alpha": 0.5, "terms": [[1.0, 0.9]]}
        cfg = _write_cfg(tmp_path, "c.json", payload)
        assert main(["forward", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_missing_field_reported(self, tmp_path):
        payload = _forward_cfg()
        del payload["phi"]
        cfg = _write_cfg(tmp_path, "c.json", payload)
        assert main(["forward", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        assert main(["forward", str(path), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestInverse:
    def test_synthesized_round_trip(self, tmp_path):
        payload = _forward_cfg(N=128, n_max=2)
        del payload["amplitude"]
        payload["energy"] = {
            "synthesize": {
                "N": 256,
                "amplitude": {"name": "poly_t", "params": {"coeffs": [1.0, 1.0]}},
            }
        }
        payload["amplitude_true"] = {"name": "poly_t", "params": {"coeffs": [1.0, 1.0]}}
        cfg = _write_cfg(tmp_path, "c.json", payload)
        out = tmp_path / "o"
        assert main(["inverse", cfg, "--out", str(out)]) == EXIT_OK
        meta = json.loads((out / "inverse_metadata.json").read_text())
        assert meta["round_trip_error"] < 1e-2
        rows = _read_csv(out / "amplitude.csv")
        np.testing.assert_allclose(rows["a"][1:], 1.0 + rows["t"][1:], rtol=1e-2)

    def test_energy_from_csv(self, tmp_path):
        # E = t^alpha / Gamma(1 + alpha) with f = 1 recovers a(t) = 1
        alpha = 0.8
        ts = np.linspace(0.0, 1.0, 65)
        es = ts**alpha / math.gamma(1.0 + alpha)
        lines = ["t,E"] + [f"{t:.17g},{e:.17g}" for t, e in zip(ts, es)]
        (tmp_path / "energy.csv").write_text("\n".join(lines) + "\n")
        payload = _forward_cfg(N=64)
        del payload["amplitude"]
        payload["phi"] = {"name": "constant", "params": {"value": 0.0}}
        payload["energy"] = {"csv": str(tmp_path / "energy.csv")}
        cfg = _write_cfg(tmp_path, "c.json", payload)
        out = tmp_path / "o"
        assert main(["inverse", cfg, "--out", str(out)]) == EXIT_OK
        rows = _read_csv(out / "amplitude.csv")
        half = rows["t"] >= 0.5
        np.testing.assert_allclose(rows["a"][half], 1.0, rtol=2e-2)

    def test_incompatible_datum_exit_code(self, tmp_path):
        # phi has mean 1/2 but the datum starts at 2: compatibility failure
        ts = np.linspace(0.0, 1.0, 65)
        lines = ["t,E"] + [f"{t:.17g},{2.0 + t:.17g}" for t in ts]
        (tmp_path / "energy.csv").write_text("\n".join(lines) + "\n")
        payload = _forward_cfg(N=64)
        del payload["amplitude"]
        payload["phi"] = {"name": "constant", "params": {"value": 0.5}}
        payload["energy"] = {"csv": str(tmp_path / "energy.csv")}
        cfg = _write_cfg(tmp_path, "c.json", payload)
        code = main(["inverse", cfg, "--out", str(tmp_path / "o")])
        assert code == EXIT_COMPATIBILITY

    def test_zero_mean_source_exit_code(self, tmp_path):
        payload = _forward_cfg(N=64)
        del payload["amplitude"]
        payload["source"] = {"field": {"name": "cos_mode", "params": {"n": 1, "k": 0}}}
        payload["energy"] = {
            "synthesize": {
                "N": 128,
                "amplitude": {"name": "poly_t", "params": {"coeffs": [1.0, 1.0]}},
            }
        }
        cfg = _write_cfg(tmp_path, "c.json", payload)
        assert main(["inverse", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestVerify:
    def test_single_suite_passes(self, tmp_path):
        cfg = _write_cfg(tmp_path, "c.json", {"suites": ["biorthonormality"]})
        out = tmp_path / "o"
        assert main(["verify", cfg, "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "verify.json").read_text())
        assert report["biorthonormality"]["passed"] is True
        assert report["passed"] is True

    def test_unknown_suite_rejected(self, tmp_path):
        cfg = _write_cfg(tmp_path, "c.json", {"suites": ["no-such-suite"]})
        assert main(["verify", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestOracleCompare:
    def test_forward_matches_reference(self, tmp_path):
        payload = _forward_cfg(N=128, n_max=2)
        payload["fd"] = {"Mx": 16, "My": 16, "N": 128}
        payload["times"] = [0.5, 1.0]
        cfg = _write_cfg(tmp_path, "c.json", payload)
        out = tmp_path / "o"
        assert main(["oracle-compare", cfg, "--out", str(out), "--tol", "0.05"]) == EXIT_OK
        report = json.loads((out / "oracle_compare.json").read_text())
        assert report["passed"] is True
        assert max(report["relative_l2"]) < 0.05

    def test_tight_tolerance_fails_numerically(self, tmp_path):
        payload = _forward_cfg(N=64, n_max=2)
        payload["fd"] = {"Mx": 16, "My": 16, "N": 64}
        payload["times"] = [1.0]
        cfg = _write_cfg(tmp_path, "c.json", payload)
        code = main(["oracle-compare", cfg, "--out", str(tmp_path / "o"),
                     "--tol", "1e-12"])
        assert code == EXIT_NUMERICAL
