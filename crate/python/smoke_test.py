"""Smoke test for the aesr_py extension module.

Builds the extension with cargo unless AESR_PY_LIB points at a built
library, copies it next to a temporary import path and exercises the API.
"""

import importlib
import json
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent


def locate_library() -> Path:
    explicit = os.environ.get("AESR_PY_LIB")
    if explicit:
        return Path(explicit)
    subprocess.run(
        ["cargo", "build", "--release", "-p", "aesr-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target")) / "release"
    for name in ("libaesr_py.so", "libaesr_py.dylib", "aesr_py.dll"):
        if (target / name).exists():
            return target / name
    raise FileNotFoundError(f"no aesr_py library under {target}")


def load_module(lib: Path, workdir: Path):
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(lib, workdir / f"aesr_py{suffix}")
    sys.path.insert(0, str(workdir))
    return importlib.import_module("aesr_py")


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        aesr = load_module(locate_library(), tmp)

        assert abs(aesr.welch_bound(200, 100) - 0.070888) < 1e-6

        params = aesr.BinsParams(0.02, "uniform", 1.0)
        assert abs(params.signal_variance(1)[0] - 0.0065667) < 1e-6
        binary = aesr.BinsParams(0.02, "binary")
        assert binary.is_binary

        w = aesr.Dictionary.generate("orthogonalized", 64, 64, 1)
        weights = np.array(w.weights())
        assert weights.shape == (64, 64)
        assert np.allclose(np.linalg.norm(weights, axis=1), 1.0)
        assert w.coherence() < 1e-9

        h = np.array(aesr.sample_signals(params, 64, 500, 2))
        x = aesr.generate_data(w, h.tolist(), params)
        h_hat = np.array(aesr.recover(w, x, params, "relu"))
        assert np.abs(h_hat - h).max() < 0.05
        analytic_mean = (np.array(params.signal_mean(64)) @ weights).tolist()
        exact = np.array(aesr.recover(w, x, params, "relu", data_mean=analytic_mean))
        assert np.abs(exact - h).max() < 1e-9
        assert aesr.apre(h.tolist(), exact.tolist(), 0.01, 0.02) == 0.0
        assert max(aesr.mean_l1_error(h.tolist(), exact.tolist())) < 1e-9
        assert aesr.recovery_bound(w, params, 0.1) == 1.0

        perm, cosines = aesr.greedy_match(w, w)
        assert perm == list(range(64)) and min(cosines) > 1 - 1e-12

        small = aesr.Dictionary.generate("orthogonalized", 20, 16, 3)
        hs = aesr.sample_signals(params, 20, 400, 4)
        xs = aesr.generate_data(small, hs, params)
        learned, losses = aesr.train_autoencoder(xs, 20, "relu", epochs=3, seed=5)
        assert learned.m == 20 and learned.n == 16 and len(losses) == 3

        w.save(str(tmp / "dict.csv"))
        assert aesr.Dictionary.load(str(tmp / "dict.csv")).weights() == w.weights()

        params_json = json.dumps({"m": 30, "n_min": 10, "n_max": 30, "n_step": 10, "seeds": 2})
        outputs = aesr.run_experiment("coherence-sweep", str(tmp / "out"), params_json, 0)
        assert any(str(p).endswith("coherence_sweep.csv") for p in outputs)

        try:
            aesr.BinsParams(1.5)
        except ValueError:
            pass
        else:
            raise AssertionError("p > 1 accepted")

    print("aesr_py smoke test passed")


if __name__ == "__main__":
    main()
