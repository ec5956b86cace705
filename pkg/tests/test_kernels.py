import os
import subprocess
import sys

import numpy as np
import pytest

from stormpg import kernels
from stormpg.estimators import gpomdp_batch, log_importance_weights, reinforce_batch, sample_batch
from stormpg.mdp import bundled_mdp

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def setup():
    mdp = bundled_mdp("benchmark")
    rng = np.random.default_rng(5)
    return mdp, rng.normal(size=(5, 3)), rng.normal(size=(5, 3))


def test_backends_bit_identical(setup):
    mdp, theta, theta2 = setup
    nb, npb = kernels.get_backend("numba"), kernels.get_backend("numpy")
    b1 = sample_batch(mdp, theta, mdp.mu, 31, 64, seed=3, t=7, backend=nb)
    b2 = sample_batch(mdp, theta, mdp.mu, 31, 64, seed=3, t=7, backend=npb)
    for field in ("states", "actions", "rewards", "terminal_states"):
        np.testing.assert_array_equal(getattr(b1, field), getattr(b2, field))
    baselines = np.linspace(0.0, 0.3, 31)
    assert np.array_equal(gpomdp_batch(b1, theta, 0.8, backend=nb), gpomdp_batch(b1, theta, 0.8, backend=npb))
    assert np.array_equal(
        gpomdp_batch(b1, theta, 0.8, baselines, backend=nb), gpomdp_batch(b1, theta, 0.8, baselines, backend=npb)
    )
    assert np.array_equal(reinforce_batch(b1, theta, 0.8, 0.4, backend=nb), reinforce_batch(b1, theta, 0.8, 0.4, backend=npb))
    assert np.array_equal(
        log_importance_weights(b1, theta2, theta, backend=nb), log_importance_weights(b1, theta2, theta, backend=npb)
    )


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("cuda")


def test_env_flag_selects_numpy():
    env = dict(os.environ, STORMPG_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from stormpg import kernels; print(kernels.BACKEND.name)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_mean_rows_sequential_order():
    x = np.array([[1e16], [1.0], [-1e16], [1.0]])
    # left-to-right: ((1e16 + 1) - 1e16) + 1 = 1, then /4
    assert kernels.mean_rows(x)[0] == 0.25


def test_full_run_identical_under_numpy_fallback(tmp_path):
    script = (
        "import sys; from stormpg import bundled_mdp, RunConfig, run_storm_pg_s\n"
        "cfg = RunConfig.from_dict({'T': 12, 'B': 6, 'lambda': 0.01, 'mode': 'practical',"
        " 'practical': {'k': 2.0, 'c': 0.5, 'm': 7.0}, 'seed': 4})\n"
        "run_storm_pg_s(bundled_mdp('benchmark'), cfg).to_csv(sys.argv[1])\n"
    )
    outputs = []
    for flag in ("0", "1"):
        path = tmp_path / f"run{flag}.csv"
        env = dict(os.environ, STORMPG_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", script, str(path)], env=env, check=True)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
