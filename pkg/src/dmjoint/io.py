"""Delimited-file persistence for datasets, chains, and reports.

All files are UTF-8 CSV with a header row; reals are written with 17
significant digits so write -> read -> write round-trips byte-wise, counts as
plain integers.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .model import Dataset, Hyperparams
from .predict import TestSet
from .sampler import ChainOutput, SamplerConfig
from .simulate import GroundTruth

FLOAT_FMT = "%.17g"


def write_matrix(path, arr, prefix: str, integer: bool = False):
    arr = np.atleast_2d(np.asarray(arr))
    header = ",".join(f"{prefix}{k + 1}" for k in range(arr.shape[1]))
    fmt = "%d" if integer else FLOAT_FMT
    np.savetxt(path, arr, fmt=fmt, delimiter=",", header=header, comments="")


def read_matrix(path, integer: bool = False) -> np.ndarray:
    try:
        out = np.loadtxt(path, delimiter=",", skiprows=1,
                         dtype=np.int64 if integer else float, ndmin=2)
    except ValueError as e:
        raise ValueError(f"malformed file {path}: {e}") from e
    return out


def write_manifest(outdir, command: str, config: dict, seed, inputs, started: float):
    outdir = Path(outdir)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "output": str(outdir),
        "duration_s": round(time.time() - started, 3),
        "version": __version__,
        "schema_version": 1,
    }
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def read_manifest(rundir) -> dict:
    with open(Path(rundir) / "manifest.json") as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Replicate datasets
# ---------------------------------------------------------------------------


def write_replicate(repdir, train: Dataset, test: TestSet, truth: GroundTruth):
    repdir = Path(repdir)
    repdir.mkdir(parents=True, exist_ok=True)
    write_matrix(repdir / "train_y.csv", train.Y[:, None], "y")
    write_matrix(repdir / "train_z.csv", train.Z, "z", integer=True)
    write_matrix(repdir / "train_x.csv", train.X, "x")
    write_matrix(repdir / "test_y.csv", test.Y_test[:, None], "y")
    write_matrix(repdir / "test_z.csv", test.Z_test, "z", integer=True)
    write_matrix(repdir / "test_x.csv", test.X_test, "x")
    write_matrix(repdir / "truth_zeta.csv", truth.zeta_true, "zeta", integer=True)
    write_matrix(repdir / "truth_phi.csv", truth.phi_true, "phi")
    write_matrix(repdir / "truth_alpha.csv", truth.alpha_true[:, None], "alpha")
    write_matrix(repdir / "truth_xi.csv", truth.xi_true[:, None], "xi", integer=True)
    write_matrix(repdir / "truth_beta.csv", truth.beta_true[:, None], "beta")
    write_matrix(repdir / "truth_psi.csv", truth.psi_star, "psi")


def read_train(repdir) -> Dataset:
    repdir = Path(repdir)
    return Dataset(
        Y=read_matrix(repdir / "train_y.csv").ravel(),
        Z=read_matrix(repdir / "train_z.csv", integer=True),
        X=read_matrix(repdir / "train_x.csv"),
    )


def read_test(repdir) -> TestSet:
    repdir = Path(repdir)
    y_path = repdir / "test_y.csv"
    return TestSet(
        Z_test=read_matrix(repdir / "test_z.csv", integer=True),
        X_test=read_matrix(repdir / "test_x.csv"),
        Y_test=read_matrix(y_path).ravel() if y_path.exists() else None,
    )


def read_truth(repdir) -> GroundTruth:
    repdir = Path(repdir)
    return GroundTruth(
        zeta_true=read_matrix(repdir / "truth_zeta.csv", integer=True),
        phi_true=read_matrix(repdir / "truth_phi.csv"),
        alpha_true=read_matrix(repdir / "truth_alpha.csv").ravel(),
        xi_true=read_matrix(repdir / "truth_xi.csv", integer=True).ravel(),
        beta_true=read_matrix(repdir / "truth_beta.csv").ravel(),
        psi_star=read_matrix(repdir / "truth_psi.csv"),
    )


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


def write_chain(outdir, chain: ChainOutput, hyper: Hyperparams, extra: dict | None = None):
    """One row per retained sample for every block, plus a JSON summary."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    S = chain.n_samples
    if chain.alpha.size:
        write_matrix(outdir / "alpha.csv", chain.alpha, "alpha")
        write_matrix(outdir / "phi.csv", chain.phi.reshape(S, -1), "phi")
        write_matrix(outdir / "zeta.csv", chain.zeta.reshape(S, -1), "zeta",
                     integer=True)
        write_matrix(outdir / "psi.csv", chain.psi.reshape(S, -1), "psi")
        write_matrix(outdir / "u.csv", chain.u, "u")
    write_matrix(outdir / "xi.csv", chain.xi, "xi", integer=True)
    write_matrix(outdir / "log_posterior.csv", chain.log_posterior[:, None], "lp")
    if chain.mppi_zeta.size:
        write_matrix(outdir / "mppi_zeta.csv", chain.mppi_zeta, "mppi")
    write_matrix(outdir / "mppi_xi.csv", chain.mppi_xi[:, None], "mppi")
    summary = {
        "seed": int(chain.seed),
        "config": {k: getattr(chain.config, k) for k in (
            "iterations", "burn_in", "thin", "seed", "init_zeta_frac",
            "init_xi_frac", "between_moves_per_iter", "mode")},
        "hyperparams": {k: getattr(hyper, k) for k in (
            "h_alpha0", "h_beta", "a0", "b0", "r2", "sigma_alpha2",
            "a", "b", "a_m", "b_m", "proposal_sd", "delta")},
        "acceptance": {k: {"accepted": int(v[0]), "proposed": int(v[1]),
                           "rate": (v[0] / v[1]) if v[1] else None}
                       for k, v in chain.accept.items()},
        "n_samples": S,
    }
    if extra:
        summary.update(extra)
    with open(outdir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")


def read_chain(rundir) -> tuple[ChainOutput, Hyperparams, dict]:
    rundir = Path(rundir)
    with open(rundir / "summary.json") as f:
        summary = json.load(f)
    cfg = SamplerConfig(**summary["config"])
    hyper = Hyperparams(**summary["hyperparams"])
    xi = read_matrix(rundir / "xi.csv", integer=True).astype(np.uint8)
    S = xi.shape[0]
    if (rundir / "alpha.csv").exists():
        alpha = read_matrix(rundir / "alpha.csv")
        J = alpha.shape[1]
        phi = read_matrix(rundir / "phi.csv")
        P = phi.shape[1] // J
        zeta = read_matrix(rundir / "zeta.csv", integer=True).astype(np.uint8)
        psi = read_matrix(rundir / "psi.csv")
        n = psi.shape[1] // J
        u = read_matrix(rundir / "u.csv")
    else:
        J = P = n = 0
        alpha = np.empty((S, 0))
        phi = np.empty((S, 0))
        zeta = np.empty((S, 0), dtype=np.uint8)
        psi = np.empty((S, 0))
        u = np.empty((S, 0))
    accept = {k: (v["accepted"], v["proposed"])
              for k, v in summary["acceptance"].items()}
    chain = ChainOutput(
        alpha=alpha,
        phi=phi.reshape(S, J, P),
        zeta=zeta.reshape(S, J, P),
        xi=xi,
        psi=psi.reshape(S, n, J),
        u=u,
        log_posterior=read_matrix(rundir / "log_posterior.csv").ravel(),
        accept=accept,
        mppi_zeta=read_matrix(rundir / "mppi_zeta.csv")
        if (rundir / "mppi_zeta.csv").exists() else np.empty((0, 0)),
        mppi_xi=read_matrix(rundir / "mppi_xi.csv").ravel(),
        config=cfg,
    )
    return chain, hyper, summary
