"""Experiment runner: each subcommand reproduces one pipeline end to end and
writes machine-readable reports.

Subcommands
-----------
squeezed-homodyne   phase-averaged homodyne statistics of pump-locked
                    squeezed vacuum vs the closed-form Gaussian
teleport            coherent-state teleportation fidelity sweep over the
                    pair squeezing, shared- and unshared-phase arms
contmeas-analytic   jump-count table and photon number distributions with
                    quadrature-oracle columns
contmeas-trajectory Monte Carlo wave-function trajectories, one JSONL
                    record each
selfcheck           fast anchor checks; exit code 4 on any failure

Configuration: every flag mirrors a config field; --config FILE supplies the
same fields from JSON, explicit flags win.  LOPHASE_OUTDIR sets the default
output directory.  Reports embed the resolved config, seed, library version,
and wall-clock runtime; reruns with the same config are byte-identical
except the runtime_seconds field.

Exit codes: 0 success, 2 config error, 3 numerical-validation failure,
4 selfcheck threshold breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, contmeas, ensembles, fock, homodyne, teleport

CONFIG_ERROR, NUMERICAL_ERROR, CHECK_FAILED = 2, 3, 4


class ConfigError(ValueError):
    pass


# field name -> (converter, default); None defaults mean "derived at run time"
_SCHEMAS = {
    "squeezed-homodyne": {
        "s": (float, 0.5),
        "phi_c": (float, 0.0),
        "lo_amplitude": (float, 50.0),
        "K": (int, 256),
        "N": (int, 40),
        "step": (float, 0.01),
    },
    "teleport": {
        "alpha_re": (float, 1.0),
        "alpha_im": (float, 0.0),
        "eta_list": (str, "0.2,0.5,0.8"),
        "num_samples": (int, 2000),
        "seed": (int, 7),
        "K": (int, 64),
        "N": (int, 40),
        "phi_guess": (float, 0.0),
    },
    "contmeas-analytic": {
        "s_total": (int, 100),
        "p": (int, None),
        "r_squared": (float, 1000.0),
        "m_max": (int, None),
        "K": (int, None),
    },
    "contmeas-trajectory": {
        "r_o": (float, 10.0),
        "decay_rate": (float, 1.0),
        "dt": (float, 1e-5),
        "t_end": (float, 0.05268),
        "num_trajectories": (int, 100),
        "seed": (int, 2026),
        "K": (int, None),
    },
    "selfcheck": {
        "seed": (int, 1),
    },
}


def _resolve_config(command: str, args: argparse.Namespace) -> dict:
    schema = _SCHEMAS[command]
    cfg = {name: default for name, (_, default) in schema.items()}
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        for key, value in loaded.items():
            if key == "outdir":
                continue
            if key not in schema:
                raise ConfigError(f"unknown config field {key!r} for {command}")
            conv = schema[key][0]
            cfg[key] = value if value is None else conv(value)
    for name, (conv, _) in schema.items():
        flag_value = getattr(args, name)
        if flag_value is not None:
            cfg[name] = conv(flag_value)
    _validate_config(command, cfg)
    return cfg


def _validate_config(command: str, cfg: dict) -> None:
    def positive(field):
        if cfg[field] is not None and cfg[field] <= 0:
            raise ConfigError(f"field {field!r} must be positive, got {cfg[field]}")

    def nonnegative(field):
        if cfg[field] is not None and cfg[field] < 0:
            raise ConfigError(f"field {field!r} must be nonnegative, got {cfg[field]}")

    if command == "squeezed-homodyne":
        nonnegative("s")
        positive("lo_amplitude")
        positive("K")
        positive("N")
        positive("step")
    elif command == "teleport":
        positive("num_samples")
        positive("K")
        positive("N")
        for eta in _parse_eta_list(cfg["eta_list"]):
            if not 0.0 <= eta <= teleport.ETA_MAX:
                raise ConfigError(f"field 'eta_list' entries must lie in [0, {teleport.ETA_MAX}]")
    elif command == "contmeas-analytic":
        nonnegative("s_total")
        nonnegative("r_squared")
        if cfg["p"] is not None and not 0 <= cfg["p"] <= cfg["s_total"]:
            raise ConfigError(f"field 'p' must lie in [0, s_total], got {cfg['p']}")
        positive("m_max")
        positive("K")
    elif command == "contmeas-trajectory":
        nonnegative("r_o")
        positive("decay_rate")
        positive("dt")
        nonnegative("t_end")
        nonnegative("num_trajectories")
        positive("K")


def _parse_eta_list(value) -> list:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        return [float(p) for p in parts]
    return [float(v) for v in value]


def _resolve_outdir(args: argparse.Namespace) -> Path:
    if args.outdir is not None:
        out = Path(args.outdir)
    else:
        file_outdir = None
        if args.config is not None:
            try:
                file_outdir = json.loads(Path(args.config).read_text()).get("outdir")
            except (OSError, json.JSONDecodeError):
                file_outdir = None
        if file_outdir is not None:
            out = Path(file_outdir)
        else:
            out = Path(os.environ.get("LOPHASE_OUTDIR", "lophase_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _pure_density(vec: fock.FockVector) -> fock.DensityMatrix:
    rho = np.outer(vec.amplitudes, vec.amplitudes.conj())
    return fock.DensityMatrix(vec.num_modes, vec.dim, rho, tail=vec.tail)


def run_squeezed_homodyne(cfg: dict, outdir: Path) -> dict:
    ens = ensembles.pump_locked_ensemble(
        cfg["lo_amplitude"], cfg["s"], cfg["phi_c"], cfg["K"], cfg["N"]
    )
    xs, pdf = homodyne.homodyne_distribution(ens, 0, step=cfg["step"])
    var_axis = math.exp(-2.0 * cfg["s"]) * math.cos(cfg["phi_c"]) ** 2 + math.exp(
        2.0 * cfg["s"]
    ) * math.sin(cfg["phi_c"]) ** 2
    closed = (2.0 * math.pi * var_axis) ** -0.5 * np.exp(-(xs**2) / (2.0 * var_axis))
    _write_csv(
        outdir / "squeezed_homodyne.csv",
        ["x_bar", "p_pipeline", "p_closed"],
        zip(xs.tolist(), pdf.tolist(), closed.tolist()),
    )
    step = float(xs[1] - xs[0])
    variance = float(np.sum(xs**2 * pdf) * step)
    return {
        "max_pointwise_deviation": float(np.max(np.abs(pdf - closed))),
        "variance": variance,
        "variance_over_exp_minus_2s": variance / math.exp(-2.0 * cfg["s"]),
        "variance_over_closed_form": variance / var_axis,
        "grid_points": int(xs.size),
    }


def run_teleport(cfg: dict, outdir: Path) -> dict:
    etas = _parse_eta_list(cfg["eta_list"])
    alpha = complex(cfg["alpha_re"], cfg["alpha_im"])
    rho_in = _pure_density(fock.coherent_state(alpha, cfg["N"], tail_cap=1e-6))
    vac = _pure_density(fock.vacuum_state(1, 8))
    control = teleport.fidelity_experiment(
        [0.0], vac, shared_phase=True, num_samples=64, seed=cfg["seed"], K=8
    )
    shared = teleport.fidelity_experiment(
        etas, rho_in, shared_phase=True, num_samples=cfg["num_samples"],
        seed=cfg["seed"], K=cfg["K"],
    )
    unshared = teleport.fidelity_experiment(
        etas, rho_in, shared_phase=False, num_samples=cfg["num_samples"],
        seed=cfg["seed"], K=cfg["K"], phi_guess=cfg["phi_guess"],
    )
    rows = []
    for srow, urow in zip(shared["rows"], unshared["rows"]):
        rows.append(
            [
                srow["eta"],
                srow["mean_fidelity"],
                srow["sem"],
                urow["mean_fidelity"],
                urow["sem"],
            ]
        )
    _write_csv(
        outdir / "teleport_fidelity.csv",
        ["eta", "fidelity_shared", "sem_shared", "fidelity_unshared", "sem_unshared"],
        rows,
    )
    return {
        "vacuum_control_fidelity": control["rows"][0]["mean_fidelity"],
        "shared": shared,
        "unshared": unshared,
    }


def run_contmeas_analytic(cfg: dict, outdir: Path) -> dict:
    s_total = cfg["s_total"]
    p = s_total if cfg["p"] is None else cfg["p"]
    r_t = math.sqrt(cfg["r_squared"])
    pmf = contmeas.jump_count_pmf(s_total)
    _write_csv(
        outdir / "jump_counts.csv",
        ["p", "probability"],
        zip(range(s_total + 1), pmf.tolist()),
    )
    if cfg["m_max"] is not None:
        m_max = cfg["m_max"]
    else:
        m_max = min(int(4 * cfg["r_squared"]), int(contmeas._HYP_B_MAX) - s_total - 1)
    m = np.arange(m_max + 1)
    p_c = contmeas.photon_distribution(s_total, p, r_t, m, "c")
    p_d = contmeas.photon_distribution(s_total, p, r_t, m, "d")
    oracle_K = cfg["K"] if cfg["K"] is not None else 8192
    peak_c = int(np.argmax(p_c))
    peak_d = int(np.argmax(p_d))
    oracle_c = contmeas.photon_distribution_quadrature(s_total, p, r_t, peak_c, "c", K=oracle_K)
    oracle_d = contmeas.photon_distribution_quadrature(s_total, p, r_t, peak_d, "d", K=oracle_K)
    sparse = np.unique(np.clip(np.arange(0, m_max + 1, max(1, m_max // 64)), 0, m_max))
    orc_cols_c = contmeas.photon_distribution_quadrature(s_total, p, r_t, sparse, "c", K=oracle_K)
    orc_cols_d = contmeas.photon_distribution_quadrature(s_total, p, r_t, sparse, "d", K=oracle_K)
    full_oracle_c = np.full(m.size, np.nan)
    full_oracle_d = np.full(m.size, np.nan)
    full_oracle_c[sparse] = orc_cols_c
    full_oracle_d[sparse] = orc_cols_d
    _write_csv(
        outdir / "photon_distribution.csv",
        ["m", "p_c", "p_c_oracle", "p_d", "p_d_oracle"],
        zip(m.tolist(), p_c.tolist(), full_oracle_c.tolist(), p_d.tolist(), full_oracle_d.tolist()),
    )
    return {
        "p": p,
        "p_extremes": float(pmf[0] + pmf[s_total]),
        "sum_p_c": float(p_c.sum()),
        "sum_p_d": float(p_d.sum()),
        "peak_m_c": peak_c,
        "oracle_rel_deviation_at_peak_c": abs(float(p_c[peak_c]) - oracle_c) / oracle_c,
        "oracle_rel_deviation_at_peak_d": abs(float(p_d[peak_d]) - oracle_d) / oracle_d,
        "oracle_max_abs_deviation_sampled": float(
            max(
                np.max(np.abs(p_c[sparse] - orc_cols_c)),
                np.max(np.abs(p_d[sparse] - orc_cols_d)),
            )
        ),
    }


def run_contmeas_trajectory(cfg: dict, outdir: Path) -> dict:
    records = contmeas.run_trajectories(
        cfg["num_trajectories"], cfg["r_o"], cfg["decay_rate"], cfg["dt"],
        cfg["t_end"], cfg["seed"], K=cfg["K"],
    )
    with open(outdir / "trajectories.jsonl", "w") as fh:
        for idx, rec in enumerate(records):
            row = {
                "index": idx,
                "seed": list(rec.seed),
                "s_total": rec.stats.s_total,
                "p": rec.stats.p,
                "q": rec.stats.q,
                "jumps": [[t, mode] for t, mode in rec.jumps],
                "r_end": rec.posterior.r_t,
                "grid_size": rec.grid_size,
                "validity_ratio": rec.validity_ratio,
                "validity_ok": rec.validity_ok,
                "backend": rec.backend,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    totals = [rec.stats.s_total for rec in records]
    return {
        "num_trajectories": len(records),
        "mean_s_total": float(np.mean(totals)) if records else 0.0,
        "max_s_total": int(max(totals)) if records else 0,
        "fraction_validity_ok": float(np.mean([rec.validity_ok for rec in records]))
        if records
        else 1.0,
        "backend": records[0].backend if records else None,
    }


def run_selfcheck(cfg: dict, outdir: Path) -> dict:
    checks = []

    def check(name, value, passed):
        checks.append({"name": name, "value": value, "passed": bool(passed)})

    pmf = contmeas.jump_count_pmf(100)
    extremes = float(pmf[0] + pmf[100])
    check("extreme_jump_counts", extremes, abs(extremes - 0.113) <= 1e-3)

    norm_err = max(abs(float(contmeas.jump_count_pmf(s).sum()) - 1.0) for s in (1, 10, 100, 1000))
    sym = all(
        np.array_equal(contmeas.jump_count_pmf(s), contmeas.jump_count_pmf(s)[::-1])
        for s in (10, 317)
    )
    check("jump_pmf_normalization", norm_err, norm_err < 1e-12 and sym)

    m = np.arange(101)
    dev = float(
        np.max(
            np.abs(
                contmeas.photon_distribution(5, 3, 4.0, m)
                - contmeas.photon_distribution_quadrature(5, 3, 4.0, m)
            )
        )
    )
    check("photon_distribution_oracle", dev, dev < 1e-8)

    sq = run_squeezed_homodyne(
        {"s": 0.5, "phi_c": 0.0, "lo_amplitude": 50.0, "K": 128, "N": 40, "step": 0.01},
        outdir,
    )
    ratio = sq["variance_over_exp_minus_2s"]
    check("squeezed_variance", ratio, 0.99 <= ratio <= 1.01)
    vac = run_squeezed_homodyne(
        {"s": 0.0, "phi_c": 0.0, "lo_amplitude": 50.0, "K": 128, "N": 40, "step": 0.01},
        outdir,
    )
    check("vacuum_homodyne", vac["max_pointwise_deviation"], vac["max_pointwise_deviation"] < 1e-10)

    vac_rho = _pure_density(fock.vacuum_state(1, 8))
    rep = teleport.fidelity_experiment([0.0], vac_rho, True, 64, cfg["seed"], K=8)
    fid = rep["rows"][0]["mean_fidelity"]
    check("teleport_identity_at_eta0", fid, abs(fid - 1.0) < 1e-10)

    rng = np.random.default_rng(cfg["seed"])
    eta, gamma, phi = 0.45, complex(*rng.normal(0, 0.7, 2)), 0.3
    proj = teleport.dual_homodyne_project(eta, 2 * phi, gamma, phi, 30)
    corrected = teleport.bob_correction(gamma, eta, phi, 30) @ proj.matrix
    direct = teleport.transfer_operator(eta, gamma, phi, 30).matrix
    tdev = float(np.max(np.abs(corrected - direct)[:20, :20]))
    check("transfer_identity", tdev, tdev < 1e-9)

    rec = contmeas.mcwf_run(10.0, 1.0, 1e-5, 0.03, seed=cfg["seed"])
    decay_err = max(
        abs(r - rec.r_o * math.exp(-rec.decay_rate * t)) / r for t, r in rec.r_history
    )
    ref = contmeas.posterior_phase_state(
        rec.stats.s_total, rec.stats.p, rec.posterior.r_t, K=rec.grid_size
    )
    post_err = float(np.max(np.abs(rec.posterior.weights - ref.weights)))
    check("trajectory_decay_and_posterior", max(decay_err, post_err), decay_err < 1e-12 and post_err < 1e-12)

    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.3e}")
    return {"checks": checks, "all_passed": all(c["passed"] for c in checks)}


_RUNNERS = {
    "squeezed-homodyne": (run_squeezed_homodyne, "squeezed_homodyne_summary.json"),
    "teleport": (run_teleport, "teleport_summary.json"),
    "contmeas-analytic": (run_contmeas_analytic, "contmeas_analytic_summary.json"),
    "contmeas-trajectory": (run_contmeas_trajectory, "contmeas_trajectory_summary.json"),
    "selfcheck": (run_selfcheck, "selfcheck_summary.json"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lophase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        sp = sub.add_parser(command)
        sp.add_argument("--config", default=None, help="JSON file supplying config fields")
        sp.add_argument("--outdir", default=None, help="output directory")
        for name in schema:
            sp.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args.command, args)
        outdir = _resolve_outdir(args)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    runner, summary_name = _RUNNERS[args.command]
    start = time.perf_counter()
    try:
        body = runner(cfg, outdir)
    except ValueError as exc:
        print(f"numerical validation failed: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    payload = {
        "command": args.command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "runtime_seconds": time.perf_counter() - start,
    }
    payload.update(body)
    _write_json(outdir / summary_name, payload)
    print(f"wrote {outdir / summary_name}")
    if args.command == "selfcheck" and not body["all_passed"]:
        return CHECK_FAILED
    return 0


if __name__ == "__main__":
    sys.exit(main())
