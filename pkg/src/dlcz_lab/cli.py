"""Command-line front end: campaigns, record/report I/O, and plots.

Every simulate-type command writes a ``run_summary.json`` (with timing)
and an ``analysis.json`` (deterministic — a pure function of the record
content, so re-running ``analyze`` on the emitted records reproduces it
bit for bit).  Reports embed the fully resolved configuration and its
hash; analysis documents embed the record headers they were computed
from.

Exit codes: 0 success; 2 bad configuration or malformed/truncated input
file; 3 statistical estimation or fit failure; 4 unphysical loss
inversion.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import warnings
from dataclasses import replace
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .config import (
    REFERENCE_PC0,
    REFERENCE_XI,
    STORAGE_SWEEP_G0,
    ExperimentConfig,
    load_config,
    schema_help,
    storage_sweep_point,
)
from .engine import (
    SWEEP_PARAMETERS,
    RunSummary,
    default_threads,
    run_characterize,
    run_entangle,
    subseed,
)
from .errors import ConfigError, DlczError, FitError, InversionError, RecordFormatError
from .inference import REFERENCE_CHAIN, EfficiencyChain, infer_chain, propagate_uncertainty
from .model import (
    concurrence_analytic,
    concurrence_c0,
    decay_curves,
    separability_time,
    threshold_g12,
)
from .records import FORMAT_VERSION, RecordSet, read_records, write_document, write_records
from .tomography import (
    DEFAULT_BOOTSTRAP,
    MIN_BOOTSTRAP,
    TomographyResult,
    analyze_pair,
    estimate_correlations,
    estimate_diagonals,
    fit_fringe,
    fringe_data_from_records,
    herald_phase_shift,
    measured_state,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_INVERSION = 4

# Lane indices for derived per-point seeds in composed campaigns.
LANE_CHARACTERIZE, LANE_SEPARATE, LANE_INTERFERE = 0, 1, 2

FIG2_G12_GRID = (7.0, 10.0, 20.0, 30.0, 60.0, 100.0)
FIG3_TAU_GRID_US = (0.2, 2.0, 5.0, 8.0, 11.0, 14.0, 17.0, 20.0, 25.0, 30.0)
SWEEP_TABLE_COLUMNS = ("sweep_value", "g12", "p_c", "V", "C", "C_sigma", "C0")


# ---------------------------------------------------------------------------
# document builders
# ---------------------------------------------------------------------------


def _header_doc(records: RecordSet) -> dict[str, Any]:
    h = records.header
    return {
        "kind": h.kind,
        "mode": h.mode,
        "config_hash": h.config_hash,
        "seed": h.seed,
        "n_trials": h.n_trials,
        "batch_size": h.batch_size,
        "theta": h.theta,
        "storage_time": h.storage_time,
        "phases": list(h.phases),
    }


def _diagonals_doc(records: RecordSet) -> dict[str, Any]:
    d = estimate_diagonals(records)
    return {
        "p00": d.p00,
        "p01": d.p01,
        "p10": d.p10,
        "p11": d.p11,
        "sigma_p00": d.sigma_p00,
        "sigma_p01": d.sigma_p01,
        "sigma_p10": d.sigma_p10,
        "sigma_p11": d.sigma_p11,
        "n_heralds": d.n_heralds,
    }


def _fringe_doc(records: RecordSet) -> dict[str, Any]:
    fit = fit_fringe(fringe_data_from_records(records))
    shift, sigma_shift = herald_phase_shift(fit)
    return {
        "visibility": fit.visibility,
        "sigma_visibility": fit.sigma_visibility,
        "phase_d1a": fit.phase_d1a,
        "sigma_phase_d1a": fit.sigma_phase_d1a,
        "phase_d1b": fit.phase_d1b,
        "sigma_phase_d1b": fit.sigma_phase_d1b,
        "herald_phase_shift": shift,
        "sigma_herald_phase_shift": sigma_shift,
        "any_clamped": fit.any_clamped,
        "per_fringe": [
            {
                "amplitude": f.amplitude,
                "visibility": f.visibility,
                "phase": f.phase,
                "sigma_visibility": f.sigma_visibility,
                "sigma_phase": f.sigma_phase,
                "clamped": f.clamped,
            }
            for f in fit.per_fringe
        ],
    }


def _rho_doc(rho) -> dict[str, Any]:
    return {
        "p00": float(rho.p00),
        "p01": float(rho.p01),
        "p10": float(rho.p10),
        "p11": float(rho.p11),
        "d_re": float(np.real(rho.d)),
        "d_im": float(np.imag(rho.d)),
    }


def _joint_doc(result: TomographyResult, bootstrap_seed: int) -> dict[str, Any]:
    return {
        "rho": _rho_doc(result.rho),
        "visibility": result.fringe.visibility,
        "sigma_visibility": result.fringe.sigma_visibility,
        "concurrence": {
            "C": result.concurrence.C,
            "C0": result.concurrence.C0,
            "sigma": result.concurrence.sigma,
        },
        "p_c": result.p_c,
        "d_clamped": result.d_clamped,
        "n_bootstrap": result.n_bootstrap,
        "bootstrap_seed": bootstrap_seed,
        "warnings": list(result.warnings),
    }


def joint_bootstrap_seed(separate: RecordSet, interfere: RecordSet) -> int:
    """Deterministic bootstrap seed derived from the two lane seeds."""
    return subseed(separate.header.seed, interfere.header.seed)


def build_analysis(
    record_sets: Sequence[RecordSet], n_bootstrap: int = DEFAULT_BOOTSTRAP
) -> tuple[dict[str, Any], Optional[TomographyResult]]:
    """The deterministic analysis document for one or more record sets.

    Separate-mode lanes get diagonal estimates, interfering lanes get
    fringe fits; when exactly one of each is present the joint
    reconstruction (rho, concurrence, bootstrap) is added with a seed
    derived from the two lane seeds.
    """
    lanes = []
    for records in record_sets:
        lane: dict[str, Any] = {
            "header": _header_doc(records),
            "n_heralded_records": len(records),
        }
        if records.header.mode == "S":
            lane["diagonals"] = _diagonals_doc(records)
        else:
            lane["fringe"] = _fringe_doc(records)
        lanes.append(lane)

    doc: dict[str, Any] = {"format_version": FORMAT_VERSION, "lanes": lanes}
    result: Optional[TomographyResult] = None
    separate = [r for r in record_sets if r.header.mode == "S"]
    interfere = [r for r in record_sets if r.header.mode == "I"]
    if len(separate) == 1 and len(interfere) == 1:
        seed = joint_bootstrap_seed(separate[0], interfere[0])
        result = analyze_pair(separate[0], interfere[0], n_bootstrap=n_bootstrap, seed=seed)
        doc["joint"] = _joint_doc(result, seed)
    return doc, result


def _correlations_doc(summary: RunSummary) -> dict[str, Any]:
    stats = estimate_correlations(summary.characterize)
    return {
        "p1": stats.p1,
        "p2": stats.p2,
        "p12": stats.p12,
        "g12": stats.g12,
        "p_c": stats.p_c,
        "sigma_p1": stats.sigma_p1,
        "sigma_p2": stats.sigma_p2,
        "sigma_p12": stats.sigma_p12,
        "sigma_g12": stats.sigma_g12,
        "sigma_p_c": stats.sigma_p_c,
        "n_trials": stats.n_trials,
    }


def _chain_doc(chain: EfficiencyChain, stages) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "efficiencies": {
            "eta_path_u": chain.eta_path_u,
            "eta_path_d": chain.eta_path_d,
            "eta_readout": chain.eta_readout,
        }
    }
    for stage in stages.stages():
        doc[stage.name] = {
            **_rho_doc(stage.rho),
            "C": float(stage.concurrence.C),
            "C0": float(stage.concurrence.C0),
        }
    return doc


def _write_sweep_table(path: str, rows: Sequence[Sequence[float]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(SWEEP_TABLE_COLUMNS) + "\n")
        for row in rows:
            handle.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# composed three-lane point runs (sweep / reproduce campaigns)
# ---------------------------------------------------------------------------


def run_point(
    cfg: ExperimentConfig,
    point_seed: int,
    threads: Optional[int],
    n_bootstrap: int,
) -> dict[str, Any]:
    """Characterize + separate + interfere lanes at one parameter point.

    Lane seeds are derived from ``point_seed`` so points are independent
    and reproducible regardless of execution order.
    """
    char_cfg = replace(cfg, seed=subseed(point_seed, LANE_CHARACTERIZE))
    sep_cfg = replace(
        cfg, seed=subseed(point_seed, LANE_SEPARATE), readout_mode="separate"
    )
    int_cfg = replace(
        cfg, seed=subseed(point_seed, LANE_INTERFERE), readout_mode="interfere"
    )
    char_summary = run_characterize(char_cfg)
    sep_summary, sep_records = run_entangle(sep_cfg, threads=threads)
    int_summary, int_records = run_entangle(int_cfg, threads=threads)

    analysis, result = build_analysis([sep_records, int_records], n_bootstrap=n_bootstrap)
    analysis["correlations"] = _correlations_doc(char_summary)
    if result is None:
        raise FitError("point run produced no joint reconstruction")
    return {
        "summaries": {
            "characterize": char_summary,
            "separate": sep_summary,
            "interfere": int_summary,
        },
        "records": {"separate": sep_records, "interfere": int_records},
        "analysis": analysis,
        "result": result,
        "correlations": estimate_correlations(char_summary.characterize),
    }


def _point_table_row(value: float, point: dict[str, Any]) -> tuple[float, ...]:
    stats = point["correlations"]
    result: TomographyResult = point["result"]
    return (
        value,
        stats.g12,
        stats.p_c,
        result.fringe.visibility,
        result.concurrence.C,
        result.concurrence.sigma or 0.0,
        result.concurrence.C0,
    )


def _point_summary_doc(
    parameter: str, value: float, index: int, point: dict[str, Any]
) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "sweep_parameter": parameter,
        "sweep_value": value,
        "index": index,
        "lanes": {
            name: summary.to_document() for name, summary in point["summaries"].items()
        },
        "analysis": point["analysis"],
    }


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------


def _plot_concurrence(
    path: str,
    x_curve: np.ndarray,
    c_curve: np.ndarray,
    c0_curve: np.ndarray,
    points: Sequence[tuple[float, float, float]],
    xlabel: str,
    title: str,
    logx: bool = False,
) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(x_curve, c_curve, "-", color="C0", label="model C")
    ax.plot(x_curve, c0_curve, ":", color="C0", label="model C0 (unclamped)")
    if points:
        xs, ys, es = zip(*points)
        ax.errorbar(
            xs, ys, yerr=es, fmt="o", color="C3", capsize=3, label="Monte Carlo"
        )
    ax.axhline(0.0, color="0.7", lw=0.8, zorder=0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("concurrence")
    ax.set_title(title)
    if logx:
        ax.set_xscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_chain(path: str, stages: Sequence[tuple[str, float, float]], title: str) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    xs = np.arange(len(stages))
    names = [s[0] for s in stages]
    ax.errorbar(
        xs,
        [s[1] for s in stages],
        yerr=[s[2] for s in stages],
        fmt="o-",
        color="C0",
        capsize=4,
    )
    ax.set_xticks(xs, names)
    ax.set_ylabel("concurrence")
    ax.set_title(title)
    ax.axhline(0.0, color="0.7", lw=0.8, zorder=0)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _reported_warnings():
    """Collect warnings raised inside the block and print them cleanly."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yield
    for entry in caught:
        print(f"warning: {entry.message}", file=sys.stderr)


def _outdir(args: argparse.Namespace) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _load_cfg(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config, args.set or [])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_characterize(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    summary = run_characterize(cfg, ensemble=args.ensemble)
    write_document(os.path.join(out, "run_summary.json"), summary.to_document())
    analysis = {
        "format_version": FORMAT_VERSION,
        "kind": "characterize",
        "config": cfg.resolved(),
        "config_hash": cfg.config_hash(),
        "seed": summary.seed,
        "correlations": _correlations_doc(summary),
    }
    write_document(os.path.join(out, "analysis.json"), analysis)
    stats = estimate_correlations(summary.characterize)
    print(
        f"characterize: {cfg.n_trials} trials, g12 = {stats.g12:.3f} +- {stats.sigma_g12:.3f}, "
        f"p_c = {stats.p_c:.5f} +- {stats.sigma_p_c:.5f}"
    )
    print(f"wrote {out}/run_summary.json, {out}/analysis.json")
    return EXIT_OK


def cmd_entangle(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    summary, records = run_entangle(cfg, threads=args.threads)
    write_records(os.path.join(out, "records.csv"), records)
    write_document(os.path.join(out, "run_summary.json"), summary.to_document())
    analysis, result = build_analysis([records], n_bootstrap=args.bootstrap)
    write_document(os.path.join(out, "analysis.json"), analysis)
    print(
        f"entangle ({cfg.readout_mode}): {cfg.n_trials} trials, "
        f"{summary.n_heralds} heralds (p = {summary.herald_probability:.3e})"
    )
    print(f"wrote {out}/records.csv, {out}/run_summary.json, {out}/analysis.json")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be a comma-separated float list: {exc}") from exc
    if not values:
        raise ConfigError("--values must contain at least one value")
    if args.param not in SWEEP_PARAMETERS:
        raise ConfigError(f"--param must be one of {SWEEP_PARAMETERS}")

    rows = []
    for index, value in enumerate(values):
        point_cfg = replace(cfg, **{args.param: value})
        point = run_point(
            point_cfg, subseed(cfg.seed, index), args.threads, args.bootstrap
        )
        doc = _point_summary_doc(args.param, value, index, point)
        write_document(os.path.join(out, f"summary_{index:03d}.json"), doc)
        rows.append(_point_table_row(value, point))
        c = point["result"].concurrence
        print(
            f"[{index + 1}/{len(values)}] {args.param} = {value:g}: "
            f"C = {c.C:.4f} +- {c.sigma:.4f}"
        )
    _write_sweep_table(os.path.join(out, "sweep.csv"), rows)
    print(f"wrote {len(values)} summaries and {out}/sweep.csv")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    out = _outdir(args)
    record_sets = [read_records(path) for path in args.records]
    analysis, result = build_analysis(record_sets, n_bootstrap=args.bootstrap)

    etas = (args.eta_u, args.eta_d, args.eta_readout)
    if any(v is not None for v in etas):
        if result is None:
            raise FitError(
                "chain inversion needs a joint reconstruction "
                "(one separate-mode and one interfering-mode record file)"
            )
        if any(v is None for v in etas):
            raise ConfigError("--eta-u, --eta-d and --eta-readout must be given together")
        chain = EfficiencyChain(
            eta_path_u=args.eta_u, eta_path_d=args.eta_d, eta_readout=args.eta_readout
        )
        with _reported_warnings():
            stages = infer_chain(result.rho, chain, clip=args.clip)
        analysis["chain"] = _chain_doc(chain, stages)

    write_document(os.path.join(out, "analysis.json"), analysis)
    print(f"analyzed {len(record_sets)} record file(s); wrote {out}/analysis.json")
    if "joint" in analysis:
        c = analysis["joint"]["concurrence"]
        print(f"C = {c['C']:.4f} +- {c['sigma']:.4f} (C0 = {c['C0']:.4f})")
    return EXIT_OK


def _reproduce_base(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config, args.set or [])
    seed = args.seed if args.seed is not None else 0
    return replace(cfg, n_trials=args.trials, seed=seed)


def _reproduce_fig2(args: argparse.Namespace, out: str) -> int:
    cfg = _reproduce_base(args)
    g_dense = np.geomspace(5.0, 130.0, 200)
    c_curve = np.array([concurrence_analytic(REFERENCE_PC0, REFERENCE_XI, g) for g in g_dense])
    c0_curve = np.array([concurrence_c0(REFERENCE_PC0, REFERENCE_XI, g) for g in g_dense])
    crossing = threshold_g12(REFERENCE_PC0, REFERENCE_XI)
    plateau = concurrence_analytic(REFERENCE_PC0, REFERENCE_XI, 1e6)

    rows = []
    points = []
    point_docs = []
    for index, g in enumerate(FIG2_G12_GRID):
        chi = 1.0 / (g - 1.0)
        point_cfg = replace(cfg, chi=chi)
        point = run_point(point_cfg, subseed(cfg.seed, index), args.threads, args.bootstrap)
        rows.append(_point_table_row(g, point))
        stats, c = point["correlations"], point["result"].concurrence
        points.append((stats.g12, c.C, c.sigma or 0.0))
        point_docs.append(_point_summary_doc("chi", chi, index, point))
        print(f"[{index + 1}/{len(FIG2_G12_GRID)}] g12 target {g:g}: C = {c.C:.4f} +- {c.sigma:.4f}")

    report = {
        "format_version": FORMAT_VERSION,
        "target": "fig2",
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "trials_per_lane": args.trials,
        "analytic": {
            "p_c": REFERENCE_PC0,
            "xi": REFERENCE_XI,
            "zero_crossing_g12": crossing,
            "plateau": plateau,
            "g12": g_dense.tolist(),
            "C": c_curve.tolist(),
            "C0": c0_curve.tolist(),
        },
        "points": point_docs,
    }
    write_document(os.path.join(out, "fig2.json"), report)
    _write_sweep_table(os.path.join(out, "fig2.csv"), rows)
    _plot_concurrence(
        os.path.join(out, "fig2.svg"),
        g_dense,
        c_curve,
        c0_curve,
        points,
        xlabel="cross-correlation g12",
        title="concurrence vs cross-correlation",
        logx=True,
    )
    print(
        f"analytic zero crossing g12 = {crossing:.3f}, plateau C = {plateau:.4f}; "
        f"wrote {out}/fig2.json, fig2.csv, fig2.svg"
    )
    return EXIT_OK


def _reproduce_fig3(args: argparse.Namespace, out: str) -> int:
    cfg = replace(_reproduce_base(args), **storage_sweep_point())
    decay = cfg.decay_model()
    tau_dense = np.linspace(decay.tau0, 30e-6, 300)
    pc_g = [decay_curves(decay, float(t)) for t in tau_dense]
    c_curve = np.array([concurrence_analytic(pc, cfg.xi, g) for pc, g in pc_g])
    c0_curve = np.array([concurrence_c0(pc, cfg.xi, g) for pc, g in pc_g])
    crossing = separability_time(decay, cfg.xi)

    rows = []
    points = []
    point_docs = []
    taus = [t * 1e-6 for t in FIG3_TAU_GRID_US]
    for index, tau in enumerate(taus):
        point_cfg = replace(cfg, storage_time=tau)
        point = run_point(point_cfg, subseed(cfg.seed, index), args.threads, args.bootstrap)
        rows.append(_point_table_row(tau, point))
        c = point["result"].concurrence
        points.append((tau * 1e6, c.C, c.sigma or 0.0))
        point_docs.append(_point_summary_doc("storage_time", tau, index, point))
        print(f"[{index + 1}/{len(taus)}] tau = {tau * 1e6:.1f} us: C = {c.C:.4f} +- {c.sigma:.4f}")

    report = {
        "format_version": FORMAT_VERSION,
        "target": "fig3",
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "trials_per_lane": args.trials,
        "analytic": {
            "g0": STORAGE_SWEEP_G0,
            "xi": cfg.xi,
            "separability_time": crossing,
            "tau": tau_dense.tolist(),
            "C": c_curve.tolist(),
            "C0": c0_curve.tolist(),
        },
        "points": point_docs,
    }
    write_document(os.path.join(out, "fig3.json"), report)
    _write_sweep_table(os.path.join(out, "fig3.csv"), rows)
    _plot_concurrence(
        os.path.join(out, "fig3.svg"),
        tau_dense * 1e6,
        c_curve,
        c0_curve,
        points,
        xlabel="storage time (us)",
        title="concurrence vs storage time",
    )
    print(
        f"analytic separability time = {crossing * 1e6:.2f} us; "
        f"wrote {out}/fig3.json, fig3.csv, fig3.svg"
    )
    return EXIT_OK


def _reproduce_table1(args: argparse.Namespace, out: str) -> int:
    cfg = _reproduce_base(args)
    point = run_point(cfg, subseed(cfg.seed, 0), args.threads, args.bootstrap)
    result: TomographyResult = point["result"]

    chain = REFERENCE_CHAIN
    with _reported_warnings():
        stages = infer_chain(result.rho, chain, clip=True)
    measured = measured_state(result)
    sigma_output = propagate_uncertainty(
        chain, measured, stage="output", n_samples=args.bootstrap * 4, seed=cfg.seed
    ).sigma
    sigma_atomic = propagate_uncertainty(
        chain, measured, stage="atomic", n_samples=args.bootstrap * 4, seed=cfg.seed
    ).sigma
    sigmas = {
        "detected": result.concurrence.sigma or 0.0,
        "output": sigma_output,
        "atomic": sigma_atomic,
    }

    chain_doc = _chain_doc(chain, stages)
    for name in ("detected", "output", "atomic"):
        chain_doc[name]["sigma_C"] = sigmas[name]
    report = {
        "format_version": FORMAT_VERSION,
        "target": "table1",
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "trials_per_lane": args.trials,
        "lanes": {
            name: summary.to_document() for name, summary in point["summaries"].items()
        },
        "tomography": point["analysis"],
        "chain": chain_doc,
    }
    write_document(os.path.join(out, "table1.json"), report)

    columns = ("detected", "output", "atomic")
    fields = ("p00", "p01", "p10", "p11", "d_re", "C", "C0", "sigma_C")
    with open(os.path.join(out, "table1.csv"), "w", encoding="utf-8") as handle:
        handle.write("element," + ",".join(columns) + "\n")
        for field in fields:
            handle.write(
                field + "," + ",".join(repr(chain_doc[c][field]) for c in columns) + "\n"
            )
    _plot_chain(
        os.path.join(out, "table1.svg"),
        [(name, chain_doc[name]["C"], sigmas[name]) for name in columns],
        title="concurrence along the inference chain",
    )
    for name in columns:
        print(f"{name:9s} C = {chain_doc[name]['C']:.4f} +- {sigmas[name]:.4f}")
    print(f"wrote {out}/table1.json, table1.csv, table1.svg")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    out = _outdir(args)
    if args.target == "fig2":
        return _reproduce_fig2(args, out)
    if args.target == "fig3":
        return _reproduce_fig3(args, out)
    return _reproduce_table1(args, out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _bootstrap_count(text: str) -> int:
    value = int(text)
    if value < MIN_BOOTSTRAP:
        raise argparse.ArgumentTypeError(f"must be >= {MIN_BOOTSTRAP} resamples")
    return value


def _add_common(parser: argparse.ArgumentParser, simulate: bool = True) -> None:
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    if simulate:
        parser.add_argument("--config", help="config file (sectioned key=value text)")
        parser.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override one config value (repeatable)",
        )
        parser.add_argument("--seed", type=int, help="override run.seed")
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            help=f"worker processes (default: all {default_threads()} cores)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlcz-lab",
        description="Simulate and analyze heralded entanglement between two atomic ensembles.",
        epilog="Config schema:\n" + schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"dlcz-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", help="single-ensemble correlation run (g12, p_c)")
    _add_common(p)
    p.add_argument("--ensemble", choices=("u", "d"), default=None, help="which ensemble")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("entangle", help="two-ensemble herald + readout run")
    _add_common(p)
    p.add_argument(
        "--bootstrap", type=_bootstrap_count, default=DEFAULT_BOOTSTRAP, help="bootstrap resamples"
    )
    p.set_defaults(func=cmd_entangle)

    p = sub.add_parser("sweep", help="three-lane campaign over a parameter grid")
    _add_common(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument(
        "--bootstrap", type=_bootstrap_count, default=DEFAULT_BOOTSTRAP, help="bootstrap resamples"
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="re-analyze record files")
    _add_common(p, simulate=False)
    p.add_argument("records", nargs="+", help="record file(s) from entangle runs")
    p.add_argument(
        "--bootstrap", type=_bootstrap_count, default=DEFAULT_BOOTSTRAP, help="bootstrap resamples"
    )
    p.add_argument("--eta-u", type=float, help="U-path survival for chain inversion")
    p.add_argument("--eta-d", type=float, help="D-path survival for chain inversion")
    p.add_argument("--eta-readout", type=float, help="readout efficiency for chain inversion")
    p.add_argument(
        "--clip",
        action="store_true",
        help="clamp unphysical inverted weights instead of failing",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", help="bundled calibration campaigns")
    p.add_argument("target", choices=("fig2", "fig3", "table1"))
    _add_common(p)
    p.add_argument(
        "--trials",
        type=int,
        default=20_000_000,
        help="trials per lane and grid point (default 2e7)",
    )
    p.add_argument(
        "--bootstrap", type=_bootstrap_count, default=DEFAULT_BOOTSTRAP, help="bootstrap resamples"
    )
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RecordFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except InversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVERSION
    except DlczError as exc:  # pragma: no cover - safety net for new subtypes
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
