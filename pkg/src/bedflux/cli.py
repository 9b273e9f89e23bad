"""Command-line pipeline: ``synth | decompose | flux | report`` with file-based handoff.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
Errors are also written to stderr as ``{"error": {"kind": ..., "message": ...}}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import serialize
from .config import RunConfig, load_config_file, merge
from .dmd import decompose, evolve, load_model, reconstruct_series, save_model
from .errors import (
    EXIT_IO,
    BedfluxError,
    ConfigError,
    EmptySpectrum,
    ShapeMismatch,
    TransectOutOfRange,
)
from .flux import FluxConfig, cumulative_contribution
from .ingest import read_field, write_bedgrid
from .metrics import mape, pdf_estimate, pearson
from .serialize import fmt_float
from .spectrum import bin_spectrum, pair_groups, persistence_counts, summaries_to_csv, summarize, summary_rows
from .synth import generate_scenario, load_scenario

MODEL_NAME = "model.dmd"
FIELD_NAME = "field.bedgrid"

# field-study reference values, for side-by-side comparison only
REFERENCE_VALUES = {"mape_percent": 11.97, "mape_snapshot": 150, "pearson": 0.9}

# Multithreaded BLAS reorders reductions and changes the last bits of SVD/eig
# output, so LAPACK always runs on one thread; --threads sizes the worker pool
# that evaluates pair fluxes into fixed slots.
BLAS_THREADS = 1


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_path(cfg: RunConfig) -> Path:
    return Path(cfg.model) if cfg.model else Path(cfg.output_dir) / MODEL_NAME


def _require_input(cfg: RunConfig) -> str:
    if not cfg.input:
        raise ConfigError("--input is required")
    return cfg.input


def cmd_synth(cfg: RunConfig) -> dict:
    scenario = load_scenario(_require_input(cfg))
    field = generate_scenario(scenario, seed=cfg.seed)
    target = Path(cfg.output) if cfg.output else _out_dir(cfg) / FIELD_NAME
    target.parent.mkdir(parents=True, exist_ok=True)
    write_bedgrid(field, target)
    return {"field": str(target)}


def cmd_decompose(cfg: RunConfig) -> dict:
    field = read_field(_require_input(cfg))
    out = _out_dir(cfg)
    with threadpool_limits(limits=BLAS_THREADS):
        model = decompose(
            field,
            train_fraction=cfg.train_fraction,
            rank=cfg.rank_value,
            remove_mean=cfg.remove_mean,
        )
        summaries = summarize(model, tol=cfg.persistence_tol, y_index=cfg.transect)
    save_model(model, out / MODEL_NAME)
    (out / "modes.csv").write_text(summaries_to_csv(summaries))
    serialize.write_json(out / "modes.json", summary_rows(summaries))

    p, q = field.nt, model.n_train
    sv = model.singular_values
    groups = pair_groups(model)
    try:
        regions = bin_spectrum(summaries, cfg.region_edges).tolist()
    except EmptySpectrum:
        regions = None
    log = {
        "snapshots": p,
        "q": q,
        "rank": model.rank,
        "grid_shape": list(model.grid_shape),
        "dt": model.dt,
        "mean_removed": cfg.remove_mean,
        "singular_values_tail": sv[-min(10, sv.size) :].tolist(),
        "singular_values_tail_relative": (sv[-min(10, sv.size) :] / sv[0]).tolist() if sv.size and sv[0] > 0 else [],
        "conjugate_pairs": sum(1 for g in groups if len(g) == 2),
        "real_modes": sum(1 for g in groups if len(g) == 1),
        "zero_eigenvalues": int(model.excluded.sum()),
        "persistence_counts": persistence_counts(summaries),
        "region_edges_s": list(cfg.region_edges),
        "region_counts": regions,
        "validation": _validation(model, field, q),
        "config": cfg.canonical(),
    }
    serialize.write_json(out / "decompose.json", log)
    return {"model": str(out / MODEL_NAME), "modes": str(out / "modes.csv"), "log": str(out / "decompose.json")}


def _validation(model, field, q: int) -> dict | None:
    held = np.arange(q + 1, field.nt)
    if held.size == 0:
        return None
    recon = reconstruct_series(model, field.times[held]).values
    truth = field.values[:, :, held]
    res = {"snapshots": held.tolist()}
    try:
        m = mape(truth, recon)
        res.update(mape_percent=m.percent, excluded_count=m.excluded)
    except BedfluxError as exc:
        res.update(mape_percent=None, mape_error=exc.kind)
    try:
        res["pearson"] = pearson(truth, recon)
    except BedfluxError:
        res["pearson"] = None
    return res


def cmd_flux(cfg: RunConfig) -> dict:
    model = load_model(_model_path(cfg))
    out = _out_dir(cfg)
    fcfg = FluxConfig(
        porosity=cfg.porosity,
        y_index=cfg.transect,
        x_range=tuple(cfg.x_range) if cfg.x_range is not None else None,
    )
    with threadpool_limits(limits=BLAS_THREADS), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = cumulative_contribution(
            model, fcfg, order=cfg.order, persistence_tol=cfg.persistence_tol, threads=cfg.threads, allow_empty=True
        )

    pairs = []
    for i, g in enumerate(report.groups):
        pairs.append(
            {
                "pair": i,
                "modes": list(g),
                "period_s": report.periods[i],
                "wavelength_m": report.wavelengths[i],
                "speed_m_per_s": report.speeds[i],
                "contribution": report.magnitudes[i],
                "percent": report.percent[i],
            }
        )
    doc = {
        "porosity": report.porosity,
        "transect": report.y_index,
        "x_range": list(report.x_range),
        "order": report.order.value,
        "aggregation": report.aggregation.value,
        "n_times": int(report.times.size),
        "pairs": pairs,
        "ranking": report.ranking.tolist(),
        "cumulative_percent": report.cumulative.tolist(),
        "net_flux_time_mean": float(report.net.mean()) if report.net.size else None,
        "warnings": report.warnings,
        "config": cfg.canonical(),
    }
    serialize.write_json(out / "flux.json", doc)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time_s", "net_flux"] + [f"pair_{i}_flux" for i in range(len(report.groups))])
    for j, t in enumerate(report.times):
        writer.writerow([fmt_float(t), fmt_float(report.net[j])] + [fmt_float(v) for v in report.per_mode[:, j]])
    (out / "flux.csv").write_text(buf.getvalue())

    lines = ["# rank cumulative_percent"]
    lines += [f"{i + 1} {fmt_float(c)}" for i, c in enumerate(report.cumulative)]
    (out / "cumulative.dat").write_text("\n".join(lines) + "\n")
    return {"json": str(out / "flux.json"), "csv": str(out / "flux.csv"), "cumulative": str(out / "cumulative.dat")}


def _pdf_doc(samples) -> dict | None:
    try:
        pdf = pdf_estimate(samples)
    except BedfluxError:
        return None
    return {"edges": pdf.bin_edges.tolist(), "densities": pdf.densities.tolist()}


def cmd_report(cfg: RunConfig) -> dict:
    model = load_model(_model_path(cfg))
    field = read_field(_require_input(cfg))
    if tuple(model.grid_shape) != (field.nx, field.ny):
        raise ShapeMismatch(f"model grid {tuple(model.grid_shape)} does not match input grid {(field.nx, field.ny)}")
    y = cfg.transect
    if not 0 <= y < field.ny:
        raise TransectOutOfRange(f"transect {y} outside [0, {field.ny - 1}]")
    snap = cfg.snapshot if cfg.snapshot is not None else field.nt // 2
    if not 0 <= snap < field.nt:
        raise ConfigError(f"snapshot {snap} outside [0, {field.nt - 1}]")
    out = _out_dir(cfg)
    with threadpool_limits(limits=BLAS_THREADS), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        recon = reconstruct_series(model, field.times).values
        imag = np.abs(evolve(model, float(field.times[snap])).imag).max() if model.rank else 0.0

    m = mape(field.values[:, y, snap], recon[:, y, snap])
    doc = {
        "snapshot": snap,
        "transect": y,
        "mape_percent": m.percent,
        "excluded_count": m.excluded,
        "pearson": pearson(field.values[:, y, :], recon[:, y, :]),
        "pearson_field": pearson(field.values, recon),
        "max_imag_residual": float(imag),
        "pdf": {
            "original": _pdf_doc(field.values[:, y, :]),
            "reconstructed": _pdf_doc(recon[:, y, :]),
        },
        "reference": dict(REFERENCE_VALUES),
        "config": cfg.canonical(),
    }
    serialize.write_json(out / "metrics.json", doc)
    return {"metrics": str(out / "metrics.json")}


COMMANDS = {"synth": cmd_synth, "decompose": cmd_decompose, "flux": cmd_flux, "report": cmd_report}


def _int_pair(text: str) -> list[int]:
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two integers, e.g. 0,255")
    return [int(p) for p in parts]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _rank(text: str):
    return "full" if text.lower() == "full" else int(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="BEDGRID file, CSV snapshot directory, or scenario JSON (synth)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--model", help="model file (default: <output-dir>/model.dmd)")
    common.add_argument("--train-fraction", dest="train_fraction", type=float)
    common.add_argument("--rank", type=_rank, help="integer rank or 'full'")
    common.add_argument("--no-mean-removal", dest="remove_mean", action="store_const", const=False)
    common.add_argument("--persistence-tol", dest="persistence_tol", type=float)
    common.add_argument("--porosity", type=float)
    common.add_argument("--transect", type=int)
    common.add_argument("--x-range", dest="x_range", type=_int_pair)
    common.add_argument("--region-edges", dest="region_edges", type=_float_list, help="period edges in seconds")
    common.add_argument("--order", choices=["BySpeedAscending", "BySpeedDescending", "ByMagnitude"])
    common.add_argument("--seed", type=int)
    common.add_argument("--snapshot", type=int)
    common.add_argument("--threads", type=int, help="worker threads for per-pair flux evaluation")
    common.add_argument("--config", help="JSON config file; its values override flags")

    parser = argparse.ArgumentParser(prog="bedflux", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic BEDGRID field").add_argument(
        "--output", help="output file (default: <output-dir>/field.bedgrid)"
    )
    sub.add_parser("decompose", parents=[common], help="fit a DMD model and write the mode table")
    sub.add_parser("flux", parents=[common], help="modal sediment-flux report")
    sub.add_parser("report", parents=[common], help="reconstruction metrics")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message}}) + "\n")
    return code


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = load_config_file(args.config) if args.config else None
        cfg = merge(flags, file_values)
        result = COMMANDS[args.command](cfg)
    except BedfluxError as exc:
        return _fail(exc.kind, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail("IOError", str(exc), EXIT_IO)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
