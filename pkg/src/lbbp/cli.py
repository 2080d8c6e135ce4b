"""Command-line front end: eigs / register / evaluate / sample.

Exit codes: 0 success, 1 runtime failure (mapped from package errors),
2 usage errors (argument parsing, missing files). Log level comes from
``--log-level`` or the ``LBBP_LOG_LEVEL`` environment variable.
"""

import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .correspondence import (
    load_correspondence,
    point_to_point,
    save_correspondence,
)
from .errors import InvalidK, LbbpError
from .estimator import LBBasisPursuit
from .evaluation import geodesic_errors, write_error_csv, write_error_summary
from .eigensolver import (
    Eigensystem,
    export_eigensystem_csv,
    save_eigensystem,
    solve_eigs,
)
from .fem import assemble_mass, assemble_stiffness
from .mesh import load_landmarks, load_mesh
from .sampling import farthest_point_sample
from .solver import LbbpConfig, write_conformal_factor, write_trace_csv

logger = logging.getLogger(__name__)


def _fail(exc):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path):
    """Read a TOML or JSON run configuration mapping 1:1 to LbbpConfig."""
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        raw = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(text.decode("utf-8"))
    known = {f.name for f in dataclasses.fields(LbbpConfig)}
    extra = {"feature_kind", "heat_times", "heat_dt"}
    unknown = set(raw) - known - extra
    if unknown:
        raise LbbpError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in raw:
        raise LbbpError("config must set an explicit 'seed' for reproducibility")
    return raw


@click.group()
@click.option(
    "--log-level",
    envvar="LBBP_LOG_LEVEL",
    default="WARNING",
    show_default=True,
    help="Logging level (also via LBBP_LOG_LEVEL).",
)
@click.version_option(__version__)
def main(log_level):
    """Surface registration via conformally deformed spectral bases."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "--num-eigs", type=int, required=True, help="Eigenpair count.")
@click.option(
    "--weight",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Per-vertex w^2 file (one value per line) for the weighted problem.",
)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False), default=None)
def eigs(mesh_path, num_eigs, weight, out, csv_out):
    """Eigensystem of a mesh, written in the binary eigensystem layout."""
    try:
        mesh = load_mesh(mesh_path)
        mass = assemble_mass(mesh)
        stiffness = assemble_stiffness(mesh)
        b = mass.diagonal()
        if weight is not None:
            w2 = np.loadtxt(weight, ndmin=1)
            if len(w2) != mesh.n_vertices:
                raise InvalidK(
                    f"weight file has {len(w2)} values for {mesh.n_vertices} vertices"
                )
            b = b * w2
        eigsys = solve_eigs(stiffness, b, num_eigs)
        save_eigensystem(out, eigsys)
        if csv_out:
            export_eigensystem_csv(csv_out, eigsys)
    except LbbpError as exc:
        _fail(exc)
    click.echo(f"wrote {num_eigs} eigenpairs to {out}")


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.argument("landmarks", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="TOML or JSON run configuration (must set 'seed').",
)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option(
    "--no-warm-start", is_flag=True, help="Skip the subsampled warm start."
)
@click.option(
    "--features",
    "feature_kind",
    type=click.Choice(["indicator", "heat"]),
    default=None,
    help="Feature kind (overrides config; default indicator).",
)
def register(source, target, landmarks, config_path, out_dir, no_warm_start,
             feature_kind):
    """Full pipeline: eigensystem, features, warm start, joint solve, map."""
    t_start = time.perf_counter()
    try:
        raw = load_config(config_path)
        if no_warm_start:
            raw["warm_start"] = False
        if feature_kind is not None:
            raw["feature_kind"] = feature_kind
        est = LBBasisPursuit(**raw)

        source_mesh = load_mesh(source)
        target_mesh = load_mesh(target)
        pairs = load_landmarks(landmarks)
        est.fit(source_mesh, target_mesh, pairs)

        outdir = Path(out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        outputs = {}

        corr_path = outdir / "correspondence.txt"
        save_correspondence(corr_path, est.correspondence_)
        outputs["correspondence"] = corr_path

        w_path = outdir / "conformal_factor.txt"
        write_conformal_factor(w_path, est.w_)
        outputs["conformal_factor"] = w_path

        basis_path = outdir / "deformed_basis.bin"
        save_eigensystem(
            basis_path,
            Eigensystem(
                values=est.result_.basis_spectrum,
                functions=est.psi_star_,
                b_diag=est.result_.problem.m2_diag,
            ),
        )
        outputs["deformed_basis"] = basis_path

        trace_path = outdir / "trace.csv"
        write_trace_csv(trace_path, est.result_.trace)
        outputs["trace"] = trace_path

        summary_path = outdir / "summary.json"
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(est.result_.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs["summary"] = summary_path

        manifest = dict(
            command="register",
            version=__version__,
            versions=_versions(),
            config=raw,
            resolved_config=dataclasses.asdict(est.result_.config),
            inputs={
                "source": {"path": str(source), "sha256": _sha256(source)},
                "target": {"path": str(target), "sha256": _sha256(target)},
                "landmarks": {"path": str(landmarks), "sha256": _sha256(landmarks)},
                "config": {"path": str(config_path), "sha256": _sha256(config_path)},
            },
            outputs={k: str(v) for k, v in outputs.items()},
            warm_start=not no_warm_start and est.result_.config.warm_start,
            termination=est.result_.termination,
            partial=est.result_.warning,
            timings={
                "total_s": time.perf_counter() - t_start,
                "solver_s": est.result_.wall_time,
            },
        )
        with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except LbbpError as exc:
        _fail(exc)
    click.echo(f"registration complete: {out_dir} ({manifest['termination']})")


@main.command()
@click.argument("corr_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-prefix", type=click.Path(dir_okay=False), required=True)
def evaluate(corr_file, truth_file, target, out_prefix):
    """Normalized geodesic errors of a correspondence vs ground truth."""
    try:
        corr = load_correspondence(corr_file)
        truth = load_correspondence(truth_file)
        mesh = load_mesh(target)
        report = geodesic_errors(corr, truth, mesh)
        write_error_csv(f"{out_prefix}.csv", report)
        write_error_summary(f"{out_prefix}.json", report)
    except LbbpError as exc:
        _fail(exc)
    click.echo(
        f"fraction exact {report.fraction_exact:.4f}, "
        f"within 5% {report.fraction_5pct:.4f}"
    )


@main.command()
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--counts",
    required=True,
    help="Comma-separated strictly decreasing level sizes; first must be n.",
)
@click.option("--seed", type=int, required=True, help="Seed vertex index.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def sample(mesh_path, counts, seed, out):
    """Farthest-point sample hierarchy, one JSON file."""
    try:
        mesh = load_mesh(mesh_path)
        sizes = [int(c) for c in counts.split(",")]
        hierarchy = farthest_point_sample(mesh, sizes, seed)
        payload = dict(
            counts=sizes,
            seed=seed,
            levels=[lvl.tolist() for lvl in hierarchy.levels],
            masses=[m.tolist() for m in hierarchy.masses],
        )
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    except LbbpError as exc:
        _fail(exc)
    click.echo(f"wrote hierarchy with levels {[len(l) for l in hierarchy.levels]}")


def _versions():
    import scipy

    return {"lbbp": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


if __name__ == "__main__":
    main()
