"""CLI for snapcorr: simulate, decompose and audit snapshot ensembles."""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Callable

import numpy as np

from snapcorr.config import (
    RunConfig,
    apply_overrides,
    load_coupled_config,
    load_matrix_field_config,
    load_pod_config,
    load_scenario,
    load_tensor_config,
)
from snapcorr.coupled import (
    CoupledEnsemble,
    Partition,
    coupled_kernel,
    coupled_pod,
    coupling_correlation,
    fibre_variation,
    partition_kernels,
)
from snapcorr.ensemble import (
    SnapshotEnsemble,
    assemble_correlation,
    load_ensemble,
    load_measure,
)
from snapcorr.errors import SnapcorrError
from snapcorr.export import read_matrix_csv, save_json, save_matrix_csv
from snapcorr.kernel import gram
from snapcorr.piston import COORDINATES, sample_snapshots
from snapcorr.progress import Progress, note, set_quiet
from snapcorr.renderer import render
from snapcorr.report import (
    Report,
    error_ratio_defect,
    orthonormality_defect,
    spectrum_distance,
)
from snapcorr.spectral import (
    KLExpansion,
    eigendecompose,
    energy_table,
    export_kl,
    kl_expand,
    method_of_snapshots,
    reconstruct_all,
    truncate,
    truncation_error,
)
from snapcorr.structured import decode_field, encode_field, field_roundtrip_errors, load_matrix_field
from snapcorr.tensor import export_tt, split, tensorize, tt_reconstruct, tt_svd

RATIO_TOL = 1e-8
SPECTRUM_TOL = 1e-10
ORTHONORMALITY_TOL = 1e-10
PARAMETRIC_ORTHONORMALITY_TOL = 1e-10
ADDITIVITY_TOL = 1e-12
FIBRE_TOL = 1e-12
ROUNDTRIP_TOL = 1e-8
ADDITIVITY_DRAWS = 8


def _total_energy(ens: SnapshotEnsemble) -> float:
    return float(np.sum(ens.weights * np.sum(ens.data ** 2, axis=0)))


def _truncation_table(
    ens: SnapshotEnsemble, kl: KLExpansion,
) -> tuple[list[dict], np.ndarray, np.ndarray]:
    """Predicted vs measured weighted squared error for n = 1..rank."""
    rows = []
    predicted, measured = [], []
    for n in range(1, kl.rank + 1):
        kept = truncate(kl, n=n)
        p, m = kept.discarded_energy, truncation_error(ens, kept)
        predicted.append(p)
        measured.append(m)
        rows.append({"n": n, "predicted": p, "measured": m})
    return rows, np.array(predicted), np.array(measured)


def _choose(kl: KLExpansion, rank: int | None, energy_tol: float | None) -> KLExpansion:
    if rank is not None:
        return truncate(kl, n=rank)
    if energy_tol is not None:
        return truncate(kl, energy_tol=energy_tol)
    return kl


def _export_names(paths: dict) -> dict:
    return {kind: os.path.basename(p) for kind, p in paths.items()}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(run: RunConfig) -> Report:
    """Integrate the piston model over a grid and write a coupled data set."""
    scenario = load_scenario(run.config_path)
    ce = sample_snapshots(
        scenario.grid, scenario.s0, scenario.T, scenario.dt,
        stride=scenario.stride, workers=run.workers,
    )
    out = run.out_dir
    save_matrix_csv(os.path.join(out, "solid.csv"), ce.sub1.data)
    save_matrix_csv(os.path.join(out, "gas.csv"), ce.sub2.data)
    save_matrix_csv(os.path.join(out, "params.csv"), ce.shared_measure.coords)
    n = ce.sub1.n_samples
    manifest = {
        "sub1": "solid.csv",
        "sub2": "gas.csv",
        "params": "params.csv",
        "n_samples": n,
        "state_dims": list(ce.dims),
        "coordinates": list(COORDINATES),
        "observation_times": scenario.observation_times,
    }
    save_json(os.path.join(out, "manifest.json"), manifest)

    expected = {
        "solid.csv": (ce.dims[0], n),
        "gas.csv": (ce.dims[1], n),
        "params.csv": (n, len(COORDINATES)),
    }
    mismatches = sum(
        read_matrix_csv(os.path.join(out, name)).shape != shape
        for name, shape in expected.items()
    )
    report = Report("simulate", inputs={
        "grid_points": n,
        "T": scenario.T,
        "dt": scenario.dt,
        "stride": scenario.stride,
        "s0": [scenario.s0.w, scenario.s0.v],
        "p0": scenario.grid[0].p0,
    })
    report.sections["outputs"] = {
        "files": ["solid.csv", "gas.csv", "params.csv", "manifest.json"],
        "observations": ce.dims[0],
    }
    report.audit("file_shapes", mismatches, 0)
    return report


def cmd_pod(run: RunConfig) -> Report:
    """KL expansion with truncation table and U/Q-side cross-checks."""
    cfg = apply_overrides(load_pod_config(run.config_path), run)
    progress = Progress(3)
    progress.step("loading ensemble")
    ens = load_ensemble(cfg.snapshots, cfg.params, cfg.weights_column, cfg.probability)
    progress.step(f"decomposing {ens.state_dim} x {ens.n_samples} ensemble")
    kl = kl_expand(ens)
    qside = method_of_snapshots(gram(ens), ens.measure)
    progress.step("auditing truncation")
    rows, predicted, measured = _truncation_table(ens, kl)
    kept = _choose(kl, cfg.rank, cfg.energy_tol)

    report = Report("pod", inputs={
        "snapshots": os.path.basename(cfg.snapshots),
        "params": os.path.basename(cfg.params),
        "state_dim": ens.state_dim,
        "n_samples": ens.n_samples,
        "weights_column": cfg.weights_column,
        "probability": cfg.probability,
    })
    report.sections["spectrum"] = {
        "rank": kl.rank,
        "singular_values": kl.singular_values,
        "eigenvalues": kl.eigenvalues,
        "q_side_eigenvalues": qside.eigenvalues[: qside.rank],
        "energy": energy_table(kl),
    }
    report.sections["truncation"] = {
        "n": kept.rank,
        "predicted_error": kept.discarded_energy,
        "measured_error": truncation_error(ens, kept),
        "table": rows,
    }
    if cfg.export_modes:
        report.sections["exports"] = _export_names(export_kl(kept, run.out_dir))

    report.audit(
        "truncation_error_ratio",
        error_ratio_defect(predicted, measured, _total_energy(ens)), RATIO_TOL,
    )
    report.audit(
        "spectrum_duality",
        spectrum_distance(kl.eigenvalues, qside.eigenvalues), SPECTRUM_TOL,
    )
    report.audit(
        "spatial_orthonormality",
        orthonormality_defect(kl.spatial_modes), ORTHONORMALITY_TOL,
    )
    report.audit(
        "parametric_orthonormality",
        orthonormality_defect(kl.parametric_modes, ens.weights),
        PARAMETRIC_ORTHONORMALITY_TOL,
    )
    return report


def cmd_coupled(run: RunConfig) -> Report:
    """Coupling correlation, diagonal kernel and per-subsystem POD."""
    cfg = apply_overrides(load_coupled_config(run.config_path), run)
    progress = Progress(4)
    progress.step("loading subsystems")
    sub1 = load_ensemble(cfg.sub1, cfg.params, cfg.weights_column, cfg.probability)
    sub2 = load_ensemble(cfg.sub2, cfg.params, cfg.weights_column, cfg.probability)
    partition = Partition(*cfg.partition) if cfg.partition else None
    ce = CoupledEnsemble(sub1, sub2, partition, cfg.scales)
    s1, s2 = ce.scaled()

    progress.step("assembling correlations")
    c1, c2 = assemble_correlation(s1), assemble_correlation(s2)
    cc = coupling_correlation(ce)
    eig1 = eigendecompose(c1).eigenvalues
    eig2 = eigendecompose(c2).eigenvalues
    eigc = eigendecompose(cc).eigenvalues
    kernel = coupled_kernel(ce)
    q1 = method_of_snapshots(gram(s1), ce.shared_measure)
    q2 = method_of_snapshots(gram(s2), ce.shared_measure)

    progress.step("checking block additivity")
    rng = np.random.default_rng(run.seed)
    additivity = 0.0
    d1, d2 = ce.dims
    for _ in range(ADDITIVITY_DRAWS):
        u1, u2 = rng.standard_normal(d1), rng.standard_normal(d2)
        u = np.concatenate((u1, u2))
        lhs = cc.bilinear(u, u)
        rhs = c1.bilinear(u1, u1) + c2.bilinear(u2, u2)
        additivity = max(additivity, abs(lhs - rhs) / max(abs(lhs), 1e-300))

    progress.step("reducing subsystems")
    full1, full2 = kl_expand(s1), kl_expand(s2)
    n1 = full1.rank if cfg.n1 is None else cfg.n1
    n2 = full2.rank if cfg.n2 is None else cfg.n2
    pod = coupled_pod(ce, n1, n2, workers=run.workers)
    measured_joint = truncation_error(s1, pod.kl1) + truncation_error(s2, pod.kl2)
    tail1 = [row["discarded_energy"] for row in energy_table(full1)]
    tail2 = [row["discarded_energy"] for row in energy_table(full2)]
    joint_rows = [
        {
            "n1": min(n, full1.rank), "n2": min(n, full2.rank),
            "predicted": tail1[min(n, full1.rank)] + tail2[min(n, full2.rank)],
        }
        for n in range(max(full1.rank, full2.rank) + 1)
    ]

    report = Report("coupled", inputs={
        "sub1": os.path.basename(cfg.sub1),
        "sub2": os.path.basename(cfg.sub2),
        "params": os.path.basename(cfg.params),
        "state_dims": [d1, d2],
        "n_samples": sub1.n_samples,
        "scales": list(ce.scales),
        "seed": run.seed,
    })
    report.sections["sub1"] = {
        "rank": full1.rank, "singular_values": full1.singular_values,
        "kernel_trace": float(np.trace(kernel.diag1)),
    }
    report.sections["sub2"] = {
        "rank": full2.rank, "singular_values": full2.singular_values,
        "kernel_trace": float(np.trace(kernel.diag2)),
    }
    report.sections["coupled"] = {
        "eigenvalues": eigc[eigc > 0],
        "n1": n1,
        "n2": n2,
        "predicted_joint_error": pod.joint_error,
        "measured_joint_error": measured_joint,
        "joint_table": joint_rows,
    }
    report.sections["exports"] = {
        **{f"sub1_{k}": v for k, v in _export_names(export_kl(pod.kl1, run.out_dir, "sub1")).items()},
        **{f"sub2_{k}": v for k, v in _export_names(export_kl(pod.kl2, run.out_dir, "sub2")).items()},
    }

    report.audit("duality_sub1", spectrum_distance(eig1, q1.eigenvalues), SPECTRUM_TOL)
    report.audit("duality_sub2", spectrum_distance(eig2, q2.eigenvalues), SPECTRUM_TOL)
    report.audit(
        "spectrum_union",
        spectrum_distance(eigc, np.concatenate((eig1, eig2))), SPECTRUM_TOL,
    )
    report.audit("block_additivity", additivity, ADDITIVITY_TOL)
    report.audit(
        "joint_truncation_error",
        error_ratio_defect(
            [pod.joint_error], [measured_joint],
            _total_energy(s1) + _total_energy(s2),
        ),
        RATIO_TOL,
    )
    if ce.partition is not None:
        var1, var2 = fibre_variation(ce)
        k1, k2 = partition_kernels(ce)
        report.sections["partition"] = {
            "m1": list(ce.partition.m1_indices),
            "m2": list(ce.partition.m2_indices),
            "grid_shape": list(ce.partition.grid_shape),
            "fibre_variation_sub1": var1,
            "fibre_variation_sub2": var2,
            "reduced_kernel_traces": [float(np.trace(k1)), float(np.trace(k2))],
        }
        report.audit("fibre_constancy_sub1", var1, FIBRE_TOL)
        report.audit("fibre_constancy_sub2", var2, FIBRE_TOL)
    return report


def cmd_tensor(run: RunConfig) -> Report:
    """TT-SVD of the snapshot tensor, optionally one binary split."""
    cfg = apply_overrides(load_tensor_config(run.config_path), run)
    progress = Progress(3)
    progress.step("loading ensemble")
    ens = load_ensemble(cfg.snapshots, cfg.params, cfg.weights_column, cfg.probability)
    t = tensorize(ens, cfg.grid)
    progress.step(f"TT-SVD of a {'x'.join(map(str, t.shape))} tensor")
    tt = tt_svd(t, cfg.energy_tol, cfg.max_bond)
    measured = t.weighted_norm(tt_reconstruct(tt).data)
    norm = t.weighted_norm()
    progress.step("checking matricization")
    kl = kl_expand(ens)
    first = split(t, [], list(range(1, t.order)))

    report = Report("tensor", inputs={
        "snapshots": os.path.basename(cfg.snapshots),
        "params": os.path.basename(cfg.params),
        "shape": list(t.shape),
        "energy_tol": cfg.energy_tol,
    })
    report.sections["tt"] = {
        "bond_dims": list(tt.bond_dims),
        "discarded_energies": list(tt.discarded),
        "error_bound": tt.error_bound,
        "measured_error": measured,
        "norm": norm,
        "n_params": tt.n_params,
        "manifest": os.path.basename(export_tt(tt, run.out_dir)),
    }
    report.audit("tt_error_bound", measured, tt.error_bound * (1 + 1e-10) + 1e-12 * norm)
    report.audit(
        "order2_consistency",
        spectrum_distance(kl.singular_values, first.singular_values), SPECTRUM_TOL,
    )
    if cfg.partition is not None:
        left, right = cfg.partition
        sp = split(t, left, right, cfg.energy_tol)
        err2 = t.weighted_norm(sp.reconstruct()) ** 2
        report.sections["split"] = {
            "left": list(sp.left_axes),
            "right": list(sp.right_axes),
            "rank": sp.rank,
            "singular_values": sp.singular_values,
            "discarded_energy": sp.discarded_energy,
            "measured_error_sq": err2,
        }
        report.audit(
            "split_error_identity",
            abs(err2 - sp.discarded_energy) / max(norm ** 2, 1e-300),
            SPECTRUM_TOL,
        )
    return report


def cmd_matrix_field(run: RunConfig) -> Report:
    """Encode a matrix field, reduce it, decode and measure the roundtrip."""
    cfg = apply_overrides(load_matrix_field_config(run.config_path), run)
    progress = Progress(3)
    progress.step("loading matrix field")
    measure = None
    if cfg.params is not None:
        measure = load_measure(cfg.params, cfg.weights_column, cfg.probability)
    mfe = load_matrix_field(cfg.samples, cfg.manifest, measure)
    progress.step(f"encoding {mfe.n_samples} {mfe.manifold.value} samples")
    ens = encode_field(mfe)
    kl = kl_expand(ens)
    kept = _choose(kl, cfg.rank, cfg.energy_tol)
    progress.step("decoding")
    rec = SnapshotEnsemble(reconstruct_all(kept), ens.measure)
    decoded = decode_field(rec, mfe.manifold)
    errors = field_roundtrip_errors(mfe, decoded)
    encoded_energy = float(np.sum(
        ens.weights * np.sum(mfe.log_coords ** 2, axis=(1, 2)),
    ))
    spectral_energy = float(np.sum(kl.eigenvalues) + kl.discarded_energy)
    full = cfg.rank is None and cfg.energy_tol is None

    report = Report("matrix-field", inputs={
        "samples": os.path.basename(cfg.samples),
        "manifest": os.path.basename(cfg.manifest),
        "manifold": mfe.manifold.value,
        "n": mfe.n,
        "n_samples": mfe.n_samples,
    })
    report.sections["encoding"] = {
        "state_dim": ens.state_dim,
        "encoded_energy": encoded_energy,
        "rank": kl.rank,
        "singular_values": kl.singular_values,
    }
    report.sections["roundtrip"] = {
        "n": kept.rank,
        "truncated": not full,
        "errors": errors,
        "max_error": float(errors.max()),
    }
    report.sections["exports"] = _export_names(export_kl(kept, run.out_dir, "field"))

    if full:
        scale = np.maximum(1.0, np.sqrt(np.sum(mfe.samples ** 2, axis=(1, 2))))
        report.audit("roundtrip_error", float(np.max(errors / scale)), ROUNDTRIP_TOL)
    report.audit(
        "encoded_energy",
        abs(encoded_energy - spectral_energy) / max(encoded_energy, 1e-300),
        SPECTRUM_TOL,
    )
    report.audit(
        "spatial_orthonormality",
        orthonormality_defect(kept.spatial_modes), ORTHONORMALITY_TOL,
    )
    return report


COMMANDS: dict[str, Callable[[RunConfig], Report]] = {
    "simulate": cmd_simulate,
    "pod": cmd_pod,
    "coupled": cmd_coupled,
    "tensor": cmd_tensor,
    "matrix-field": cmd_matrix_field,
}

COMMAND_HELP = {
    "simulate": "Integrate the piston model over a parameter grid",
    "pod": "Karhunen-Loeve expansion of a snapshot ensemble",
    "coupled": "Coupling correlation and per-subsystem POD",
    "tensor": "TT-SVD of a snapshot tensor over a parameter grid",
    "matrix-field": "SPD / rotation field reduction in log coordinates",
}


def _build_arg_parser() -> argparse.ArgumentParser:
    """Create and return the CLI argument parser."""
    parser = argparse.ArgumentParser(
        prog="snapcorr",
        description="Correlation-operator model reduction of snapshot ensembles",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument(
            "--config", required=True,
            help="JSON config (scenario for simulate, manifest for coupled)",
        )
        sub.add_argument(
            "--out", required=True,
            help="Output directory; the report is written to <out>/report.json",
        )
        sub.add_argument(
            "--seed", type=int, default=0,
            help="Seed for randomized audits (default: 0)",
        )
        sub.add_argument(
            "--workers", type=int, default=1,
            help="Parallel workers for independent computations (default: 1)",
        )
        sub.add_argument(
            "--quiet", action="store_true",
            help="Suppress progress output on stderr",
        )
        sub.add_argument(
            "--html", action="store_true",
            help="Also render <out>/report.html",
        )
        sub.add_argument(
            "--timing", action="store_true",
            help="Record elapsed seconds in the report (breaks byte-identical reruns)",
        )
        if name != "simulate":
            sub.add_argument(
                "--weights-column", type=int, default=None,
                help="Column of the parameter CSV holding the weights"
                " (negative counts from the end; overrides the config)",
            )
            sub.add_argument(
                "--probability", action="store_true",
                help="Normalise the weights to sum to one (overrides the config)",
            )
    return parser


def main(argv: list[str] | None = None) -> None:
    """Entry point for the snapcorr CLI."""
    parser = _build_arg_parser()
    args = parser.parse_args(argv)
    set_quiet(args.quiet)
    start = time.monotonic()

    try:
        run = RunConfig(
            command=args.command,
            config_path=args.config,
            out_dir=args.out,
            seed=args.seed,
            workers=args.workers,
            html=args.html,
            timing=args.timing,
            weights_column=getattr(args, "weights_column", None),
            probability=getattr(args, "probability", False),
        )
        os.makedirs(run.out_dir, exist_ok=True)
        report = COMMANDS[run.command](run)
        elapsed = time.monotonic() - start
        if run.timing:
            report.timing = elapsed
        path = report.write(run.out_dir)
        if run.html:
            render(report, os.path.join(run.out_dir, "report.html"))
    except (SnapcorrError, OSError, np.linalg.LinAlgError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)

    print(f"Report written to {path}")
    note(f"Done in {elapsed:.1f}s")
    for audit in report.failed():
        print(
            f"Audit failed: {audit.name} = {audit.value:.3e}"
            f" (tolerance {audit.tolerance:.3e})",
            file=sys.stderr,
        )
    if not report.passed:
        sys.exit(2)


if __name__ == "__main__":
    main()
