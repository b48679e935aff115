"""Summaries, field-map CSVs and SVG heatmaps for a results bundle."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FormatMismatchError
from ..filtering import field_movie
from .io import (
    write_text,
    fmt,
    manifest_digest,
    matrix_to_csv,
    read_dataset,
    read_results,
    write_json,
)
from .pipeline import (
    dataset_basis,
    estimated_theta,
    field_correlation,
    grid_index_from_manifest,
    hotspot_agreement,
    pooled_explained_variance,
)
from .svg import heatmap_svg
from ..vl import explained_variance


def map_grid(domain_kind: str, lengths, n: int = 33):
    """Regular grid over the whole domain; returns (points, shape) with x varying fastest."""
    xs = np.linspace(0.0, lengths[0], n)
    if domain_kind == "interval":
        return xs[:, None], (1, n)
    ny = max(2, int(round(n * lengths[1] / lengths[0])))
    ys = np.linspace(0.0, lengths[1], ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()]), (ny, n)


def summarize(results_dir, data_dir) -> dict:
    doc, traj = read_results(results_dir)
    ds = read_dataset(data_dir)
    if doc["dataset_digest"] != manifest_digest(data_dir):
        raise FormatMismatchError("results were produced from a different dataset manifest")
    if len(traj) != len(ds.times) or not np.allclose(traj.times, ds.times):
        raise FormatMismatchError("results and dataset window timestamps differ")
    observed = [np.log10(p) for p in ds.power]
    predicted = [e.report.predicted for e in traj]
    per_window = [explained_variance(o, p) for o, p in zip(observed, predicted)]
    summary = {
        "n_windows": len(traj),
        "total_explained_variance": pooled_explained_variance(observed, predicted),
        "min_window_explained_variance": min(per_window),
        "per_window_explained_variance": per_window,
        "converged_windows": int(sum(e.report.converged for e in traj)),
        "free_energy": [e.report.free_energy for e in traj],
    }
    cfg_echo = doc.get("config", {})
    basis = dataset_basis(ds, cfg_echo.get("n_modes"), cfg_echo.get("alpha"))
    theta_hat = estimated_theta(traj, basis, ds.positions)
    if ds.has_truth:
        agree = hotspot_agreement(ds.truth_theta, theta_hat, grid_index_from_manifest(ds.manifest))
        summary["field_correlation"] = field_correlation(ds.truth_theta, theta_hat)
        summary["hotspot_agreement"] = float(np.mean(agree))
        if ds.truth_g7 is not None:
            summary["g7_correlation"] = field_correlation(ds.truth_g7, traj.posterior_means[:, -1])
    return {"summary": summary, "trajectory": traj, "dataset": ds, "basis": basis, "theta_hat": theta_hat}


def report(results_dir, data_dir, out_dir) -> dict:
    """Write ``summary.json``, per-window CSVs, field-map CSVs and SVG heatmaps; return the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = summarize(results_dir, data_dir)
    summary, traj, ds, basis = res["summary"], res["trajectory"], res["dataset"], res["basis"]
    write_json(out / "summary.json", summary)

    rows = ["window,t,explained_variance,converged,iterations,free_energy\r\n"]
    for k, e in enumerate(traj):
        r = e.report
        rows.append(f"{k},{fmt(e.t)},{fmt(summary['per_window_explained_variance'][k])},"
                    f"{int(r.converged)},{r.iterations},{fmt(r.free_energy)}\r\n")
    write_text(out / "per_window.csv", "".join(rows))
    window_ids = [str(k) for k in range(len(traj))]
    write_text(out / "theta_estimate.csv",
                matrix_to_csv(res["theta_hat"], window_ids, ["window"] + list(ds.channel_ids)))

    points, shape = map_grid(basis.domain.kind, basis.domain.lengths)
    maps = field_movie(traj, basis, points)
    truth_maps = None
    if ds.truth_coeffs is not None and ds.truth_coeffs.shape[1] == basis.size:
        truth_maps = ds.truth_coeffs @ basis.mode_values(points).T
    xs = points[: shape[1], 0]
    header = ["y\\x"] + [fmt(x) for x in xs]
    ys = points[:: shape[1], 1] if points.shape[1] == 2 else np.zeros(1)
    for k in range(len(traj)):
        grid = maps[k].reshape(shape)
        write_text(out / "maps" / f"estimate_{k:04d}.csv", matrix_to_csv(grid, [fmt(y) for y in ys], header))
        write_text(out / "maps" / f"estimate_{k:04d}.svg",
                    heatmap_svg(grid, f"estimated theta_sp, window {k}, t = {traj.times[k]:g}"))
        if truth_maps is not None:
            tgrid = truth_maps[k].reshape(shape)
            write_text(out / "maps" / f"truth_{k:04d}.csv", matrix_to_csv(tgrid, [fmt(y) for y in ys], header))
            write_text(out / "maps" / f"truth_{k:04d}.svg",
                        heatmap_svg(tgrid, f"true theta_sp, window {k}, t = {traj.times[k]:g}"))
    return summary
