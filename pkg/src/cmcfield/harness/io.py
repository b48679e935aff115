"""On-disk formats: dataset directories, result bundles and canonical CSV/JSON writers.

Dataset directory::

    manifest.json            layout, frequencies, timestamps, config echo, format version
    power/window_0000.csv    channel x frequency power, header row of frequencies
    truth/theta.csv          optional ground truth, window x channel
    truth/coeffs.csv         optional ground-truth mode coefficients
    truth/g7.csv             optional ground-truth g7 log-offsets

Results directory::

    results.json             filter config echo, dataset digest, one record per window
    predicted/window_0000.csv  predicted log10 power

Floats are written with 17 significant digits so a read/write cycle is
byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..errors import FormatMismatchError
from ..filtering import BeliefTrajectory, TrajectoryEntry
from ..vl import GaussianBelief, InversionReport, NoiseHyper
from .simulate import Dataset

DATASET_FORMAT = "cmcfield-dataset"
DATASET_VERSION = 1
RESULTS_FORMAT = "cmcfield-results"
RESULTS_VERSION = 1


def fmt(x) -> str:
    return format(float(x), ".17g")


def _canonical(obj):
    """Plain Python types only; floats go through repr, which round-trips exactly."""
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_canonical(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8", newline="\n")


def read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise FormatMismatchError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatMismatchError(f"{path} is not valid JSON: {exc}") from exc


def matrix_to_csv(matrix, row_ids, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(list(header))
    for rid, row in zip(row_ids, np.atleast_2d(matrix)):
        writer.writerow([rid] + [fmt(v) for v in row])
    return buf.getvalue()


def csv_to_matrix(text: str, path="<csv>"):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatMismatchError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        ids = [r[0] for r in body]
        data = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    except (ValueError, IndexError) as exc:
        raise FormatMismatchError(f"{path}: malformed CSV ({exc})") from exc
    if data.size and data.shape[1] != len(header) - 1:
        raise FormatMismatchError(f"{path}: row width does not match header")
    return header, ids, data.reshape(len(body), len(header) - 1)


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_text(path: Path) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise FormatMismatchError(f"missing file {path}") from exc


def _window_file(k: int) -> str:
    return f"window_{k:04d}.csv"


def write_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = dict(ds.manifest)
    manifest["has_truth"] = ds.has_truth
    write_json(out / "manifest.json", manifest)
    header = ["channel"] + [fmt(f) for f in ds.freqs]
    for k, p in enumerate(ds.power):
        write_text(out / "power" / _window_file(k), matrix_to_csv(p, ds.channel_ids, header))
    window_ids = [str(k) for k in range(len(ds.times))]
    if ds.truth_theta is not None:
        write_text(out / "truth" / "theta.csv",
                    matrix_to_csv(ds.truth_theta, window_ids, ["window"] + list(ds.channel_ids)))
    if ds.truth_coeffs is not None:
        modes = [f"mode{i}" for i in range(ds.truth_coeffs.shape[1])]
        write_text(out / "truth" / "coeffs.csv", matrix_to_csv(ds.truth_coeffs, window_ids, ["window"] + modes))
    if ds.truth_g7 is not None:
        write_text(out / "truth" / "g7.csv", matrix_to_csv(ds.truth_g7[:, None], window_ids, ["window", "g7_log_offset"]))
    return out


def check_version(manifest: dict, fmt_name: str, version: int, path) -> None:
    if manifest.get("format") != fmt_name:
        raise FormatMismatchError(f"{path}: expected format {fmt_name!r}, found {manifest.get('format')!r}")
    if manifest.get("version") != version:
        raise FormatMismatchError(f"{path}: unsupported {fmt_name} version {manifest.get('version')!r} (expected {version})")


def read_dataset(data_dir) -> Dataset:
    root = Path(data_dir)
    manifest = read_json(root / "manifest.json")
    check_version(manifest, DATASET_FORMAT, DATASET_VERSION, root / "manifest.json")
    try:
        layout = manifest["layout"]
        freqs = np.array(manifest["freqs"], dtype=float)
        times = np.array(manifest["times"], dtype=float)
        ids = list(layout["channel_ids"])
        positions = np.array(layout["positions"], dtype=float)
    except KeyError as exc:
        raise FormatMismatchError(f"manifest is missing {exc}") from exc
    power = []
    for k in range(len(times)):
        path = root / "power" / _window_file(k)
        header, row_ids, data = csv_to_matrix(read_text(path), path)
        if row_ids != ids or data.shape != (len(ids), freqs.size):
            raise FormatMismatchError(f"{path}: dimensions or channel ids do not match the manifest")
        if not np.allclose(np.array(header[1:], dtype=float), freqs, rtol=0, atol=0):
            raise FormatMismatchError(f"{path}: frequency header does not match the manifest")
        if np.any(data < 0):
            raise FormatMismatchError(f"{path}: negative power")
        power.append(data)
    truth = {}
    if manifest.get("has_truth"):
        for name in ("theta", "coeffs", "g7"):
            path = root / "truth" / f"{name}.csv"
            if path.exists():
                _, _, data = csv_to_matrix(read_text(path), path)
                if data.shape[0] != len(times):
                    raise FormatMismatchError(f"{path}: expected {len(times)} windows")
                truth[name] = data
    g7 = truth.get("g7")
    return Dataset(
        manifest=manifest,
        freqs=freqs,
        positions=positions,
        channel_ids=ids,
        times=times,
        power=np.array(power).reshape(len(times), len(ids), freqs.size),
        truth_theta=truth.get("theta"),
        truth_coeffs=truth.get("coeffs"),
        truth_g7=None if g7 is None else g7[:, 0],
    )


def manifest_digest(data_dir) -> str:
    return hashlib.sha256((Path(data_dir) / "manifest.json").read_bytes()).hexdigest()


def _belief_dict(b: GaussianBelief) -> dict:
    return {"mean": b.mean, "cov": b.cov}


def _belief_from(d) -> GaussianBelief:
    return GaussianBelief(np.array(d["mean"], dtype=float), np.array(d["cov"], dtype=float))


def trajectory_to_dict(traj: BeliefTrajectory) -> list:
    out = []
    for e in traj:
        r = e.report
        out.append({
            "t": e.t,
            "prior": _belief_dict(e.prior),
            "posterior": _belief_dict(r.posterior),
            "hyper": {"log_precision": r.hyper.log_precision, "prior_mean": r.hyper.prior_mean,
                      "prior_var": r.hyper.prior_var},
            "free_energy": r.free_energy,
            "objective": r.objective,
            "iterations": r.iterations,
            "converged": r.converged,
            "regularized": r.regularized,
            "explained_variance": r.explained_variance,
            "objective_trace": r.objective_trace,
        })
    return out


def trajectory_from_dict(records: list, predicted: list) -> BeliefTrajectory:
    entries = []
    for rec, pred in zip(records, predicted):
        report = InversionReport(
            t=float(rec["t"]),
            posterior=_belief_from(rec["posterior"]),
            hyper=NoiseHyper(**rec["hyper"]),
            free_energy=float(rec["free_energy"]),
            objective=float(rec["objective"]),
            iterations=int(rec["iterations"]),
            converged=bool(rec["converged"]),
            regularized=bool(rec["regularized"]),
            predicted=np.asarray(pred, dtype=float),
            explained_variance=float(rec["explained_variance"]),
            objective_trace=[float(v) for v in rec["objective_trace"]],
        )
        entries.append(TrajectoryEntry(float(rec["t"]), _belief_from(rec["prior"]), report))
    return BeliefTrajectory(entries)


def write_results(traj: BeliefTrajectory, out_dir, dataset: Dataset, data_dir, config_echo: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": RESULTS_FORMAT,
        "version": RESULTS_VERSION,
        "dataset_digest": manifest_digest(data_dir),
        "n_windows": len(traj),
        "config": config_echo,
        "windows": trajectory_to_dict(traj),
    }
    write_json(out / "results.json", doc)
    header = ["channel"] + [fmt(f) for f in dataset.freqs]
    for k, e in enumerate(traj):
        write_text(out / "predicted" / _window_file(k), matrix_to_csv(e.report.predicted, dataset.channel_ids, header))
    return out


def read_results(results_dir):
    """Returns ``(document, trajectory)``."""
    root = Path(results_dir)
    doc = read_json(root / "results.json")
    check_version(doc, RESULTS_FORMAT, RESULTS_VERSION, root / "results.json")
    predicted = []
    for k in range(len(doc["windows"])):
        path = root / "predicted" / _window_file(k)
        _, _, data = csv_to_matrix(read_text(path), path)
        predicted.append(data)
    return doc, trajectory_from_dict(doc["windows"], predicted)
