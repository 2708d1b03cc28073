"""Round-trip error sweep: encode, decode, reconstruct, score.

For every (mesh, view, layer count, resolution) cell the mesh is
encoded, decoded to a point cloud, reconstructed through the Poisson
pipeline, and compared with the original. Ray casting runs once per
(mesh, view, resolution) at the deepest requested layer count; shallower
cells reuse the cast through prefix truncation, which is exact.

Cells execute on a bounded thread pool (XRAY_THREADS env var); rows are
emitted in deterministic (mesh, view, layers, resolution) order no
matter how the pool schedules them.
"""

from __future__ import annotations

import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import sample_views
from .codec import decode_to_pointcloud, encode, pad_or_truncate
from .mesh import TriangleMesh, normalize_mesh
from .metrics import evaluate_pair
from .poisson import reconstruct
from .raycast import build_bvh

CSV_HEADER = "mesh,view,layers,resolution,chamfer,f_score,encode_ms,decode_ms,recon_ms,error"

THREADS_ENV = "XRAY_THREADS"

# Wide enough that a unit-bbox mesh (bounding sphere 0.866) stays fully
# inside the frustum from distance 1.2 in every sampled view. The render
# constant used elsewhere only covers a 0.5-radius sphere; with partial
# visibility the sweep would measure a clipping floor instead of the
# layer/resolution error it is after.
SWEEP_FOV_X = 2.0 * np.arcsin(0.875 / 1.2)


@dataclass(frozen=True)
class SweepRow:
    mesh: str
    view: int
    layers: int
    resolution: int
    chamfer: float
    f_score: float
    encode_ms: float
    decode_ms: float
    recon_ms: float
    error: str = ""

    def to_csv(self, timings: bool = True) -> str:
        def num(x: float) -> str:
            return "" if np.isnan(x) else repr(float(x))

        def ms(x: float) -> str:
            return f"{x:.3f}" if timings else "0.000"

        return ",".join(
            [
                self.mesh,
                str(self.view),
                str(self.layers),
                str(self.resolution),
                num(self.chamfer),
                num(self.f_score),
                ms(self.encode_ms),
                ms(self.decode_ms),
                ms(self.recon_ms),
                self.error,
            ]
        )


def worker_count() -> int:
    """Thread pool size: XRAY_THREADS if set, else min(4, cpu count)."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be positive")
        return n
    return min(4, os.cpu_count() or 1)


def run_sweep(
    meshes: dict[str, TriangleMesh],
    layers_list: list[int],
    res_list: list[int],
    views: int = 2,
    seed: int = 0,
    poisson_res: int = 64,
    screening: float = 0.0,
    trim: float = 0.0,
    n_samples: int = 16384,
    threshold: float = 0.1,
    fov_x: float = SWEEP_FOV_X,
    max_workers: int | None = None,
) -> list[SweepRow]:
    """Evaluate the intrinsic round-trip error over the parameter grid."""
    if not meshes:
        raise ValueError("need at least one mesh")
    if not layers_list or not res_list:
        raise ValueError("layer and resolution lists must be non-empty")
    layers_list = sorted(set(int(v) for v in layers_list))
    res_list = sorted(set(int(v) for v in res_list))
    if layers_list[0] < 1:
        raise ValueError("layer counts must be positive")
    if res_list[0] < 2:
        raise ValueError("resolutions must be at least 2")
    max_layers = layers_list[-1]

    normalized = {name: normalize_mesh(m)[0] for name, m in sorted(meshes.items())}
    accels = {name: build_bvh(m) for name, m in normalized.items()}
    cameras = {
        res: sample_views(seed, views, width=res, height=res, fov_x=fov_x)
        for res in res_list
    }

    jobs = [
        (name, view, res)
        for name in normalized
        for view in range(views)
        for res in res_list
    ]

    def run_job(job) -> list[SweepRow]:
        name, view, res = job
        mesh = normalized[name]
        rows = []
        try:
            t0 = time.perf_counter()
            full = encode(mesh, cameras[res][view], max_layers, accel=accels[name])
            encode_ms = (time.perf_counter() - t0) * 1000.0
        except Exception as exc:  # per-cell failures recorded, run continues
            return [
                SweepRow(name, view, layers, res, np.nan, np.nan, 0, 0, 0,
                         f"encode: {exc}")
                for layers in layers_list
            ]
        for layers in layers_list:
            try:
                t0 = time.perf_counter()
                cloud = decode_to_pointcloud(pad_or_truncate(full, layers), frame="world")
                decode_ms = (time.perf_counter() - t0) * 1000.0
                if len(cloud) == 0:
                    raise ValueError("empty point cloud")
                t0 = time.perf_counter()
                recon = reconstruct(cloud, poisson_res, screening, trim)
                recon_ms = (time.perf_counter() - t0) * 1000.0
                report = evaluate_pair(
                    recon, mesh, n_samples=n_samples, threshold=threshold, seed=seed
                )
                rows.append(
                    SweepRow(name, view, layers, res, report.chamfer, report.f_score,
                             encode_ms, decode_ms, recon_ms)
                )
            except Exception as exc:
                rows.append(
                    SweepRow(name, view, layers, res, np.nan, np.nan,
                             encode_ms, 0, 0, str(exc))
                )
        return rows

    workers = max_workers or worker_count()
    if workers == 1:
        results = [run_job(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))

    rows = [row for rows_ in results for row in rows_]
    rows.sort(key=lambda r: (r.mesh, r.view, r.layers, r.resolution))
    return rows


def rows_to_csv(rows: list[SweepRow], timings: bool = True) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for row in rows:
        out.write(row.to_csv(timings) + "\n")
    return out.getvalue()


def mean_chamfer(rows: list[SweepRow]) -> dict[tuple[int, int], float]:
    """Mean chamfer over meshes and views per (layers, resolution) cell."""
    sums: dict[tuple[int, int], list[float]] = {}
    for row in rows:
        if row.error or np.isnan(row.chamfer):
            continue
        sums.setdefault((row.layers, row.resolution), []).append(row.chamfer)
    return {key: float(np.mean(vals)) for key, vals in sums.items()}


def plot_sweep_svg(rows: list[SweepRow], path) -> None:
    """Minimal SVG line chart: mean chamfer vs layer count, one polyline
    per resolution."""
    means = mean_chamfer(rows)
    if not means:
        raise ValueError("no successful sweep cells to plot")
    layer_vals = sorted({k[0] for k in means})
    res_vals = sorted({k[1] for k in means})
    width, height, margin = 640, 420, 56
    xs = {
        lv: margin + i * (width - 2 * margin) / max(1, len(layer_vals) - 1)
        for i, lv in enumerate(layer_vals)
    }
    cd_max = max(means.values())
    cd_min = 0.0

    def y_of(cd: float) -> float:
        if cd_max <= cd_min:
            return height - margin
        frac = (cd - cd_min) / (cd_max - cd_min)
        return height - margin - frac * (height - 2 * margin)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" '
        f'y2="{height-margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height-margin}" '
        f'stroke="black"/>',
        f'<text x="{width/2:.0f}" y="{height-margin/3:.0f}" text-anchor="middle" '
        f'font-size="13">layers</text>',
        f'<text x="{margin/3:.0f}" y="{height/2:.0f}" text-anchor="middle" '
        f'font-size="13" transform="rotate(-90 {margin/3:.0f} {height/2:.0f})">'
        f'chamfer</text>',
    ]
    for lv in layer_vals:
        parts.append(
            f'<text x="{xs[lv]:.1f}" y="{height-margin+16:.1f}" text-anchor="middle" '
            f'font-size="11">{lv}</text>'
        )
    for tick in np.linspace(cd_min, cd_max, 5):
        parts.append(
            f'<text x="{margin-6}" y="{y_of(tick)+4:.1f}" text-anchor="end" '
            f'font-size="11">{tick:.3g}</text>'
        )
    for ci, res in enumerate(res_vals):
        pts = [
            f"{xs[lv]:.1f},{y_of(means[(lv, res)]):.1f}"
            for lv in layer_vals
            if (lv, res) in means
        ]
        color = palette[ci % len(palette)]
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{width-margin+6}" y="{margin+14*ci+10}" font-size="11" '
            f'fill="{color}">res {res}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
