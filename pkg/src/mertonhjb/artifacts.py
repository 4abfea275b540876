"""File formats shared by the command-line tools and tests.

Configuration files are flat ``key = value`` text with ``#`` comments.
All numeric output is CSV with 17 significant digits so that identical
runs produce byte-identical files; each run directory carries exactly one
``manifest.json`` recording the configuration snapshot, seed, timings and
a checksum per output file.
"""

import csv
import hashlib
import json
import os

import numpy as np

from .exceptions import ConfigError

MANIFEST_NAME = "manifest.json"
FLOAT_FMT = "%.17g"


# -- flat key-value configuration ------------------------------------------

def parse_flat_config(text: str) -> dict:
    """Parse ``key = value`` lines; values become float when possible."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def format_flat_config(mapping: dict) -> str:
    lines = []
    for key, value in mapping.items():
        if isinstance(value, float):
            lines.append(f"{key} = {value:.17g}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_flat_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc


# -- CSV surfaces ----------------------------------------------------------

def write_surface_csv(path, y1_nodes, y2_nodes, values, value_name: str = "u") -> None:
    """Grid of values at fixed t; header ``y1,y2,<name>``, y2 varying fastest."""
    y1_nodes = np.asarray(y1_nodes, dtype=float)
    y2_nodes = np.asarray(y2_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (y1_nodes.size, y2_nodes.size):
        raise ValueError(f"values shape {values.shape} does not match node counts "
                         f"({y1_nodes.size}, {y2_nodes.size})")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"y1,y2,{value_name}\n")
        for i, a in enumerate(y1_nodes):
            for j, b in enumerate(y2_nodes):
                fh.write(f"{FLOAT_FMT % a},{FLOAT_FMT % b},{FLOAT_FMT % values[i, j]}\n")


def read_surface_csv(path):
    """Inverse of write_surface_csv: (y1_nodes, y2_nodes, values, name)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 3 or header[:2] != ["y1", "y2"]:
            raise ConfigError(f"{path}: expected header y1,y2,<name>, got {header}")
        rows = [(float(a), float(b), float(v)) for a, b, v in reader]
    y1_nodes = np.unique([r[0] for r in rows])
    y2_nodes = np.unique([r[1] for r in rows])
    if y1_nodes.size * y2_nodes.size != len(rows):
        raise ConfigError(f"{path}: rows do not form a full grid")
    values = np.empty((y1_nodes.size, y2_nodes.size))
    idx1 = {v: i for i, v in enumerate(y1_nodes)}
    idx2 = {v: j for j, v in enumerate(y2_nodes)}
    for a, b, v in rows:
        values[idx1[a], idx2[b]] = v
    return y1_nodes, y2_nodes, values, header[2]


def write_history_csv(path, history) -> None:
    """Loss history rows (step, J, J1, J2, lr)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,J,J1,J2,lr\n")
        for step, J, J1, J2, lr in history:
            fh.write(f"{int(step)},{FLOAT_FMT % J},{FLOAT_FMT % J1},"
                     f"{FLOAT_FMT % J2},{FLOAT_FMT % lr}\n")


def read_history_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["step", "J", "J1", "J2", "lr"]:
            raise ConfigError(f"{path}: unexpected history header {header}")
        return [(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]))
                for r in reader]


# -- solution cubes --------------------------------------------------------

def cube_level_name(n: int) -> str:
    return f"level_{n:02d}.csv"


def write_cube_csv(out_dir, cube) -> list:
    """One surface CSV per time level under ``<out_dir>/cube``; NaN levels of
    a partial (singular) cube are skipped.  Returns the written paths."""
    cube_dir = os.path.join(out_dir, "cube")
    os.makedirs(cube_dir, exist_ok=True)
    grid = cube.grid
    written = []
    for n in range(grid.nt + 1):
        if np.any(np.isnan(cube.values[n])):
            continue
        path = os.path.join(cube_dir, cube_level_name(n))
        write_surface_csv(path, grid.y1_nodes, grid.y2_nodes, cube.values[n], "u")
        written.append(path)
    return written


def read_cube_levels(run_dir, grid):
    """Read whatever cube levels a run directory holds; missing levels NaN."""
    values = np.full((grid.nt + 1, grid.n1 + 1, grid.n2 + 1), np.nan)
    cube_dir = os.path.join(run_dir, "cube")
    found = False
    for n in range(grid.nt + 1):
        path = os.path.join(cube_dir, cube_level_name(n))
        if not os.path.exists(path):
            continue
        y1, y2, vals, _ = read_surface_csv(path)
        if vals.shape != (grid.n1 + 1, grid.n2 + 1):
            raise ConfigError(f"{path}: level shape {vals.shape} does not match the grid")
        values[n] = vals
        found = True
    if not found:
        raise ConfigError(f"no cube levels found under {cube_dir}")
    return values


# -- manifests -------------------------------------------------------------

def file_checksum(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_id(kind: str, config: dict, seed) -> str:
    payload = json.dumps({"kind": kind, "config": config, "seed": seed},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def write_manifest(out_dir, kind: str, config: dict, seed, timings: dict,
                   files: list, extra: dict | None = None) -> str:
    """Write manifest.json; ``files`` are paths inside ``out_dir``."""
    entries = {os.path.relpath(p, out_dir): file_checksum(p) for p in sorted(map(str, files))}
    manifest = {
        "kind": kind,
        "run_id": run_id(kind, config, seed),
        "seed": seed,
        "config": config,
        "timings_s": timings,
        "files": entries,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def read_manifest(run_dir) -> dict:
    path = os.path.join(run_dir, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest in {run_dir}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed manifest in {run_dir}: {exc}") from exc


def verify_manifest(run_dir) -> list:
    """Return the files whose checksum no longer matches the manifest."""
    manifest = read_manifest(run_dir)
    bad = []
    for rel, expected in manifest.get("files", {}).items():
        path = os.path.join(run_dir, rel)
        if not os.path.exists(path) or file_checksum(path) != expected:
            bad.append(rel)
    return bad
