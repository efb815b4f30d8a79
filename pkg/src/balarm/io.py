"""Text file formats: panels, models, configs and tidy output tables.

All formats are line-oriented UTF-8 text with ``\\n`` line endings and are
described in README.md.  Indices in files are 1-based; the Python API is
0-based.  Floats are written with 17 significant digits so that reading a
file back reproduces every value exactly.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .exceptions import ValidationError
from .model import BalarmModel, ClusterParams, EdgePanel, ModelSpec

PANEL_MAGIC = "# balarm-panel v1"
MODEL_FORMAT = "balarm-model"
MODEL_VERSION = 1
TABLE_VERSION = 1

# --------------------------------------------------------------------------
# atomic output
# --------------------------------------------------------------------------


class OutputSet:
    """Stage several output files and publish them together.

    Files are written to temporaries next to their targets and renamed into
    place only when the ``with`` block exits cleanly; on error every
    temporary is removed, so a failed command leaves no partial outputs.
    """

    def __init__(self):
        self._staged: List[tuple] = []

    def __enter__(self):
        return self

    def write(self, path, text: str) -> None:
        path = os.fspath(path)
        folder = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(prefix=".balarm-", dir=folder)
        self._staged.append((tmp, path))
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, path in self._staged:
                os.replace(tmp, path)
        else:
            for tmp, _ in self._staged:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        self._staged.clear()
        return False


def write_text(path, text: str) -> None:
    with OutputSet() as out:
        out.write(path, text)


# --------------------------------------------------------------------------
# scalars
# --------------------------------------------------------------------------

def fmt(value) -> str:
    """Canonical text for one table cell (NaN and None become empty)."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else format(v, ".17g")
    return str(value)


def _parse_float(text: str) -> float:
    return math.nan if text == "" else float(text)


# --------------------------------------------------------------------------
# panels
# --------------------------------------------------------------------------

def panel_to_text(panel: EdgePanel) -> str:
    meta = panel.meta
    N = panel.n_nodes
    head = [
        PANEL_MAGIC,
        f"N {N if N is not None else '-'}",
        f"J {panel.n_edges}",
        f"n {panel.n_steps}",
        f"t_first {int(panel.timestamps[0])}",
        f"window_seconds {meta.get('window_seconds', '-')}",
        f"t_start {meta.get('t_start', '-')}",
        f"phase_offset {format(panel.phase_offset, '.17g')}",
        f"phase_origin {meta.get('phase_origin', 't_start')}",
    ]
    ids = meta.get("node_ids")
    if N is not None and (ids is not None or panel.node_labels is not None):
        for k in range(N):
            raw = ids[k] if ids is not None else str(k + 1)
            status = panel.node_labels[k] if panel.node_labels is not None else "-"
            head.append(f"node {k + 1} {raw} {status}")
    head.append("data")
    rows = []
    bits = panel.values.astype(np.uint8) + ord("0")
    for i in range(panel.n_edges):
        if panel.edge_map is None:
            k = j = "-"
        else:
            k, j = panel.edge_map[i] + 1
        rows.append(f"{i + 1} {k} {j} {bits[i].tobytes().decode('ascii')}")
    return "\n".join(head + rows) + "\n"


def _header_int(value: str, key: str, lineno: int) -> Optional[int]:
    if value == "-":
        return None
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"panel line {lineno}: {key} must be an integer or '-'") from None


def panel_from_text(text: str) -> EdgePanel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != PANEL_MAGIC:
        raise ValidationError(f"not a panel file: first line must be {PANEL_MAGIC!r}")
    header: Dict[str, str] = {}
    nodes = []
    pos = 1
    while pos < len(lines) and lines[pos].strip() != "data":
        parts = lines[pos].split()
        if parts and parts[0] == "node":
            if len(parts) != 4:
                raise ValidationError(f"panel line {pos + 1}: node lines need 'node index id status'")
            nodes.append((parts[2], parts[3]))
        elif len(parts) == 2:
            header[parts[0]] = parts[1]
        elif parts:
            raise ValidationError(f"panel line {pos + 1}: expected 'key value'")
        pos += 1
    if pos == len(lines):
        raise ValidationError("panel file has no 'data' line")
    for key in ("N", "J", "n", "t_first", "phase_offset"):
        if key not in header:
            raise ValidationError(f"panel header lacks {key!r}")
    J = _header_int(header["J"], "J", 0)
    n = _header_int(header["n"], "n", 0)
    N = _header_int(header["N"], "N", 0)
    t_first = _header_int(header["t_first"], "t_first", 0)
    data = [ln for ln in lines[pos + 1:] if ln.strip()]
    if len(data) != J:
        raise ValidationError(f"panel declares J={J} rows but has {len(data)}")
    values = np.empty((J, n), dtype=np.int8)
    pairs = []
    for r, line in enumerate(data):
        parts = line.split()
        lineno = pos + 2 + r
        if len(parts) != 4 or parts[0] != str(r + 1):
            raise ValidationError(f"panel line {lineno}: expected 'row k j bits' with row {r + 1}")
        bits = parts[3]
        if len(bits) != n or set(bits) - {"0", "1"}:
            raise ValidationError(f"panel line {lineno}: need {n} characters of 0/1")
        values[r] = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
        if N is not None:
            try:
                pairs.append((int(parts[1]) - 1, int(parts[2]) - 1))
            except ValueError:
                raise ValidationError(f"panel line {lineno}: node indices must be integers") from None
    meta = {"phase_origin": header.get("phase_origin", "t_start")}
    for key in ("window_seconds", "t_start"):
        v = _header_int(header.get(key, "-"), key, 0)
        if v is not None:
            meta[key] = v
    labels = None
    if nodes:
        meta["node_ids"] = [raw for raw, _ in nodes]
        statuses = [s for _, s in nodes]
        labels = None if "-" in statuses else tuple(statuses)
    edge_map = np.array(pairs, dtype=np.int64) if N is not None else None
    panel = EdgePanel(values, np.arange(t_first, t_first + n), edge_map, labels,
                      float(header["phase_offset"]), meta)
    if N is not None and panel.n_nodes is not None and panel.n_nodes > N:
        raise ValidationError(f"edge rows reference nodes beyond N={N}")
    return panel


def save_panel(panel: EdgePanel, path) -> None:
    write_text(path, panel_to_text(panel))


def load_panel(path) -> EdgePanel:
    with open(path, "r", encoding="utf-8") as fh:
        return panel_from_text(fh.read())


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def model_to_dict(model: BalarmModel, meta: Optional[dict] = None) -> dict:
    s = model.spec
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": {"G": s.n_clusters, "K": s.ar_order, "H": s.harmonic_order, "P": s.period},
        "pi": [float(v) for v in model.pi],
        "clusters": [{"a": [float(v) for v in cl.a], "b": [float(v) for v in cl.b], "c": float(cl.c)}
                     for cl in model.clusters],
        "meta": _jsonable(meta or {}),
    }


def model_from_dict(doc: dict) -> BalarmModel:
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValidationError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
    try:
        sp = doc["spec"]
        spec = ModelSpec(n_clusters=int(sp["G"]), ar_order=int(sp["K"]),
                         harmonic_order=int(sp["H"]), period=int(sp["P"]))
        clusters = tuple(ClusterParams(cl["a"], cl["b"], cl["c"]) for cl in doc["clusters"])
        return BalarmModel(spec, doc["pi"], clusters)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model document: missing or invalid {exc}") from None


def model_to_text(model: BalarmModel, meta: Optional[dict] = None) -> str:
    return json.dumps(model_to_dict(model, meta), indent=2, sort_keys=True) + "\n"


def save_model(model: BalarmModel, path, meta: Optional[dict] = None) -> None:
    write_text(path, model_to_text(model, meta))


def load_model(path) -> BalarmModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

def table_to_text(kind: str, columns: Sequence[str], rows: Iterable[Sequence],
                  seed=None, settings: Optional[dict] = None) -> str:
    """Tab-separated table with a ``#`` preamble recording provenance."""
    lines = [f"# balarm {__version__} {kind} v{TABLE_VERSION}",
             f"# seed: {'' if seed is None else seed}",
             f"# settings: {json.dumps(_jsonable(settings or {}), sort_keys=True)}",
             "\t".join(columns)]
    lines.extend("\t".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def read_table(path):
    """Read a table back as ``(preamble, columns, rows-of-strings)``."""
    preamble, rows, columns = {}, [], None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if ": " in line:
                    key, value = line[2:].split(": ", 1)
                    preamble[key] = value
                else:
                    preamble["kind"] = line[2:]
            elif columns is None:
                columns = line.split("\t")
            else:
                rows.append(line.split("\t"))
    if "settings" in preamble:
        preamble["settings"] = json.loads(preamble["settings"])
    return preamble, columns or [], rows


def table_column(path, name: str, dtype=float) -> np.ndarray:
    _, columns, rows = read_table(path)
    if name not in columns:
        raise ValidationError(f"{path}: no column {name!r}")
    idx = columns.index(name)
    conv = _parse_float if dtype is float else dtype
    return np.array([conv(r[idx]) for r in rows], dtype=dtype)


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

CONFIG_KEYS = {"G": int, "K": int, "H": int, "P": int, "seed": int, "tol": float,
               "restarts": int, "B": int, "ridge": float, "init": str, "max_iter": int}


def parse_config(text: str) -> dict:
    """Parse a YAML mapping restricted to :data:`CONFIG_KEYS`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping of keys to values")
    out = {}
    for key, value in doc.items():
        if key not in CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r}; allowed: {', '.join(CONFIG_KEYS)}")
        kind = CONFIG_KEYS[key]
        if kind is float and isinstance(value, str):
            # YAML 1.1 reads exponent literals without a dot, such as 1e-6, as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ValidationError(f"config key {key!r} must be an integer, got {value!r}")
        if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ValidationError(f"config key {key!r} must be a number, got {value!r}")
        if kind is str and not isinstance(value, str):
            raise ValidationError(f"config key {key!r} must be a string, got {value!r}")
        out[key] = kind(value)
    return out


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
