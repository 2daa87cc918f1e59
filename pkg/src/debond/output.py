"""Deterministic CSV / JSON / SVG emission and the run manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile

import numpy as np

from . import __version__


def fmt(x):
    """17 significant digits for floats; strings and ints pass through."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(x)


def csv_text(header, rows):
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row length does not match the header")
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def json_text(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


class OutputWriter:
    """Single writer for one output directory; every file goes through it.

    Writability is checked on construction so a bad directory fails before
    any computation or partial write.
    """

    def __init__(self, root):
        self.root = os.path.abspath(root)
        try:
            os.makedirs(self.root, exist_ok=True)
            fd, probe = tempfile.mkstemp(dir=self.root, prefix=".probe")
            os.close(fd)
            os.remove(probe)
        except OSError as err:
            raise OSError(f"output directory {self.root!r} is not writable: {err}") from err
        self.files = {}

    def _record(self, name, data, hashed=True):
        if name in self.files:
            raise ValueError(f"{name} written twice")
        path = os.path.join(self.root, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
        self.files[name] = {"bytes": len(data), "sha256": hashlib.sha256(data).hexdigest() if hashed else None}
        return path

    def text(self, name, text, hashed=True):
        return self._record(name, text.encode("utf-8"), hashed)

    def csv(self, name, header, rows):
        return self.text(name, csv_text(header, rows))

    def json(self, name, obj):
        return self.text(name, json_text(obj))

    def svg(self, name, fig):
        import io

        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        return self._record(name, buf.getvalue())

    def manifest(self, config, verb, checks, wall_clock):
        """Write ``timing.txt`` (unhashed, it varies run to run) and ``manifest.json``."""
        self.text("timing.txt", f"wall_clock_seconds {wall_clock:.3f}\n", hashed=False)
        body = {
            "artifact_version": __version__,
            "verb": verb,
            "config": config,
            "checks": checks,
            "passed": all(c["passed"] for c in checks.values()) if checks else True,
            "files": dict(sorted(self.files.items())),
            "wall_clock_file": "timing.txt",
        }
        text = json_text(body)
        path = os.path.join(self.root, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        return path


def cohesive_trace_rows(trace):
    led = trace.ledger
    rows = []
    for k, s in enumerate(trace.states):
        rows.append((s.t, led.elastic[k], led.potential[k], led.work[k], led.residual[k], float(np.max(s.gamma, initial=0.0)), trace.front[k]))
    return ("t", "elastic", "potential", "work", "residual", "max_gamma", "front"), rows


def brittle_trace_rows(trace):
    led = trace.ledger
    name = "front" if trace.mesh.dimension == 1 else "area_fraction"
    rows = [(s.t, led.elastic[k], led.potential[k], led.work[k], led.residual[k], trace.front[k]) for k, s in enumerate(trace.states)]
    return ("t", "energy", "dissipation", "work", "residual", name), rows


def snapshot_indices(trace, times):
    t = trace.times
    return sorted({int(np.argmin(np.abs(t - float(s)))) for s in times})


def snapshot_rows(trace, k):
    s = trace.states[k]
    x = trace.mesh.coords
    dims = ("x", "y")[: trace.mesh.dimension]
    if trace.kind == "cohesive":
        return dims + ("u", "gamma"), [tuple(x[i]) + (s.u[i], s.gamma[i]) for i in range(x.shape[0])]
    return dims + ("u", "debonded"), [tuple(x[i]) + (s.u[i], int(s.A[i])) for i in range(x.shape[0])]


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "debond"
    return plt


def plot_series(title, t, series, ylabel):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in series.items():
        ax.plot(t, y, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def plot_loglog(eps, columns):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in columns.items():
        y = np.asarray(y, dtype=float)
        ok = y > 0
        ax.loglog(np.asarray(eps)[ok], y[ok], marker="o", label=label)
    ax.set_xlabel("eps")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    return fig


def close(fig):
    import matplotlib.pyplot as plt

    plt.close(fig)
