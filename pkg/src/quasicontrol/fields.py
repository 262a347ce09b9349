"""Time-indexed fields: state/adjoint trajectories and control schedules.

Both containers serialize to CSV (columns ``t, x_1..x_n``) and to JSON.
Every file starts with ``#`` comment lines carrying the grid metadata.
"""
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .grid import Grid


def time_ladder(t0, t1, dt):
    """Uniform ladder from t0 to t1; ``(t1 - t0)/dt`` must be (close to) an integer."""
    if dt <= 0:
        raise InvalidParameterError(f"time step must be positive, got {dt}")
    steps = (t1 - t0) / dt
    K = int(round(steps))
    if K < 1 or abs(steps - K) > 1e-9 * max(1.0, steps):
        raise InvalidParameterError(f"window [{t0}, {t1}] is not a whole number of steps of {dt}")
    return t0 + dt * np.arange(K + 1)


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise DimensionError("times must be a non-empty 1D array")
    if times.size > 1:
        d = np.diff(times)
        if np.any(d <= 0):
            raise InvalidParameterError("time stamps must be strictly increasing")
        if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
            raise InvalidParameterError("time ladder must be uniform")
    return times


@dataclass
class _TimeFields:
    times: np.ndarray
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.times = _check_times(self.times)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.grid.n):
            raise DimensionError(
                f"values shape {self.values.shape} does not match "
                f"({self.times.size}, {self.grid.n})"
            )

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def steps(self):
        return self.times.size - 1

    def index(self, t):
        """Index of the ladder level closest to ``t`` (must be within dt/1e6)."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-6 * max(self.dt, 1e-300):
            raise InvalidParameterError(f"t={t} is not on the time ladder")
        return k

    def __len__(self):
        return self.times.size

    # -- serialization ----------------------------------------------------
    kind = "fields"

    def _meta(self):
        return {"kind": self.kind, **self.grid.metadata()}

    def to_csv(self, path):
        meta = self._meta()
        header = ["t"] + [f"x_{i}" for i in range(1, self.grid.n + 1)]
        with open(path, "w") as fh:
            fh.write("# " + " ".join(f"{k}={v!r}" for k, v in meta.items()) + "\n")
            fh.write(",".join(header) + "\n")
            for t, row in zip(self.times, self.values):
                fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")

    def to_json(self, path=None):
        doc = {"meta": self._meta(), "times": self.times.tolist(), "values": self.values.tolist()}
        text = json.dumps(doc)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @staticmethod
    def _parse_meta(line):
        meta = {}
        for tok in line.lstrip("#").split():
            k, v = tok.split("=", 1)
            meta[k] = json.loads(v.replace("'", '"'))
        return meta


@dataclass
class Trajectory(_TimeFields):
    """State (forward) or adjoint (backward) fields on a uniform time ladder."""

    direction: str = "forward"
    kind = "trajectory"

    def __post_init__(self):
        super().__post_init__()
        if self.direction not in ("forward", "backward"):
            raise InvalidParameterError(f"direction must be forward or backward, got {self.direction!r}")

    @property
    def initial(self):
        return self.values[0]

    @property
    def final(self):
        return self.values[-1]

    def at(self, t):
        return self.values[self.index(t)]

    def window(self, i0, i1):
        """Levels ``i0..i1`` inclusive as a new trajectory."""
        return Trajectory(self.times[i0:i1 + 1], self.values[i0:i1 + 1], self.grid, self.direction)

    def _meta(self):
        return {**super()._meta(), "direction": self.direction}

    @classmethod
    def from_csv(cls, path):
        meta, times, values = _read_csv(path)
        return cls(times, values, Grid(meta["L"], meta["n"]), meta.get("direction", "forward"))

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        m = doc["meta"]
        return cls(np.array(doc["times"]), np.array(doc["values"]), Grid(m["L"], m["n"]), m["direction"])


@dataclass
class ControlSchedule(_TimeFields):
    """Control fields v(., t_k).

    The step from ``t_k`` to ``t_{k+1}`` is forced by ``v(., t_k)``; the last
    level is stored to keep the ladder aligned with the state but never
    drives a step.
    """

    kind = "control"

    @property
    def min_value(self):
        return float(self.values.min())

    @property
    def sup_norm(self):
        return float(np.abs(self.values).max())

    @classmethod
    def constant(cls, times, field_, grid):
        times = np.asarray(times, dtype=float)
        return cls(times, np.tile(np.asarray(field_, dtype=float), (times.size, 1)), grid)

    @classmethod
    def zeros(cls, times, grid):
        return cls(np.asarray(times, dtype=float), np.zeros((len(times), grid.n)), grid)

    def window(self, i0, i1):
        return ControlSchedule(self.times[i0:i1 + 1], self.values[i0:i1 + 1].copy(), self.grid)

    def _meta(self):
        return {**super()._meta(), "min_value": self.min_value, "sup_norm": self.sup_norm}

    @classmethod
    def from_csv(cls, path):
        meta, times, values = _read_csv(path)
        return cls(times, values, Grid(meta["L"], meta["n"]))

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        m = doc["meta"]
        return cls(np.array(doc["times"]), np.array(doc["values"]), Grid(m["L"], m["n"]))


def _read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise InvalidParameterError(f"{path}: missing '#' metadata line")
        meta = _TimeFields._parse_meta(first)
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, data[:, 0], data[:, 1:]


def concatenate(pieces):
    """Join trajectories or schedules whose end/start levels coincide.

    The shared level is taken from the later piece (it is the one that
    drives the next step).
    """
    first = pieces[0]
    times = [first.times]
    values = [first.values]
    for p in pieces[1:]:
        if abs(p.times[0] - times[-1][-1]) > 1e-9 * max(1.0, abs(p.times[0])):
            raise DimensionError("pieces are not contiguous in time")
        times[-1] = times[-1][:-1]
        values[-1] = values[-1][:-1]
        times.append(p.times)
        values.append(p.values)
    t = np.concatenate(times)
    v = np.concatenate(values)
    if isinstance(first, Trajectory):
        return Trajectory(t, v, first.grid, first.direction)
    return ControlSchedule(t, v, first.grid)
