"""Finite truncated jump environments on a space-time window.

An environment is the restriction of a Poisson cloud with intensity
dt x dx x lambda(dz) to [0,T] x box x [a, infinity): a time-sorted list
of atoms (t_i, x_i, z_i).  Environments are immutable once built;
replica studies derive one child seed per replica from a master seed so
results never depend on scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .measures import LevyMeasure, measure_from_dict

INF = float("inf")

#: default number of bridge standard deviations kept inside the box
R_SIGMA_DEFAULT = 6.0


def default_box_halfwidth(horizon: float, x_targets=None, r_sigma: float = R_SIGMA_DEFAULT) -> float:
    """Box half-width L = r_sigma * max(sqrt(T), 1) + ||x_targets||_inf.

    Gaussian chain weights beyond r_sigma standard deviations contribute
    below double precision at the default; the box_convergence diagnostic
    validates the choice empirically.
    """
    reach = r_sigma * max(math.sqrt(horizon), 1.0)
    if x_targets is not None:
        arr = np.atleast_2d(np.asarray(x_targets, dtype=float))
        if arr.size:
            reach += float(np.abs(arr).max())
    return reach


@dataclass(frozen=True)
class Window:
    """Space-time sampling window [0, horizon] x prod_i [center_i - L, center_i + L]."""

    horizon: float
    box_halfwidth: float
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.horizon <= 0.0 or self.box_halfwidth <= 0.0:
            raise ValueError("window needs positive horizon and box half-width")

    def volume(self, dimension: int) -> float:
        return self.horizon * (2.0 * self.box_halfwidth) ** dimension

    def center_array(self, dimension: int) -> np.ndarray:
        if not self.center:
            return np.zeros(dimension)
        c = np.asarray(self.center, dtype=float)
        if c.shape != (dimension,):
            raise ValueError(f"window center has shape {c.shape}, expected ({dimension},)")
        return c

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "box_halfwidth": self.box_halfwidth,
            "center": list(self.center),
        }


@dataclass(frozen=True)
class Environment:
    """Time-sorted atom cloud (t_i, x_i, z_i) with z_i >= truncation_a."""

    times: np.ndarray          # (N,), strictly increasing
    positions: np.ndarray      # (N, d)
    jumps: np.ndarray          # (N,)
    dimension: int
    window: Window
    truncation_a: float
    measure: LevyMeasure
    seed: int | None = None

    def __post_init__(self):
        for name in ("times", "positions", "jumps"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.positions.ndim != 2 or self.positions.shape[1] != self.dimension:
            raise ValueError(
                f"positions shape {self.positions.shape} does not match dimension {self.dimension}"
            )
        if len(self.times) != len(self.jumps) or len(self.times) != len(self.positions):
            raise ValueError("times, positions and jumps must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("atom times must be strictly increasing")
        if len(self.jumps) and self.jumps.min() < self.truncation_a:
            raise ValueError("all jumps must be >= truncation_a")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def atom_count(self) -> int:
        return len(self.times)


def replica_seed_sequence(master_seed: int, index: int) -> np.random.SeedSequence:
    """Deterministic per-replica seed derivation: mix(master_seed, index)."""
    return np.random.SeedSequence(entropy=(int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)))


def replica_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(replica_seed_sequence(master_seed, index)))


def _dedupe_times(times: np.ndarray) -> np.ndarray:
    """Nudge float-resolution time collisions upward by one ulp each (prob. zero event)."""
    while len(times) > 1 and np.any(np.diff(times) <= 0.0):
        idx = np.where(np.diff(times) <= 0.0)[0] + 1
        times[idx] = np.nextafter(times[idx - 1], INF)
    return times


def sample_atoms(
    measure: LevyMeasure,
    dimension: int,
    window: Window,
    a: float,
    rng: np.random.Generator,
    b: float = INF,
):
    """Raw (times, positions, jumps) of one Poisson cloud on the window with z in [a, b).

    Times are sorted strictly ascending.  This is the single sampling code
    path shared by `sample_environment` and the batched Monte Carlo
    drivers, so library and CLI results agree bit for bit.
    """
    rate = measure.tail_mass(a, b)  # raises DivergentIntegralError if the activity is infinite
    vol = window.volume(dimension)
    if vol <= 0.0:
        raise ValueError("window has zero volume")
    n = int(rng.poisson(rate * vol)) if rate > 0.0 else 0
    if n == 0:
        return (np.empty(0), np.empty((0, dimension)), np.empty(0))
    times = np.sort(rng.random(n) * window.horizon)
    if times[0] <= 0.0:  # float-resolution boundary hit; keep the open interval
        times[0] = np.nextafter(0.0, INF)
    times = _dedupe_times(times)
    center = window.center_array(dimension)
    positions = center + window.box_halfwidth * (2.0 * rng.random((n, dimension)) - 1.0)
    jumps = np.asarray(measure.sample_jump(a, b, rng, size=n), dtype=float)
    return times, positions, jumps


def sample_environment(
    measure: LevyMeasure,
    dimension: int,
    window: Window,
    a: float,
    rng: np.random.Generator | int,
) -> Environment:
    """Sample one truncated environment; `rng` may be a Generator or a master seed."""
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = replica_rng(seed, 0)
    times, positions, jumps = sample_atoms(measure, dimension, window, a, rng)
    return Environment(
        times=times, positions=positions, jumps=jumps,
        dimension=dimension, window=window, truncation_a=a,
        measure=measure, seed=seed,
    )


def filter_by_jump(env: Environment, a_new: float) -> Environment:
    """Sub-environment of atoms with z >= a_new (coupled coarse truncation)."""
    if a_new < env.truncation_a:
        raise ValueError(
            f"filter level {a_new} below environment truncation {env.truncation_a}; "
            "use augment_small_jumps to refine"
        )
    keep = env.jumps >= a_new
    return replace(
        env,
        times=env.times[keep],
        positions=env.positions[keep],
        jumps=env.jumps[keep],
        truncation_a=a_new,
    )


def augment_small_jumps(
    env: Environment, a_fine: float, measure: LevyMeasure, rng: np.random.Generator
) -> Environment:
    """Add an independent cloud of jumps in [a_fine, truncation_a) on the same window.

    The original atoms are preserved verbatim; used for reversed-martingale
    (conditional expectation over the fine jumps) checks.
    """
    if a_fine > env.truncation_a:
        raise ValueError("a_fine must not exceed the current truncation level")
    if a_fine == env.truncation_a:
        return env
    times, positions, jumps = sample_atoms(
        measure, env.dimension, env.window, a_fine, rng, b=env.truncation_a
    )
    all_t = np.concatenate([env.times, times])
    order = np.argsort(all_t, kind="stable")
    merged_t = _dedupe_times(all_t[order].copy())
    return replace(
        env,
        times=merged_t,
        positions=np.concatenate([env.positions, positions])[order],
        jumps=np.concatenate([env.jumps, jumps])[order],
        truncation_a=a_fine,
    )


# ---------------------------------------------------------------------------
# file formats: CSV atoms + JSON sidecar
# ---------------------------------------------------------------------------


def write_atoms_csv(env: Environment, path, sidecar_path=None) -> None:
    """Write `t,x1[,...,xd],z` rows (17 significant digits) plus a JSON sidecar."""
    cols = ["t"] + [f"x{i + 1}" for i in range(env.dimension)] + ["z"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(env)):
            row = [env.times[i], *env.positions[i], env.jumps[i]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    meta = {
        "measure": env.measure.to_dict(),
        "dimension": env.dimension,
        "window": env.window.to_dict(),
        "truncation_a": env.truncation_a,
        "seed": env.seed,
    }
    if sidecar_path is None:
        sidecar_path = str(path) + ".meta.json"
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def read_atoms_csv(path, sidecar_path=None) -> Environment:
    if sidecar_path is None:
        sidecar_path = str(path) + ".meta.json"
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    d = int(meta["dimension"])
    with open(path) as fh:
        body = fh.readlines()[1:]
    if body:
        data = np.loadtxt(body, delimiter=",", ndmin=2)
    else:
        data = np.empty((0, d + 2))
    win = meta["window"]
    return Environment(
        times=data[:, 0],
        positions=data[:, 1 : 1 + d],
        jumps=data[:, 1 + d],
        dimension=d,
        window=Window(
            horizon=win["horizon"],
            box_halfwidth=win["box_halfwidth"],
            center=tuple(win.get("center", ())),
        ),
        truncation_a=float(meta["truncation_a"]),
        measure=measure_from_dict(meta["measure"]),
        seed=meta.get("seed"),
    )
