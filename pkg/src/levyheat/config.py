"""Run configuration: schema-validated JSON with explicit defaults.

Unknown keys are rejected so typos fail loudly; the echoed config spells
out every default, which makes report files self-reproducing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .environment import Window, default_box_halfwidth
from .measures import LevyMeasure, measure_from_dict


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "measure", "dimension", "beta", "truncation_a", "horizon_t",
    "box", "seed", "replicas", "experiment",
}
_BOX_KEYS = {"policy", "halfwidth"}


@dataclass(frozen=True)
class RunConfig:
    measure: LevyMeasure
    dimension: int
    beta: float
    truncation_a: float
    horizon_t: float
    box_policy: str           # "auto" | "explicit"
    box_halfwidth: float | None
    seed: int
    replicas: int
    experiment: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"measure", "dimension", "beta", "truncation_a", "seed"} - set(raw)
        if missing:
            raise ConfigError(f"missing required config keys: {sorted(missing)}")
        try:
            measure = measure_from_dict(raw["measure"])
        except ValueError as exc:
            raise ConfigError(f"bad measure descriptor: {exc}") from exc
        dimension = raw["dimension"]
        if not isinstance(dimension, int) or dimension < 1:
            raise ConfigError("dimension must be a positive integer")
        beta = float(raw["beta"])
        if beta < 0.0:
            raise ConfigError("beta must be nonnegative")
        a = float(raw["truncation_a"])
        if a <= 0.0:
            raise ConfigError("truncation_a must be positive")
        horizon = float(raw.get("horizon_t", 1.0))
        if horizon <= 0.0:
            raise ConfigError("horizon_t must be positive")
        box = raw.get("box", {"policy": "auto"})
        if not isinstance(box, dict) or set(box) - _BOX_KEYS:
            raise ConfigError(f"box block accepts keys {sorted(_BOX_KEYS)}")
        policy = box.get("policy", "auto")
        halfwidth = box.get("halfwidth")
        if policy == "auto":
            if halfwidth is not None:
                raise ConfigError("box.halfwidth only valid with policy 'explicit'")
        elif policy == "explicit":
            if halfwidth is None or float(halfwidth) <= 0.0:
                raise ConfigError("box policy 'explicit' needs a positive halfwidth")
            halfwidth = float(halfwidth)
        else:
            raise ConfigError("box.policy must be 'auto' or 'explicit'")
        replicas = raw.get("replicas", 10_000)
        if not isinstance(replicas, int) or replicas < 2:
            raise ConfigError("replicas must be an integer >= 2")
        seed = raw["seed"]
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        experiment = raw.get("experiment", {})
        if not isinstance(experiment, dict):
            raise ConfigError("experiment block must be an object")
        return cls(
            measure=measure, dimension=dimension, beta=beta, truncation_a=a,
            horizon_t=horizon, box_policy=policy, box_halfwidth=halfwidth,
            seed=seed, replicas=replicas, experiment=experiment,
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def window(self, horizon: float | None = None, x_targets=None) -> Window:
        t = self.horizon_t if horizon is None else horizon
        if self.box_policy == "explicit":
            L = self.box_halfwidth
        else:
            L = default_box_halfwidth(t, x_targets)
        return Window(horizon=t, box_halfwidth=L)

    def echo(self) -> dict:
        """Full config with every default made explicit."""
        return {
            "measure": self.measure.to_dict(),
            "dimension": self.dimension,
            "beta": self.beta,
            "truncation_a": self.truncation_a,
            "horizon_t": self.horizon_t,
            "box": (
                {"policy": "auto"}
                if self.box_policy == "auto"
                else {"policy": "explicit", "halfwidth": self.box_halfwidth}
            ),
            "seed": self.seed,
            "replicas": self.replicas,
            "experiment": self.experiment,
        }
