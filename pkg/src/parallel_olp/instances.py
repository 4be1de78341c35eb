"""Stochastic instance generation for online linear programs.

An instance is a horizon ``T``, ``m`` resources with capacity ``b = T * d``,
and ``T`` orders ``(r_t, a_t)`` drawn i.i.d. from one of the input models:

* ``input1``: ``a_it ~ Uniform[0, 2]`` and, independently, ``r_t ~ Uniform[0, 10]``.
* ``input2``: ``a_it ~ Normal(0.5, 1)`` and ``r_t = sum_i a_it``.

Custom models are plain callables ``(rng, n, m) -> (rewards, demands)`` and can
be registered with :func:`register_model`.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, TextIO, Tuple, Union

import numpy as np

__all__ = [
    "Order",
    "Instance",
    "sample_input_I",
    "sample_input_II",
    "sample_capacity",
    "generate_instance",
    "register_model",
    "MODELS",
    "stream",
    "write_instance",
    "read_instance",
]

# stream purposes; one independent stream per (seed, purpose)
PURPOSE_CAPACITY = 0
PURPOSE_ORDERS = 1
PURPOSE_DIAGNOSTIC = 2

DEFAULT_D_LO = 1.0 / 3.0
DEFAULT_D_HI = 2.0 / 3.0


@dataclass(frozen=True)
class Order:
    reward: float
    demand: np.ndarray


@dataclass(frozen=True, eq=False)
class Instance:
    """A full online LP problem: capacities plus the arrival sequence."""

    horizon: int
    capacity: np.ndarray
    avg_capacity: np.ndarray
    rewards: np.ndarray
    demands: np.ndarray
    seed: int = 0
    model: str = "input1"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.demands.shape != (self.horizon, self.avg_capacity.shape[0]):
            raise ValueError(
                f"demands must have shape (T, m) = ({self.horizon}, "
                f"{self.avg_capacity.shape[0]}), got {self.demands.shape}"
            )
        if self.rewards.shape != (self.horizon,):
            raise ValueError("rewards must have length T")

    @property
    def resource_count(self) -> int:
        return int(self.avg_capacity.shape[0])

    @property
    def orders(self) -> Iterator[Order]:
        for r, a in zip(self.rewards, self.demands):
            yield Order(float(r), a)

    def __len__(self) -> int:
        return self.horizon

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.horizon).tobytes())
        for arr in (self.capacity, self.rewards, self.demands):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    @classmethod
    def from_arrays(cls, rewards, demands, avg_capacity, seed: int = 0,
                    model: str = "custom") -> "Instance":
        """Build an instance from raw arrays; ``b`` is derived as ``T * d``."""
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        demands = np.asarray(demands, dtype=np.float64)
        if demands.ndim == 1:
            demands = demands.reshape(-1, 1)
        d = np.atleast_1d(np.asarray(avg_capacity, dtype=np.float64))
        T = rewards.shape[0]
        return cls(T, T * d, d, rewards, demands, seed, model)


def stream(seed: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose) pair."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(purpose,))
    return np.random.Generator(np.random.PCG64(ss))


def _draw_input_I(rng, n: Optional[int], m: int):
    shape = (m,) if n is None else (n, m)
    demands = 2.0 * rng.random(shape)
    rewards = 10.0 * rng.random(None if n is None else n)
    return rewards, demands


def _draw_input_II(rng, n: Optional[int], m: int, clip: Optional[float] = None):
    shape = (m,) if n is None else (n, m)
    demands = 0.5 + rng.standard_normal(shape)
    if clip is not None:
        demands = np.clip(demands, -clip, clip)
    rewards = demands.sum(axis=-1)
    return rewards, demands


def sample_input_I(m: int, rng) -> Order:
    if m < 1:
        raise ValueError("m must be >= 1")
    r, a = _draw_input_I(rng, None, m)
    return Order(float(r), np.asarray(a, dtype=np.float64))


def sample_input_II(m: int, rng, clip: Optional[float] = None) -> Order:
    """One Input II order. ``clip`` truncates demands to ``[-clip, clip]``.

    Without ``clip`` the demands are unbounded and may be negative.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    r, a = _draw_input_II(rng, None, m, clip)
    return Order(float(r), np.asarray(a, dtype=np.float64))


def sample_capacity(m: int, d_lo: float, d_hi: float, rng) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    if not (0.0 < d_lo <= d_hi) or not np.isfinite(d_hi):
        raise ValueError(f"invalid capacity bounds ({d_lo}, {d_hi})")
    return d_lo + (d_hi - d_lo) * rng.random(m)


Sampler = Callable[[np.random.Generator, int, int], Tuple[np.ndarray, np.ndarray]]

MODELS: dict[str, Sampler] = {
    "input1": _draw_input_I,
    "input2": _draw_input_II,
}


def register_model(name: str, sampler: Sampler) -> None:
    """Make ``sampler(rng, n, m) -> (rewards[n], demands[n, m])`` available by name."""
    MODELS[name] = sampler


def _resolve_model(model, clip):
    if callable(model):
        return getattr(model, "__name__", "custom"), model
    key = str(model).lower().replace("_", "")
    key = {"inputi": "input1", "inputii": "input2", "i": "input1", "ii": "input2",
           "1": "input1", "2": "input2"}.get(key, key)
    if key not in MODELS:
        raise ValueError(f"unknown input model {model!r}; known: {sorted(MODELS)}")
    sampler = MODELS[key]
    if key == "input2" and clip is not None:
        return key, lambda rng, n, m: _draw_input_II(rng, n, m, clip)
    return key, sampler


def generate_instance(
    T: int,
    m: int,
    model: Union[str, Sampler] = "input1",
    seed: int = 0,
    d_lo: float = DEFAULT_D_LO,
    d_hi: float = DEFAULT_D_HI,
    clip: Optional[float] = None,
) -> Instance:
    """Draw a reproducible instance.

    Capacities and orders come from separate streams of ``seed``, so the
    capacity vector does not depend on ``T`` and the order sequence does not
    depend on the capacity bounds.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    name, sampler = _resolve_model(model, clip)
    d = sample_capacity(m, d_lo, d_hi, stream(seed, PURPOSE_CAPACITY))
    rewards, demands = sampler(stream(seed, PURPOSE_ORDERS), T, m)
    rewards = np.asarray(rewards, dtype=np.float64).reshape(T)
    demands = np.asarray(demands, dtype=np.float64).reshape(T, m)
    return Instance(T, T * d, d, rewards, demands, int(seed), name)


# -- columnar text format ----------------------------------------------------

_MAGIC = "# olp-instance v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_instance(instance: Instance, dest: Union[str, Path, TextIO]) -> None:
    """Header lines ``# key value...`` then ``reward,a_1..a_m`` rows."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_instance(instance, fh)
        return
    m = instance.resource_count
    dest.write(_MAGIC + "\n")
    dest.write(f"# T {instance.horizon}\n")
    dest.write(f"# m {m}\n")
    dest.write(f"# seed {instance.seed}\n")
    dest.write(f"# model {instance.model}\n")
    dest.write("# b " + " ".join(_fmt(v) for v in instance.capacity) + "\n")
    dest.write("# d " + " ".join(_fmt(v) for v in instance.avg_capacity) + "\n")
    dest.write("reward," + ",".join(f"a{i + 1}" for i in range(m)) + "\n")
    for r, a in zip(instance.rewards, instance.demands):
        dest.write(_fmt(r) + "," + ",".join(_fmt(v) for v in a) + "\n")


def read_instance(src: Union[str, Path, TextIO]) -> Instance:
    if isinstance(src, (str, Path)):
        with open(src) as fh:
            return read_instance(fh)
    text = src.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise ValueError("not an olp-instance file")
    header = {}
    body_start = 1
    for i, line in enumerate(lines[1:], start=1):
        if not line.startswith("#"):
            body_start = i
            break
        key, _, rest = line[1:].strip().partition(" ")
        header[key] = rest.strip()
    T = int(header["T"])
    m = int(header["m"])
    b = np.array([float(v) for v in header["b"].split()])
    d = np.array([float(v) for v in header["d"].split()])
    rows = np.loadtxt(io.StringIO("\n".join(lines[body_start + 1:])), delimiter=",",
                      ndmin=2, dtype=np.float64)
    if rows.shape != (T, m + 1):
        raise ValueError(f"expected {T} rows of {m + 1} columns, got {rows.shape}")
    return Instance(T, b, d, rows[:, 0].copy(), rows[:, 1:].copy(),
                    int(header.get("seed", 0)), header.get("model", "custom"))
