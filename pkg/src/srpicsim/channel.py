"""Netem-like path emulation: normal per-packet delay plus uniform drop.

Delay draws are i.i.d. normal with mean ``alpha`` and std-dev
``beta * alpha`` (negative draws clamp to zero).  The drop decision uses
a PRNG stream independent of the delay stream, and a delay is drawn for
every packet whether or not it survives, so the delay series at a given
seed is identical with and without drops — paired runs then differ only
where a drop actually removed a packet.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from statistics import NormalDist

from .packets import Packet

_INV_CDF = NormalDist().inv_cdf


@dataclass(frozen=True)
class PathConfig:
    """One direction of the emulated path."""

    alpha_ms: float = 2.5  # mean one-way delay
    beta: float = 0.0  # relative std-dev factor; std-dev = beta * alpha
    drop_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha_ms < 0:
            raise ValueError("alpha_ms must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be in [0, 1]")


class PathStreams:
    """Per-path PRNG streams usable packet by packet.

    String seeding keeps the streams stable across platforms and runs;
    the k-th draw of each stream is a pure function of (seed, k), which is
    what lets paired simulation arms consume identical channel randomness.
    """

    def __init__(self, cfg: PathConfig):
        self.cfg = cfg
        self._drop_rng = random.Random(f"{cfg.seed}:drop")
        self._delay_rng = random.Random(f"{cfg.seed}:delay")
        self._mean_us = cfg.alpha_ms * 1000.0
        self._std_us = cfg.beta * self._mean_us

    def next_dropped(self) -> bool:
        if self.cfg.drop_rate <= 0.0:
            return False
        return self._drop_rng.random() < self.cfg.drop_rate

    def next_delay_us(self) -> float:
        if self._std_us == 0.0:
            return self._mean_us
        d = self._mean_us + self._std_us * _INV_CDF(self._delay_rng.random())
        return d if d > 0.0 else 0.0


def apply_path(trace: list[Packet], cfg: PathConfig) -> list[Packet]:
    """Send a send-ordered trace through the path; returns survivors in
    arrival order (ties broken by send_index, i.e. FIFO)."""
    streams = PathStreams(cfg)
    survivors: list[Packet] = []
    for p in trace:
        dropped = streams.next_dropped()
        delay = streams.next_delay_us()
        if dropped:
            continue
        survivors.append(replace(p, arrival_time=p.send_time + delay))
    survivors.sort(key=lambda p: (p.arrival_time, p.send_index))
    return survivors
